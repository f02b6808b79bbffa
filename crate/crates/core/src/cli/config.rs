//! `--config FILE`: a JSON object whose keys are long flag names (`-` or
//! `_` separated). Each key absent from the command line is appended as
//! flags; `true` becomes a bare switch, `false` and `null` are dropped and
//! arrays repeat the flag.

use std::ffi::OsString;

use serde_json::Value;

fn flag_present(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

fn scalar(v: &Value, key: &str) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(format!("config key {key:?}: expected a string, number or boolean")),
    }
}

/// Returns `argv` with the config file's flags appended. Errors are usage
/// errors.
pub(super) fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut path = None;
    let mut i = 0;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            path = Some(argv.get(i + 1).ok_or("--config needs a file")?.clone());
            break;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(OsString::from(p));
            break;
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let obj = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err("config file must hold a JSON object".into()),
        Err(e) => return Err(format!("{}: {e}", path.to_string_lossy())),
    };
    let mut out = argv.clone();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || flag_present(&argv, &flag) {
            continue;
        }
        match &v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag.into()),
            Value::Array(items) => {
                for it in items {
                    out.push(flag.clone().into());
                    out.push(scalar(it, &key)?.into());
                }
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other, &key)?.into());
            }
        }
    }
    Ok(out)
}
