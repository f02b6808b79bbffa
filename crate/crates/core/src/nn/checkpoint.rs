//! Binary model container: `"FSNN"`, version, layer count, input shape, then
//! per layer a kind tag, flags (bit 0 = frozen), a kind argument and its
//! tensors as little-endian `f32`. Metadata goes to a JSON sidecar.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::{LayerSpec, Network, NnError, Real};

const MAGIC: &[u8; 4] = b"FSNN";
const VERSION: u32 = 1;
const FLAG_FROZEN: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub metadata: Value,
}

fn tag_of(spec: &LayerSpec) -> (u32, u32) {
    match *spec {
        LayerSpec::Conv3x3 { out_channels } => (1, out_channels as u32),
        LayerSpec::MaxPool2 => (2, 0),
        LayerSpec::BatchNorm => (3, 0),
        LayerSpec::Dense { units } => (4, units as u32),
        LayerSpec::Relu => (5, 0),
        LayerSpec::Dropout { rate } => (6, rate.to_bits()),
        LayerSpec::Softmax => (7, 0),
        LayerSpec::L2Normalize => (8, 0),
    }
}

fn spec_of(tag: u32, arg: u32) -> Result<LayerSpec, NnError> {
    Ok(match tag {
        1 => LayerSpec::Conv3x3 {
            out_channels: arg as usize,
        },
        2 => LayerSpec::MaxPool2,
        3 => LayerSpec::BatchNorm,
        4 => LayerSpec::Dense { units: arg as usize },
        5 => LayerSpec::Relu,
        6 => LayerSpec::Dropout {
            rate: f32::from_bits(arg),
        },
        7 => LayerSpec::Softmax,
        8 => LayerSpec::L2Normalize,
        _ => return Err(NnError::Checkpoint(format!("unknown layer tag {tag}"))),
    })
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor<T: Real>(out: &mut Vec<u8>, shape: &[usize], values: &[T]) {
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

pub fn encode_network<T: Real>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, net.len() as u32);
    put_u32(&mut out, net.input_shape().len() as u32);
    for &d in net.input_shape() {
        put_u32(&mut out, d as u32);
    }
    for (i, layer) in net.layers().iter().enumerate() {
        let (tag, arg) = tag_of(&layer.spec());
        put_u32(&mut out, tag);
        put_u32(&mut out, if net.is_frozen(i) { FLAG_FROZEN } else { 0 });
        put_u32(&mut out, arg);
        let params = layer.params();
        let buffers = layer.buffers();
        put_u32(&mut out, (params.len() + buffers.len()) as u32);
        for p in params {
            put_tensor(&mut out, p.shape(), p.values());
        }
        for b in buffers {
            put_tensor(&mut out, &[b.len()], b);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| NnError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self) -> Result<(Vec<usize>, Vec<f32>), NnError> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(NnError::Checkpoint(format!("tensor rank {ndim}")));
        }
        let shape = (0..ndim)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NnError::Checkpoint("size".into()))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((shape, values))
    }
}

pub fn decode_network(bytes: &[u8]) -> Result<Network<f32>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let ndim = r.u32()? as usize;
    if ndim > 3 {
        return Err(NnError::Checkpoint(format!("input rank {ndim}")));
    }
    let input = (0..ndim)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let mut specs = Vec::new();
    let mut flags = Vec::new();
    let mut tensors = Vec::new();
    for _ in 0..count {
        let tag = r.u32()?;
        flags.push(r.u32()?);
        specs.push(spec_of(tag, r.u32()?)?);
        let k = r.u32()? as usize;
        tensors.push((0..k).map(|_| r.tensor()).collect::<Result<Vec<_>, _>>()?);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    let mut net = Network::<f32>::build_with(&input, &specs, &mut ChaCha8Rng::seed_from_u64(0))?;
    for (i, (layer, stored)) in net.layers_mut().iter_mut().zip(tensors).enumerate() {
        let n_params = layer.params().len();
        let n_buffers = layer.buffers().len();
        if stored.len() != n_params + n_buffers {
            return Err(NnError::Checkpoint(format!("layer {i}: tensor count")));
        }
        let mut stored = stored.into_iter();
        for p in layer.params_mut() {
            let (shape, values) = stored.next().expect("counted");
            if shape != p.shape() {
                return Err(NnError::Checkpoint(format!("layer {i}: shape {shape:?}")));
            }
            p.values_mut().copy_from_slice(&values);
        }
        for b in layer.buffers_mut() {
            let (shape, values) = stored.next().expect("counted");
            if shape != [b.len()] {
                return Err(NnError::Checkpoint(format!("layer {i}: buffer {shape:?}")));
            }
            *b = values;
        }
    }
    for (i, f) in flags.into_iter().enumerate() {
        net.set_frozen(i, f & FLAG_FROZEN != 0);
    }
    Ok(net)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint<T: Real>(net: &Network<T>, metadata: &Value, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, encode_network(net))?;
    let json = serde_json::to_vec_pretty(metadata).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Loads a checkpoint; a missing sidecar yields `Value::Null` metadata.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let network = decode_network(&std::fs::read(path)?)?;
    let metadata = match std::fs::read(sidecar_path(path)) {
        Ok(b) => serde_json::from_slice(&b).map_err(|e| NnError::Checkpoint(e.to_string()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Value::Null,
        Err(e) => return Err(e.into()),
    };
    Ok(Checkpoint { network, metadata })
}
