use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Luma};

use super::{GrayImage, ImageError};

/// Reads a binary (P5) 8-bit PGM.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut pos = 0usize;
    let mut token = || -> Result<String, ImageError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::MalformedPgm("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(ImageError::MalformedPgm(format!("magic {magic:?}, expected P5")));
    }
    let mut num = |what: &str| -> Result<usize, ImageError> {
        token()?
            .parse()
            .map_err(|_| ImageError::MalformedPgm(format!("bad {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::Unsupported(format!("PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let need = width * height;
    if bytes.len() < start + need {
        return Err(ImageError::MalformedPgm("truncated raster".into()));
    }
    let scale = maxval as f32;
    GrayImage::from_vec(
        width,
        height,
        bytes[start..start + need]
            .iter()
            .map(|&b| f32::from(b) / scale)
            .collect(),
    )
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::from_u8(w as usize, h as usize, img.as_raw())
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>, ImageError> {
    let buf = image::ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.to_u8(),
    )
    .ok_or_else(|| ImageError::Unsupported("raster size".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_png(img)?)?;
    Ok(())
}

/// Loads a PNG or P5 PGM, choosing by content.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        read_pgm(&bytes)
    } else {
        decode_png(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# scanner\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 51, 102, 153, 204]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(1, 0), 1.0);
        assert!((img.get(2, 0) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn pgm_errors() {
        assert!(read_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(read_pgm(b"P5\n4 4\n255\n\x00\x00").is_err());
    }

    #[test]
    fn png_round_trip_is_lossless_for_8bit() {
        let bytes: Vec<u8> = (0..=255u8).collect();
        let img = GrayImage::from_u8(16, 16, &bytes).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back.to_u8(), bytes);
    }
}
