//! Raster image formats: PFM (f32) and PNG (8/16-bit, linear, no gamma).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, invalid, Error, Result};

/// Top-down, row-major raster with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return invalid("raster data length does not match dimensions");
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }
}

pub fn write_pfm(mut w: impl Write, img: &Raster) -> Result<()> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return invalid(format!("PFM supports 1 or 3 channels, got {c}")),
    };
    write!(w, "{magic}\n{} {}\n-1.0\n", img.width, img.height)?;
    let row = img.width * img.channels;
    let mut buf = Vec::with_capacity(row * 4);
    for y in (0..img.height).rev() {
        buf.clear();
        for v in &img.data[y * row..(y + 1) * row] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn header_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return format_err("truncated PFM header");
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
        if tok.len() > 64 {
            return format_err("malformed PFM header");
        }
    }
    String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII PFM header".into()))
}

pub fn read_pfm(r: impl Read) -> Result<Raster> {
    let mut r = BufReader::new(r);
    let channels = match header_token(&mut r)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        m => return format_err(format!("bad PFM magic {m:?}")),
    };
    let parse_dim = |s: String| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM dimension {s:?}")));
    let width = parse_dim(header_token(&mut r)?)?;
    let height = parse_dim(header_token(&mut r)?)?;
    let scale: f64 = header_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return format_err("PFM scale must be non-zero");
    }
    let little = scale < 0.0;
    let row = width * channels;
    let mut raw = vec![0u8; row * height * 4];
    r.read_exact(&mut raw).map_err(|_| Error::Format("truncated PFM payload".into()))?;
    let mut data = vec![0f32; row * height];
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Raster::new(width, height, channels, data)
}

pub fn save_pfm(path: impl AsRef<Path>, img: &Raster) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pfm(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Raster> {
    read_pfm(File::open(path)?)
}

fn color_type(channels: usize) -> Result<png::ColorType> {
    Ok(match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return invalid(format!("PNG output supports 1 or 3 channels, got {c}")),
    })
}

fn png_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(e) => Error::Io(e),
        other => Error::Format(other.to_string()),
    }
}

/// Writes values in `[0, 1]` (clamped) as a 16-bit PNG.
pub fn save_png16(path: impl AsRef<Path>, img: &Raster) -> Result<()> {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), img.width as u32, img.height as u32);
    enc.set_color(color_type(img.channels)?);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(png_err)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .flat_map(|&v| ((v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16).to_be_bytes())
        .collect();
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

/// Writes values in `[0, 1]` (clamped) as an 8-bit PNG.
pub fn save_png8(path: impl AsRef<Path>, img: &Raster) -> Result<()> {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), img.width as u32, img.height as u32);
    enc.set_color(color_type(img.channels)?);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| (v.clamp(0.0, 1.0) as f64 * 255.0).round() as u8).collect();
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

/// Reads an 8- or 16-bit gray/RGB PNG, normalized linearly to `[0, 1]`.
pub fn load_png(path: impl AsRef<Path>) -> Result<Raster> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return format_err(format!("unsupported PNG color type {other:?}")),
    };
    let bytes = &buf[..info.buffer_size()];
    let data: Vec<f32> = match info.bit_depth {
        png::BitDepth::Sixteen => bytes
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0) as f32)
            .collect(),
        png::BitDepth::Eight => bytes.iter().map(|&b| (b as f64 / 255.0) as f32).collect(),
        d => return format_err(format!("unsupported PNG bit depth {d:?}")),
    };
    Raster::new(info.width as usize, info.height as usize, channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(channels: usize) -> Raster {
        let (w, h) = (5, 3);
        let data = (0..w * h * channels).map(|i| (i as f32 * 0.37).sin().abs() + i as f32 * 1e-3).collect();
        Raster::new(w, h, channels, data).unwrap()
    }

    #[test]
    fn pfm_round_trip_bit_exact() {
        for c in [1, 3] {
            let img = sample(c);
            let mut bytes = Vec::new();
            write_pfm(&mut bytes, &img).unwrap();
            let back = read_pfm(bytes.as_slice()).unwrap();
            assert_eq!(back, img);
            let mut again = Vec::new();
            write_pfm(&mut again, &back).unwrap();
            assert_eq!(bytes, again);
        }
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let img = Raster::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let mut bytes = Vec::new();
        write_pfm(&mut bytes, &img).unwrap();
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(f32::from_le_bytes(payload[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn pfm_big_endian_and_errors() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        assert_eq!(read_pfm(bytes.as_slice()).unwrap().data, vec![0.5]);
        assert!(read_pfm(&b"P6\n1 1\n-1.0\n"[..]).is_err());
        assert!(read_pfm(&b"Pf\n2 2\n-1.0\n\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn png16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        for c in [1, 3] {
            let img = sample(c);
            let img = Raster::new(img.width, img.height, c, img.data.iter().map(|v| v.min(1.0)).collect()).unwrap();
            let p = dir.path().join(format!("x{c}.png"));
            save_png16(&p, &img).unwrap();
            let back = load_png(&p).unwrap();
            assert_eq!((back.width, back.height, back.channels), (img.width, img.height, c));
            for (a, b) in back.data.iter().zip(&img.data) {
                assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
            }
        }
    }
}
