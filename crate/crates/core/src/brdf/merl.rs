//! MERL binary BRDF files.
//!
//! Layout: three little-endian `i32` dims `(90, 90, 180)` followed by
//! `3·90·90·180` little-endian `f64`, channel-major, linear index
//! `φ_d + 180·(θ_d + 90·θ_h)`. The θ_h axis is non-linear: index
//! `⌊√(θ_h/90°)·90⌋`.

use std::path::Path;

use crate::error::{format_err, Result};

use super::grid::HalfDiffGrid;
use super::tabulated::TabulatedBrdf;

pub const MERL_DIMS: (usize, usize, usize) = (90, 90, 180);
pub const CHANNEL_SCALE: [f64; 3] = [1.0 / 1500.0, 1.15 / 1500.0, 1.66 / 1500.0];

/// Raw, unscaled MERL payload.
#[derive(Debug, Clone, PartialEq)]
pub struct MerlRaw {
    pub values: Vec<f64>,
}

fn merl_len() -> usize {
    MERL_DIMS.0 * MERL_DIMS.1 * MERL_DIMS.2
}

pub fn decode_merl(bytes: &[u8]) -> Result<MerlRaw> {
    if bytes.len() < 12 {
        return format_err("MERL file shorter than its header");
    }
    let dim = |k: usize| i32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let dims = (dim(0), dim(1), dim(2));
    if dims != (90, 90, 180) {
        return format_err(format!("unexpected MERL dims {dims:?}, expected (90, 90, 180)"));
    }
    let expected = 3 * merl_len() * 8;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return format_err(format!(
            "MERL payload has {} bytes, expected {expected}",
            payload.len()
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MerlRaw { values })
}

pub fn encode_merl(raw: &MerlRaw) -> Result<Vec<u8>> {
    if raw.values.len() != 3 * merl_len() {
        return format_err("MERL payload must hold 3·90·90·180 values");
    }
    let mut out = Vec::with_capacity(12 + raw.values.len() * 8);
    for d in [90i32, 90, 180] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &raw.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes, scales, clamps negatives and resamples θ_h onto the linear 1° grid.
pub fn load_merl(bytes: &[u8]) -> Result<TabulatedBrdf> {
    let raw = decode_merl(bytes)?;
    let grid = HalfDiffGrid::merl();
    let (n_th, n_td, n_pd) = MERL_DIMS;
    let t = merl_len();
    let mut values = vec![0.0; 3 * t];
    for ch in 0..3 {
        let src = &raw.values[ch * t..(ch + 1) * t];
        let dst = &mut values[ch * t..(ch + 1) * t];
        let scale = CHANNEL_SCALE[ch];
        for i_th in 0..n_th {
            // Linear node θ_h = i_th degrees sits at fractional MERL index
            // u = √(θ_h/90)·90.
            let u = (i_th as f64 / 90.0).sqrt() * 90.0;
            let k0 = (u.floor() as usize).min(n_th - 1);
            let k1 = (k0 + 1).min(n_th - 1);
            let frac = if k1 == k0 { 0.0 } else { u - k0 as f64 };
            for i_td in 0..n_td {
                for i_pd in 0..n_pd {
                    let a = src[grid.index(k0, i_td, i_pd)].max(0.0) * scale;
                    let b = src[grid.index(k1, i_td, i_pd)].max(0.0) * scale;
                    dst[grid.index(i_th, i_td, i_pd)] = a * (1.0 - frac) + b * frac;
                }
            }
        }
    }
    TabulatedBrdf::new(grid, 3, values)
}

pub fn load_merl_file(path: impl AsRef<Path>) -> Result<TabulatedBrdf> {
    load_merl(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(d: (i32, i32, i32)) -> Vec<u8> {
        [d.0, d.1, d.2].iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn zero_payload_gives_zero_brdf() {
        let mut bytes = header((90, 90, 180));
        bytes.resize(12 + 3 * merl_len() * 8, 0);
        let b = load_merl(&bytes).unwrap();
        assert_eq!(b.channels(), 3);
        assert!(b.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn wrong_header_rejected() {
        let mut bytes = header((45, 90, 180));
        bytes.resize(12 + 3 * merl_len() * 8, 0);
        assert!(load_merl(&bytes).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut bytes = header((90, 90, 180));
        bytes.resize(12 + 1000, 0);
        assert!(decode_merl(&bytes).is_err());
    }

    #[test]
    fn encoder_round_trips_bit_exactly() {
        let t = merl_len();
        let values: Vec<f64> = (0..3 * t).map(|i| ((i * 7919) % 1013) as f64 * 0.37 - 5.0).collect();
        let raw = MerlRaw { values };
        let bytes = encode_merl(&raw).unwrap();
        let back = decode_merl(&bytes).unwrap();
        assert_eq!(back, raw);
        assert_eq!(encode_merl(&back).unwrap(), bytes);
    }

    #[test]
    fn scaling_clamping_and_theta_h_resampling() {
        let grid = HalfDiffGrid::merl();
        let t = merl_len();
        // Red channel stores the MERL θ_h index itself; green is negative.
        let mut values = vec![0.0; 3 * t];
        for idx in 0..t {
            let (k, _, _) = grid.unravel(idx);
            values[idx] = k as f64;
            values[t + idx] = -3.0;
            values[2 * t + idx] = 1500.0;
        }
        let b = load_merl(&encode_merl(&MerlRaw { values }).unwrap()).unwrap();
        for i_th in [0usize, 1, 10, 45, 89] {
            let u = (i_th as f64 / 90.0).sqrt() * 90.0;
            let expected = u.min(89.0) / 1500.0;
            let got = b.channel(0)[grid.index(i_th, 3, 7)];
            assert!((got - expected).abs() < 1e-12, "θ_h={i_th}: {got} vs {expected}");
        }
        assert!(b.channel(1).iter().all(|&x| x == 0.0));
        assert!(b.channel(2).iter().all(|&x| (x - 1.66).abs() < 1e-12));
    }
}
