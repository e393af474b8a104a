//! Per-pixel dictionary coefficients and the ABDC container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::brdf::{BrdfDictionary, TabulatedBrdf};
use crate::error::{format_err, invalid, Error, Result};

pub const ABUNDANCE_MAGIC: &[u8; 4] = b"ABDC";

/// Non-negative coefficients, one column per pixel. With colour
/// dictionaries each column stacks one block of `M` coefficients per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    values: DMatrix<f64>,
    pixel_index: Vec<(u32, u32)>,
}

impl AbundanceMatrix {
    pub fn new(values: DMatrix<f64>, pixel_index: Vec<(u32, u32)>) -> Result<Self> {
        if values.ncols() != pixel_index.len() {
            return invalid("one pixel index per column required");
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("abundances must be finite and non-negative");
        }
        Ok(Self { values, pixel_index })
    }

    pub fn from_columns(columns: &[Vec<f64>], pixel_index: Vec<(u32, u32)>) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return invalid("abundance columns differ in length");
        }
        let values = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
        Self::new(values, pixel_index)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn pixel_index(&self) -> &[(u32, u32)] {
        &self.pixel_index
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        self.values.column(p).iter().copied().collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let rows = u32::try_from(self.rows()).map_err(|_| Error::Format("too many rows".into()))?;
        let cols = u32::try_from(self.len()).map_err(|_| Error::Format("too many columns".into()))?;
        w.write_all(ABUNDANCE_MAGIC)?;
        w.write_all(&rows.to_le_bytes())?;
        w.write_all(&cols.to_le_bytes())?;
        for &(x, y) in &self.pixel_index {
            w.write_all(&x.to_le_bytes())?;
            w.write_all(&y.to_le_bytes())?;
        }
        let bytes: Vec<u8> = self.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut next = |r: &mut dyn Read, what: &str| -> Result<[u8; 4]> {
            r.read_exact(&mut word).map_err(|_| Error::Format(format!("truncated abundance file ({what})")))?;
            Ok(word)
        };
        if &next(&mut r, "magic")? != ABUNDANCE_MAGIC {
            return format_err("bad abundance magic");
        }
        let rows = u32::from_le_bytes(next(&mut r, "header")?) as usize;
        let cols = u32::from_le_bytes(next(&mut r, "header")?) as usize;
        let mut pixel_index = Vec::with_capacity(cols);
        for _ in 0..cols {
            let x = u32::from_le_bytes(next(&mut r, "pixel index")?);
            let y = u32::from_le_bytes(next(&mut r, "pixel index")?);
            pixel_index.push((x, y));
        }
        let mut raw = vec![0u8; rows * cols * 4];
        r.read_exact(&mut raw).map_err(|_| Error::Format("truncated abundance values".into()))?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(DMatrix::from_vec(rows, cols, vals), pixel_index)
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// `ρ = D·c`. `c` holds `M` coefficients, or `C·M` with one block per channel.
pub fn reconstruct_brdf(c: &[f64], dict: &BrdfDictionary) -> Result<TabulatedBrdf> {
    let (m, ch) = (dict.len(), dict.channels());
    if c.len() == m {
        return dict.mix(c);
    }
    if c.len() != m * ch {
        return invalid(format!("expected {m} or {} coefficients, got {}", m * ch, c.len()));
    }
    let t = dict.grid().len();
    let mut values = vec![0.0; ch * t];
    for k in 0..ch {
        let block = &c[k * m..(k + 1) * m];
        let out = &mut values[k * t..(k + 1) * t];
        for (atom, &w) in dict.atoms().iter().zip(block) {
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(atom.channel(k)) {
                *o += w * v;
            }
        }
    }
    TabulatedBrdf::new(dict.grid(), ch, values)
}
