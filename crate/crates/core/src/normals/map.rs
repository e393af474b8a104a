//! Whole-image normal estimation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::render::{ExemplarBank, ImageStack, NormalMap};

use super::refine::{refine_normal, RefineOptions};
use super::search::{match_normal_c2f, NormalEstimate, SearchOptions};

#[derive(Debug, Clone, Default)]
pub struct NormalMapOptions {
    pub refine: bool,
    pub refine_opts: RefineOptions,
    pub search: SearchOptions,
}

#[derive(Debug, Clone)]
pub struct NormalMapEstimate {
    pub map: NormalMap,
    /// One entry per raster pixel, `None` where masked.
    pub estimates: Vec<Option<NormalEstimate>>,
}

/// Coarse-to-fine search (plus optional refinement) at every masked-in pixel.
pub fn estimate_normal_map(stack: &ImageStack, bank: &ExemplarBank, opts: &NormalMapOptions) -> Result<NormalMapEstimate> {
    if stack.rig().fingerprint() != bank.rig().fingerprint() {
        return invalid("image stack and bank use different lighting rigs");
    }
    if stack.channels() != bank.channels() {
        return invalid("image stack and dictionary channel counts differ");
    }
    let pixels = stack.valid_pixels();
    let results: Vec<NormalEstimate> = pixels
        .par_iter()
        .map(|&p| {
            let profile = stack.profile(p);
            let est = match_normal_c2f(profile, bank, &opts.search)?;
            if opts.refine {
                refine_normal(profile, &est, bank, &opts.refine_opts, &opts.search)
            } else {
                Ok(est)
            }
        })
        .collect::<Result<_>>()?;
    let n = stack.width() * stack.height();
    let mut estimates = vec![None; n];
    for (&p, e) in pixels.iter().zip(results) {
        estimates[p] = Some(e);
    }
    let map = NormalMap::new(stack.width(), stack.height(), estimates.iter().map(|e| e.as_ref().map(|e| e.normal)).collect())?;
    Ok(NormalMapEstimate { map, estimates })
}

impl NormalMapEstimate {
    /// `x,y,nx,ny,nz,residual,evaluated` for every estimated pixel.
    pub fn write_residual_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["x", "y", "nx", "ny", "nz", "residual", "evaluated"]).map_err(csv_err)?;
        for (p, e) in self.estimates.iter().enumerate() {
            if let Some(e) = e {
                let (x, y) = (p % self.map.width, p / self.map.width);
                csv.write_record([
                    x.to_string(),
                    y.to_string(),
                    e.normal.x.to_string(),
                    e.normal.y.to_string(),
                    e.normal.z.to_string(),
                    e.residual.to_string(),
                    e.evaluated_count.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    /// Writes `normals.pfm`, `normals.png` and `residuals.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.map.save_pfm(dir.join("normals.pfm"))?;
        self.map.save_false_color(dir.join("normals.png"))?;
        self.write_residual_csv(std::fs::File::create(dir.join("residuals.csv"))?)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Format(e.to_string())
}
