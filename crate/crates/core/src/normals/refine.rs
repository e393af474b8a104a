//! Local refinement of a candidate normal by alternating linearized
//! angle updates and abundance refits.

use crate::error::{Error, Result};
use crate::geometry::{angular_error, euler_to_normal, normal_to_euler};
use crate::render::exemplar::apply_blocks;
use crate::render::ExemplarBank;

use super::gradients::{estimate_gradients, GradientOptions};
use super::search::{fit_at, NormalEstimate, RefineStatus, SearchOptions};

#[derive(Debug, Clone)]
pub struct RefineOptions {
    pub gradient: GradientOptions,
    pub max_iters: usize,
    /// Stop once an iteration lowers the residual by less than this
    /// fraction of the starting residual.
    pub rel_tol: f64,
    /// Largest allowed distance from the starting normal, in degrees.
    /// Defaults to the gradient neighbourhood radius.
    pub trust_radius_deg: Option<f64>,
    /// Step halvings tried before a step is rejected.
    pub backtracks: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { gradient: GradientOptions::default(), max_iters: 50, rel_tol: 1e-9, trust_radius_deg: None, backtracks: 4 }
    }
}

const MAX_THETA: f64 = 90.0 - 1e-9;

pub fn refine_normal(
    profile: &[f64],
    est: &NormalEstimate,
    bank: &ExemplarBank,
    opts: &RefineOptions,
    search: &SearchOptions,
) -> Result<NormalEstimate> {
    let grads = match estimate_gradients(bank, &est.normal, &opts.gradient) {
        Ok(g) => g,
        Err(Error::GradientUnavailable(_)) => {
            return Ok(NormalEstimate { refine: RefineStatus::Skipped, ..est.clone() });
        }
        Err(e) => return Err(e),
    };
    let channels = bank.channels();
    let anchor = est.normal;
    let trust = opts.trust_radius_deg.unwrap_or(opts.gradient.radius_deg);
    let (mut theta, mut phi) = normal_to_euler(&anchor);
    let mut normal = anchor;
    let mut c = est.abundances.clone();
    let mut res = est.residual;
    let mut b = bank.render(&normal)?.values;
    let initial = res;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let pred = apply_blocks(&b, channels, &c);
        let r: Vec<f64> = profile.iter().zip(&pred).map(|(p, q)| p - q).collect();
        let gt = apply_blocks(&grads.d_theta, channels, &c);
        let gp = apply_blocks(&grads.d_phi, channels, &c);
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let (a11, a12, a22) = (dot(&gt, &gt), dot(&gt, &gp), dot(&gp, &gp));
        let (r1, r2) = (dot(&gt, &r), dot(&gp, &r));
        let det = a11 * a22 - a12 * a12;
        if !(det > 1e-14 * (a11 * a22).max(f64::MIN_POSITIVE)) {
            break;
        }
        let d_theta = ((a22 * r1 - a12 * r2) / det).to_degrees();
        let d_phi = ((a11 * r2 - a12 * r1) / det).to_degrees();

        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=opts.backtracks {
            let t = (theta + scale * d_theta).clamp(0.0, MAX_THETA);
            let p = (phi + scale * d_phi).rem_euclid(360.0);
            scale *= 0.5;
            let n = euler_to_normal(t, p);
            if angular_error(&n, &anchor) > trust {
                continue;
            }
            let (c_new, res_new) = fit_at(profile, &n, bank, search)?;
            if res_new <= res {
                accepted = Some((t, p, n, c_new, res_new));
                break;
            }
        }
        let Some((t, p, n, c_new, res_new)) = accepted else { break };
        let decrease = res - res_new;
        theta = t;
        phi = p;
        normal = n;
        c = c_new;
        res = res_new;
        b = bank.render(&normal)?.values;
        if decrease <= opts.rel_tol * initial {
            break;
        }
    }
    Ok(NormalEstimate {
        normal,
        abundances: c,
        residual: res,
        evaluated_count: est.evaluated_count,
        refine: RefineStatus::Refined { iterations },
    })
}
