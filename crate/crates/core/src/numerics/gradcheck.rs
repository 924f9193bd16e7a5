//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Perturbation size.
    pub h: f64,
    /// Coordinates whose relative error exceeds this are flagged.
    pub tolerance: f64,
    /// Upper bound on checked coordinates per tensor; `None` checks all of them.
    pub max_coords_per_tensor: Option<usize>,
    /// Denominator floor in the relative error, so exact zeros compare absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tolerance: 1e-4,
            max_coords_per_tensor: None,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordCheck {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<CoordCheck>,
    pub flagged: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients returned by `f` at `params` against central
/// differences of the loss returned by `f`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = f(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport::default();

    for t in 0..params.len() {
        let n = params[t].numel();
        let coords: Vec<usize> = match cfg.max_coords_per_tensor {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for idx in coords {
            let orig = work[t].data()[idx];
            work[t].data_mut()[idx] = orig + cfg.h;
            let (plus, _) = f(&work)?;
            work[t].data_mut()[idx] = orig - cfg.h;
            let (minus, _) = f(&work)?;
            work[t].data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic[t].data()[idx];
            let rel = relative_error(a, numeric, cfg.abs_floor);
            let check = CoordCheck {
                tensor: t,
                index: idx,
                analytic: a,
                numeric,
                relative_error: rel,
            };
            report.checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(rel);
                report.worst = Some(check.clone());
            }
            if rel > cfg.tolerance {
                report.flagged.push(check);
            }
        }
    }
    Ok(report)
}
