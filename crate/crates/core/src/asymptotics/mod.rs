//! Asymptotic-profile machinery for exterior data: extraction of the linear
//! or quadratic polynomial that the solution approaches, decay fitting of the
//! deviation against fundamental-solution envelopes, and the five-way
//! classification of tails.

pub mod classify;
pub mod decay;
pub mod extract;
pub mod profile;

pub use classify::{classify_tail, ClassifyOptions, TailClass, TailVariant};
pub use decay::{
    fit_decay, verify_decay_bounds, DecayBoundReport, DecayFit, DecayModel, FitOutcome, SphereRow,
};
pub use extract::{
    extract_linear_profile, extract_quadratic_profile, ExtractOptions, ExtractionTrace,
};
pub use profile::{AnyProfile, LinearProfile, QuadraticProfile};

use crate::fit::geometric_extrapolate;
use crate::grid::{Grid, GridError, GridFunction};
use crate::operator::OperatorError;
use crate::solver::SolveError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("data extends only to r = {r_out}; need at least r = {need}")]
    DataTooShallow { r_out: f64, need: f64 },
    #[error("need at least {need} spheres spanning a dyadic decade, got {got}")]
    TooFewSpheres { need: usize, got: usize },
    #[error("operator must vanish on the zero matrix for this pipeline; F(0) = {0:.3e}")]
    NonzeroAtZero(f64),
    #[error("operator must be convex for the quadratic pipeline")]
    NotConvex,
    #[error("data grows faster than the admissible bound: K = {k:.3e} exceeds {limit:.3e}")]
    GrowthBoundExceeded { k: f64, limit: f64 },
    #[error("schedule exhausted before the profile converged (last delta {last_delta:.3e})")]
    ScheduleExhausted {
        last_delta: f64,
        /// Per-step partial results of the attempted branches.
        steps: Box<Vec<extract::StepTrace>>,
    },
    #[error("one-sided certificate failed on both branches (violations {} / {})", max_branch.worst_violation, min_branch.worst_violation)]
    CertificateFailed {
        max_branch: Box<extract::BranchFailure>,
        min_branch: Box<extract::BranchFailure>,
    },
    #[error("extracted profile violates the operator constraint: |F(D²P) − A| = {0:.3e}")]
    OperatorValueMismatch(f64),
    #[error("non-positive value on the sphere r = {0}")]
    NonPositiveOnSphere(f64),
    #[error("no classification criterion met within the data range")]
    Inconclusive(Box<classify::ClassifyDiagnostics>),
}

/// Ladder of sphere radii 2^(k/per_octave), snapped to grid rings, inside
/// [r_min, fraction·r_out].
pub fn sphere_ladder(u: &GridFunction, r_min: f64, per_octave: usize, frac: f64) -> Vec<f64> {
    let r_max = u.grid.r_out() * frac;
    let mut out: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let target = 2f64.powf(k as f64 / per_octave as f64);
        if target > r_max {
            break;
        }
        if target >= r_min {
            let ring = u.nearest_ring(target);
            let r = match &u.grid {
                Grid::Radial(g) => g.radius(ring),
                Grid::Polar(g) => g.ring_radius(ring),
            };
            if out.last().map_or(true, |&last| r > last + 1e-12) && r <= r_max + 1e-12 {
                out.push(r);
            }
        }
        k += 1;
    }
    out
}

/// Limit of the sphere means at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LimitEstimate {
    Finite { value: f64, uncertainty: f64 },
    Diverges { sign: f64 },
    Inconclusive { last_mean: f64, last_oscillation: f64 },
}

impl LimitEstimate {
    pub fn finite_value(&self) -> Option<f64> {
        match self {
            Self::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// Threshold beyond which monotone sphere means are declared infinite
/// outright.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Extrapolates the limit of `u` at infinity from sphere means on a dyadic
/// ladder. Shrinking mean increments (with non-expanding oscillation) give a
/// finite limit; monotone non-shrinking increments (or means beyond the
/// magnitude threshold) are declared divergent.
pub fn estimate_limit_at_infinity(u: &GridFunction) -> Result<LimitEstimate, AsymptoticsError> {
    let ladder = sphere_ladder(u, 1.5, 1, 0.98);
    if ladder.len() < 3 {
        return Err(AsymptoticsError::TooFewSpheres {
            need: 3,
            got: ladder.len(),
        });
    }
    let mut means = Vec::with_capacity(ladder.len());
    let mut oscs = Vec::with_capacity(ladder.len());
    for &r in &ladder {
        let s = u.sphere_stats(r)?;
        means.push(s.mean);
        oscs.push(s.max - s.min);
    }
    let k = means.len();
    let diffs: Vec<f64> = means.windows(2).map(|w| w[1] - w[0]).collect();
    let last = *means.last().unwrap();
    let last_osc = *oscs.last().unwrap();
    let d_last = *diffs.last().unwrap();

    if last.abs() > DIVERGENCE_THRESHOLD && d_last.abs() > 0.0 {
        return Ok(LimitEstimate::Diverges {
            sign: d_last.signum(),
        });
    }

    let scale = means.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if d_last.abs() <= 1e-9 * scale {
        return Ok(LimitEstimate::Finite {
            value: last,
            uncertainty: d_last.abs() + 1e-12 * scale,
        });
    }

    let tail = &diffs[diffs.len().saturating_sub(3)..];
    let shrinking = tail.windows(2).all(|w| w[1].abs() < w[0].abs() * 0.95);
    let osc_ok = last_osc <= oscs[0] * 1.05 + 1e-9 * scale;
    if shrinking && osc_ok {
        let (value, _, corr) = geometric_extrapolate(&means);
        return Ok(LimitEstimate::Finite {
            value,
            uncertainty: corr + d_last.abs(),
        });
    }

    let same_sign = tail.windows(2).all(|w| w[0].signum() == w[1].signum());
    let non_shrinking = tail.windows(2).all(|w| w[1].abs() >= 0.9 * w[0].abs());
    if same_sign && non_shrinking && k >= 4 {
        return Ok(LimitEstimate::Diverges {
            sign: d_last.signum(),
        });
    }

    Ok(LimitEstimate::Inconclusive {
        last_mean: last,
        last_oscillation: last_osc,
    })
}

/// Per-sphere max/min ratios of a positive field, the Harnack diagnostic.
pub fn harnack_ratio(
    u: &GridFunction,
    radii: &[f64],
) -> Result<Vec<(f64, f64)>, AsymptoticsError> {
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let s = u.sphere_stats(r)?;
        if s.min <= 0.0 {
            return Err(AsymptoticsError::NonPositiveOnSphere(r));
        }
        out.push((r, s.max / s.min));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridFunction, PolarGrid, RadialGrid};
    use approx::assert_abs_diff_eq;

    #[test]
    fn limit_of_decaying_tail() {
        let g = RadialGrid::new(1.0, 64.0, 1009).unwrap();
        let u = GridFunction::sample_radial(g, |r| 1.0 + 1.0 / r).unwrap();
        match estimate_limit_at_infinity(&u).unwrap() {
            LimitEstimate::Finite { value, .. } => {
                assert_abs_diff_eq!(value, 1.0, epsilon = 1e-3)
            }
            other => panic!("expected finite limit, got {other:?}"),
        }
    }

    #[test]
    fn limit_of_log_divergence() {
        let g = RadialGrid::new(1.0, 64.0, 1009).unwrap();
        let u = GridFunction::sample_radial(g, |r| -r.ln()).unwrap();
        match estimate_limit_at_infinity(&u).unwrap() {
            LimitEstimate::Diverges { sign } => assert_eq!(sign, -1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn limit_of_sqrt_growth() {
        let g = RadialGrid::new(1.0, 48.0, 753).unwrap();
        let u = GridFunction::sample_radial(g, |r| 2.0 - 2.0 * r.sqrt()).unwrap();
        match estimate_limit_at_infinity(&u).unwrap() {
            LimitEstimate::Diverges { sign } => assert_eq!(sign, -1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn harnack_ratios() {
        // radial data: ratio exactly 1
        let g = RadialGrid::new(1.0, 32.0, 497).unwrap();
        let u = GridFunction::sample_radial(g, |r| 1.0 + 1.0 / r).unwrap();
        for (_, ratio) in harnack_ratio(&u, &[2.0, 4.0, 8.0]).unwrap() {
            assert_eq!(ratio, 1.0);
        }

        // planar slice of 1 + x/|x|³: ratios bounded and tending to 1
        let g = PolarGrid::annulus(1.0, 32.0, 249, 32).unwrap();
        let u = GridFunction::sample_polar(g, |x, y| {
            let r = (x * x + y * y).sqrt();
            1.0 + x / (r * r * r)
        })
        .unwrap();
        let ratios = harnack_ratio(&u, &[2.0, 4.0, 8.0, 16.0]).unwrap();
        for w in ratios.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
        assert!(ratios.last().unwrap().1 < 1.01);

        // rejects data that is not positive on a tested sphere
        let v = GridFunction::sample_polar(g, |x, _| x).unwrap();
        assert!(harnack_ratio(&v, &[2.0]).is_err());
    }
}
