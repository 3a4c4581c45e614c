//! Fundamental solutions of the Pucci extremal operators and scaling
//! exponents.
//!
//! For constants (λ, Λ, n) the upward-pointing fundamental solutions are
//!
//! ```text
//! E⁺(x) =  |x|^(1−(n−1)λ/Λ)   if Λ/λ < n−1
//!          −ln|x|             if Λ/λ = n−1
//!          −|x|^(1−(n−1)λ/Λ)  if Λ/λ > n−1
//!
//! E⁻(x) =  −ln|x|                 if Λ/λ = 1 and n = 2
//!          |x|^(1−(n−1)Λ/λ)       otherwise
//! ```
//!
//! with downward counterparts e⁺ = −E⁻ and e⁻ = −E⁺. The scaling exponents
//! are α⁺ = (n−1)λ/Λ − 1 and α⁻ = (n−1)Λ/λ − 1, and every uniformly elliptic
//! positively 1-homogeneous operator has its exponent α* inside [α⁺, α⁻].
//! A power tail scales as Φ(t·x) = t^(−α*)·Φ(x); the logarithmic branch is
//! tagged α* = 0.

use crate::fit::{geometric_extrapolate, linear_fit};
use crate::grid::{Grid, RadialGrid};
use crate::operator::{
    check_homogeneity, radial_controls, radial_hessian_spectrum, Ellipticity, OperatorError,
    OperatorSpec, SymMatrix,
};
use crate::solver::{BoundaryData, DirichletProblem, SolveError, SolveOptions};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FundamentalError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("samples admit no positive normalization scale")]
    NoPositiveScale,
    #[error("empty sample list")]
    EmptySamples,
    #[error("operator is not positively 1-homogeneous (worst violation {0:.3e})")]
    NotHomogeneous(f64),
    #[error("exponent window [{lo}, {hi}] holds fewer than {need} grid nodes")]
    WindowTooSmall { lo: f64, hi: f64, need: usize },
}

/// α⁺ and α⁻ for given constants; `alpha_star` stays unset until estimated.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingExponents {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub alpha_star: Option<f64>,
}

pub fn scaling_exponents(e: &Ellipticity) -> ScalingExponents {
    let n1 = (e.dim - 1) as f64;
    ScalingExponents {
        alpha_plus: n1 * e.lambda / e.big_lambda - 1.0,
        alpha_minus: n1 * e.big_lambda / e.lambda - 1.0,
        alpha_star: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PucciSide {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Orientation {
    Upward,
    Downward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Branch {
    PowerLaw { exponent: f64, sign: f64 },
    Logarithmic { sign: f64 },
}

/// Closed-form fundamental solution of M⁺ or M⁻, upward or downward.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FundamentalSolution {
    pub side: PucciSide,
    pub orientation: Orientation,
    pub branch: Branch,
    pub ellipticity: Ellipticity,
}

impl FundamentalSolution {
    pub fn upward(side: PucciSide, e: Ellipticity) -> Self {
        let n1 = (e.dim - 1) as f64;
        let ratio = e.ratio();
        let branch = match side {
            PucciSide::Plus => {
                let exponent = 1.0 - n1 * e.lambda / e.big_lambda;
                if (ratio - n1).abs() < 1e-12 {
                    Branch::Logarithmic { sign: -1.0 }
                } else if ratio < n1 {
                    Branch::PowerLaw {
                        exponent,
                        sign: 1.0,
                    }
                } else {
                    Branch::PowerLaw {
                        exponent,
                        sign: -1.0,
                    }
                }
            }
            PucciSide::Minus => {
                if (ratio - 1.0).abs() < 1e-12 && e.dim == 2 {
                    Branch::Logarithmic { sign: -1.0 }
                } else {
                    Branch::PowerLaw {
                        exponent: 1.0 - n1 * e.big_lambda / e.lambda,
                        sign: 1.0,
                    }
                }
            }
        };
        Self {
            side,
            orientation: Orientation::Upward,
            branch,
            ellipticity: e,
        }
    }

    /// Downward-pointing solution of the given side: e⁺ = −E⁻ and e⁻ = −E⁺.
    pub fn downward(side: PucciSide, e: Ellipticity) -> Self {
        let other = match side {
            PucciSide::Plus => PucciSide::Minus,
            PucciSide::Minus => PucciSide::Plus,
        };
        let up = Self::upward(other, e);
        let branch = match up.branch {
            Branch::PowerLaw { exponent, sign } => Branch::PowerLaw {
                exponent,
                sign: -sign,
            },
            Branch::Logarithmic { sign } => Branch::Logarithmic { sign: -sign },
        };
        Self {
            side,
            orientation: Orientation::Downward,
            branch,
            ellipticity: e,
        }
    }

    pub fn upward_plus(e: Ellipticity) -> Self {
        Self::upward(PucciSide::Plus, e)
    }

    pub fn upward_minus(e: Ellipticity) -> Self {
        Self::upward(PucciSide::Minus, e)
    }

    /// Closed-form upward tail of an operator, when one exists (Pucci
    /// extremal operators and the Laplacian).
    pub fn upward_for(op: &OperatorSpec) -> Option<Self> {
        match op {
            OperatorSpec::PucciPlus(e) => Some(Self::upward_plus(*e)),
            OperatorSpec::PucciMinus(e) => Some(Self::upward_minus(*e)),
            OperatorSpec::Laplace { dim } => Some(Self::upward_plus(Ellipticity::isotropic(*dim))),
            OperatorSpec::Dual(base) => Self::upward_for(base).map(|up| {
                // upward tail of the dual = −(downward tail of the base)
                Self::downward(up.side, up.ellipticity).negated()
            }),
            _ => None,
        }
    }

    fn negated(&self) -> Self {
        let branch = match self.branch {
            Branch::PowerLaw { exponent, sign } => Branch::PowerLaw {
                exponent,
                sign: -sign,
            },
            Branch::Logarithmic { sign } => Branch::Logarithmic { sign: -sign },
        };
        Self {
            branch,
            orientation: match self.orientation {
                Orientation::Upward => Orientation::Downward,
                Orientation::Downward => Orientation::Upward,
            },
            ..*self
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64, FundamentalError> {
        if r <= 0.0 {
            return Err(FundamentalError::NonPositiveRadius(r));
        }
        Ok(match self.branch {
            Branch::PowerLaw { exponent, sign } => sign * r.powf(exponent),
            Branch::Logarithmic { sign } => sign * r.ln(),
        })
    }

    pub fn du(&self, r: f64) -> f64 {
        match self.branch {
            Branch::PowerLaw { exponent, sign } => sign * exponent * r.powf(exponent - 1.0),
            Branch::Logarithmic { sign } => sign / r,
        }
    }

    pub fn ddu(&self, r: f64) -> f64 {
        match self.branch {
            Branch::PowerLaw { exponent, sign } => {
                sign * exponent * (exponent - 1.0) * r.powf(exponent - 2.0)
            }
            Branch::Logarithmic { sign } => -sign / (r * r),
        }
    }

    /// Homogeneity degree of the tail: Φ(t·x) = t^(−α*)·Φ(x) on power
    /// branches; 0 tags the logarithmic branch.
    pub fn alpha_star(&self) -> f64 {
        match self.branch {
            Branch::PowerLaw { exponent, .. } => -exponent,
            Branch::Logarithmic { .. } => 0.0,
        }
    }

    /// The operator this candidate should annihilate.
    pub fn operator(&self) -> OperatorSpec {
        match self.side {
            PucciSide::Plus => OperatorSpec::PucciPlus(self.ellipticity),
            PucciSide::Minus => OperatorSpec::PucciMinus(self.ellipticity),
        }
    }
}

/// F applied to the radial Hessian of a candidate with derivatives (du, ddu)
/// at radius r. Rejects operators without a radial reduction.
pub fn radial_residual(
    f: &OperatorSpec,
    du: f64,
    ddu: f64,
    r: f64,
) -> Result<f64, FundamentalError> {
    if !f.is_rotation_invariant() {
        return Err(OperatorError::NotRotationInvariant.into());
    }
    let spectrum = radial_hessian_spectrum(du, ddu, r, f.dim())?;
    Ok(f.evaluate(&SymMatrix::diag(&spectrum))?)
}

/// Normalization that makes a sampled tail upward-pointing: a positive scale
/// for α* ≠ 0 (min of sign(α*)·Φ on the unit sphere becomes 1), an additive
/// shift for α* = 0 (sphere average becomes 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Normalization {
    Scale(f64),
    Shift(f64),
}

pub fn normalize_upward(
    unit_sphere_samples: &[f64],
    alpha_star: f64,
) -> Result<Normalization, FundamentalError> {
    if unit_sphere_samples.is_empty() {
        return Err(FundamentalError::EmptySamples);
    }
    if alpha_star == 0.0 {
        let mean = unit_sphere_samples.iter().sum::<f64>() / unit_sphere_samples.len() as f64;
        return Ok(Normalization::Shift(-mean));
    }
    let sign = alpha_star.signum();
    let m = unit_sphere_samples
        .iter()
        .map(|&v| sign * v)
        .fold(f64::INFINITY, f64::min);
    if m <= 0.0 {
        return Err(FundamentalError::NoPositiveScale);
    }
    Ok(Normalization::Scale(1.0 / m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailModel {
    PowerLaw,
    Logarithmic,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentRun {
    pub r_far: f64,
    pub alpha_hat: f64,
    pub model: TailModel,
    pub rel_residual: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentEstimate {
    pub alpha_hat: f64,
    /// Extrapolation-based uncertainty half width.
    pub half_width: f64,
    pub model: TailModel,
    pub fit_r_squared: f64,
    /// Set when the fit quality falls below threshold or the estimate leaves
    /// the admissible band [α⁺, α⁻].
    pub flagged: bool,
    pub runs: Vec<ExponentRun>,
}

#[derive(Debug, Clone)]
pub struct ExponentOptions {
    /// Increasing truncation radii for the exterior Dirichlet problems.
    pub r_far: Vec<f64>,
    pub target_h: f64,
    pub solve: SolveOptions,
    /// Prefer the log model when its residual is at most this fraction of
    /// the best power-law residual.
    pub log_preference: f64,
    pub min_r_squared: f64,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        Self {
            r_far: vec![16.0, 32.0, 64.0, 128.0],
            target_h: 0.125,
            solve: SolveOptions::default(),
            log_preference: 0.8,
            min_r_squared: 0.95,
        }
    }
}

/// Estimates the scaling exponent of a rotation-invariant positively
/// 1-homogeneous operator by solving the radial exterior problem with data
/// 1 on the unit sphere and 0 at each truncation radius, fitting the
/// solution to c·r^(−α) + b (or c·ln r + b), and extrapolating the fitted
/// exponents across the truncation schedule.
pub fn estimate_scaling_exponent(
    f: &OperatorSpec,
    opts: &ExponentOptions,
) -> Result<ExponentEstimate, FundamentalError> {
    radial_controls(f)?; // rejects kinds without a radial reduction
    let hom = check_homogeneity(f, 128, 0x5eed)?;
    if !hom.pass {
        return Err(FundamentalError::NotHomogeneous(hom.worst_violation));
    }
    let e = f.ellipticity();
    let exps = scaling_exponents(&e);

    let runs: Vec<Result<ExponentRun, FundamentalError>> = opts
        .r_far
        .par_iter()
        .map(|&r_far| single_run(f, &e, &exps, r_far, opts))
        .collect();
    let runs: Vec<ExponentRun> = runs.into_iter().collect::<Result<_, _>>()?;

    let log_votes = runs
        .iter()
        .filter(|r| r.model == TailModel::Logarithmic)
        .count();
    let model = if log_votes * 2 > runs.len() {
        TailModel::Logarithmic
    } else {
        TailModel::PowerLaw
    };
    let (alpha_hat, half_width) = match model {
        TailModel::Logarithmic => (0.0, 0.0),
        TailModel::PowerLaw => {
            let seq: Vec<f64> = runs.iter().map(|r| r.alpha_hat).collect();
            let (value, _, corr) = geometric_extrapolate(&seq);
            let spread = if seq.len() >= 2 {
                (seq[seq.len() - 1] - seq[seq.len() - 2]).abs()
            } else {
                0.0
            };
            (value, corr.max(spread))
        }
    };
    let fit_r_squared = runs.last().map(|r| r.r_squared).unwrap_or(0.0);
    let in_band = alpha_hat >= exps.alpha_plus - 0.02 && alpha_hat <= exps.alpha_minus + 0.02;
    Ok(ExponentEstimate {
        alpha_hat,
        half_width,
        model,
        fit_r_squared,
        flagged: fit_r_squared < opts.min_r_squared || !in_band,
        runs,
    })
}

fn single_run(
    f: &OperatorSpec,
    e: &Ellipticity,
    exps: &ScalingExponents,
    r_far: f64,
    opts: &ExponentOptions,
) -> Result<ExponentRun, FundamentalError> {
    let n1 = (e.dim - 1) as f64;
    let mesh_bound = 2.0 * e.lambda / (n1 * e.big_lambda);
    let h = opts.target_h.min(0.9 * mesh_bound);
    let nodes = ((r_far - 1.0) / h).ceil() as usize + 1;
    let grid = RadialGrid::new(1.0, r_far, nodes.max(33))?;
    let problem = DirichletProblem {
        operator: f.clone(),
        domain: Grid::Radial(grid),
        rhs: 0.0,
        boundary: BoundaryData::InnerOuter {
            inner: 1.0,
            outer: 0.0,
        },
    };
    let (u, _) = crate::solver::solve(&problem, &opts.solve)?;

    let (lo, hi) = (2.0_f64.min(1.0 + 0.25 * (r_far - 1.0)), 0.25 * r_far);
    let mut rs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..grid.nodes {
        let r = grid.radius(i);
        if r >= lo && r <= hi {
            rs.push(r);
            ys.push(u.values[i]);
        }
    }
    if rs.len() < 8 {
        return Err(FundamentalError::WindowTooSmall {
            lo,
            hi,
            need: 8,
        });
    }

    let sst: f64 = {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>()
    };
    let sst = sst.max(1e-30);

    // power model: scan the admissible exponent band, then refine
    let lo_a = exps.alpha_plus - 0.75;
    let hi_a = exps.alpha_minus + 0.75;
    let ssr_power = |alpha: f64| -> f64 {
        let gs: Vec<f64> = rs.iter().map(|r| r.powf(-alpha)).collect();
        linear_fit(&gs, &ys).ss_res
    };
    let mut best_alpha = lo_a;
    let mut best_ssr = f64::INFINITY;
    let steps = 240;
    for k in 0..=steps {
        let a = lo_a + (hi_a - lo_a) * k as f64 / steps as f64;
        let s = ssr_power(a);
        if s < best_ssr {
            best_ssr = s;
            best_alpha = a;
        }
    }
    let span = (hi_a - lo_a) / steps as f64;
    let (mut a_lo, mut a_hi) = (best_alpha - span, best_alpha + span);
    for _ in 0..60 {
        let m1 = a_lo + (a_hi - a_lo) / 3.0;
        let m2 = a_hi - (a_hi - a_lo) / 3.0;
        if ssr_power(m1) <= ssr_power(m2) {
            a_hi = m2;
        } else {
            a_lo = m1;
        }
    }
    let alpha = 0.5 * (a_lo + a_hi);
    let power_rel = ssr_power(alpha) / sst;

    // log model
    let gs: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let log_rel = linear_fit(&gs, &ys).ss_res / sst;

    // c·r^(−α) + b degenerates into c'·ln r + b' as α → 0, so a fitted
    // exponent inside the resolution of the scan is the logarithmic branch
    let degenerate_power = alpha.abs() < 0.01;
    let (model, alpha_hat, rel) = if degenerate_power || log_rel <= opts.log_preference * power_rel
    {
        (TailModel::Logarithmic, 0.0, log_rel)
    } else {
        (TailModel::PowerLaw, alpha, power_rel)
    };
    Ok(ExponentRun {
        r_far,
        alpha_hat,
        model,
        rel_residual: rel,
        r_squared: (1.0 - rel).clamp(0.0, 1.0),
    })
}

/// Row of the exponent table emitted as CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentRow {
    pub lambda: f64,
    pub big_lambda: f64,
    pub n: usize,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub alpha_star_hat: f64,
    pub fit_r2: f64,
}

pub fn write_exponent_table(mut w: impl Write, rows: &[ExponentRow]) -> std::io::Result<()> {
    writeln!(w, "# pucci-lab exponent-table v1")?;
    writeln!(w, "lambda,Lambda,n,alpha_plus,alpha_minus,alpha_star_hat,fit_r2")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.17e},{:.17e},{:.17e},{:.6}",
            r.lambda, r.big_lambda, r.n, r.alpha_plus, r.alpha_minus, r.alpha_star_hat, r.fit_r2
        )?;
    }
    Ok(())
}

/// Exact scaling exponent of the radialized operator: the root a of
/// `ext_c (alpha_c·(a+1) − (n−1)·beta_c) = 0`, where ext is the operator's
/// max/min over its coefficient pairs. Only used as an oracle in tests and
/// tables; the root exists and is unique because each branch is strictly
/// increasing in a.
pub fn radialized_exponent_oracle(f: &OperatorSpec) -> Result<f64, FundamentalError> {
    let rc = radial_controls(f)?;
    let n1 = (f.dim() - 1) as f64;
    let g = |a: f64| -> f64 {
        let vals = rc.pairs.iter().map(|&(al, be)| al * (a + 1.0) - n1 * be);
        if rc.maximizing {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.fold(f64::INFINITY, f64::min)
        }
    };
    let (mut lo, mut hi) = (-0.999999, 1e6);
    debug_assert!(g(lo) < 0.0 && g(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(l: f64, b: f64, n: usize) -> Ellipticity {
        Ellipticity::new(l, b, n).unwrap()
    }

    #[test]
    fn exponent_formulas() {
        let s = scaling_exponents(&e(1.0, 1.0, 3));
        assert_eq!(s.alpha_plus, 1.0);
        assert_eq!(s.alpha_minus, 1.0);
        let s = scaling_exponents(&e(1.0, 2.0, 2));
        assert_eq!(s.alpha_plus, -0.5);
        assert_eq!(s.alpha_minus, 1.0);
        let s = scaling_exponents(&e(1.0, 2.0, 4));
        assert_eq!(s.alpha_plus, 0.5);
        assert_eq!(s.alpha_minus, 5.0);
    }

    #[test]
    fn exponent_ordering_and_lower_bound_on_grid() {
        for &(l, b) in &[(1.0, 1.0), (1.0, 1.5), (1.0, 2.0), (1.0, 3.0), (2.0, 5.0)] {
            for n in 2..=5 {
                let s = scaling_exponents(&e(l, b, n));
                assert!(s.alpha_plus <= s.alpha_minus);
                assert!(s.alpha_minus >= 0.0);
                assert!(s.alpha_plus > -1.0);
            }
        }
    }

    #[test]
    fn eval_examples() {
        // Laplace case: E+ = r^{2-n}
        let fs = FundamentalSolution::upward_plus(e(1.0, 1.0, 3));
        assert_abs_diff_eq!(fs.eval(2.0).unwrap(), 0.5, epsilon = 1e-15);
        // growth case (1,2,2): E+ = -sqrt(r)
        let fs = FundamentalSolution::upward_plus(e(1.0, 2.0, 2));
        assert_abs_diff_eq!(fs.eval(4.0).unwrap(), -2.0, epsilon = 1e-15);
        // log case (1,2,3): E+ = -ln r
        let fs = FundamentalSolution::upward_plus(e(1.0, 2.0, 3));
        assert_abs_diff_eq!(fs.eval(std::f64::consts::E).unwrap(), -1.0, epsilon = 1e-15);
        assert!(fs.eval(0.0).is_err());
    }

    #[test]
    fn branch_table() {
        for &(l, b, n) in &[
            (1.0, 1.0, 2usize),
            (1.0, 1.0, 3),
            (1.0, 2.0, 2),
            (1.0, 2.0, 3),
            (1.0, 2.0, 4),
            (1.0, 3.0, 4),
            (1.0, 3.0, 3),
        ] {
            let el = e(l, b, n);
            let n1 = (n - 1) as f64;
            let up = FundamentalSolution::upward_plus(el);
            match up.branch {
                Branch::PowerLaw { exponent, sign } => {
                    assert_abs_diff_eq!(exponent, 1.0 - n1 * l / b, epsilon = 1e-15);
                    if el.ratio() < n1 {
                        assert_eq!(sign, 1.0);
                    } else {
                        assert_eq!(sign, -1.0);
                    }
                }
                Branch::Logarithmic { sign } => {
                    assert_eq!(el.ratio(), n1);
                    assert_eq!(sign, -1.0);
                }
            }
            let um = FundamentalSolution::upward_minus(el);
            match um.branch {
                Branch::Logarithmic { .. } => {
                    assert!(el.ratio() == 1.0 && n == 2);
                }
                Branch::PowerLaw { exponent, sign } => {
                    assert_abs_diff_eq!(exponent, 1.0 - n1 * b / l, epsilon = 1e-15);
                    assert_eq!(sign, 1.0);
                }
            }
        }
    }

    #[test]
    fn downward_solutions_negate_upward_of_other_side() {
        for &(l, b, n) in &[(1.0, 2.0, 2usize), (1.0, 2.0, 3), (1.0, 1.0, 2), (1.0, 3.0, 4)] {
            let el = e(l, b, n);
            let ep = FundamentalSolution::downward(PucciSide::Plus, el);
            let em_up = FundamentalSolution::upward_minus(el);
            let en = FundamentalSolution::downward(PucciSide::Minus, el);
            let ep_up = FundamentalSolution::upward_plus(el);
            for &r in &[0.5, 1.0, 2.0, 7.3, 50.0] {
                assert_abs_diff_eq!(
                    ep.eval(r).unwrap(),
                    -em_up.eval(r).unwrap(),
                    epsilon = 1e-14
                );
                assert_abs_diff_eq!(
                    en.eval(r).unwrap(),
                    -ep_up.eval(r).unwrap(),
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn residuals_vanish_for_own_operator() {
        let el = e(1.0, 2.0, 2);
        let fs = FundamentalSolution::upward_plus(el);
        let op = OperatorSpec::PucciPlus(el);
        for k in 0..100 {
            let r = 1.1 + 48.9 * k as f64 / 99.0;
            let res = radial_residual(&op, fs.du(r), fs.ddu(r), r).unwrap();
            assert!(res.abs() <= 1e-9, "residual {res} at r = {r}");
        }
        let el = e(1.0, 2.0, 3);
        let fs = FundamentalSolution::upward_minus(el);
        let op = OperatorSpec::PucciMinus(el);
        let res = radial_residual(&op, fs.du(3.0), fs.ddu(3.0), 3.0).unwrap();
        assert!(res.abs() <= 1e-9);
    }

    #[test]
    fn quadratic_is_not_a_fundamental_solution() {
        // u = r² under the Laplacian in the plane: residual 2n = 4
        let op = OperatorSpec::Laplace { dim: 2 };
        for &r in &[1.0, 2.0, 10.0] {
            let res = radial_residual(&op, 2.0 * r, 2.0, r).unwrap();
            assert_abs_diff_eq!(res, 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tail_homogeneity_identity() {
        for &(l, b, n) in &[(1.0, 2.0, 2usize), (1.0, 2.0, 4), (1.0, 2.0, 3)] {
            let fs = FundamentalSolution::upward_plus(e(l, b, n));
            let alpha = fs.alpha_star();
            for &r in &[1.0, 2.5, 8.0] {
                for &t in &[2.0, 3.0, 10.0] {
                    let lhs = fs.eval(t * r).unwrap();
                    let rhs = match fs.branch {
                        Branch::PowerLaw { .. } => t.powf(-alpha) * fs.eval(r).unwrap(),
                        Branch::Logarithmic { sign } => fs.eval(r).unwrap() + sign * t.ln(),
                    };
                    assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * lhs.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_upward(&[2.0, 2.0, 2.0], 1.0).unwrap(),
            Normalization::Scale(0.5)
        );
        // E+ at (1,2,2) on the unit sphere: value −1, α* = −1/2
        assert_eq!(
            normalize_upward(&[-1.0, -1.0], -0.5).unwrap(),
            Normalization::Scale(1.0)
        );
        // logarithmic branch at the unit sphere: all zeros, shift 0
        assert_eq!(
            normalize_upward(&[0.0, 0.0, 0.0], 0.0).unwrap(),
            Normalization::Shift(0.0)
        );
        assert!(normalize_upward(&[0.0, 0.0], 1.0).is_err());
        assert!(normalize_upward(&[], 1.0).is_err());
    }

    #[test]
    fn estimates_laplace_exponent_quickly() {
        let op = OperatorSpec::Laplace { dim: 3 };
        let opts = ExponentOptions {
            r_far: vec![16.0, 32.0, 64.0],
            target_h: 0.125,
            ..Default::default()
        };
        let est = estimate_scaling_exponent(&op, &opts).unwrap();
        assert_eq!(est.model, TailModel::PowerLaw);
        assert!((est.alpha_hat - 1.0).abs() <= 0.02, "alpha {}", est.alpha_hat);
        assert!(!est.flagged);
    }

    #[test]
    fn detects_logarithmic_branch() {
        let op = OperatorSpec::Laplace { dim: 2 };
        let opts = ExponentOptions {
            r_far: vec![16.0, 32.0, 64.0],
            ..Default::default()
        };
        let est = estimate_scaling_exponent(&op, &opts).unwrap();
        assert_eq!(est.model, TailModel::Logarithmic);
        assert_eq!(est.alpha_hat, 0.0);
    }

    #[test]
    fn radialized_oracle_matches_closed_forms() {
        let el = e(1.0, 2.0, 4);
        let plus = radialized_exponent_oracle(&OperatorSpec::PucciPlus(el)).unwrap();
        assert_abs_diff_eq!(plus, 0.5, epsilon = 1e-9);
        let lap = radialized_exponent_oracle(&OperatorSpec::Laplace { dim: 3 }).unwrap();
        assert_abs_diff_eq!(lap, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn upward_solutions_point_upward() {
        // bounded below inside the unit ball, bounded above outside it
        for &(l, b, n) in &[(1.0, 2.0, 2usize), (1.0, 2.0, 3), (1.0, 2.0, 4), (1.0, 1.0, 2)] {
            let el = e(l, b, n);
            for fs in [
                FundamentalSolution::upward_plus(el),
                FundamentalSolution::upward_minus(el),
            ] {
                for k in 1..=40 {
                    let inside = k as f64 / 41.0;
                    assert!(fs.eval(inside).unwrap() >= -1.0 - 1e-12);
                    let outside = 1.0 + 3.0 * k as f64;
                    assert!(fs.eval(outside).unwrap() <= 1.0 + 1e-12);
                }
            }
        }
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Applying the returned scale makes the samples upward-normalized.
        #[test]
        fn normalization_scale_normalizes(
            base in 0.05..20.0f64,
            jitter in proptest::collection::vec(0.0..1.0f64, 8),
            sign in prop_oneof![Just(1.0f64), Just(-1.0f64)],
        ) {
            let alpha = sign * 0.5;
            // samples with the sign of alpha, bounded away from zero
            let samples: Vec<f64> = jitter.iter().map(|j| sign * (base + j)).collect();
            match normalize_upward(&samples, alpha).unwrap() {
                Normalization::Scale(s) => {
                    let m = samples
                        .iter()
                        .map(|v| alpha.signum() * v * s)
                        .fold(f64::INFINITY, f64::min);
                    prop_assert!((m - 1.0).abs() <= 1e-12);
                }
                other => prop_assert!(false, "expected a scale, got {:?}", other),
            }
        }

        /// Power tails scale exactly: Φ(t·r) = t^(−α*)·Φ(r).
        #[test]
        fn power_tail_scaling(r in 0.2..30.0f64, t in 0.2..30.0f64) {
            let e = Ellipticity::new(1.0, 2.0, 4).unwrap();
            let fs = FundamentalSolution::upward_plus(e);
            let lhs = fs.eval(t * r).unwrap();
            let rhs = t.powf(-fs.alpha_star()) * fs.eval(r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
