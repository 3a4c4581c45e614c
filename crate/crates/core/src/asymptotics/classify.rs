//! Five-way classification of tails against the fundamental-solution pair.
//!
//! Writing v = u − P and v∞ for its limit at infinity, the alternatives are:
//! the per-sphere straddle `min ≤ v∞ ≤ max` on every tested sphere; the two
//! decaying matches (v − v∞)/Φ → a > 0 and (v − v∞)/(−Φ̃) → a > 0; and the
//! two unbounded matches v/Φ → a > 0 and v/(−Φ̃) → a > 0 with both sides
//! diverging. Finite truncation cannot always decide, so an inconclusive
//! outcome carries the full diagnostics instead of forcing a label.

use super::profile::LinearProfile;
use super::{estimate_limit_at_infinity, sphere_ladder, AsymptoticsError, LimitEstimate};
use crate::fit::geometric_extrapolate;
use crate::fundamental::FundamentalSolution;
use crate::grid::{Grid, GridFunction};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailVariant {
    /// v∞ lies between the per-sphere min and max on every tested sphere.
    Straddle,
    /// v − v∞ matches Φ with a positive ratio limit.
    UpSim,
    /// v − v∞ matches −Φ̃ with a positive ratio limit.
    DownSim,
    /// |v| → ∞ and v/Φ has a positive ratio limit.
    UpApprox,
    /// |v| → ∞ and v/(−Φ̃) has a positive ratio limit.
    DownApprox,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailClass {
    pub variant: TailVariant,
    /// Extrapolated ratio limit for the matched alternatives.
    pub ratio: Option<f64>,
    pub u_infinity: LimitEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyDiagnostics {
    pub u_infinity: LimitEstimate,
    pub radii: Vec<f64>,
    pub means: Vec<f64>,
    pub ratios_phi: Vec<f64>,
    pub ratios_phi_tilde: Vec<f64>,
    pub straddle_ok: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    /// Relative stability window for ratio limits over the last dyadic
    /// decade.
    pub ratio_stability: f64,
    /// Smallest ratio accepted as a positive limit.
    pub min_ratio: f64,
    /// Slack for the per-sphere straddle test.
    pub straddle_slack: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            ratio_stability: 0.05,
            min_ratio: 1e-6,
            straddle_slack: 1e-9,
        }
    }
}

fn ratio_limit(radii: &[f64], nums: &[f64], denoms: &[f64], opts: &ClassifyOptions) -> Option<f64> {
    let ratios: Vec<f64> = nums
        .iter()
        .zip(denoms)
        .map(|(n, d)| if d.abs() < 1e-300 { f64::NAN } else { n / d })
        .collect();
    if ratios.iter().any(|r| !r.is_finite()) {
        return None;
    }
    // stability over the last dyadic decade
    let r_max = *radii.last()?;
    let tail: Vec<f64> = radii
        .iter()
        .zip(&ratios)
        .filter(|(r, _)| **r >= 0.5 * r_max - 1e-12)
        .map(|(_, a)| *a)
        .collect();
    if tail.len() < 2 {
        return None;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    if mean <= opts.min_ratio {
        return None;
    }
    let stable = tail
        .iter()
        .all(|a| (a - mean).abs() <= opts.ratio_stability * mean.abs());
    let (extrapolated, q, _) = geometric_extrapolate(&ratios);
    let extrapolation_consistent =
        q.map_or(false, |q| (0.0..=0.95).contains(&q)) && extrapolated > opts.min_ratio;
    if stable || extrapolation_consistent {
        let value = if extrapolation_consistent {
            extrapolated
        } else {
            mean
        };
        (value > opts.min_ratio).then_some(value)
    } else {
        None
    }
}

/// Classifies the tail of u − P against the upward tails Φ (of the operator)
/// and Φ̃ (of its dual).
pub fn classify_tail(
    u: &GridFunction,
    p: &LinearProfile,
    phi: &FundamentalSolution,
    phi_tilde: &FundamentalSolution,
    opts: &ClassifyOptions,
) -> Result<TailClass, AsymptoticsError> {
    let v = subtract_profile(u, p)?;
    let ladder = sphere_ladder(&v, 2.0, 2, 0.98);
    if ladder.len() < 5 {
        return Err(AsymptoticsError::TooFewSpheres {
            need: 5,
            got: ladder.len(),
        });
    }
    let mut means = Vec::with_capacity(ladder.len());
    let mut mins = Vec::with_capacity(ladder.len());
    let mut maxs = Vec::with_capacity(ladder.len());
    for &r in &ladder {
        let s = v.sphere_stats(r)?;
        means.push(s.mean);
        mins.push(s.min);
        maxs.push(s.max);
    }
    let phi_vals: Vec<f64> = ladder.iter().map(|&r| phi.eval(r).unwrap()).collect();
    let neg_phi_tilde: Vec<f64> = ladder
        .iter()
        .map(|&r| -phi_tilde.eval(r).unwrap())
        .collect();

    let limit = estimate_limit_at_infinity(&v)?;
    let scale = means.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);

    if let Some(v_inf) = limit.finite_value() {
        let shifted: Vec<f64> = means.iter().map(|m| m - v_inf).collect();
        if let Some(a) = ratio_limit(&ladder, &shifted, &phi_vals, opts) {
            return Ok(TailClass {
                variant: TailVariant::UpSim,
                ratio: Some(a),
                u_infinity: limit,
            });
        }
        if let Some(a) = ratio_limit(&ladder, &shifted, &neg_phi_tilde, opts) {
            return Ok(TailClass {
                variant: TailVariant::DownSim,
                ratio: Some(a),
                u_infinity: limit,
            });
        }
        let slack = opts.straddle_slack * scale;
        let straddle = mins
            .iter()
            .zip(&maxs)
            .all(|(lo, hi)| *lo <= v_inf + slack && v_inf - slack <= *hi);
        if straddle {
            return Ok(TailClass {
                variant: TailVariant::Straddle,
                ratio: None,
                u_infinity: limit,
            });
        }
    } else {
        // unbounded tail: the matched envelope must be unbounded too
        let phi_grows = phi_vals.last().unwrap().abs() > phi_vals[0].abs();
        if phi_grows {
            if let Some(a) = ratio_limit(&ladder, &means, &phi_vals, opts) {
                return Ok(TailClass {
                    variant: TailVariant::UpApprox,
                    ratio: Some(a),
                    u_infinity: limit,
                });
            }
        }
        let tilde_grows = neg_phi_tilde.last().unwrap().abs() > neg_phi_tilde[0].abs();
        if tilde_grows {
            if let Some(a) = ratio_limit(&ladder, &means, &neg_phi_tilde, opts) {
                return Ok(TailClass {
                    variant: TailVariant::DownApprox,
                    ratio: Some(a),
                    u_infinity: limit,
                });
            }
        }
    }

    let ratios_phi = means
        .iter()
        .zip(&phi_vals)
        .map(|(m, p)| m / p)
        .collect();
    let ratios_phi_tilde = means
        .iter()
        .zip(&neg_phi_tilde)
        .map(|(m, p)| m / p)
        .collect();
    let straddle_ok = limit.finite_value().map_or(false, |v_inf| {
        mins.iter()
            .zip(&maxs)
            .all(|(lo, hi)| *lo <= v_inf && v_inf <= *hi)
    });
    Err(AsymptoticsError::Inconclusive(Box::new(
        ClassifyDiagnostics {
            u_infinity: limit,
            radii: ladder,
            means,
            ratios_phi,
            ratios_phi_tilde,
            straddle_ok,
        },
    )))
}

fn subtract_profile(u: &GridFunction, p: &LinearProfile) -> Result<GridFunction, AsymptoticsError> {
    let values = match &u.grid {
        Grid::Radial(g) => {
            // radial data is classified against profiles with (numerically)
            // zero gradient; the evaluation direction is immaterial then
            (0..g.nodes)
                .map(|i| {
                    let mut x = vec![0.0; p.gradient.len()];
                    x[0] = g.radius(i);
                    u.values[i] - p.eval(&x)
                })
                .collect()
        }
        Grid::Polar(g) => (0..g.node_count())
            .map(|idx| {
                let [x, y] = g.position(idx);
                u.values[idx] - p.eval(&[x, y])
            })
            .collect(),
    };
    Ok(GridFunction::new(u.grid.clone(), values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental::{FundamentalSolution, PucciSide};
    use crate::grid::{PolarGrid, RadialGrid};
    use crate::operator::Ellipticity;
    use approx::assert_abs_diff_eq;

    fn iso(n: usize) -> Ellipticity {
        Ellipticity::isotropic(n)
    }

    #[test]
    fn harmonic_tail_is_up_sim() {
        let g = RadialGrid::new(1.0, 64.0, 1009).unwrap();
        let u = GridFunction::sample_radial(g, |r| 1.0 + 1.0 / r).unwrap();
        let p = LinearProfile {
            gradient: vec![0.0, 0.0, 0.0],
            constant: 1.0,
        };
        let phi = FundamentalSolution::upward(PucciSide::Plus, iso(3));
        let cls = classify_tail(&u, &p, &phi, &phi, &ClassifyOptions::default()).unwrap();
        assert_eq!(cls.variant, TailVariant::UpSim);
        assert_abs_diff_eq!(cls.ratio.unwrap(), 1.0, epsilon = 0.02);
    }

    #[test]
    fn negative_harmonic_tail_is_down_sim() {
        let g = RadialGrid::new(1.0, 64.0, 1009).unwrap();
        let u = GridFunction::sample_radial(g, |r| 1.0 - 1.0 / r).unwrap();
        let p = LinearProfile {
            gradient: vec![0.0, 0.0, 0.0],
            constant: 1.0,
        };
        let phi = FundamentalSolution::upward(PucciSide::Plus, iso(3));
        let cls = classify_tail(&u, &p, &phi, &phi, &ClassifyOptions::default()).unwrap();
        assert_eq!(cls.variant, TailVariant::DownSim);
        assert_abs_diff_eq!(cls.ratio.unwrap(), 1.0, epsilon = 0.02);
    }

    #[test]
    fn planar_log_tail_is_approx_type() {
        let g = RadialGrid::new(1.0, 64.0, 1009).unwrap();
        let u = GridFunction::sample_radial(g, |r| -r.ln()).unwrap();
        let p = LinearProfile {
            gradient: vec![0.0, 0.0],
            constant: 0.0,
        };
        // Laplacian in the plane is self-dual with Φ = −ln r
        let phi = FundamentalSolution::upward(PucciSide::Plus, iso(2));
        let cls = classify_tail(&u, &p, &phi, &phi, &ClassifyOptions::default()).unwrap();
        assert_eq!(cls.variant, TailVariant::UpApprox);
        assert_abs_diff_eq!(cls.ratio.unwrap(), 1.0, epsilon = 0.02);
    }

    #[test]
    fn growth_match_against_downward_tail() {
        // v = 2·e⁻ = −2·E⁺ solves the minus operator; matches −Φ̃ with Φ̃ = E⁺
        let e = Ellipticity::new(1.0, 2.0, 2).unwrap();
        let g = RadialGrid::new(1.0, 64.0, 1009).unwrap();
        let u = GridFunction::sample_radial(g, |r| 2.0 * r.sqrt()).unwrap();
        let p = LinearProfile {
            gradient: vec![0.0, 0.0],
            constant: 0.0,
        };
        let phi = FundamentalSolution::upward(PucciSide::Minus, e);
        let phi_tilde = FundamentalSolution::upward(PucciSide::Plus, e);
        let cls = classify_tail(&u, &p, &phi, &phi_tilde, &ClassifyOptions::default()).unwrap();
        assert_eq!(cls.variant, TailVariant::DownApprox);
        assert_abs_diff_eq!(cls.ratio.unwrap(), 2.0, epsilon = 0.05);
    }

    #[test]
    fn exact_profile_is_straddle() {
        let g = PolarGrid::annulus(1.0, 48.0, 377, 16).unwrap();
        let u = GridFunction::sample_polar(g, |x, _| x - 0.5).unwrap();
        let p = LinearProfile {
            gradient: vec![1.0, 0.0],
            constant: -0.5,
        };
        let phi = FundamentalSolution::upward(PucciSide::Plus, iso(2));
        let cls = classify_tail(&u, &p, &phi, &phi, &ClassifyOptions::default()).unwrap();
        assert_eq!(cls.variant, TailVariant::Straddle);
    }
}
