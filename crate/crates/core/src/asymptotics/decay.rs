//! Per-sphere deviation statistics, decay-model fitting, and the envelope
//! bound verification for extracted profiles.

use super::profile::AnyProfile;
use super::AsymptoticsError;
use crate::fit::linear_fit;
use crate::fundamental::FundamentalSolution;
use crate::grid::{Grid, GridFunction};
use crate::operator::{Ellipticity, SymMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;

/// Deviations below this are treated as numerically zero.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SphereRow {
    pub r: f64,
    pub sup_dev: f64,
    pub grad_dev: f64,
    pub hess_dev: Option<f64>,
    pub envelope: f64,
    pub ratio_phi: Option<f64>,
    pub ratio_phi_tilde: Option<f64>,
}

/// Deterministic unit directions used to scan spheres of radial data.
fn sphere_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 2 {
        return (0..count)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xd12ec7);
    (0..count)
        .map(|_| {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-3 {
                    return v.iter().map(|x| x / n).collect();
                }
            }
        })
        .collect()
}

fn spectral_norm(m: &SymMatrix) -> f64 {
    m.eigenvalues().iter().fold(0.0f64, |a, &e| a.max(e.abs()))
}

/// Per-sphere sup of |u − P|, |Du − DP| and (for quadratic profiles)
/// |D²u − D²P|, computed on grid rings nearest to the requested radii.
pub fn deviation_rows(
    u: &GridFunction,
    profile: AnyProfile<'_>,
    radii: &[f64],
) -> Result<Vec<(f64, f64, f64, Option<f64>)>, AsymptoticsError> {
    match &u.grid {
        Grid::Radial(g) => {
            let dim = match profile {
                AnyProfile::Linear(p) => p.gradient.len(),
                AnyProfile::Quadratic(p) => p.gradient.len(),
            };
            let dirs = sphere_directions(dim, if dim == 2 { 64 } else { 128 });
            let h = g.h();
            let mut rows = Vec::with_capacity(radii.len());
            for &r in radii {
                let i = u.nearest_ring(r).clamp(1, g.nodes - 2);
                let r = g.radius(i);
                let v = u.values[i];
                let dv = (u.values[i + 1] - u.values[i - 1]) / (2.0 * h);
                let ddv = (u.values[i + 1] - 2.0 * u.values[i] + u.values[i - 1]) / (h * h);
                let mut sup = 0.0f64;
                let mut gsup = 0.0f64;
                let mut hsup: Option<f64> = profile.hessian().map(|_| 0.0);
                for d in &dirs {
                    let x: Vec<f64> = d.iter().map(|c| c * r).collect();
                    sup = sup.max((v - profile.eval(&x)).abs());
                    let gp = profile.gradient_at(&x);
                    let gd: f64 = (0..dim)
                        .map(|k| {
                            let gu = dv * d[k];
                            (gu - gp[k]) * (gu - gp[k])
                        })
                        .sum::<f64>()
                        .sqrt();
                    gsup = gsup.max(gd);
                    if let Some(hp) = profile.hessian() {
                        // D²u = ddv·x̂x̂ᵀ + (dv/r)(I − x̂x̂ᵀ)
                        let mut m = SymMatrix::zeros(dim);
                        for a in 0..dim {
                            for b in a..dim {
                                let outer = d[a] * d[b];
                                let id = if a == b { 1.0 } else { 0.0 };
                                let val = ddv * outer + dv / r * (id - outer) - hp.get(a, b);
                                m.set_sym(a, b, val);
                            }
                        }
                        let s = spectral_norm(&m);
                        hsup = hsup.map(|cur| cur.max(s));
                    }
                }
                rows.push((r, sup, gsup, hsup));
            }
            Ok(rows)
        }
        Grid::Polar(g) => {
            let h = g.h();
            let dth = g.dtheta();
            let mut rows = Vec::with_capacity(radii.len());
            for &r in radii {
                let min_ring = if g.includes_center { 2 } else { 1 };
                let i = u.nearest_ring(r).clamp(min_ring, g.radial_nodes - 2);
                let r = g.ring_radius(i);
                let mut sup = 0.0f64;
                let mut gsup = 0.0f64;
                let mut hsup: Option<f64> = profile.hessian().map(|_| 0.0);
                for j in 0..g.angular_nodes {
                    let idx = g.index(i, j);
                    let [x, y] = g.position(idx);
                    let th = dth * j as f64;
                    let val = u.values[idx];
                    sup = sup.max((val - profile.eval(&[x, y])).abs());

                    let jp = (j + 1) % g.angular_nodes;
                    let jm = (j + g.angular_nodes - 1) % g.angular_nodes;
                    let ur = (u.values[g.index(i + 1, j)] - u.values[g.index(i - 1, j)])
                        / (2.0 * h);
                    let ut = (u.values[g.index(i, jp)] - u.values[g.index(i, jm)]) / (2.0 * dth);
                    let gx = ur * th.cos() - ut * th.sin() / r;
                    let gy = ur * th.sin() + ut * th.cos() / r;
                    let gp = profile.gradient_at(&[x, y]);
                    let gd = ((gx - gp[0]) * (gx - gp[0]) + (gy - gp[1]) * (gy - gp[1])).sqrt();
                    gsup = gsup.max(gd);

                    if let Some(hp) = profile.hessian() {
                        let urr = (u.values[g.index(i + 1, j)] - 2.0 * val
                            + u.values[g.index(i - 1, j)])
                            / (h * h);
                        let utt = (u.values[g.index(i, jp)] - 2.0 * val
                            + u.values[g.index(i, jm)])
                            / (dth * dth);
                        let urt = (u.values[g.index(i + 1, jp)] - u.values[g.index(i + 1, jm)]
                            - u.values[g.index(i - 1, jp)]
                            + u.values[g.index(i - 1, jm)])
                            / (4.0 * h * dth);
                        let (c, s) = (th.cos(), th.sin());
                        let radial_pair = ur / r + utt / (r * r);
                        let cross = urt / r - ut / (r * r);
                        let uxx = c * c * urr + s * s * radial_pair - 2.0 * s * c * cross;
                        let uyy = s * s * urr + c * c * radial_pair + 2.0 * s * c * cross;
                        let uxy = s * c * (urr - radial_pair) + (c * c - s * s) * cross;
                        let mut m = SymMatrix::zeros(2);
                        m.set_sym(0, 0, uxx - hp.get(0, 0));
                        m.set_sym(0, 1, uxy - hp.get(0, 1));
                        m.set_sym(1, 1, uyy - hp.get(1, 1));
                        let sn = spectral_norm(&m);
                        hsup = hsup.map(|cur| cur.max(sn));
                    }
                }
                rows.push((r, sup, gsup, hsup));
            }
            Ok(rows)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DecayModel {
    PowerLaw { exponent: f64 },
    Logarithmic,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub amplitude: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub enum FitOutcome {
    Fit(DecayFit),
    /// All deviations sit at the numerical noise floor; no exponent exists.
    Negligible { max_deviation: f64 },
}

/// Fits per-sphere sup deviations to C·r^p (log-log regression) and to
/// C·ln r (regression of log deviation on log log r), returning the model
/// with the smaller residual.
pub fn fit_decay(samples: &[(f64, f64)]) -> Result<FitOutcome, AsymptoticsError> {
    let clean: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(r, d)| r > 1.0 && d > NOISE_FLOOR * 10.0)
        .collect();
    let max_dev = samples.iter().map(|&(_, d)| d).fold(0.0f64, f64::max);
    if clean.len() < 5 {
        if max_dev <= NOISE_FLOOR * 10.0 {
            return Ok(FitOutcome::Negligible {
                max_deviation: max_dev,
            });
        }
        return Err(AsymptoticsError::TooFewSpheres {
            need: 5,
            got: clean.len(),
        });
    }
    let (r_lo, r_hi) = (clean[0].0, clean[clean.len() - 1].0);
    if r_hi < 2.0 * r_lo {
        return Err(AsymptoticsError::TooFewSpheres {
            need: 5,
            got: clean.len(),
        });
    }

    let log_dev: Vec<f64> = clean.iter().map(|&(_, d)| d.ln()).collect();
    let log_r: Vec<f64> = clean.iter().map(|&(r, _)| r.ln()).collect();
    let power = linear_fit(&log_r, &log_dev);

    // log model needs r > 1 strictly so that ln ln r is defined
    let loglog_r: Vec<f64> = clean.iter().map(|&(r, _)| r.ln().ln()).collect();
    let logm = linear_fit(&loglog_r, &log_dev);

    let fit = if logm.ss_res < power.ss_res {
        DecayFit {
            model: DecayModel::Logarithmic,
            amplitude: logm.intercept.exp(),
            r_squared: logm.r_squared,
            window: (r_lo, r_hi),
        }
    } else {
        DecayFit {
            model: DecayModel::PowerLaw {
                exponent: power.slope,
            },
            amplitude: power.intercept.exp(),
            r_squared: power.r_squared,
            window: (r_lo, r_hi),
        }
    };
    Ok(FitOutcome::Fit(fit))
}

/// Which envelope the ellipticity constants select.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EnvelopeCase {
    /// α⁺ < 0: the deviation may grow like r^(−α⁺).
    PowerGrowth,
    /// α⁺ = 0: logarithmic envelope.
    Log,
    /// α⁺ > 0: decaying power envelope.
    PowerDecay,
}

pub fn envelope_case(e: &Ellipticity) -> EnvelopeCase {
    let alpha_plus = (e.dim - 1) as f64 * e.lambda / e.big_lambda - 1.0;
    if alpha_plus.abs() < 1e-12 {
        EnvelopeCase::Log
    } else if alpha_plus < 0.0 {
        EnvelopeCase::PowerGrowth
    } else {
        EnvelopeCase::PowerDecay
    }
}

/// |E⁺|-style envelope for the zeroth-order bound; derivative orders divide
/// by r per order.
pub fn envelope(e: &Ellipticity, r: f64, order: usize) -> f64 {
    let alpha_plus = (e.dim - 1) as f64 * e.lambda / e.big_lambda - 1.0;
    let base = if alpha_plus.abs() < 1e-12 {
        r.ln()
    } else {
        r.powf(-alpha_plus)
    };
    base * r.powi(-(order as i32))
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayBoundReport {
    pub case: EnvelopeCase,
    pub rows: Vec<SphereRow>,
    /// Running sup of deviation/envelope per derivative order.
    pub c_sup: [f64; 3],
    /// Log-log trend slope of the ratio over the outer window, per order.
    pub trend_slope: [Option<f64>; 3],
    /// True when no ratio grows faster than the threshold over the window.
    pub no_growth: bool,
    pub trend_window: (f64, f64),
    pub growth_slope_threshold: f64,
}

/// Divides per-sphere deviations by the case envelope, reports the empirical
/// constants, and tests for a growth trend of the ratios over
/// [trend_from, r_max].
pub fn verify_decay_bounds(
    u: &GridFunction,
    profile: AnyProfile<'_>,
    e: &Ellipticity,
    radii: &[f64],
    trend_from: f64,
    phi: Option<&FundamentalSolution>,
    phi_tilde: Option<&FundamentalSolution>,
) -> Result<DecayBoundReport, AsymptoticsError> {
    let case = envelope_case(e);
    let dev = deviation_rows(u, profile, radii)?;
    let mut rows = Vec::with_capacity(dev.len());
    let mut c_sup = [0.0f64; 3];
    for &(r, sup, grad, hess) in &dev {
        // the log envelope vanishes at r = 1; those radii are excluded
        let env0 = envelope(e, r, 0);
        if env0.abs() < 1e-14 {
            continue;
        }
        let mean = u.sphere_stats(r)?.mean;
        let ratio_phi = phi.map(|f| mean / f.eval(r).unwrap_or(f64::NAN));
        let ratio_phi_tilde = phi_tilde.map(|f| mean / -f.eval(r).unwrap_or(f64::NAN));
        c_sup[0] = c_sup[0].max(sup / env0);
        c_sup[1] = c_sup[1].max(grad / envelope(e, r, 1));
        if let Some(hs) = hess {
            c_sup[2] = c_sup[2].max(hs / envelope(e, r, 2));
        }
        rows.push(SphereRow {
            r,
            sup_dev: sup,
            grad_dev: grad,
            hess_dev: hess,
            envelope: env0,
            ratio_phi,
            ratio_phi_tilde,
        });
    }

    let threshold = 0.15;
    let mut trend_slope = [None; 3];
    let mut no_growth = true;
    let r_max = rows.last().map(|r| r.r).unwrap_or(trend_from);
    for order in 0..3 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|row| row.r >= trend_from)
            .filter_map(|row| {
                let devv = match order {
                    0 => Some(row.sup_dev),
                    1 => Some(row.grad_dev),
                    _ => row.hess_dev,
                }?;
                if devv <= NOISE_FLOOR * 10.0 {
                    return None;
                }
                Some((row.r.ln(), (devv / envelope(e, row.r, order)).ln()))
            })
            .collect();
        if pts.len() >= 3 {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let slope = linear_fit(&xs, &ys).slope;
            trend_slope[order] = Some(slope);
            if slope > threshold {
                no_growth = false;
            }
        }
    }
    Ok(DecayBoundReport {
        case,
        rows,
        c_sup,
        trend_slope,
        no_growth,
        trend_window: (trend_from, r_max),
        growth_slope_threshold: threshold,
    })
}

/// Columnar CSV of the per-sphere statistics.
pub fn write_sphere_csv(mut w: impl Write, rows: &[SphereRow]) -> std::io::Result<()> {
    writeln!(w, "# pucci-lab sphere-stats v1")?;
    writeln!(
        w,
        "r,sup_dev,grad_dev,hess_dev,envelope,ratio_phi,ratio_phi_tilde"
    )?;
    for r in rows {
        let hess = r
            .hess_dev
            .map(|v| format!("{v:.17e}"))
            .unwrap_or_default();
        let rp = r
            .ratio_phi
            .map(|v| format!("{v:.17e}"))
            .unwrap_or_default();
        let rpt = r
            .ratio_phi_tilde
            .map(|v| format!("{v:.17e}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{},{:.17e},{},{}",
            r.r, r.sup_dev, r.grad_dev, hess, r.envelope, rp, rpt
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fits_exact_power_data() {
        let samples: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&r: &f64| (r, 1.0 / r))
            .collect();
        match fit_decay(&samples).unwrap() {
            FitOutcome::Fit(f) => {
                match f.model {
                    DecayModel::PowerLaw { exponent } => {
                        assert_abs_diff_eq!(exponent, -1.0, epsilon = 1e-10)
                    }
                    other => panic!("expected power law, got {other:?}"),
                }
                assert!(f.r_squared > 0.999);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn fits_exact_log_data() {
        let samples: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&r: &f64| (r, r.ln()))
            .collect();
        match fit_decay(&samples).unwrap() {
            FitOutcome::Fit(f) => assert_eq!(f.model, DecayModel::Logarithmic),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn growth_data_fits_positive_exponent() {
        let samples: Vec<(f64, f64)> = [2.0, 2.83, 4.0, 5.66, 8.0, 11.3, 16.0, 32.0]
            .iter()
            .map(|&r: &f64| (r, 2.0 * r.sqrt()))
            .collect();
        match fit_decay(&samples).unwrap() {
            FitOutcome::Fit(f) => match f.model {
                DecayModel::PowerLaw { exponent } => {
                    assert_abs_diff_eq!(exponent, 0.5, epsilon = 1e-9);
                    assert_abs_diff_eq!(f.amplitude, 2.0, epsilon = 1e-9);
                }
                other => panic!("expected power law, got {other:?}"),
            },
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn noise_floor_is_degenerate() {
        let samples: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&r: &f64| (r, 1e-15))
            .collect();
        match fit_decay(&samples).unwrap() {
            FitOutcome::Negligible { .. } => {}
            other => panic!("expected negligible outcome, got {other:?}"),
        }
    }

    #[test]
    fn envelope_bounds_for_manufactured_growth_tail() {
        use super::super::profile::LinearProfile;
        use crate::grid::{GridFunction, PolarGrid};
        let e = crate::operator::Ellipticity::new(1.0, 2.0, 2).unwrap();
        let g = PolarGrid::annulus(1.0, 48.0, 189, 48).unwrap();
        let u = GridFunction::sample_polar(g, |x, y| {
            let r = (x * x + y * y).sqrt();
            (x - 0.5) - 2.0 * r.sqrt()
        })
        .unwrap();
        let p = LinearProfile {
            gradient: vec![1.0, 0.0],
            constant: -0.5,
        };
        let radii: Vec<f64> = [2.0, 2.83, 4.0, 5.66, 8.0, 11.3, 16.0, 22.6, 32.0]
            .to_vec();
        let report = verify_decay_bounds(
            &u,
            AnyProfile::Linear(&p),
            &e,
            &radii,
            4.0,
            None,
            None,
        )
        .unwrap();
        assert_eq!(report.case, EnvelopeCase::PowerGrowth);
        // amplitude 2 by construction
        assert!((report.c_sup[0] - 2.0).abs() <= 0.2, "C0 = {}", report.c_sup[0]);
        // |Du - DP| = |du/dr of 2 sqrt(r)| = r^(-1/2) = envelope; ratio ~ 1
        assert!((report.c_sup[1] - 1.0).abs() <= 0.2, "C1 = {}", report.c_sup[1]);
        assert!(report.no_growth, "slopes {:?}", report.trend_slope);
    }

    #[test]
    fn exact_profile_has_negligible_constants() {
        use super::super::profile::LinearProfile;
        use crate::grid::{GridFunction, PolarGrid};
        let e = crate::operator::Ellipticity::new(1.0, 2.0, 2).unwrap();
        let g = PolarGrid::annulus(1.0, 48.0, 189, 48).unwrap();
        let u = GridFunction::sample_polar(g, |x, _| x - 0.5).unwrap();
        let p = LinearProfile {
            gradient: vec![1.0, 0.0],
            constant: -0.5,
        };
        let radii = vec![2.0, 4.0, 8.0, 16.0, 32.0];
        let report =
            verify_decay_bounds(&u, AnyProfile::Linear(&p), &e, &radii, 4.0, None, None)
                .unwrap();
        assert!(report.c_sup[0] <= 1e-10);
        // gradient constants carry only the angular-difference noise floor
        assert!(report.c_sup[1] <= 0.05, "C1 = {}", report.c_sup[1]);
    }
}
