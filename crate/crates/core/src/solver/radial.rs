//! Radial reduction of rotation-invariant operators. The Hessian of a radial
//! function has eigenvalues {u'' , u'/r × (n−1)}, so the operator becomes an
//! extremum of `a·u'' + (n−1)·b·u'/r` over coefficient pairs and each policy
//! system is tridiagonal.
//!
//! Annuli use central differences throughout; this is monotone under the
//! mesh condition h ≤ 2·r_in·λ/((n−1)·Λ), which is enforced as a
//! precondition. Ball grids have no inner radius to protect them, so nodes
//! where the central first difference would break the M-matrix sign fall
//! back to the one-sided difference.

use super::{BoundarySide, DirichletProblem, SolveError, SolveOptions, SolveReport};
use crate::grid::{Grid, GridFunction, RadialGrid};
use crate::linsys::tridiag_solve;
use crate::operator::{radial_controls, RadialControls};
use std::time::Instant;

struct RadialScheme {
    grid: RadialGrid,
    dim: usize,
    controls: RadialControls,
    rhs: f64,
    g_in: f64,
    g_out: f64,
    /// per interior node: use central first difference (else forward)
    central: Vec<bool>,
}

impl RadialScheme {
    fn build(p: &DirichletProblem, grid: RadialGrid) -> Result<Self, SolveError> {
        // Bellman families with anisotropic controls are radialized through
        // the closure of the control set under conjugation; for isotropic
        // sets and the extremal operators this is the operator itself.
        let controls = radial_controls(&p.operator)?;
        let dim = p.operator.dim();
        let e = p.operator.ellipticity();
        let h = grid.h();
        let n1 = (dim - 1) as f64;

        // worst-case monotonicity bound over the control set
        let a_min = controls.pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let b_max = controls.pairs.iter().map(|p| p.1).fold(0.0f64, f64::max);
        debug_assert!(a_min >= e.lambda - 1e-12 && b_max <= e.big_lambda + 1e-12);

        if !grid.is_ball() {
            let bound = 2.0 * grid.r_in * a_min / (n1 * b_max);
            if h > bound + 1e-12 {
                return Err(SolveError::MeshCondition { h, bound });
            }
        }

        let mut central = vec![true; grid.nodes];
        for i in 0..grid.nodes {
            if grid.is_boundary(i) || (grid.is_ball() && i == 0) {
                continue;
            }
            let r = grid.radius(i);
            central[i] = h <= 2.0 * r * a_min / (n1 * b_max) + 1e-12;
        }

        let g_in = p
            .boundary
            .at_angle(BoundarySide::Inner, grid.r_in, 0.0);
        let g_out = p
            .boundary
            .at_angle(BoundarySide::Outer, grid.r_out, 0.0);
        Ok(Self {
            grid,
            dim,
            controls,
            rhs: p.rhs,
            g_in,
            g_out,
            central,
        })
    }

    /// (s, d) = (second difference, first difference / r) at interior node i.
    fn derivatives(&self, u: &[f64], i: usize) -> (f64, f64) {
        let h = self.grid.h();
        if self.grid.is_ball() && i == 0 {
            // symmetric center: u'(0) = 0, all eigenvalues equal s
            let s = 2.0 * (u[1] - u[0]) / (h * h);
            return (s, s);
        }
        let r = self.grid.radius(i);
        let s = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
        let du = if self.central[i] {
            (u[i + 1] - u[i - 1]) / (2.0 * h)
        } else {
            (u[i + 1] - u[i]) / h
        };
        (s, du / r)
    }

    fn best_pair(&self, s: f64, d: f64) -> usize {
        let n1 = (self.dim - 1) as f64;
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (k, &(a, b)) in self.controls.pairs.iter().enumerate() {
            let v = a * s + n1 * b * d;
            let v = if self.controls.maximizing { v } else { -v };
            if v > best_val + 1e-15 {
                best_val = v;
                best = k;
            }
        }
        best
    }

    fn residual(&self, u: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.grid.nodes {
            if self.grid.is_boundary(i) {
                continue;
            }
            let (s, d) = self.derivatives(u, i);
            let value = self.controls.value(s, d, self.dim);
            worst = worst.max((value - self.rhs).abs());
        }
        worst
    }

    fn solve_policy(&self, policy: &[usize]) -> Result<Vec<f64>, SolveError> {
        let n = self.grid.nodes;
        let h = self.grid.h();
        let n1 = (self.dim - 1) as f64;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            if self.grid.is_boundary(i) {
                diag[i] = 1.0;
                rhs[i] = if i == 0 { self.g_in } else { self.g_out };
                continue;
            }
            let (a, b) = self.controls.pairs[policy[i]];
            if self.grid.is_ball() && i == 0 {
                // F(s·I) = A with s = 2(u1 - u0)/h²; coefficient a + (n−1)b
                let c = (a + n1 * b) * 2.0 / (h * h);
                diag[i] = -c;
                upper[i] = c;
                rhs[i] = self.rhs;
                continue;
            }
            let r = self.grid.radius(i);
            let w = n1 * b / r;
            if self.central[i] {
                lower[i] = a / (h * h) - w / (2.0 * h);
                diag[i] = -2.0 * a / (h * h);
                upper[i] = a / (h * h) + w / (2.0 * h);
            } else {
                lower[i] = a / (h * h);
                diag[i] = -2.0 * a / (h * h) - w / h;
                upper[i] = a / (h * h) + w / h;
            }
            rhs[i] = self.rhs;
        }
        Ok(tridiag_solve(&lower, &diag, &upper, &rhs)?)
    }

    fn initial_guess(&self) -> Vec<f64> {
        let n = self.grid.nodes;
        if self.grid.is_ball() {
            return vec![self.g_out; n];
        }
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                self.g_in * (1.0 - t) + self.g_out * t
            })
            .collect()
    }
}

pub fn solve_radial(
    p: &DirichletProblem,
    opts: &SolveOptions,
) -> Result<(GridFunction, SolveReport), SolveError> {
    let start = Instant::now();
    let grid = match &p.domain {
        Grid::Radial(g) => *g,
        Grid::Polar(_) => {
            return Err(SolveError::UnsupportedOperator(
                "solve_radial called with a polar domain".into(),
            ))
        }
    };
    let scheme = RadialScheme::build(p, grid)?;
    let n = grid.nodes;
    let mut u = scheme.initial_guess();
    let mut policy = vec![0usize; n];
    let mut switches = 0usize;
    let mut seen_policies: Vec<u64> = Vec::new();
    let mut damped = false;

    for iter in 1..=opts.max_policy_iterations {
        // policy improvement
        let mut changed = 0usize;
        for i in 0..n {
            if grid.is_boundary(i) {
                continue;
            }
            let (s, d) = scheme.derivatives(&u, i);
            let best = scheme.best_pair(s, d);
            if best != policy[i] {
                policy[i] = best;
                changed += 1;
            }
        }
        switches += changed;
        if changed == 0 && iter > 1 {
            let residual = scheme.residual(&u);
            return finish(u, grid, residual, iter, switches, start, opts);
        }

        let sig = policy_signature(&policy);
        if seen_policies.contains(&sig) && !damped {
            // policy cycle: damp once and continue
            damped = true;
            let fresh = scheme.solve_policy(&policy)?;
            for i in 0..n {
                u[i] = 0.5 * (u[i] + fresh[i]);
            }
            continue;
        }
        seen_policies.push(sig);

        u = scheme.solve_policy(&policy)?;
        let residual = scheme.residual(&u);
        if residual <= opts.tolerance {
            return finish(u, grid, residual, iter, switches, start, opts);
        }
    }
    Err(SolveError::NonConvergence {
        iterations: opts.max_policy_iterations,
        residual: scheme.residual(&u),
    })
}

fn finish(
    u: Vec<f64>,
    grid: RadialGrid,
    residual: f64,
    iterations: usize,
    policy_switches: usize,
    start: Instant,
    _opts: &SolveOptions,
) -> Result<(GridFunction, SolveReport), SolveError> {
    let gf = GridFunction::new(Grid::Radial(grid), u)?;
    Ok((
        gf,
        SolveReport {
            iterations,
            residual,
            policy_switches,
            wall_ms: start.elapsed().as_millis() as u64,
            linear_iterations: 0,
        },
    ))
}

fn policy_signature(policy: &[usize]) -> u64 {
    // FNV-1a over the policy indices
    let mut h: u64 = 0xcbf29ce484222325;
    for &p in policy {
        h ^= p as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundamental::FundamentalSolution;
    use crate::solver::BoundaryData;
    use crate::operator::{Ellipticity, OperatorSpec};
    use approx::assert_abs_diff_eq;

    fn problem(
        op: OperatorSpec,
        grid: RadialGrid,
        rhs: f64,
        boundary: BoundaryData,
    ) -> DirichletProblem {
        DirichletProblem {
            operator: op,
            domain: Grid::Radial(grid),
            rhs,
            boundary,
        }
    }

    #[test]
    fn laplace_log_annulus() {
        let grid = RadialGrid::new(1.0, 8.0, 513).unwrap();
        let p = problem(
            OperatorSpec::Laplace { dim: 2 },
            grid,
            0.0,
            BoundaryData::InnerOuter {
                inner: 0.0,
                outer: 8.0f64.ln(),
            },
        );
        let (u, report) = solve_radial(&p, &SolveOptions::default()).unwrap();
        assert!(report.residual <= 1e-10);
        let mut err = 0.0f64;
        for i in 0..grid.nodes {
            err = err.max((u.values[i] - grid.radius(i).ln()).abs());
        }
        assert!(err <= 1e-3, "sup error {err}");
    }

    #[test]
    fn pucci_manufactured_fundamental_solution() {
        let e = Ellipticity::new(1.0, 2.0, 2).unwrap();
        let fs = FundamentalSolution::upward_plus(e);
        let grid = RadialGrid::new(1.0, 16.0, 257).unwrap();
        let p = problem(
            OperatorSpec::PucciPlus(e),
            grid,
            0.0,
            BoundaryData::InnerOuter {
                inner: fs.eval(1.0).unwrap(),
                outer: fs.eval(16.0).unwrap(),
            },
        );
        let (u, _) = solve_radial(&p, &SolveOptions::default()).unwrap();
        let mut err = 0.0f64;
        for i in 0..grid.nodes {
            err = err.max((u.values[i] - fs.eval(grid.radius(i)).unwrap()).abs());
        }
        assert!(err <= 5e-3, "sup error {err}");
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let e = Ellipticity::new(1.0, 2.0, 3).unwrap();
        let grid = RadialGrid::new(1.0, 4.0, 65).unwrap();
        let p = problem(
            OperatorSpec::PucciPlus(e),
            grid,
            0.0,
            BoundaryData::Constant(2.5),
        );
        let (u, _) = solve_radial(&p, &SolveOptions::default()).unwrap();
        for v in &u.values {
            assert_abs_diff_eq!(*v, 2.5, epsilon = 1e-11);
        }
    }

    #[test]
    fn mesh_condition_rejected() {
        let e = Ellipticity::new(1.0, 4.0, 3).unwrap();
        // bound = 2·1·1/(2·4) = 0.25; h = 3/8 violates it
        let grid = RadialGrid::new(1.0, 4.0, 9).unwrap();
        let p = problem(
            OperatorSpec::PucciPlus(e),
            grid,
            0.0,
            BoundaryData::Constant(0.0),
        );
        match solve_radial(&p, &SolveOptions::default()) {
            Err(SolveError::MeshCondition { .. }) => {}
            other => panic!("expected mesh-condition rejection, got {other:?}"),
        }
    }

    #[test]
    fn ball_quadratic_is_exact() {
        // Δ(r²) = 2n exactly under the central scheme, including the center
        let grid = RadialGrid::new(0.0, 2.0, 33).unwrap();
        let p = problem(
            OperatorSpec::Laplace { dim: 3 },
            grid,
            6.0,
            BoundaryData::Constant(4.0),
        );
        let (u, _) = solve_radial(&p, &SolveOptions::default()).unwrap();
        for i in 0..grid.nodes {
            let r = grid.radius(i);
            assert_abs_diff_eq!(u.values[i], r * r, epsilon = 1e-9);
        }
    }

    #[test]
    fn pucci_ball_with_constant_data() {
        // F(0) = 0, so a constant is the unique solution on the ball
        let e = Ellipticity::new(1.0, 3.0, 2).unwrap();
        let grid = RadialGrid::new(0.0, 4.0, 65).unwrap();
        let p = problem(
            OperatorSpec::PucciMinus(e),
            grid,
            0.0,
            BoundaryData::Constant(-1.5),
        );
        let (u, _) = solve_radial(&p, &SolveOptions::default()).unwrap();
        for v in &u.values {
            assert_abs_diff_eq!(*v, -1.5, epsilon = 1e-11);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let e = Ellipticity::new(1.0, 2.0, 2).unwrap();
        let grid = RadialGrid::new(1.0, 16.0, 129).unwrap();
        let p = problem(
            OperatorSpec::PucciPlus(e),
            grid,
            0.0,
            BoundaryData::InnerOuter {
                inner: -1.0,
                outer: -4.0,
            },
        );
        let (u1, _) = solve_radial(&p, &SolveOptions::default()).unwrap();
        let (u2, _) = solve_radial(&p, &SolveOptions::default()).unwrap();
        assert_eq!(u1.values, u2.values);
    }
}
