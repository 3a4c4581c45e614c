//! Monotone finite-difference Dirichlet solvers for `F(D²u) = A` on radial
//! and polar grids, driven by Howard policy iteration.
//!
//! Both schemes linearize the operator as an extremum of linear forms with
//! nonnegative off-center coefficients, so each policy system is an M-matrix
//! and the assembled scheme obeys a discrete comparison principle.

pub mod polar;
pub mod radial;

use crate::grid::{Grid, GridError, GridFunction, PolarGrid, RadialGrid};
use crate::interp;
use crate::linsys::LinSysError;
use crate::operator::{OperatorError, OperatorSpec};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linear(#[from] LinSysError),
    #[error("mesh condition violated: h = {h:.6} exceeds 2·r_in·λ/((n−1)·Λ) = {bound:.6}")]
    MeshCondition { h: f64, bound: f64 },
    #[error("policy iteration did not converge after {iterations} iterations; residual {residual:.3e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("boundary data has {found} values, grid needs {expected}")]
    BoundaryMismatch { expected: usize, found: usize },
    #[error("operator is not solvable on this grid: {0}")]
    UnsupportedOperator(String),
    #[error("schedule radius {radius} exceeds the exterior data extent {extent}")]
    ScheduleOutOfRange { radius: f64, extent: f64 },
    #[error("schedule must be strictly increasing")]
    ScheduleNotIncreasing,
    #[error("comparison precondition violated: f > g at a boundary node by {0:.3e}")]
    BoundaryOrderViolated(f64),
    #[error("polar solves require dimension 2, operator has dimension {0}")]
    NotPlanar(usize),
    #[error("need at least {need} direction pairs, got {got}")]
    TooFewDirections { need: usize, got: usize },
    #[error("angular resolution too coarse: chord sagitta {sagitta:.4} exceeds 0.55·h (h = {h:.4})")]
    AngularResolution { sagitta: f64, h: f64 },
}

/// Dirichlet boundary values. `Func` receives Cartesian coordinates; radial
/// grids evaluate it at (r, 0).
#[derive(Clone)]
pub enum BoundaryData {
    Constant(f64),
    InnerOuter { inner: f64, outer: f64 },
    /// One value per angular node on each boundary circle (length 1 vectors
    /// for radial grids). `inner` is ignored for discs and balls.
    PerNode { inner: Vec<f64>, outer: Vec<f64> },
    Func(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::InnerOuter { inner, outer } => write!(f, "InnerOuter({inner}, {outer})"),
            Self::PerNode { inner, outer } => {
                write!(f, "PerNode(inner: {}, outer: {})", inner.len(), outer.len())
            }
            Self::Func(_) => write!(f, "Func(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BoundarySide {
    Inner,
    Outer,
}

impl BoundaryData {
    pub fn func(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Func(Arc::new(f))
    }

    /// Value at angle `theta` on the boundary circle of radius `r`.
    pub fn at_angle(&self, side: BoundarySide, r: f64, theta: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::InnerOuter { inner, outer } => match side {
                BoundarySide::Inner => *inner,
                BoundarySide::Outer => *outer,
            },
            Self::PerNode { inner, outer } => {
                let values = match side {
                    BoundarySide::Inner => inner,
                    BoundarySide::Outer => outer,
                };
                if values.len() == 1 {
                    values[0]
                } else {
                    interp::periodic_linear(values, theta)
                }
            }
            Self::Func(f) => f(r * theta.cos(), r * theta.sin()),
        }
    }

    fn validate_for(&self, grid: &Grid) -> Result<(), SolveError> {
        if let (Self::PerNode { inner, outer }, Grid::Polar(g)) = (self, grid) {
            let needs_inner = !g.includes_center;
            if outer.len() != g.angular_nodes {
                return Err(SolveError::BoundaryMismatch {
                    expected: g.angular_nodes,
                    found: outer.len(),
                });
            }
            if needs_inner && inner.len() != g.angular_nodes {
                return Err(SolveError::BoundaryMismatch {
                    expected: g.angular_nodes,
                    found: inner.len(),
                });
            }
        }
        Ok(())
    }
}

/// Dirichlet problem F(D²u) = A with constant right-hand side.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub operator: OperatorSpec,
    pub domain: Grid,
    pub rhs: f64,
    pub boundary: BoundaryData,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Sup-norm target for the nonlinear residual; policy fixpoint also
    /// declares convergence.
    pub tolerance: f64,
    pub max_policy_iterations: usize,
    /// Orthogonal direction pairs for the polar wide stencil.
    pub directions: usize,
    pub lin_rtol: f64,
    pub lin_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_policy_iterations: 200,
            directions: 8,
            lin_rtol: 1e-12,
            lin_max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub policy_switches: usize,
    pub wall_ms: u64,
    pub linear_iterations: usize,
}

/// Dispatches on the grid kind.
pub fn solve(p: &DirichletProblem, opts: &SolveOptions) -> Result<(GridFunction, SolveReport), SolveError> {
    p.boundary.validate_for(&p.domain)?;
    match &p.domain {
        Grid::Radial(_) => radial::solve_radial(p, opts),
        Grid::Polar(_) => polar::solve_polar(p, opts.directions, opts),
    }
}

/// Solves the same problem under two ordered boundary data sets and checks
/// the discrete comparison principle u_f ≤ u_g + 1e-12 nodewise.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub max_violation: f64,
    pub pass: bool,
}

pub fn discrete_comparison_check(
    base: &DirichletProblem,
    f: &BoundaryData,
    g: &BoundaryData,
    opts: &SolveOptions,
) -> Result<ComparisonReport, SolveError> {
    // precondition: f ≤ g on the boundary (checked on boundary nodes)
    let mut worst = 0.0f64;
    for (side, r, count) in boundary_circles(&base.domain) {
        for j in 0..count {
            let theta = std::f64::consts::TAU * j as f64 / count as f64;
            let df = f.at_angle(side, r, theta);
            let dg = g.at_angle(side, r, theta);
            worst = worst.max(df - dg);
        }
    }
    if worst > 1e-12 {
        return Err(SolveError::BoundaryOrderViolated(worst));
    }

    let mut pf = base.clone();
    pf.boundary = f.clone();
    let mut pg = base.clone();
    pg.boundary = g.clone();
    let (uf, _) = solve(&pf, opts)?;
    let (ug, _) = solve(&pg, opts)?;
    let max_violation = uf
        .values
        .iter()
        .zip(&ug.values)
        .map(|(a, b)| a - b)
        .fold(0.0f64, f64::max);
    Ok(ComparisonReport {
        max_violation,
        pass: max_violation <= 1e-12,
    })
}

fn boundary_circles(grid: &Grid) -> Vec<(BoundarySide, f64, usize)> {
    match grid {
        Grid::Radial(g) => {
            let mut v = vec![(BoundarySide::Outer, g.r_out, 1)];
            if !g.is_ball() {
                v.push((BoundarySide::Inner, g.r_in, 1));
            }
            v
        }
        Grid::Polar(g) => {
            let mut v = vec![(BoundarySide::Outer, g.r_out, g.angular_nodes)];
            if !g.includes_center {
                v.push((BoundarySide::Inner, g.r_in, g.angular_nodes));
            }
            v
        }
    }
}

/// One refinement level of a manufactured-solution study.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderRow {
    pub h: f64,
    pub sup_error: f64,
    /// log2(e_{k-1}/e_k); none on the first level.
    pub order: Option<f64>,
}

/// Halves the grid spacing per level and reports sup errors against the
/// exact solution (evaluated at Cartesian positions; radial grids use
/// (r, 0)).
pub fn convergence_study(
    p: &DirichletProblem,
    exact: &(dyn Fn(f64, f64) -> f64 + Sync),
    levels: usize,
    opts: &SolveOptions,
) -> Result<Vec<OrderRow>, SolveError> {
    let mut rows: Vec<OrderRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let domain = refine(&p.domain, level);
        let problem = DirichletProblem {
            operator: p.operator.clone(),
            domain: domain.clone(),
            rhs: p.rhs,
            boundary: p.boundary.clone(),
        };
        let (u, _) = solve(&problem, opts)?;
        let sup_error = sup_error_against(&u, exact);
        let order = rows
            .last()
            .map(|prev: &OrderRow| (prev.sup_error / sup_error).log2());
        let h = match &domain {
            Grid::Radial(g) => g.h(),
            Grid::Polar(g) => g.h(),
        };
        rows.push(OrderRow {
            h,
            sup_error,
            order,
        });
    }
    Ok(rows)
}

fn refine(grid: &Grid, level: usize) -> Grid {
    let f = 1usize << level;
    match grid {
        Grid::Radial(g) => Grid::Radial(RadialGrid {
            r_in: g.r_in,
            r_out: g.r_out,
            nodes: (g.nodes - 1) * f + 1,
        }),
        Grid::Polar(g) => Grid::Polar(PolarGrid {
            r_in: g.r_in,
            r_out: g.r_out,
            radial_nodes: (g.radial_nodes - 1) * f + 1,
            angular_nodes: g.angular_nodes * f,
            includes_center: g.includes_center,
        }),
    }
}

pub fn sup_error_against(u: &GridFunction, exact: &(dyn Fn(f64, f64) -> f64 + Sync)) -> f64 {
    match &u.grid {
        Grid::Radial(g) => (0..g.nodes)
            .map(|i| (u.values[i] - exact(g.radius(i), 0.0)).abs())
            .fold(0.0, f64::max),
        Grid::Polar(g) => (0..g.node_count())
            .map(|idx| {
                let [x, y] = g.position(idx);
                (u.values[idx] - exact(x, y)).abs()
            })
            .fold(0.0, f64::max),
    }
}

/// One step of the ball sequence: the Dirichlet solve on B_radius with data
/// sampled from the exterior field.
#[derive(Debug, Clone)]
pub struct BallStep {
    pub radius: f64,
    pub v: GridFunction,
    pub report: SolveReport,
    /// Difference between cubic and linear radial interpolation of the
    /// boundary samples; zero when the schedule radius lies on a grid ring.
    pub boundary_interp_error: f64,
}

#[derive(Debug, Clone)]
pub struct BallSolveOptions {
    pub solve: SolveOptions,
    /// Target spacing of the ball grids; the actual spacing divides the ball
    /// radius so that the unit circle lies on a grid ring whenever the
    /// radius is an integer multiple of it.
    pub target_h: f64,
}

impl Default for BallSolveOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            target_h: 0.25,
        }
    }
}

/// Solves F(D²v) = A on the ball of the given radius with boundary data
/// sampled from `exterior` on that sphere.
pub fn solve_ball(
    exterior: &GridFunction,
    operator: &OperatorSpec,
    rhs: f64,
    radius: f64,
    opts: &BallSolveOptions,
) -> Result<BallStep, SolveError> {
    let extent = exterior.grid.r_out();
    if radius > extent + 1e-9 {
        return Err(SolveError::ScheduleOutOfRange {
            radius,
            extent,
        });
    }
    let k = (1.0 / opts.target_h).round().max(1.0);
    let radial_nodes = (radius * k).round() as usize + 1;
    let samples = exterior.sphere_samples(radius)?;
    let interp_error = cubic_vs_linear_error(exterior, radius)?;
    let (grid, boundary) = match &exterior.grid {
        Grid::Radial(_) => {
            let g = RadialGrid::new(0.0, radius, radial_nodes.max(5))?;
            (Grid::Radial(g), BoundaryData::Constant(samples[0]))
        }
        Grid::Polar(g_ext) => {
            let g = PolarGrid::disc(radius, radial_nodes.max(5), g_ext.angular_nodes)?;
            (
                Grid::Polar(g),
                BoundaryData::PerNode {
                    inner: Vec::new(),
                    outer: samples,
                },
            )
        }
    };
    let problem = DirichletProblem {
        operator: operator.clone(),
        domain: grid,
        rhs,
        boundary,
    };
    let (v, report) = solve(&problem, &opts.solve)?;
    Ok(BallStep {
        radius,
        v,
        report,
        boundary_interp_error: interp_error,
    })
}

fn cubic_vs_linear_error(exterior: &GridFunction, radius: f64) -> Result<f64, SolveError> {
    match &exterior.grid {
        Grid::Radial(g) => {
            let t = (radius - g.r_in) / g.h();
            Ok((interp::cubic_sample(&exterior.values, t)
                - interp::linear_sample(&exterior.values, t))
            .abs())
        }
        Grid::Polar(g) => {
            let t = (radius - g.r_in) / g.h();
            let mut worst = 0.0f64;
            for j in 0..g.angular_nodes {
                let column: Vec<f64> = (0..g.radial_nodes)
                    .map(|ring| exterior.values[g.index(ring, j)])
                    .collect();
                worst = worst.max(
                    (interp::cubic_sample(&column, t) - interp::linear_sample(&column, t)).abs(),
                );
            }
            Ok(worst)
        }
    }
}

/// Runs the full schedule of ball solves.
pub fn solve_ball_sequence(
    exterior: &GridFunction,
    operator: &OperatorSpec,
    rhs: f64,
    schedule: &[f64],
    opts: &BallSolveOptions,
) -> Result<Vec<BallStep>, SolveError> {
    for w in schedule.windows(2) {
        if w[1] <= w[0] {
            return Err(SolveError::ScheduleNotIncreasing);
        }
    }
    schedule
        .iter()
        .map(|&r| solve_ball(exterior, operator, rhs, r, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridFunction, PolarGrid, RadialGrid};
    use crate::operator::{Ellipticity, OperatorSpec};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn annulus_problem() -> DirichletProblem {
        let e = Ellipticity::new(1.0, 2.0, 2).unwrap();
        DirichletProblem {
            operator: OperatorSpec::PucciPlus(e),
            domain: Grid::Polar(PolarGrid::annulus(1.0, 4.0, 17, 16).unwrap()),
            rhs: 0.0,
            boundary: BoundaryData::Constant(0.0),
        }
    }

    #[test]
    fn comparison_constants() {
        let p = annulus_problem();
        let report = discrete_comparison_check(
            &p,
            &BoundaryData::Constant(0.0),
            &BoundaryData::Constant(1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(report.pass, "violation {}", report.max_violation);
    }

    #[test]
    fn comparison_equal_data_is_exact() {
        let p = annulus_problem();
        let f = BoundaryData::Constant(0.75);
        let report =
            discrete_comparison_check(&p, &f, &f, &SolveOptions::default()).unwrap();
        assert_eq!(report.max_violation, 0.0);
    }

    #[test]
    fn comparison_random_ordered_pairs() {
        let p = annulus_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 16;
        for _ in 0..10 {
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fmin: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a.min(*b)).collect();
            let lo = BoundaryData::PerNode {
                inner: fmin.clone(),
                outer: fmin.clone(),
            };
            let hi = BoundaryData::PerNode {
                inner: f.clone(),
                outer: f.clone(),
            };
            let report =
                discrete_comparison_check(&p, &lo, &hi, &SolveOptions::default()).unwrap();
            assert!(report.pass, "violation {}", report.max_violation);
        }
    }

    #[test]
    fn comparison_rejects_disordered_data() {
        let p = annulus_problem();
        let r = discrete_comparison_check(
            &p,
            &BoundaryData::Constant(1.0),
            &BoundaryData::Constant(0.0),
            &SolveOptions::default(),
        );
        assert!(matches!(r, Err(SolveError::BoundaryOrderViolated(_))));
    }

    #[test]
    fn convergence_study_zero_data() {
        let p = DirichletProblem {
            boundary: BoundaryData::Constant(0.0),
            ..annulus_problem()
        };
        let rows = convergence_study(&p, &|_, _| 0.0, 3, &SolveOptions::default()).unwrap();
        for r in rows {
            assert!(r.sup_error <= 1e-11);
        }
    }

    #[test]
    fn ball_sequence_linear_data_reproduces_the_polynomial() {
        let e = Ellipticity::new(1.0, 2.0, 2).unwrap();
        let g = PolarGrid::annulus(1.0, 20.0, 77, 48).unwrap();
        let u = GridFunction::sample_polar(g, |x, _| x - 0.5).unwrap();
        let steps = solve_ball_sequence(
            &u,
            &OperatorSpec::PucciPlus(e),
            0.0,
            &[4.0, 8.0, 16.0],
            &BallSolveOptions::default(),
        )
        .unwrap();
        for step in steps {
            let gp = match &step.v.grid {
                Grid::Polar(gg) => *gg,
                _ => unreachable!(),
            };
            for idx in 0..gp.node_count() {
                let [x, _] = gp.position(idx);
                assert_abs_diff_eq!(step.v.values[idx], x - 0.5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn ball_sequence_harmonic_sphere_means() {
        // data 1 + 1/r in dimension 3: each ball solve is the constant
        // boundary value, so sphere means match the analytic extension
        let g = RadialGrid::new(1.0, 16.0, 241).unwrap();
        let u = GridFunction::sample_radial(g, |r| 1.0 + 1.0 / r).unwrap();
        let steps = solve_ball_sequence(
            &u,
            &OperatorSpec::Laplace { dim: 3 },
            0.0,
            &[4.0, 8.0],
            &BallSolveOptions::default(),
        )
        .unwrap();
        for step in &steps {
            let expect = 1.0 + 1.0 / step.radius;
            let mean = step.v.sphere_stats(1.0).unwrap().mean;
            assert_abs_diff_eq!(mean, expect, epsilon = 1e-3);
        }
    }

    #[test]
    fn ball_sequence_rejects_bad_schedules() {
        let g = RadialGrid::new(1.0, 8.0, 113).unwrap();
        let u = GridFunction::sample_radial(g, |r| r).unwrap();
        let op = OperatorSpec::Laplace { dim: 2 };
        let opts = BallSolveOptions::default();
        assert!(matches!(
            solve_ball_sequence(&u, &op, 0.0, &[4.0, 16.0], &opts),
            Err(SolveError::ScheduleOutOfRange { .. })
        ));
        assert!(matches!(
            solve_ball_sequence(&u, &op, 0.0, &[4.0, 2.0], &opts),
            Err(SolveError::ScheduleNotIncreasing)
        ));
    }
}
