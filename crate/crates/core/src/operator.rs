//! Fully nonlinear uniformly elliptic operators acting on Hessians.
//!
//! The central objects are the Pucci extremal operators
//!
//! ```text
//! M⁻(M) = λ Σ_{μᵢ>0} μᵢ + Λ Σ_{μᵢ<0} μᵢ,
//! M⁺(M) = Λ Σ_{μᵢ>0} μᵢ + λ Σ_{μᵢ<0} μᵢ,
//! ```
//!
//! where μᵢ are the eigenvalues of a symmetric matrix M. An operator F is
//! uniformly elliptic with constants 0 < λ ≤ Λ when
//! `M⁻(M) ≤ F(M+N) − F(N) ≤ M⁺(M)` for all symmetric M, N; every operator
//! in this module satisfies that sandwich with its own constants.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues within this distance of zero contribute nothing to the Pucci
/// sums. A zero eigenvalue contributes zero under either weight, so the
/// convention does not change exact values.
pub const ZERO_EIG_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("ellipticity constants must satisfy 0 < lambda <= Lambda < inf, got ({lambda}, {big_lambda})")]
    InvalidEllipticity { lambda: f64, big_lambda: f64 },
    #[error("dimension must be >= 2, got {0}")]
    InvalidDimension(usize),
    #[error("matrix order {found} does not match expected order {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix entries are not exactly symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("Bellman operator requires at least one control matrix")]
    EmptyControlSet,
    #[error("Bellman control {index} has eigenvalue {eigenvalue} outside [{lambda}, {big_lambda}]")]
    ControlOutOfRange {
        index: usize,
        eigenvalue: f64,
        lambda: f64,
        big_lambda: f64,
    },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("operator is not rotation-invariant; radial reduction is undefined")]
    NotRotationInvariant,
    #[error("operator kind is not supported here: {0}")]
    Unsupported(&'static str),
}

/// Ellipticity constants (λ, Λ) together with the ambient dimension n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    pub lambda: f64,
    pub big_lambda: f64,
    pub dim: usize,
}

impl Ellipticity {
    pub fn new(lambda: f64, big_lambda: f64, dim: usize) -> Result<Self, OperatorError> {
        if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(OperatorError::InvalidEllipticity { lambda, big_lambda });
        }
        if dim < 2 {
            return Err(OperatorError::InvalidDimension(dim));
        }
        Ok(Self {
            lambda,
            big_lambda,
            dim,
        })
    }

    /// λ = Λ = 1: the Laplacian's constants.
    pub fn isotropic(dim: usize) -> Self {
        Self {
            lambda: 1.0,
            big_lambda: 1.0,
            dim,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.big_lambda / self.lambda
    }
}

/// Dense symmetric matrix with exactly mirrored entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, v) in values.iter().enumerate() {
            m.entries[i * dim + i] = *v;
        }
        m
    }

    /// Builds from full row-major entries; rejects any exact asymmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OperatorError> {
        let dim = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(OperatorError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            for j in 0..dim {
                if rows[i][j] != rows[j][i] {
                    return Err(OperatorError::NotSymmetric { i, j });
                }
            }
        }
        let entries = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Sets the (i, j) and (j, i) entries together.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// tr(self · other).
    pub fn mul_trace(&self, other: &SymMatrix) -> Result<f64, OperatorError> {
        if self.dim != other.dim {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.get(i, j) * other.get(j, i);
            }
        }
        Ok(acc)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix, OperatorError> {
        if self.dim != other.dim {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Ok(SymMatrix {
            dim: self.dim,
            entries,
        })
    }

    pub fn neg(&self) -> SymMatrix {
        self.scale(-1.0)
    }

    pub fn scale(&self, t: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            entries: self.entries.iter().map(|a| a * t).collect(),
        }
    }

    /// Real spectrum, sorted ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        eigs
    }

    /// Random symmetric matrix with entries uniform in [-scale, scale].
    pub fn random(rng: &mut impl Rng, dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set_sym(i, j, rng.random_range(-scale..=scale));
            }
        }
        m
    }

    /// Random symmetric matrix with spectrum inside [lo, hi]: Q diag(μ) Qᵀ
    /// for a random orthogonal Q.
    pub fn random_with_spectrum(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> Self {
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..=1.0));
        let q = g.qr().q();
        let mut d = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            d[(i, i)] = rng.random_range(lo..=hi);
        }
        let a = &q * d * q.transpose();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                // exact symmetrization: a already symmetric up to roundoff
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                m.set_sym(i, j, v);
            }
        }
        m
    }
}

/// M⁺(M) with constants from `e`.
pub fn pucci_plus(m: &SymMatrix, e: &Ellipticity) -> Result<f64, OperatorError> {
    if m.dim() != e.dim {
        return Err(OperatorError::DimensionMismatch {
            expected: e.dim,
            found: m.dim(),
        });
    }
    Ok(m.eigenvalues()
        .iter()
        .map(|&mu| {
            if mu > ZERO_EIG_TOL {
                e.big_lambda * mu
            } else if mu < -ZERO_EIG_TOL {
                e.lambda * mu
            } else {
                0.0
            }
        })
        .sum())
}

/// M⁻(M) with constants from `e`.
///
/// Computed through the exact identity M⁻(M) = −M⁺(−M), which is the same
/// weighting (λ on positive eigenvalues, Λ on negative ones) evaluated on a
/// single spectrum, so the duality holds bitwise.
pub fn pucci_minus(m: &SymMatrix, e: &Ellipticity) -> Result<f64, OperatorError> {
    Ok(-pucci_plus(&m.neg(), e)?)
}

/// Evaluatable operator F(M). All kinds except `Shifted` satisfy F(0) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatorSpec {
    PucciPlus(Ellipticity),
    PucciMinus(Ellipticity),
    Laplace { dim: usize },
    Bellman {
        ellipticity: Ellipticity,
        controls: Vec<SymMatrix>,
    },
    /// M ↦ base(M + offset) − shift. Represents both a constant right-hand
    /// side and the translation of the operator by a fixed Hessian.
    Shifted {
        base: Box<OperatorSpec>,
        offset: SymMatrix,
        shift: f64,
    },
    /// M ↦ −base(−M).
    Dual(Box<OperatorSpec>),
}

impl OperatorSpec {
    /// Bellman operator; every control must have spectrum in [λ, Λ].
    pub fn bellman(
        ellipticity: Ellipticity,
        controls: Vec<SymMatrix>,
    ) -> Result<Self, OperatorError> {
        if controls.is_empty() {
            return Err(OperatorError::EmptyControlSet);
        }
        for (index, c) in controls.iter().enumerate() {
            if c.dim() != ellipticity.dim {
                return Err(OperatorError::DimensionMismatch {
                    expected: ellipticity.dim,
                    found: c.dim(),
                });
            }
            for mu in c.eigenvalues() {
                if mu < ellipticity.lambda - 1e-10 || mu > ellipticity.big_lambda + 1e-10 {
                    return Err(OperatorError::ControlOutOfRange {
                        index,
                        eigenvalue: mu,
                        lambda: ellipticity.lambda,
                        big_lambda: ellipticity.big_lambda,
                    });
                }
            }
        }
        Ok(Self::Bellman {
            ellipticity,
            controls,
        })
    }

    /// Bellman operator without the control-spectrum validation. Meant for
    /// constructing deliberately ill-posed configurations in diagnostics.
    pub fn bellman_unchecked(ellipticity: Ellipticity, controls: Vec<SymMatrix>) -> Self {
        Self::Bellman {
            ellipticity,
            controls,
        }
    }

    pub fn shifted(base: OperatorSpec, offset: SymMatrix, shift: f64) -> Result<Self, OperatorError> {
        if offset.dim() != base.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: base.dim(),
                found: offset.dim(),
            });
        }
        Ok(Self::Shifted {
            base: Box::new(base),
            offset,
            shift,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::PucciPlus(e) | Self::PucciMinus(e) => e.dim,
            Self::Laplace { dim } => *dim,
            Self::Bellman { ellipticity, .. } => ellipticity.dim,
            Self::Shifted { base, .. } => base.dim(),
            Self::Dual(base) => base.dim(),
        }
    }

    /// Constants for the ellipticity sandwich. The Laplacian reports (1, 1);
    /// duals and shifts inherit the base constants.
    pub fn ellipticity(&self) -> Ellipticity {
        match self {
            Self::PucciPlus(e) | Self::PucciMinus(e) => *e,
            Self::Laplace { dim } => Ellipticity::isotropic(*dim),
            Self::Bellman { ellipticity, .. } => *ellipticity,
            Self::Shifted { base, .. } => base.ellipticity(),
            Self::Dual(base) => base.ellipticity(),
        }
    }

    pub fn evaluate(&self, m: &SymMatrix) -> Result<f64, OperatorError> {
        match self {
            Self::PucciPlus(e) => pucci_plus(m, e),
            Self::PucciMinus(e) => pucci_minus(m, e),
            Self::Laplace { dim } => {
                if m.dim() != *dim {
                    return Err(OperatorError::DimensionMismatch {
                        expected: *dim,
                        found: m.dim(),
                    });
                }
                Ok(m.trace())
            }
            Self::Bellman { controls, .. } => {
                if controls.is_empty() {
                    return Err(OperatorError::EmptyControlSet);
                }
                let mut best = f64::NEG_INFINITY;
                for c in controls {
                    best = best.max(c.mul_trace(m)?);
                }
                Ok(best)
            }
            Self::Shifted {
                base,
                offset,
                shift,
            } => Ok(base.evaluate(&m.add(offset)?)? - shift),
            Self::Dual(base) => Ok(-base.evaluate(&m.neg())?),
        }
    }

    /// The dual operator M ↦ −F(−M). Structural simplifications keep
    /// `dual(dual(F))` literally equal to F.
    pub fn dual(&self) -> OperatorSpec {
        match self {
            Self::PucciPlus(e) => Self::PucciMinus(*e),
            Self::PucciMinus(e) => Self::PucciPlus(*e),
            Self::Laplace { dim } => Self::Laplace { dim: *dim },
            Self::Dual(base) => (**base).clone(),
            other => Self::Dual(Box::new(other.clone())),
        }
    }

    /// F(0); zero for every kind except `Shifted`.
    pub fn value_at_zero(&self) -> f64 {
        self.evaluate(&SymMatrix::zeros(self.dim()))
            .expect("zero matrix always evaluates")
    }

    /// True when F(QᵀMQ) = F(M) for all rotations Q. Pucci operators and the
    /// Laplacian qualify; a Bellman family qualifies when every control is a
    /// multiple of the identity.
    pub fn is_rotation_invariant(&self) -> bool {
        match self {
            Self::PucciPlus(_) | Self::PucciMinus(_) | Self::Laplace { .. } => true,
            Self::Bellman { controls, .. } => controls.iter().all(is_isotropic),
            Self::Shifted { base, offset, .. } => base.is_rotation_invariant() && is_isotropic(offset),
            Self::Dual(base) => base.is_rotation_invariant(),
        }
    }

    /// Convexity of M ↦ F(M). Max-type operators are convex; duals of convex
    /// operators are concave.
    pub fn is_convex(&self) -> bool {
        match self {
            Self::PucciPlus(_) | Self::Laplace { .. } | Self::Bellman { .. } => true,
            Self::PucciMinus(e) => e.lambda == e.big_lambda,
            Self::Shifted { base, .. } => base.is_convex(),
            Self::Dual(base) => match &**base {
                Self::Laplace { .. } => true,
                b => b.ellipticity().lambda == b.ellipticity().big_lambda,
            },
        }
    }
}

fn is_isotropic(m: &SymMatrix) -> bool {
    let d = m.get(0, 0);
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            let want = if i == j { d } else { 0.0 };
            if m.get(i, j) != want {
                return false;
            }
        }
    }
    true
}

/// Outcome of a sampled property check.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub pass: bool,
    pub trials: usize,
    /// Worst observed violation; non-positive margins are clamped to zero.
    pub worst_violation: f64,
}

/// Samples (M, N) pairs and verifies the uniform-ellipticity sandwich
/// `M⁻(M) ≤ F(M+N) − F(N) ≤ M⁺(M)` with F's own constants, up to 1e-10.
pub fn check_uniform_ellipticity(
    f: &OperatorSpec,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport, OperatorError> {
    let e = f.ellipticity();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let m = SymMatrix::random(&mut rng, e.dim, 1.0);
        let n = SymMatrix::random(&mut rng, e.dim, 1.0);
        let diff = f.evaluate(&m.add(&n)?)? - f.evaluate(&n)?;
        let lower = pucci_minus(&m, &e)?;
        let upper = pucci_plus(&m, &e)?;
        worst = worst.max(lower - diff).max(diff - upper);
    }
    Ok(PropertyReport {
        pass: worst <= 1e-10,
        trials: trials.max(1),
        worst_violation: worst,
    })
}

/// Samples (t, M) and verifies positive 1-homogeneity F(tM) = t F(M) to
/// relative 1e-12.
pub fn check_homogeneity(
    f: &OperatorSpec,
    trials: usize,
    seed: u64,
) -> Result<PropertyReport, OperatorError> {
    let dim = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let m = SymMatrix::random(&mut rng, dim, 1.0);
        let t: f64 = rng.random_range(0.1..=10.0);
        let lhs = f.evaluate(&m.scale(t))?;
        let rhs = t * f.evaluate(&m)?;
        let rel = (lhs - rhs).abs() / rhs.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(PropertyReport {
        pass: worst <= 1e-12,
        trials: trials.max(1),
        worst_violation: worst,
    })
}

/// Hessian spectrum of a radial function u(|x|) at radius r: the second
/// radial derivative once and du/r with multiplicity n − 1.
pub fn radial_hessian_spectrum(
    du: f64,
    ddu: f64,
    r: f64,
    dim: usize,
) -> Result<Vec<f64>, OperatorError> {
    if r <= 0.0 {
        return Err(OperatorError::NonPositiveRadius(r));
    }
    if dim < 2 {
        return Err(OperatorError::InvalidDimension(dim));
    }
    let mut spectrum = Vec::with_capacity(dim);
    spectrum.push(ddu);
    spectrum.extend(std::iter::repeat(du / r).take(dim - 1));
    Ok(spectrum)
}

/// Linearization of a rotation-invariant operator on radial Hessians
/// diag(s, d, …, d): the operator value is the max (or min) over pairs of
/// `alpha·s + (n−1)·beta·d`.
#[derive(Debug, Clone)]
pub struct RadialControls {
    pub maximizing: bool,
    /// (coefficient on u'', coefficient on each u'/r eigenvalue)
    pub pairs: Vec<(f64, f64)>,
}

impl RadialControls {
    pub fn value(&self, s: f64, d: f64, dim: usize) -> f64 {
        let n1 = (dim - 1) as f64;
        let vals = self.pairs.iter().map(|&(a, b)| a * s + n1 * b * d);
        if self.maximizing {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.fold(f64::INFINITY, f64::min)
        }
    }
}

/// Radial control extraction. Bellman families are radialized through the
/// closure of their control set under conjugation: each control contributes
/// one pair per eigenvalue assignment (that eigenvalue on u'', the remaining
/// trace spread over the tangential directions). For isotropic control sets
/// this coincides with the operator itself.
pub fn radial_controls(f: &OperatorSpec) -> Result<RadialControls, OperatorError> {
    match f {
        OperatorSpec::PucciPlus(e) => Ok(RadialControls {
            maximizing: true,
            pairs: corner_pairs(e),
        }),
        OperatorSpec::PucciMinus(e) => Ok(RadialControls {
            maximizing: false,
            pairs: corner_pairs(e),
        }),
        OperatorSpec::Laplace { .. } => Ok(RadialControls {
            maximizing: true,
            pairs: vec![(1.0, 1.0)],
        }),
        OperatorSpec::Bellman {
            ellipticity,
            controls,
        } => {
            if controls.is_empty() {
                return Err(OperatorError::EmptyControlSet);
            }
            let n1 = (ellipticity.dim - 1) as f64;
            let mut pairs = Vec::new();
            for c in controls {
                let tr = c.trace();
                for mu in c.eigenvalues() {
                    pairs.push((mu, (tr - mu) / n1));
                }
            }
            Ok(RadialControls {
                maximizing: true,
                pairs,
            })
        }
        OperatorSpec::Dual(base) => {
            let inner = radial_controls(base)?;
            Ok(RadialControls {
                maximizing: !inner.maximizing,
                pairs: inner.pairs,
            })
        }
        OperatorSpec::Shifted { .. } => Err(OperatorError::Unsupported(
            "shifted operators have no homogeneous radial reduction",
        )),
    }
}

fn corner_pairs(e: &Ellipticity) -> Vec<(f64, f64)> {
    let l = e.lambda;
    let b = e.big_lambda;
    if l == b {
        vec![(l, l)]
    } else {
        vec![(l, l), (l, b), (b, l), (b, b)]
    }
}
