//! Asymptotic polynomial profiles and their least-squares fits.

use crate::operator::SymMatrix;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Linear polynomial g·x + c.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearProfile {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl LinearProfile {
    pub fn zero(dim: usize) -> Self {
        Self {
            gradient: vec![0.0; dim],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .gradient
                .iter()
                .zip(x)
                .map(|(g, xi)| g * xi)
                .sum::<f64>()
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Quadratic polynomial ½·xᵀHx + g·x + c with the operator value F(H)
/// recorded at extraction time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticProfile {
    pub hessian: SymMatrix,
    pub gradient: Vec<f64>,
    pub constant: f64,
    pub operator_value: f64,
}

impl QuadraticProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * self.hessian.get(i, j) * x[j];
            }
        }
        0.5 * quad
            + self
                .gradient
                .iter()
                .zip(x)
                .map(|(g, xi)| g * xi)
                .sum::<f64>()
            + self.constant
    }

    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                self.gradient[i] + (0..n).map(|j| self.hessian.get(i, j) * x[j]).sum::<f64>()
            })
            .collect()
    }
}

/// Either profile, for deviation tables.
#[derive(Debug, Clone, Copy)]
pub enum AnyProfile<'a> {
    Linear(&'a LinearProfile),
    Quadratic(&'a QuadraticProfile),
}

impl AnyProfile<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear(p) => p.eval(x),
            Self::Quadratic(p) => p.eval(x),
        }
    }

    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Linear(p) => p.gradient.clone(),
            Self::Quadratic(p) => p.gradient_at(x),
        }
    }

    pub fn hessian(&self) -> Option<&SymMatrix> {
        match self {
            Self::Linear(_) => None,
            Self::Quadratic(p) => Some(&p.hessian),
        }
    }
}

/// Least-squares linear polynomial through planar samples.
pub fn fit_linear_2d(points: &[[f64; 2]], values: &[f64]) -> LinearProfile {
    let n = points.len();
    let mut a = DMatrix::zeros(n, 3);
    let b = DVector::from_column_slice(values);
    for (i, p) in points.iter().enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = p[0];
        a[(i, 2)] = p[1];
    }
    let sol = lstsq(a, b);
    LinearProfile {
        gradient: vec![sol[1], sol[2]],
        constant: sol[0],
    }
}

/// Least-squares quadratic polynomial through planar samples.
pub fn fit_quadratic_2d(points: &[[f64; 2]], values: &[f64]) -> QuadraticProfile {
    let n = points.len();
    let mut a = DMatrix::zeros(n, 6);
    let b = DVector::from_column_slice(values);
    for (i, p) in points.iter().enumerate() {
        let (x, y) = (p[0], p[1]);
        a[(i, 0)] = 1.0;
        a[(i, 1)] = x;
        a[(i, 2)] = y;
        a[(i, 3)] = 0.5 * x * x;
        a[(i, 4)] = x * y;
        a[(i, 5)] = 0.5 * y * y;
    }
    let sol = lstsq(a, b);
    let mut h = SymMatrix::zeros(2);
    h.set_sym(0, 0, sol[3]);
    h.set_sym(0, 1, sol[4]);
    h.set_sym(1, 1, sol[5]);
    QuadraticProfile {
        hessian: h,
        gradient: vec![sol[1], sol[2]],
        constant: sol[0],
        operator_value: f64::NAN,
    }
}

/// Least-squares fit of radial samples to c + q·r²/2.
pub fn fit_radial_quadratic(radii: &[f64], values: &[f64]) -> (f64, f64) {
    let n = radii.len();
    let mut a = DMatrix::zeros(n, 2);
    let b = DVector::from_column_slice(values);
    for (i, r) in radii.iter().enumerate() {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = 0.5 * r * r;
    }
    let sol = lstsq(a, b);
    (sol[0], sol[1])
}

fn lstsq(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    let at = a.transpose();
    let ata = &at * &a;
    let atb = at * b;
    ata.lu().solve(&atb).expect("normal equations are regular")
}
