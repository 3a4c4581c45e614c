//! Sparse linear algebra for the per-policy solves: tridiagonal elimination
//! for radial schemes and ILU(0)-preconditioned BiCGSTAB for the wide-stencil
//! polar schemes. Everything here is single-threaded and deterministic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinSysError {
    #[error("tridiagonal pivot vanished at row {0}")]
    TridiagPivot(usize),
    #[error("matrix row {0} has no diagonal entry")]
    MissingDiagonal(usize),
    #[error("iterative solve stalled: residual {residual:.3e} after {iters} iterations (target {target:.3e})")]
    NotConverged {
        iters: usize,
        residual: f64,
        target: f64,
    },
    #[error("breakdown in bicgstab (rho ~ 0) at iteration {0}")]
    Breakdown(usize),
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub fn tridiag_solve(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, LinSysError> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return Err(LinSysError::TridiagPivot(0));
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(LinSysError::TridiagPivot(i));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets, merging duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut k = 0;
        for r in 0..n {
            while k < triplets.len() && triplets[k].0 == r {
                let c = triplets[k].1;
                let mut v = triplets[k].2;
                k += 1;
                while k < triplets.len() && triplets[k].0 == r && triplets[k].1 == c {
                    v += triplets[k].2;
                    k += 1;
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr[r + 1] = cols.len();
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y.iter()
            .zip(b)
            .map(|(yi, bi)| (yi - bi).abs())
            .fold(0.0, f64::max)
    }
}

/// Zero-fill incomplete LU factorization on the sparsity pattern of A.
pub struct Ilu0 {
    lu: Csr,
    diag_idx: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &Csr) -> Result<Self, LinSysError> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_idx = vec![usize::MAX; n];
        for r in 0..n {
            for k in lu.row_ptr[r]..lu.row_ptr[r + 1] {
                if lu.cols[k] == r {
                    diag_idx[r] = k;
                }
            }
            if diag_idx[r] == usize::MAX {
                return Err(LinSysError::MissingDiagonal(r));
            }
        }
        // ikj variant restricted to the pattern
        let mut colmap = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                colmap[lu.cols[k]] = k;
            }
            for kk in start..end {
                let k = lu.cols[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag_idx[k]];
                if pivot == 0.0 {
                    return Err(LinSysError::MissingDiagonal(k));
                }
                let factor = lu.vals[kk] / pivot;
                lu.vals[kk] = factor;
                for kj in diag_idx[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.cols[kj];
                    let pos = colmap[j];
                    if pos != usize::MAX {
                        lu.vals[pos] -= factor * lu.vals[kj];
                    }
                }
            }
            for k in start..end {
                colmap[lu.cols[k]] = usize::MAX;
            }
            if lu.vals[diag_idx[i]] == 0.0 {
                return Err(LinSysError::MissingDiagonal(i));
            }
        }
        Ok(Self { lu, diag_idx })
    }

    /// z = (LU)⁻¹ r.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.n;
        // forward: L z = r (unit diagonal)
        for i in 0..n {
            let mut acc = r[i];
            for k in self.lu.row_ptr[i]..self.diag_idx[i] {
                acc -= self.lu.vals[k] * z[self.lu.cols[k]];
            }
            z[i] = acc;
        }
        // backward: U z = z
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in self.diag_idx[i] + 1..self.lu.row_ptr[i + 1] {
                acc -= self.lu.vals[k] * z[self.lu.cols[k]];
            }
            z[i] = acc / self.lu.vals[self.diag_idx[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned BiCGSTAB; converges to ‖b − Ax‖₂ ≤ rtol·‖b‖₂ + atol.
pub fn bicgstab(
    a: &Csr,
    b: &[f64],
    x0: &[f64],
    precond: &Ilu0,
    rtol: f64,
    atol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), LinSysError> {
    let n = a.n;
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = rtol * norm2(b) + atol;
    if norm2(&r) <= target {
        return Ok((x, 0));
    }
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(LinSysError::Breakdown(it));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut phat);
        a.matvec(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom.abs() < 1e-300 {
            return Err(LinSysError::Breakdown(it));
        }
        alpha = rho / denom;
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok((x, it));
        }
        precond.apply(&s, &mut shat);
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(LinSysError::Breakdown(it));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= target {
            return Ok((x, it));
        }
        if omega.abs() < 1e-300 {
            return Err(LinSysError::Breakdown(it));
        }
    }
    Err(LinSysError::NotConverged {
        iters: max_iter,
        residual: norm2(&r),
        target,
    })
}
