//! Small dense matrices (the closure systems are at most 3×3) and a
//! symmetric tridiagonal eigenvalue solver for the spectral module.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("eigenvalue index {index} out of range for order {order}")]
    EigenIndex { index: usize, order: usize },
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[F]) -> Result<Vec<F>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::Dimension {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension {
                expected: self.cols,
                got: other.rows,
            });
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        }))
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> F {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<F>())
            .fold(F::zero(), F::max)
    }

    pub fn trace(&self) -> F {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn lu(&self) -> Result<Lu<F>, LinalgError> {
        Lu::new(self)
    }

    pub fn solve(&self, b: &[F]) -> Result<Vec<F>, LinalgError> {
        self.lu()?.solve(b)
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = F::zero());
            e[j] = F::one();
            let col = lu.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// `‖A‖₁ ‖A⁻¹‖₁`; infinite when `A` is singular.
    pub fn condition_number_1(&self) -> F {
        match self.inverse() {
            Ok(inv) => {
                let c = self.norm_1() * inv.norm_1();
                if c.is_finite() {
                    c
                } else {
                    F::infinity()
                }
            }
            Err(_) => F::infinity(),
        }
    }

    /// Eigenvalues of the symmetric part `(A + Aᵀ)/2`, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<F> {
        assert!(self.is_square(), "eigenvalues of a non-square matrix");
        let n = self.rows;
        let half = F::lit(0.5);
        let mut a = Self::from_fn(n, n, |i, j| half * (self[(i, j)] + self[(j, i)]));
        // cyclic Jacobi rotations
        for _sweep in 0..64 {
            let off: F = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            let scale: F = a.data.iter().map(|&x| x * x).sum();
            if off <= F::epsilon() * F::epsilon() * scale || off == F::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == F::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (F::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                    let c = (t * t + F::one()).sqrt().recip();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<F> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// Positive semidefinite up to `−tol·|trace|` on the smallest eigenvalue.
    pub fn is_positive_semidefinite(&self, tol: F) -> bool {
        let ev = self.symmetric_eigenvalues();
        let floor = -tol * self.trace().abs();
        ev.first().map_or(true, |&l| l >= floor)
    }
}

impl<F> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<F> {
    lu: Matrix<F>,
    perm: Vec<usize>,
}

impl<F: Real> Lu<F> {
    fn new(a: &Matrix<F>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension {
                expected: a.rows,
                got: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.norm_1();
        for k in 0..n {
            let (piv, max) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, F::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(max > F::epsilon() * scale) || !max.is_finite() {
                return Err(LinalgError::Singular);
            }
            if piv != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            for i in k + 1..n {
                let l = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = l;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - l * v;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[F]) -> Result<Vec<F>, LinalgError> {
        let n = self.lu.rows;
        if b.len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: b.len(),
            });
        }
        let mut y: Vec<F> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] = y[i] - self.lu[(i, j)] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] = y[i] - self.lu[(i, j)] * y[j];
            }
            y[i] = y[i] / self.lu[(i, i)];
        }
        Ok(y)
    }
}

/// Symmetric tridiagonal matrix with diagonal `diag` and sub/super-diagonal `off`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal<F> {
    pub diag: Vec<F>,
    pub off: Vec<F>,
}

impl<F: Real> SymTridiagonal<F> {
    pub fn new(diag: Vec<F>, off: Vec<F>) -> Result<Self, LinalgError> {
        if off.len() + 1 != diag.len() {
            return Err(LinalgError::Dimension {
                expected: diag.len().saturating_sub(1),
                got: off.len(),
            });
        }
        Ok(Self { diag, off })
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: F) -> usize {
        let tiny = F::min_positive_value().sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < F::zero() {
            count += 1;
        }
        for i in 1..self.diag.len() {
            if q == F::zero() {
                q = tiny;
            }
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q < F::zero() {
                count += 1;
            }
        }
        count
    }

    pub fn gershgorin(&self) -> (F, F) {
        let n = self.diag.len();
        let mut lo = F::infinity();
        let mut hi = F::neg_infinity();
        for i in 0..n {
            let mut r = F::zero();
            if i > 0 {
                r = r + self.off[i - 1].abs();
            }
            if i + 1 < n {
                r = r + self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> Result<F, LinalgError> {
        let n = self.order();
        if k >= n {
            return Err(LinalgError::EigenIndex { index: k, order: n });
        }
        let (mut lo, mut hi) = self.gershgorin();
        let span = (hi - lo).abs().max(F::min_positive_value());
        lo = lo - F::epsilon() * span;
        hi = hi + F::epsilon() * span;
        for _ in 0..200 {
            let mid = lo + (hi - lo) * F::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo + (hi - lo) * F::lit(0.5))
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        let n = self.order();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s = s + self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s = s + self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Unit eigenvector for a (converged) eigenvalue by inverse iteration.
    pub fn eigenvector(&self, lambda: F) -> Vec<F> {
        let n = self.order();
        let (lo, hi) = self.gershgorin();
        let shift = lambda - F::epsilon().sqrt() * F::epsilon() * (hi - lo).abs().max(F::one());
        let mut v = vec![F::one(); n];
        for _ in 0..4 {
            v = self.solve_shifted(shift, &v);
            let norm = v.iter().map(|&x| x * x).sum::<F>().sqrt();
            v.iter_mut().for_each(|x| *x = *x / norm);
        }
        if v.iter().copied().sum::<F>() < F::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    }

    /// Thomas algorithm for `(T − σI) x = b` with pivot guarding.
    fn solve_shifted(&self, sigma: F, b: &[F]) -> Vec<F> {
        let n = self.order();
        let tiny = F::min_positive_value().sqrt();
        let mut c = vec![F::zero(); n];
        let mut d = vec![F::zero(); n];
        let mut denom = self.diag[0] - sigma;
        if denom.abs() < tiny {
            denom = tiny;
        }
        if n > 1 {
            c[0] = self.off[0] / denom;
        }
        d[0] = b[0] / denom;
        for i in 1..n {
            let e = self.off[i - 1];
            let mut m = self.diag[i] - sigma - e * c[i - 1];
            if m.abs() < tiny {
                m = tiny;
            }
            if i + 1 < n {
                c[i] = self.off[i] / m;
            }
            d[i] = (b[i] - e * d[i - 1]) / m;
        }
        let mut x = d;
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] = x[i] - c[i] * x[i + 1];
        }
        x
    }
}
