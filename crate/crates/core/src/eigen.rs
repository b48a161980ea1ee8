//! Symmetric tridiagonal eigensolver: implicit QR sweeps with Wilkinson
//! shifts, bulge chasing by Givens rotations, and optional accumulation of
//! either the full eigenvector matrix or only its first row (enough for
//! Golub-Welsch quadrature weights).

use crate::error::{ensure, Error, Result};

const DEFLATION_TOL: f64 = 1e-14;
const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Which parts of the eigenvector matrix to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vectors {
    None,
    FirstRow,
    Full,
}

/// Eigenvalues in ascending order with the requested eigenvector data.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    values: Vec<f64>,
    // Row j holds the tracked components of eigenvector j.
    vectors: Vec<f64>,
    tracked: usize,
}

impl TridiagonalEigen {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Component `i` of eigenvector `j`. With `Vectors::FirstRow` only `i = 0`
    /// is available.
    pub fn component(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.tracked, "component {i} was not accumulated");
        self.vectors[j * self.tracked + i]
    }

    /// First components of all eigenvectors, in eigenvalue order.
    pub fn first_components(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.component(0, j)).collect()
    }

    /// Eigenvector `j` (full mode only).
    pub fn vector(&self, j: usize) -> &[f64] {
        assert_eq!(self.tracked, self.values.len(), "full eigenvectors were not accumulated");
        &self.vectors[j * self.tracked..(j + 1) * self.tracked]
    }
}

/// `(c, s)` with `c p - s q = r` and `s p + c q = 0`.
#[inline]
fn givens(p: f64, q: f64) -> (f64, f64) {
    if q == 0.0 {
        return (if p < 0.0 { -1.0 } else { 1.0 }, 0.0);
    }
    let r = p.hypot(q);
    (p / r, -q / r)
}

fn wilkinson_shift(d_prev: f64, d_last: f64, e: f64) -> f64 {
    let delta = 0.5 * (d_prev - d_last);
    if delta == 0.0 {
        return d_last - e.abs();
    }
    let h = delta.hypot(e);
    d_last - e * e / (delta + delta.signum() * h)
}

struct Work<'a> {
    d: &'a mut [f64],
    e: &'a mut [f64],
    // Rows k of qt are columns k of the accumulated orthogonal factor.
    qt: &'a mut [f64],
    tracked: usize,
}

impl Work<'_> {
    #[inline]
    fn rotate(&mut self, k: usize, c: f64, s: f64) {
        let r = self.tracked;
        if r == 0 {
            return;
        }
        let (head, tail) = self.qt.split_at_mut((k + 1) * r);
        let x = &mut head[k * r..];
        let y = &mut tail[..r];
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            let (a, b) = (*xi, *yi);
            *xi = c * a - s * b;
            *yi = s * a + c * b;
        }
    }

    /// One implicit shifted QR sweep on the unreduced block `start..=end`.
    fn qr_step(&mut self, start: usize, end: usize) {
        let mu = wilkinson_shift(self.d[end - 1], self.d[end], self.e[end - 1]);
        let mut x = self.d[start] - mu;
        let mut z = self.e[start];
        for k in start..end {
            if z == 0.0 && k > start {
                break;
            }
            let (c, s) = givens(x, z);
            let (dk, ek, dk1) = (self.d[k], self.e[k], self.d[k + 1]);
            let sdk = s * dk + c * ek;
            let dkp1 = s * ek + c * dk1;
            self.d[k] = c * (c * dk - s * ek) - s * (c * ek - s * dk1);
            self.d[k + 1] = s * sdk + c * dkp1;
            self.e[k] = c * sdk - s * dkp1;
            if k > start {
                self.e[k - 1] = c * self.e[k - 1] - s * z;
            }
            x = self.e[k];
            if k + 1 < end {
                z = -s * self.e[k + 1];
                self.e[k + 1] *= c;
            }
            self.rotate(k, c, s);
        }
    }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal (`offdiag[i]` couples `i` and `i + 1`).
pub fn eigen_tridiagonal(diag: &[f64], offdiag: &[f64], mode: Vectors) -> Result<TridiagonalEigen> {
    let n = diag.len();
    ensure!(n >= 1, Error::Size("empty tridiagonal matrix".into()));
    ensure!(
        offdiag.len() + 1 == n,
        Error::Size(format!("off-diagonal has {} entries for size {n}", offdiag.len()))
    );
    ensure!(
        diag.iter().chain(offdiag).all(|v| v.is_finite()),
        Error::Numeric("non-finite tridiagonal entry".into())
    );

    let tracked = match mode {
        Vectors::None => 0,
        Vectors::FirstRow => 1,
        Vectors::Full => n,
    };
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    let mut qt = vec![0.0; n * tracked];
    for k in 0..n {
        if tracked == n {
            qt[k * n + k] = 1.0;
        } else if tracked == 1 && k == 0 {
            qt[0] = 1.0;
        }
    }

    let scale = d.iter().chain(e.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = f64::EPSILON * scale;
    let mut work = Work { d: &mut d, e: &mut e, qt: &mut qt, tracked };
    let mut end = n - 1;
    let mut sweeps = 0usize;
    let budget = MAX_SWEEPS_PER_EIGENVALUE * n;
    while end > 0 {
        for i in 0..end {
            let off = work.e[i].abs();
            if off <= floor || off <= DEFLATION_TOL * (work.d[i].abs() + work.d[i + 1].abs()) {
                work.e[i] = 0.0;
            }
        }
        while end > 0 && work.e[end - 1] == 0.0 {
            end -= 1;
        }
        if end == 0 {
            break;
        }
        sweeps += 1;
        ensure!(
            sweeps <= budget,
            Error::Numeric(format!("tridiagonal QR did not converge after {budget} sweeps"))
        );
        let mut start = end - 1;
        while start > 0 && work.e[start - 1] != 0.0 {
            start -= 1;
        }
        work.qr_step(start, end);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Vec::with_capacity(n * tracked);
    for &i in &order {
        vectors.extend_from_slice(&qt[i * tracked..(i + 1) * tracked]);
    }
    Ok(TridiagonalEigen { values, vectors, tracked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;

    fn dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => diag[i],
            1 => off[i.min(j)],
            _ => 0.0,
        })
    }

    #[test]
    fn one_by_one_and_two_by_two() {
        let eig = eigen_tridiagonal(&[3.0], &[], Vectors::Full).unwrap();
        assert_eq!(eig.values(), &[3.0]);
        assert_eq!(eig.vector(0), &[1.0]);

        let eig = eigen_tridiagonal(&[0.0, 0.0], &[1.0], Vectors::Full).unwrap();
        assert!((eig.values()[0] + 1.0).abs() < 1e-15);
        assert!((eig.values()[1] - 1.0).abs() < 1e-15);
        assert!((eig.component(0, 1).abs() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(eigen_tridiagonal(&[], &[], Vectors::None).is_err());
        assert!(eigen_tridiagonal(&[1.0, 2.0], &[], Vectors::None).is_err());
        assert!(eigen_tridiagonal(&[1.0, f64::NAN], &[0.5], Vectors::None).is_err());
    }

    #[test]
    fn discrete_laplacian_closed_form() {
        // tridiag(1, -2, 1) of size n has eigenvalues -4 sin^2(k pi / (2(n+1))).
        let n = 64;
        let eig = eigen_tridiagonal(&vec![-2.0; n], &vec![1.0; n - 1], Vectors::None).unwrap();
        for (k, &v) in eig.values().iter().enumerate() {
            let theta = (n - k) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64);
            let want = -4.0 * theta.sin().powi(2);
            assert!((v - want).abs() < 1e-13, "k={k} {v} {want}");
        }
    }

    #[test]
    fn first_row_mode_matches_full_mode() {
        let diag: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let off: Vec<f64> = (0..39).map(|i| 0.5 + 0.1 * (i as f64).cos()).collect();
        let full = eigen_tridiagonal(&diag, &off, Vectors::Full).unwrap();
        let first = eigen_tridiagonal(&diag, &off, Vectors::FirstRow).unwrap();
        for j in 0..40 {
            assert!((full.values()[j] - first.values()[j]).abs() < 1e-14);
            assert!((full.component(0, j).abs() - first.component(0, j).abs()).abs() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn agrees_with_dense_symmetric_solver(
            diag in proptest::collection::vec(-3.0f64..3.0, 2..40),
            seed in proptest::collection::vec(-2.0f64..2.0, 40),
        ) {
            let n = diag.len();
            let off: Vec<f64> = seed[..n - 1].to_vec();
            let eig = eigen_tridiagonal(&diag, &off, Vectors::Full).unwrap();
            let a = dense(&diag, &off);
            let mut want: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
            want.sort_by(f64::total_cmp);
            let scale = a.abs().max().max(1.0);
            for (g, w) in eig.values().iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-12 * scale, "{g} vs {w}");
            }
            // A v = lambda v and orthonormality of the accumulated vectors.
            for j in 0..n {
                let v = nalgebra::DVector::from_column_slice(eig.vector(j));
                let res = &a * &v - v.clone() * eig.values()[j];
                prop_assert!(res.amax() <= 1e-11 * scale);
                for k in 0..n {
                    let dot: f64 = eig.vector(j).iter().zip(eig.vector(k)).map(|(x, y)| x * y).sum();
                    let want = if j == k { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() <= 1e-12);
                }
            }
        }
    }
}
