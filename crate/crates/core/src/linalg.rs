//! Dense complex linear algebra on top of nalgebra.
//!
//! Eigen-decompositions go through the complex Schur form; eigenvectors are
//! recovered by back-substitution on the triangular factor.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Eigenvector matrices with condition above this are treated as defective.
pub const MATFUN_COND_LIMIT: f64 = 1e8;

/// Vandermonde systems above this condition are flagged.
pub const VANDERMONDE_COND_WARN: f64 = 1e10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real matrix from row slices.
pub fn real_mat(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = if n == 0 { 0 } else { rows[0].len() };
    CMat::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
}

pub fn real_vec(xs: &[f64]) -> CVec {
    CVec::from_iterator(xs.len(), xs.iter().map(|&x| c(x, 0.0)))
}

pub fn scalar_mat(x: Complex64) -> CMat {
    CMat::from_element(1, 1, x)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn vec_max_abs(v: &CVec) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Spectral condition number, infinite for singular matrices.
pub fn cond2(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Product of row 2-norms, an upper bound on `|det m|`.
pub fn hadamard_bound(m: &CMat) -> f64 {
    m.row_iter().map(|r| r.norm()).product()
}

pub fn det(m: &CMat) -> Result<Complex64> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "determinant of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.clone().determinant())
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("inverse of a non-square matrix".into()));
    }
    let lu = m.clone().full_piv_lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular("matrix inverse".into()))?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("matrix inverse".into()));
    }
    Ok(inv)
}

/// Solves `m x = rhs` with full pivoting.
pub fn solve(m: &CMat, rhs: &CMat) -> Result<CMat> {
    let x = m
        .clone()
        .full_piv_lu()
        .solve(rhs)
        .ok_or_else(|| Error::Singular("linear solve".into()))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("linear solve".into()));
    }
    Ok(x)
}

pub fn solve_vec(m: &CMat, rhs: &CVec) -> Result<CVec> {
    let x = solve(m, &CMat::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    Ok(x.column(0).into_owned())
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Sorted by real part, then imaginary part.
    pub values: Vec<Complex64>,
    /// Unit 2-norm columns, aligned with `values`.
    pub vectors: CMat,
    /// Spectral condition of `vectors`.
    pub cond: f64,
}

impl EigenDecomposition {
    pub fn is_diagonalizable(&self) -> bool {
        self.cond.is_finite() && self.cond <= MATFUN_COND_LIMIT
    }
}

pub fn eig(a: &CMat) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("eig of a non-square matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericFailure("non-finite matrix entry".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: CMat::zeros(0, 0),
            cond: 1.0,
        });
    }
    let (q, t) = schur_with_shifts(a)?;

    let small = (f64::EPSILON * max_abs(&t)).max(f64::MIN_POSITIVE);
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = c(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = c(0.0, 0.0);
            for l in (j + 1)..=k {
                s += t[(j, l)] * y[(l, k)];
            }
            if s == c(0.0, 0.0) {
                continue;
            }
            let mut denom = t[(j, j)] - lam;
            if denom.norm() < small {
                denom = c(small, 0.0);
            }
            y[(j, k)] = -s / denom;
        }
    }
    let mut v = &q * y;
    for k in 0..n {
        let nrm = v.column(k).norm();
        if nrm > 0.0 {
            v.column_mut(k).unscale_mut(nrm);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (t[(i, i)], t[(j, j)]);
        a.re.total_cmp(&b.re)
            .then(a.im.total_cmp(&b.im))
            .then(i.cmp(&j))
    });
    let values: Vec<Complex64> = order.iter().map(|&i| t[(i, i)]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| v[(r, order[col])]);
    let cond = cond2(&vectors);
    Ok(EigenDecomposition {
        values,
        vectors,
        cond,
    })
}

/// Complex Schur form `A = Q T Q*`. Spectra symmetric about the origin can
/// stall the shifted QR iteration, so on failure the matrix is displaced by
/// a complex multiple of the identity and the shift removed from `T`.
fn schur_with_shifts(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let scale = max_abs(a).max(1.0);
    for sigma in [c(0.0, 0.0), c(0.3, 0.7), c(-0.6, 0.2), c(0.1, -0.9)] {
        let shift = sigma * scale;
        let shifted = a + CMat::identity(n, n) * shift;
        if let Some(s) = shifted.try_schur(f64::EPSILON, 1_000 * n.max(10)) {
            let (q, mut t) = s.unpack();
            for i in 0..n {
                t[(i, i)] -= shift;
            }
            if t.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Ok((q, t));
            }
        }
    }
    Err(Error::NumericFailure("Schur iteration did not converge".into()))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    Ok(eig(a)?.values)
}

/// `f(A)` through diagonalization. Fails when the eigenvector basis is too
/// ill-conditioned to trust.
pub fn matfun<F: Fn(Complex64) -> Complex64>(a: &CMat, f: F) -> Result<CMat> {
    let e = eig(a)?;
    matfun_from(&e, f)
}

pub fn matfun_from<F: Fn(Complex64) -> Complex64>(e: &EigenDecomposition, f: F) -> Result<CMat> {
    if !e.is_diagonalizable() {
        return Err(Error::NotDiagonalizable { cond: e.cond });
    }
    let n = e.values.len();
    let vinv = inverse(&e.vectors)?;
    let mut vd = e.vectors.clone();
    for k in 0..n {
        let fk = f(e.values[k]);
        for r in 0..n {
            vd[(r, k)] *= fk;
        }
    }
    Ok(vd * vinv)
}

pub fn expm(a: &CMat) -> Result<CMat> {
    matfun(a, |z| z.exp())
}

pub fn sinm(a: &CMat) -> Result<CMat> {
    matfun(a, |z| z.sin())
}

pub fn cosm(a: &CMat) -> Result<CMat> {
    matfun(a, |z| z.cos())
}

/// Branch policy for eigenvalues on the negative real axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtBranch {
    /// Reject strictly negative real eigenvalues.
    Principal,
    /// Map `-x` to `i sqrt(x)`.
    NegativeRealToUpper,
}

/// Principal square root. Zero eigenvalues are allowed.
pub fn principal_sqrt(a: &CMat, branch: SqrtBranch) -> Result<CMat> {
    let e = eig(a)?;
    let scale = e.values.iter().fold(1e-300_f64, |m, z| m.max(z.norm()));
    let tol = 1e-13 * scale;
    for z in &e.values {
        let on_axis = z.im.abs() <= tol && z.re < -tol;
        if on_axis && branch == SqrtBranch::Principal {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {z} on the negative real axis"
            )));
        }
    }
    matfun_from(&e, |z| {
        if z.im.abs() <= tol && z.re < -tol {
            c(0.0, (-z.re).sqrt())
        } else {
            z.sqrt()
        }
    })
}

#[derive(Debug, Clone)]
pub struct VandermondeSolution {
    pub amplitudes: Vec<CVec>,
    pub cond: f64,
    pub ill_conditioned: bool,
}

/// Solves `sum_j lambda_j^n w_j = rhs[n-1]` for `n = 1..=m` with full pivoting.
pub fn vandermonde_solve(nodes: &[Complex64], rhs: &[CVec]) -> Result<VandermondeSolution> {
    let m = nodes.len();
    if rhs.len() != m || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} nodes but {} right-hand sides",
            m,
            rhs.len()
        )));
    }
    let d = rhs[0].len();
    if rhs.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("ragged right-hand sides".into()));
    }
    let scale = nodes.iter().fold(1e-300_f64, |s, z| s.max(z.norm()));
    for i in 0..m {
        for j in (i + 1)..m {
            if (nodes[i] - nodes[j]).norm() <= 1e-12 * scale {
                return Err(Error::Singular("repeated Vandermonde node".into()));
            }
        }
    }
    let v = CMat::from_fn(m, m, |n, j| nodes[j].powu(n as u32 + 1));
    let b = CMat::from_fn(m, d, |n, k| rhs[n][k]);
    let x = solve(&v, &b)?;
    let cond = cond2(&v);
    Ok(VandermondeSolution {
        amplitudes: (0..m).map(|j| x.row(j).transpose()).collect(),
        cond,
        ill_conditioned: !(cond <= VANDERMONDE_COND_WARN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: &CMat, b: &CMat) -> f64 {
        max_abs(&(a - b))
    }

    #[test]
    fn eig_of_identity() {
        let e = eig(&CMat::identity(3, 3)).unwrap();
        for z in &e.values {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
        }
        assert!(e.cond < 1.0 + 1e-12);
    }

    #[test]
    fn eig_rotation_is_sorted() {
        let a = real_mat(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let e = eig(&a).unwrap();
        assert_abs_diff_eq!(e.values[0].im, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1].im, 1.0, epsilon = 1e-14);
        let av = &a * &e.vectors;
        for k in 0..2 {
            let lv = e.vectors.column(k) * e.values[k];
            assert!((av.column(k) - lv).norm() < 1e-13);
        }
    }

    #[test]
    fn eig_triangular_general() {
        let a = CMat::from_fn(4, 4, |i, j| c((i * 4 + j) as f64 * 0.37 - 1.0, (i as f64 - j as f64) * 0.21));
        let e = eig(&a).unwrap();
        let av = &a * &e.vectors;
        for k in 0..4 {
            let lv = e.vectors.column(k) * e.values[k];
            assert!((av.column(k) - lv).norm() < 1e-11);
        }
        let tr: Complex64 = (0..4).map(|i| a[(i, i)]).sum();
        let s: Complex64 = e.values.iter().sum();
        assert!((tr - s).norm() < 1e-11);
    }

    #[test]
    fn jordan_block_is_rejected_by_matfun() {
        let a = real_mat(&[&[1.0, 1.0], &[0.0, 1.0]]);
        match matfun(&a, |z| z.exp()) {
            Err(Error::NotDiagonalizable { .. }) => {}
            other => panic!("expected NotDiagonalizable, got {other:?}"),
        }
    }

    #[test]
    fn exp_of_rotation_generator() {
        let a = real_mat(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let e = expm(&a).unwrap();
        let (s, co) = 1.0_f64.sin_cos();
        let want = real_mat(&[&[co, -s], &[s, co]]);
        assert!(close(&e, &want) < 1e-14);
    }

    #[test]
    fn sin_cos_scalar() {
        let a = scalar_mat(c(0.7, 0.0));
        assert_abs_diff_eq!(sinm(&a).unwrap()[(0, 0)].re, 0.7_f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(cosm(&a).unwrap()[(0, 0)].re, 0.7_f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn sqrt_of_spd() {
        let a = real_mat(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let r = principal_sqrt(&a, SqrtBranch::Principal).unwrap();
        assert!(close(&(&r * &r), &a) < 1e-13);
    }

    #[test]
    fn sqrt_negative_axis_needs_opt_in() {
        let a = scalar_mat(c(-0.23, 0.0));
        assert!(matches!(
            principal_sqrt(&a, SqrtBranch::Principal),
            Err(Error::InvalidArgument(_))
        ));
        let r = principal_sqrt(&a, SqrtBranch::NegativeRealToUpper).unwrap();
        assert_abs_diff_eq!(r[(0, 0)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(0, 0)].im, 0.23_f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn vandermonde_unit_circle_roundtrip() {
        let nodes: Vec<Complex64> = [0.3, 1.1, -2.0, 2.9]
            .iter()
            .map(|&th| Complex64::from_polar(1.0, th))
            .collect();
        let w: Vec<CVec> = (0..4).map(|j| real_vec(&[j as f64 + 1.0, -0.5 * j as f64])).collect();
        let rhs: Vec<CVec> = (1..=4)
            .map(|n| {
                let mut s = CVec::zeros(2);
                for j in 0..4 {
                    s += &w[j] * nodes[j].powu(n);
                }
                s
            })
            .collect();
        let sol = vandermonde_solve(&nodes, &rhs).unwrap();
        assert!(!sol.ill_conditioned);
        for j in 0..4 {
            assert!((&sol.amplitudes[j] - &w[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn vandermonde_repeated_node() {
        let nodes = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let rhs = vec![real_vec(&[1.0]), real_vec(&[1.0])];
        assert!(matches!(
            vandermonde_solve(&nodes, &rhs),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn det_and_inverse() {
        let a = real_mat(&[&[2.0, 1.0], &[1.0, 3.0]]);
        assert_abs_diff_eq!(det(&a).unwrap().re, 5.0, epsilon = 1e-14);
        let ai = inverse(&a).unwrap();
        assert!(close(&(&a * &ai), &CMat::identity(2, 2)) < 1e-14);
        assert!(inverse(&real_mat(&[&[1.0, 2.0], &[2.0, 4.0]])).is_err());
    }
}
