//! Closed-form solution of the continuous Euler-Lagrange Dirichlet problem
//! and the limit objects `F`, `Z` and `z'` used by the convergence study.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    c, cond2, det, eig, hadamard_bound, inverse, max_abs, principal_sqrt, solve_vec, CMat, CVec,
    EigenDecomposition, SqrtBranch,
};
use crate::model::QuadraticLagrangian;

/// Relative threshold on the non-resonance margin.
pub const NONRESONANT_TOL: f64 = 1e-10;

/// Eigenvector selections with a worse condition are treated as singular.
const SELECTION_COND_LIMIT: f64 = 1e12;

/// Largest dimension for which the solvent partition search is exhaustive.
const PARTITION_SEARCH_MAX_DIM: usize = 3;

fn i_unit() -> Complex64 {
    c(0.0, 1.0)
}

/// `||P Omega^2 + 2i J1 Omega + Q||_max`.
pub fn solvent_residual(p: &CMat, q: &CMat, j1: &CMat, omega: &CMat) -> f64 {
    let r = p * omega * omega + j1 * omega * c(0.0, 2.0) + q;
    max_abs(&r)
}

fn solvent_scale(p: &CMat, q: &CMat, j1: &CMat, omega: &CMat) -> f64 {
    let w = max_abs(omega);
    (max_abs(p) * w * w + 2.0 * max_abs(j1) * w + max_abs(q)).max(1e-300)
}

/// Two solvents of `P Omega^2 + 2i J1 Omega + Q = 0`.
///
/// With `J1 = 0` this is `Omega1 = sqrt(-P^-1 Q)`, `Omega2 = -Omega1`, using
/// the branch that sends negative reals to the upper half-plane so the
/// hyperbolic case goes through the same exponentials.
pub fn solve_omega(p: &CMat, q: &CMat, j1: &CMat) -> Result<(CMat, CMat)> {
    let d = p.nrows();
    if d == 0 || !p.is_square() || q.shape() != (d, d) || j1.shape() != (d, d) {
        return Err(Error::InvalidArgument("P, Q, J1 must be square of one size".into()));
    }
    let pinv = inverse(p)?;
    if det(q)?.norm() <= f64::EPSILON * hadamard_bound(q) {
        return Err(Error::Singular("Q is singular".into()));
    }
    let scale = max_abs(p) + max_abs(q);
    let (o1, o2) = if max_abs(j1) <= 1e-14 * scale {
        let o1 = principal_sqrt(&(-(&pinv * q)), SqrtBranch::NegativeRealToUpper)?;
        let o2 = -&o1;
        (o1, o2)
    } else {
        general_solvents(&pinv, q, j1)?
    };
    for o in [&o1, &o2] {
        let res = solvent_residual(p, q, j1, o);
        if res > 1e-9 * solvent_scale(p, q, j1, o) {
            return Err(Error::NumericFailure(format!("solvent residual {res:.3e}")));
        }
    }
    Ok((o1, o2))
}

fn general_solvents(pinv: &CMat, q: &CMat, j1: &CMat) -> Result<(CMat, CMat)> {
    let d = q.nrows();
    let mut lin = CMat::zeros(2 * d, 2 * d);
    lin.view_mut((0, d), (d, d)).copy_from(&CMat::identity(d, d));
    lin.view_mut((d, 0), (d, d)).copy_from(&(-(pinv * q)));
    lin.view_mut((d, d), (d, d)).copy_from(&(pinv * j1 * c(0.0, -2.0)));
    let e = eig(&lin)?;
    if !e.is_diagonalizable() {
        return Err(Error::NotDiagonalizable { cond: e.cond });
    }
    let all: Vec<usize> = (0..2 * d).collect();
    // Upper half of the sorted spectrum gives Omega1, matching the J1 = 0 branch.
    let upper: Vec<usize> = (d..2 * d).collect();
    if let Some(pair) = partition_solvents(&e, &upper, &all) {
        return Ok(pair);
    }
    if d > PARTITION_SEARCH_MAX_DIM {
        return Err(Error::SolventExtraction);
    }
    let mut best: Option<(f64, (CMat, CMat))> = None;
    for sel in combinations(2 * d, d) {
        let rest: Vec<usize> = all.iter().copied().filter(|i| !sel.contains(i)).collect();
        let (c1, c2) = (selection_cond(&e, &sel), selection_cond(&e, &rest));
        let worst = c1.max(c2);
        if worst > SELECTION_COND_LIMIT || best.as_ref().is_some_and(|b| b.0 <= worst) {
            continue;
        }
        if let Some(pair) = partition_solvents(&e, &sel, &all) {
            best = Some((worst, pair));
        }
    }
    best.map(|b| b.1).ok_or(Error::SolventExtraction)
}

fn selection(e: &EigenDecomposition, idx: &[usize]) -> CMat {
    let d = idx.len();
    CMat::from_fn(d, d, |r, k| e.vectors[(r, idx[k])])
}

fn selection_cond(e: &EigenDecomposition, idx: &[usize]) -> f64 {
    cond2(&selection(e, idx))
}

fn solvent_from(e: &EigenDecomposition, idx: &[usize]) -> Option<CMat> {
    let u = selection(e, idx);
    if cond2(&u) > SELECTION_COND_LIMIT {
        return None;
    }
    let uinv = inverse(&u).ok()?;
    let mut ud = u;
    for (k, &i) in idx.iter().enumerate() {
        let mu = e.values[i];
        let mut col = ud.column_mut(k);
        col *= mu;
    }
    Some(ud * uinv)
}

fn partition_solvents(e: &EigenDecomposition, sel: &[usize], all: &[usize]) -> Option<(CMat, CMat)> {
    let rest: Vec<usize> = all.iter().copied().filter(|i| !sel.contains(i)).collect();
    Some((solvent_from(e, sel)?, solvent_from(e, &rest)?))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn expm_scaled(e: &EigenDecomposition, vinv: &CMat, tau: f64) -> CMat {
    let mut vd = e.vectors.clone();
    for k in 0..e.values.len() {
        let f = (i_unit() * e.values[k] * tau).exp();
        let mut col = vd.column_mut(k);
        col *= f;
    }
    vd * vinv
}

fn diagonalize(omega: &CMat) -> Result<(EigenDecomposition, CMat)> {
    let e = eig(omega)?;
    if !e.is_diagonalizable() {
        return Err(Error::NotDiagonalizable { cond: e.cond });
    }
    let vinv = inverse(&e.vectors)?;
    Ok((e, vinv))
}

/// Non-resonance margin of the continuous Dirichlet problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    /// `|det(exp(i(b-a)Omega2) - exp(i(b-a)Omega1))|`.
    pub margin: f64,
    /// Hadamard bound of the block row `[exp(i(b-a)Omega2), exp(i(b-a)Omega1)]`,
    /// the size `margin` would have if the two exponentials were unrelated.
    pub scale: f64,
}

impl Resonance {
    pub fn is_resonant(&self) -> bool {
        self.margin <= NONRESONANT_TOL * self.scale.max(f64::MIN_POSITIVE)
    }
}

pub fn nonresonant(omega1: &CMat, omega2: &CMat, a: f64, b: f64) -> Result<Resonance> {
    let (e1, v1) = diagonalize(omega1)?;
    let (e2, v2) = diagonalize(omega2)?;
    resonance(&expm_scaled(&e1, &v1, b - a), &expm_scaled(&e2, &v2, b - a))
}

fn resonance(x1: &CMat, x2: &CMat) -> Result<Resonance> {
    let d = x1.nrows();
    let mut row = CMat::zeros(d, 2 * d);
    row.view_mut((0, 0), (d, d)).copy_from(x2);
    row.view_mut((0, d), (d, d)).copy_from(x1);
    Ok(Resonance {
        margin: det(&(x2 - x1))?.norm(),
        scale: hadamard_bound(&row),
    })
}

/// `|det sin(tau Omega)|`, the real-case form of the non-resonance margin.
pub fn sin_margin(omega: &CMat, tau: f64) -> Result<f64> {
    let (e, _) = diagonalize(omega)?;
    Ok(e.values.iter().map(|w| (w * tau).sin().norm()).product())
}

/// One term `vector * exp(i omega (t - a))` of the modal readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousMode {
    pub omega: Complex64,
    pub vector: CVec,
}

/// `z(t) = exp(i(t-a)Omega1) z1 + exp(i(t-a)Omega2) z2 + offset`.
#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    pub omega1: CMat,
    pub omega2: CMat,
    pub z1: CVec,
    pub z2: CVec,
    /// `-Q^-1 J3`.
    pub offset: CVec,
    pub a: f64,
    pub b: f64,
    pub resonance: Resonance,
    modes: Vec<ContinuousMode>,
}

impl ContinuousSolution {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// `z(t)`. Also defined outside `[a, b]` by the same formula.
    pub fn eval(&self, t: f64) -> CVec {
        self.derivative(t, 0)
    }

    /// The `k`-th time derivative of `z`.
    pub fn derivative(&self, t: f64, k: u32) -> CVec {
        let tau = t - self.a;
        let mut out = if k == 0 { self.offset.clone() } else { CVec::zeros(self.dim()) };
        for m in &self.modes {
            let iw = i_unit() * m.omega;
            out += &m.vector * (iw.powu(k) * (iw * tau).exp());
        }
        out
    }

    /// Terms of `z - offset` as scaled exponentials, one per eigenvalue of
    /// `Omega1` and `Omega2`.
    pub fn modes(&self) -> &[ContinuousMode] {
        &self.modes
    }

    /// `-P z'' + 2 J1 z' + Q z + J3` for the coefficients of `l`.
    pub fn ode_residual(&self, l: &QuadraticLagrangian, t: f64) -> CVec {
        let k = l.coefficients();
        let (z, dz, ddz) = (self.eval(t), self.derivative(t, 1), self.derivative(t, 2));
        -(&k.p * ddz) + &k.j1 * dz * c(2.0, 0.0) + &k.q * z + &k.j3
    }
}

/// Solves the continuous Euler-Lagrange equation with `z(a) = d_a`,
/// `z(b) = d_b` for a stationary Lagrangian.
pub fn solve_cel(l: &QuadraticLagrangian, d_a: &CVec, d_b: &CVec, a: f64, b: f64) -> Result<ContinuousSolution> {
    if !l.is_stationary() {
        return Err(Error::Unsupported("the closed form needs a stationary Lagrangian".into()));
    }
    let d = l.dim();
    if d_a.len() != d || d_b.len() != d {
        return Err(Error::InvalidArgument(format!("boundary vectors must have length {d}")));
    }
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    let k = l.coefficients();
    let (omega1, omega2) = solve_omega(&k.p, &k.q, &k.j1)?;
    let qinv_j3 = solve_vec(&k.q, &k.j3)?;
    let offset = -&qinv_j3;

    let (e1, v1) = diagonalize(&omega1)?;
    let (e2, v2) = diagonalize(&omega2)?;
    let tau = b - a;
    let x1 = expm_scaled(&e1, &v1, tau);
    let x2 = expm_scaled(&e2, &v2, tau);
    let resonance = resonance(&x1, &x2)?;
    if resonance.is_resonant() {
        return Err(Error::ResonantContinuous { margin: resonance.margin });
    }
    let r = inverse(&(&x2 - &x1))?;
    let id = CMat::identity(d, d);
    let e_k = |x: &CMat| x * d_a - d_b + (x - &id) * &qinv_j3;
    let z1 = &r * e_k(&x2);
    let z2 = -(&r * e_k(&x1));

    let mut modes = Vec::with_capacity(2 * d);
    for (e, vinv, z) in [(&e1, &v1, &z1), (&e2, &v2, &z2)] {
        let coef = vinv * z;
        for j in 0..d {
            modes.push(ContinuousMode {
                omega: e.values[j],
                vector: e.vectors.column(j) * coef[j],
            });
        }
    }
    Ok(ContinuousSolution {
        omega1,
        omega2,
        z1,
        z2,
        offset,
        a,
        b,
        resonance,
        modes,
    })
}

/// Eigen-coordinates of `Omega` and of a pair of boundary vectors, shared
/// by repeated evaluations of `F` and `Z`.
#[derive(Debug, Clone)]
pub struct BoundaryForm {
    values: Vec<Complex64>,
    vectors: CMat,
    alpha: CVec,
    beta: CVec,
}

impl BoundaryForm {
    pub fn new(omega: &CMat, d_a: &CVec, d_b: &CVec) -> Result<Self> {
        let d = omega.nrows();
        if d_a.len() != d || d_b.len() != d {
            return Err(Error::InvalidArgument(format!("boundary vectors must have length {d}")));
        }
        let (e, vinv) = diagonalize(omega)?;
        Ok(BoundaryForm {
            alpha: &vinv * d_a,
            beta: &vinv * d_b,
            values: e.values,
            vectors: e.vectors,
        })
    }

    /// Smallest `|sin(tau w)|` over the spectrum; the sine matrix is treated
    /// as singular when this is at most [`NONRESONANT_TOL`].
    pub fn sin_gap(&self, tau: f64) -> f64 {
        self.values
            .iter()
            .map(|w| (w * tau).sin().norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn check_sin(&self, tau: f64) -> Result<()> {
        let g = self.sin_gap(tau);
        if g <= NONRESONANT_TOL {
            return Err(Error::Singular(format!("sin(tau Omega) at tau = {tau} (gap {g:.3e})")));
        }
        Ok(())
    }

    fn assemble(&self, coords: impl Fn(usize) -> Complex64) -> CVec {
        let coef = CVec::from_fn(self.values.len(), |k, _| coords(k));
        &self.vectors * coef
    }

    /// `(i/2) sin(tau Omega)^-1 (exp(-i tau Omega) d_a - d_b)`.
    pub fn f(&self, tau: f64) -> Result<CVec> {
        self.check_sin(tau)?;
        let half_i = c(0.0, 0.5);
        Ok(self.assemble(|k| {
            let w = self.values[k] * tau;
            half_i * ((-i_unit() * w).exp() * self.alpha[k] - self.beta[k]) / w.sin()
        }))
    }

    /// `sin(tau2 Omega)^-1 (sin(tau1 Omega) d_b - sin((tau1 - tau2) Omega) d_a)`.
    pub fn z(&self, tau1: f64, tau2: f64) -> Result<CVec> {
        self.check_sin(tau2)?;
        Ok(self.assemble(|k| {
            let w = self.values[k];
            ((w * tau1).sin() * self.beta[k] - (w * (tau1 - tau2)).sin() * self.alpha[k]) / (w * tau2).sin()
        }))
    }
}

pub fn f_vector(tau: f64, d_a: &CVec, d_b: &CVec, omega: &CMat) -> Result<CVec> {
    BoundaryForm::new(omega, d_a, d_b)?.f(tau)
}

pub fn z_vector(tau1: f64, tau2: f64, d_a: &CVec, d_b: &CVec, omega: &CMat) -> Result<CVec> {
    BoundaryForm::new(omega, d_a, d_b)?.z(tau1, tau2)
}

/// The limit profile `z'(t) = Z((t-a)/(2r), (b-a)/(2r), d_a, d_b)` of the
/// pseudo-periodic discrete solutions for the `[r, r]` operator.
#[derive(Debug, Clone)]
pub struct LimitProfile {
    form: BoundaryForm,
    r: f64,
    a: f64,
    b: f64,
}

impl LimitProfile {
    pub fn new(r: f64, omega: &CMat, d_a: &CVec, d_b: &CVec, a: f64, b: f64) -> Result<Self> {
        if r == 0.0 || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("r must be finite and nonzero, got {r}")));
        }
        let form = BoundaryForm::new(omega, d_a, d_b)?;
        form.check_sin((b - a) / (2.0 * r))?;
        Ok(LimitProfile { form, r, a, b })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn eval(&self, t: f64) -> CVec {
        let s = 2.0 * self.r;
        self.form
            .z((t - self.a) / s, (self.b - self.a) / s)
            .expect("sine gap checked at construction")
    }
}

pub fn z_limit(r: f64, omega: &CMat, d_a: &CVec, d_b: &CVec, a: f64, b: f64, t: f64) -> Result<CVec> {
    Ok(LimitProfile::new(r, omega, d_a, d_b, a, b)?.eval(t))
}
