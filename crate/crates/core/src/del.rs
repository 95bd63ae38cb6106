//! Discrete Euler-Lagrange equations: node equations, the block companion
//! recurrence, Dirichlet shooting and free iteration.
//!
//! The discrete equation at a node `t` is
//!
//! ```text
//! box_{-eps}(P box_eps x - J1 x + J2)(t) + Q x(t) + J1 box_eps x(t) + J3 = 0
//! ```
//!
//! with every sample gated by its window on `[a, b]`. Collecting terms gives
//! `sum_k M_k x(t + k eps) + const = 0` for `k` in `-2N..=2N`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, det, hadamard_bound, inverse, solve_vec, CMat, CVec};
use crate::model::{apply_box, reverse_box, BoxOperator, Grid, GridFunction, QuadraticLagrangian, TrySampler};
use crate::spectral::theta_matrix;

/// Index range `lo..=hi` where all samples of the recurrence stay in `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyInterval {
    pub lo: i64,
    pub hi: i64,
}

impl SafetyInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.lo && n <= self.hi
    }
}

/// `n` is safe iff `t0 + (n - j) eps` lies in `[a, b]` for `j = 0..4N`.
pub fn safety_interval(t0: f64, epsilon: f64, a: f64, b: f64, n: usize) -> Result<SafetyInterval> {
    if !(epsilon > 0.0) || !(a < b) || n == 0 {
        return Err(Error::InvalidArgument("need eps > 0, a < b, N >= 1".into()));
    }
    let tol = 1e-9;
    let first = ((a - t0) / epsilon - tol).ceil() as i64;
    let last = ((b - t0) / epsilon + tol).floor() as i64;
    Ok(SafetyInterval {
        lo: first + 4 * n as i64 - 1,
        hi: last,
    })
}

/// `sum_k M_k x(t + k eps) + constant = 0` at one node.
#[derive(Debug, Clone)]
pub struct NodeEquation {
    pub t: f64,
    pub half_width: usize,
    terms: Vec<Option<CMat>>,
    pub constant: CVec,
}

impl NodeEquation {
    /// `M_k`, or `None` when every contribution is windowed out.
    pub fn term(&self, k: i64) -> Option<&CMat> {
        let idx = k + 2 * self.half_width as i64;
        if idx < 0 || idx as usize >= self.terms.len() {
            return None;
        }
        self.terms[idx as usize].as_ref()
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        let w = 2 * self.half_width as i64;
        (-w..=w).filter(move |&k| self.term(k).is_some())
    }

    fn add(&mut self, k: i64, m: CMat) {
        let idx = (k + 2 * self.half_width as i64) as usize;
        self.terms[idx] = Some(match self.terms[idx].take() {
            None => m,
            Some(prev) => prev + m,
        });
    }
}

/// Collects the discrete equation at `t` into coefficient matrices.
pub fn node_equation(l: &QuadraticLagrangian, op: &BoxOperator, t: f64) -> NodeEquation {
    let op = op.forward();
    let n = op.half_width() as i64;
    let eps = op.epsilon();
    let d = l.dim();
    let mut eq = NodeEquation {
        t,
        half_width: op.half_width(),
        terms: vec![None; (4 * n + 1) as usize],
        constant: CVec::zeros(d),
    };
    let here = l.at(t);

    // box_{-eps}: sample of c_i sits at t - i eps
    for i in -n..=n {
        let s = t - i as f64 * eps;
        if !op.inside(t) || !op.inside(s) {
            continue;
        }
        let ci = op.coeff(i);
        let there = l.at(s);
        for k in -n..=n {
            if op.inside(s + k as f64 * eps) {
                eq.add(k - i, &there.p * (ci * op.coeff(k)));
            }
        }
        eq.add(-i, &there.j1 * (-ci));
        eq.constant += &there.j2 * ci;
    }
    for k in -n..=n {
        if op.window(t, k) {
            eq.add(k, &here.j1 * op.coeff(k));
        }
    }
    eq.add(0, here.q.clone());
    eq.constant += &here.j3;
    eq
}

/// Left side of the discrete equation at a node of `f`, assembled by
/// composing the operators directly rather than through `node_equation`.
pub fn residual_del(l: &QuadraticLagrangian, op: &BoxOperator, f: &GridFunction, t: f64) -> Result<CVec> {
    f.value_at(t)?;
    let fwd = op.forward();
    let rev = reverse_box(&fwd);
    let momentum = TrySampler(|s: f64| -> Result<CVec> {
        let k = l.at(s);
        let bx = apply_box(&fwd, f, s)?;
        let x = f.value_at(s)?;
        Ok(&k.p * bx - &k.j1 * x + &k.j2)
    });
    let k = l.at(t);
    let x = f.value_at(t)?;
    Ok(apply_box(&rev, &momentum, t)? + &k.q * x + &k.j1 * apply_box(&fwd, f, t)? + &k.j3)
}

/// One step `v_{n+1} = A v_n + b` of the vectorized recurrence.
#[derive(Debug, Clone)]
pub struct CompanionSystem {
    pub n: i64,
    pub dim: usize,
    pub half_width: usize,
    /// `B_1 .. B_{4N}`.
    pub blocks: Vec<CMat>,
    pub a: CMat,
    pub b: CVec,
    pub stationary: bool,
    pub j5: Option<CVec>,
    pub j6: Option<CVec>,
}

impl CompanionSystem {
    pub fn order(&self) -> usize {
        4 * self.half_width
    }

    /// `sum_i B_i lambda^{4N-i} - lambda^{4N} I`.
    pub fn matrix_polynomial(&self, lambda: Complex64) -> CMat {
        let m = self.order();
        let mut acc = CMat::identity(self.dim, self.dim) * (-lambda.powu(m as u32));
        for (i, blk) in self.blocks.iter().enumerate() {
            acc += blk * lambda.powu((m - i - 1) as u32);
        }
        acc
    }

    /// `x_{next} = sum_i B_i x_{next-i} + b` with `history[i-1] = x_{next-i}`.
    pub fn step(&self, history: &[CVec]) -> CVec {
        let mut acc = self.b.rows(0, self.dim).into_owned();
        for (blk, x) in self.blocks.iter().zip(history) {
            acc += blk * x;
        }
        acc
    }
}

/// First block row of `A_n`: the equation centred `2N` steps behind the
/// newest sample, solved for that sample.
pub fn interior_blocks(l: &QuadraticLagrangian, op: &BoxOperator, t0: f64, n: i64) -> Result<Vec<CMat>> {
    Ok(assemble(l, op, t0, n)?.0)
}

fn assemble(l: &QuadraticLagrangian, op: &BoxOperator, t0: f64, n: i64) -> Result<(Vec<CMat>, CVec)> {
    let (a, b) = op.interval();
    let hw = op.half_width() as i64;
    let eps = op.epsilon();
    let safe = safety_interval(t0, eps, a, b, op.half_width())?;
    if !safe.contains(n) || !safe.contains(n + 1) {
        return Err(Error::InvalidArgument(format!(
            "steps {n} and {} must lie in the safety interval [{}, {}]",
            n + 1,
            safe.lo,
            safe.hi
        )));
    }
    let center = t0 + (n + 1 - 2 * hw) as f64 * eps;
    let eq = node_equation(l, op, center);
    let top = eq
        .term(2 * hw)
        .ok_or_else(|| Error::Singular("leading coefficient missing".into()))?;
    let top_inv = inverse(top).map_err(|_| Error::Singular("leading coefficient c_N c_-N P".into()))?;
    let d = l.dim();
    let mut blocks = Vec::with_capacity(4 * hw as usize);
    for i in 1..=4 * hw {
        let blk = match eq.term(2 * hw - i) {
            Some(m) => -(&top_inv * m),
            None => CMat::zeros(d, d),
        };
        blocks.push(blk);
    }
    let b0 = -(&top_inv * &eq.constant);
    Ok((blocks, b0))
}

pub fn companion(l: &QuadraticLagrangian, op: &BoxOperator, t0: f64, n: i64) -> Result<CompanionSystem> {
    let (blocks, b0) = assemble(l, op, t0, n)?;
    let d = l.dim();
    let m = blocks.len();
    let size = m * d;
    let mut a = CMat::zeros(size, size);
    for (i, blk) in blocks.iter().enumerate() {
        a.view_mut((0, i * d), (d, d)).copy_from(blk);
    }
    for i in 1..m {
        a.view_mut((i * d, (i - 1) * d), (d, d)).fill_with_identity();
    }
    let mut b = CVec::zeros(size);
    b.rows_mut(0, d).copy_from(&b0);

    let stationary = l.is_stationary();
    let (j5, j6) = if stationary {
        let mut sum = CMat::identity(d, d);
        for blk in &blocks {
            sum -= blk;
        }
        let j6 = if crate::linalg::cond2(&sum) <= 1e12 {
            solve_vec(&sum, &b0).ok()
        } else {
            None
        };
        (Some(b0), j6)
    } else {
        (None, None)
    };
    Ok(CompanionSystem {
        n,
        dim: d,
        half_width: op.half_width(),
        blocks,
        a,
        b,
        stationary,
        j5,
        j6,
    })
}

/// Companion system of a stationary Lagrangian, independent of the interval.
pub fn stationary_companion(l: &QuadraticLagrangian, op: &BoxOperator) -> Result<CompanionSystem> {
    if !l.is_stationary() {
        return Err(Error::InvalidArgument("Lagrangian is time dependent".into()));
    }
    let hw = op.half_width() as i64;
    let span = op.epsilon() * (8 * hw) as f64;
    let probe = op.forward().on_interval((0.0, span));
    companion(l, &probe, 0.0, 4 * hw - 1)
}

/// A boundary-adjacent stage of the shooting sweep. `matrix` maps the
/// stacked samples at `offsets` (relative to `node`) to the next sample,
/// or for the final node gives the constraint rows themselves.
#[derive(Debug, Clone)]
pub struct BoundaryStage {
    pub node: usize,
    pub offsets: Vec<i64>,
    pub matrix: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingDeterminant {
    pub det: Complex64,
    /// Hadamard bound of the shooting matrix, so `|det| <= scale`.
    pub scale: f64,
}

impl ShootingDeterminant {
    /// `|det| / scale`, in `[0, 1]`.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.det.norm() / self.scale
        } else {
            0.0
        }
    }

    pub fn is_singular(&self) -> bool {
        !(self.relative() > 1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub solution: GridFunction,
    /// The free vector `x(a + eps)`.
    pub d_s: CVec,
    pub shoot_det: Complex64,
    pub det_scale: f64,
    pub stage_matrices: Vec<BoundaryStage>,
}

struct Sweep {
    // x_n = u[n] s + v[n], s = (x_1, x_2)
    u: Vec<CMat>,
    v: Vec<CVec>,
    system: CMat,
    rhs: CVec,
    stages: Vec<BoundaryStage>,
}

fn checked_operator(op: &BoxOperator, a: f64, b: f64, m: usize) -> Result<BoxOperator> {
    if op.half_width() != 1 {
        return Err(Error::Unsupported(
            "Dirichlet shooting is implemented for three-term operators only".into(),
        ));
    }
    if !(a < b) || m < 3 {
        return Err(Error::InvalidArgument("need a < b and M >= 3".into()));
    }
    let eps = (b - a) / m as f64;
    if (op.epsilon() - eps).abs() > 1e-9 * eps {
        return Err(Error::InvalidArgument(format!(
            "operator step {} does not match (b - a)/M = {eps}",
            op.epsilon()
        )));
    }
    Ok(op.forward().on_interval((a, b)))
}

/// Sequential sweep over nodes `1..=M-2`, each solved for its `+2` sample,
/// closed by `x_M = d_b` and the equation at node `M-1`.
fn sweep(l: &QuadraticLagrangian, op: &BoxOperator, grid: &Grid, d_a: &CVec, d_b: &CVec) -> Result<Sweep> {
    let m = grid.len() - 1;
    let d = l.dim();
    let mut u = Vec::with_capacity(m + 1);
    let mut v = Vec::with_capacity(m + 1);
    u.push(CMat::zeros(d, 2 * d));
    v.push(d_a.clone());
    let mut seed1 = CMat::zeros(d, 2 * d);
    seed1.view_mut((0, 0), (d, d)).fill_with_identity();
    let mut seed2 = CMat::zeros(d, 2 * d);
    seed2.view_mut((0, d), (d, d)).fill_with_identity();
    u.push(seed1);
    v.push(CVec::zeros(d));
    u.push(seed2);
    v.push(CVec::zeros(d));

    // interior equation, reused while the Lagrangian is stationary
    let interior = if l.is_stationary() && m >= 4 {
        let eq = node_equation(l, op, grid.time(2));
        let inv = inverse(eq.term(2).expect("interior node has a +2 sample"))
            .map_err(|_| Error::Singular("leading coefficient c_1 c_-1 P".into()))?;
        Some((eq, inv))
    } else {
        None
    };
    let is_boundary = |node: usize| node < 2 || node + 2 > m;
    let record = |node: usize| node <= 2 || node + 3 >= m;

    let mut stages = Vec::new();
    for node in 1..=(m - 2) {
        let owned;
        let (eq, top_inv) = match &interior {
            Some((eq, inv)) if !is_boundary(node) => (eq, inv.clone()),
            _ => {
                owned = node_equation(l, op, grid.time(node));
                let inv = inverse(owned.term(2).ok_or_else(|| Error::Singular("missing +2 sample".into()))?)
                    .map_err(|_| Error::Singular("leading coefficient c_1 c_-1 P".into()))?;
                (&owned, inv)
            }
        };
        let mut acc_u = CMat::zeros(d, 2 * d);
        let mut acc_v = eq.constant.clone();
        let mut offsets = Vec::new();
        for k in -2..=1_i64 {
            if let Some(mk) = eq.term(k) {
                let idx = (node as i64 + k) as usize;
                acc_u += mk * &u[idx];
                acc_v += mk * &v[idx];
                offsets.push(k);
            }
        }
        if record(node) {
            let mut row = CMat::zeros(d, d * offsets.len());
            for (j, &k) in offsets.iter().enumerate() {
                row.view_mut((0, j * d), (d, d)).copy_from(&(-(&top_inv * eq.term(k).unwrap())));
            }
            stages.push(BoundaryStage { node, offsets, matrix: row });
        }
        u.push(-(&top_inv * acc_u));
        v.push(-(&top_inv * acc_v));
    }

    let last = m - 1;
    let eq = node_equation(l, op, grid.time(last));
    let mut t_u = CMat::zeros(d, 2 * d);
    let mut t_v = eq.constant.clone();
    let mut offsets = Vec::new();
    for k in -2..=1_i64 {
        if let Some(mk) = eq.term(k) {
            let idx = (last as i64 + k) as usize;
            if idx == m {
                t_v += mk * d_b;
            } else {
                t_u += mk * &u[idx];
                t_v += mk * &v[idx];
            }
            offsets.push(k);
        }
    }
    let mut row = CMat::zeros(d, d * offsets.len());
    for (j, &k) in offsets.iter().enumerate() {
        row.view_mut((0, j * d), (d, d)).copy_from(eq.term(k).unwrap());
    }
    stages.push(BoundaryStage { node: last, offsets, matrix: row });

    let mut system = CMat::zeros(2 * d, 2 * d);
    system.view_mut((0, 0), (d, 2 * d)).copy_from(&u[m]);
    system.view_mut((d, 0), (d, 2 * d)).copy_from(&t_u);
    let mut rhs = CVec::zeros(2 * d);
    rhs.rows_mut(0, d).copy_from(&(d_b - &v[m]));
    rhs.rows_mut(d, d).copy_from(&(-t_v));
    Ok(Sweep { u, v, system, rhs, stages })
}

/// Determinant of the shooting system (independent of boundary data).
pub fn shooting_determinant(l: &QuadraticLagrangian, op: &BoxOperator, a: f64, b: f64, m: usize) -> Result<ShootingDeterminant> {
    let op = checked_operator(op, a, b, m)?;
    let grid = Grid::uniform(a, b, m)?;
    let zero = CVec::zeros(l.dim());
    let sw = sweep(l, &op, &grid, &zero, &zero)?;
    Ok(ShootingDeterminant {
        det: det(&sw.system)?,
        scale: hadamard_bound(&sw.system),
    })
}

/// Dirichlet problem `x(a) = d_a`, `x(b) = d_b` with the discrete equation
/// imposed at every interior node `a + n eps`, `1 <= n <= M-1`.
pub fn solve_dirichlet(
    l: &QuadraticLagrangian,
    op: &BoxOperator,
    d_a: &CVec,
    d_b: &CVec,
    a: f64,
    b: f64,
    m: usize,
) -> Result<ShootingResult> {
    let d = l.dim();
    if d_a.len() != d || d_b.len() != d {
        return Err(Error::InvalidArgument(format!("boundary vectors must have length {d}")));
    }
    let op = checked_operator(op, a, b, m)?;
    let grid = Grid::uniform(a, b, m)?;
    let sw = sweep(l, &op, &grid, d_a, d_b)?;
    let shoot = ShootingDeterminant {
        det: det(&sw.system)?,
        scale: hadamard_bound(&sw.system),
    };
    if shoot.is_singular() {
        return Err(Error::ResonantDiscrete {
            det_abs: shoot.det.norm(),
            scale: shoot.scale,
        });
    }
    let s = solve_vec(&sw.system, &sw.rhs)?;
    let mut values: Vec<CVec> = sw
        .u
        .iter()
        .zip(&sw.v)
        .map(|(u, v)| u * &s + v)
        .collect();
    values[0] = d_a.clone();
    values[m] = d_b.clone();
    let d_s = values[1].clone();
    Ok(ShootingResult {
        solution: GridFunction::new(grid, values, Some((d_a.clone(), d_b.clone())))?,
        d_s,
        shoot_det: shoot.det,
        det_scale: shoot.scale,
        stage_matrices: sw.stages,
    })
}

/// Free iteration on a grid missing at least one endpoint. `endpoint` is
/// the value at whichever endpoint the grid hits; `seeds` are the samples
/// following it (or the first samples of the grid when it hits neither).
pub fn solve_free(
    l: &QuadraticLagrangian,
    op: &BoxOperator,
    grid: &Grid,
    endpoint: Option<&CVec>,
    seeds: &[CVec],
) -> Result<GridFunction> {
    let (a, b) = grid.interval();
    let op = op.forward().on_interval((a, b));
    if (op.epsilon() - grid.epsilon()).abs() > 1e-9 * grid.epsilon() {
        return Err(Error::InvalidArgument("operator and grid steps differ".into()));
    }
    let (hits_a, hits_b) = (grid.hits_a(), grid.hits_b());
    if hits_a && hits_b {
        return Err(Error::InvalidArgument(
            "grid contains both endpoints; use solve_dirichlet".into(),
        ));
    }
    let width = 2 * op.half_width();
    let anchored = hits_a || hits_b;
    if anchored != endpoint.is_some() {
        return Err(Error::InvalidArgument(
            "endpoint value is required exactly when the grid hits an endpoint".into(),
        ));
    }
    let need = width - usize::from(anchored);
    if seeds.len() != need {
        return Err(Error::InvalidArgument(format!(
            "expected {need} seed vector(s), got {}",
            seeds.len()
        )));
    }
    let d = l.dim();
    if seeds.iter().chain(endpoint).any(|v| v.len() != d) {
        return Err(Error::InvalidArgument(format!("vectors must have length {d}")));
    }
    let len = grid.len();
    let mut known: Vec<CVec> = endpoint.into_iter().cloned().chain(seeds.iter().cloned()).collect();
    if len <= known.len() {
        known.truncate(len);
        if hits_b {
            known.reverse();
        }
        return GridFunction::new(grid.clone(), known, None);
    }

    let w = width as i64;
    if !hits_b {
        let mut values = known;
        for node in 0..=(len - 1 - width) {
            let eq = node_equation(l, &op, grid.time(node));
            let mut acc = eq.constant.clone();
            for k in -w..w {
                if let Some(mk) = eq.term(k) {
                    let idx = node as i64 + k;
                    if idx >= 0 {
                        acc += mk * &values[idx as usize];
                    }
                }
            }
            let top = eq.term(w).ok_or_else(|| Error::Singular("missing leading sample".into()))?;
            values.push(-solve_vec(top, &acc)?);
        }
        GridFunction::new(grid.clone(), values, None)
    } else {
        // march backwards from b; values[j] holds position len-1-j
        let mut rev = known;
        for node in (width..len).rev() {
            let eq = node_equation(l, &op, grid.time(node));
            let mut acc = eq.constant.clone();
            for k in (-w + 1)..=w {
                if let Some(mk) = eq.term(k) {
                    let pos = node as i64 + k;
                    if pos < len as i64 {
                        acc += mk * &rev[len - 1 - pos as usize];
                    }
                }
            }
            let low = eq.term(-w).ok_or_else(|| Error::Singular("missing trailing sample".into()))?;
            rev.push(-solve_vec(low, &acc)?);
        }
        rev.reverse();
        GridFunction::new(grid.clone(), rev, None)
    }
}

/// Closed-form data of the split two-step recurrence.
#[derive(Debug, Clone)]
pub struct SplitSolution {
    /// `u_n = x(a + 2 n eps)`, `n = 0..=M/2`.
    pub u: Vec<CVec>,
    pub theta: CMat,
    pub g1: CVec,
    pub g2: CVec,
    pub g1_tilde: CVec,
    pub g2_tilde: CVec,
    pub d_a_prime: CVec,
    pub d_b_prime: CVec,
    /// `|det sin(k Theta)|` for `k = M/2 - 2` and `k = M/2`.
    pub margins: (f64, f64),
}

/// Even-node solution of the `(r, r)` oscillator through the phase matrix.
pub fn split_solve_oscillator(
    l: &QuadraticLagrangian,
    r: f64,
    d_a: &CVec,
    d_b: &CVec,
    a: f64,
    b: f64,
    m: usize,
) -> Result<SplitSolution> {
    let k = l.coefficients();
    let zero = |v: &CVec| v.iter().all(|z| z.norm() == 0.0);
    if !l.is_stationary() || k.j1.iter().any(|z| z.norm() != 0.0) || !zero(&k.j2) || !zero(&k.j3) {
        return Err(Error::InvalidArgument(
            "split solver needs a stationary Lagrangian with J1 = J2 = J3 = 0".into(),
        ));
    }
    if m % 2 != 0 || m < 6 {
        return Err(Error::InvalidArgument("M must be even and at least 6".into()));
    }
    if r == 0.0 || !r.is_finite() {
        return Err(Error::InvalidArgument("r must be nonzero".into()));
    }
    let d = l.dim();
    let eps = (b - a) / m as f64;
    let omega2 = -(inverse(&k.p)? * &k.q);
    let omega = crate::linalg::principal_sqrt(&omega2, crate::linalg::SqrtBranch::Principal)?;
    if omega.iter().any(|z| z.im.abs() > 1e-12 * (1.0 + z.norm())) {
        return Err(Error::InvalidArgument("-P^-1 Q must have a real square root".into()));
    }
    let theta = theta_matrix(&omega, eps, r)?;
    let half = m / 2;

    let e = crate::linalg::eig(&theta)?;
    let f = |g: &dyn Fn(Complex64) -> Complex64| crate::linalg::matfun_from(&e, g);
    let sin_k = |kk: usize| f(&|z: Complex64| (z * kk as f64).sin());
    let expi = |kk: f64| f(&|z: Complex64| (c(0.0, kk) * z).exp());

    let s_full = sin_k(half)?;
    let s_short = sin_k(half - 2)?;
    let margins = (det(&s_short)?.norm(), det(&s_full)?.norm());
    let thr = 1e-10;
    if margins.1 <= thr {
        return Err(Error::ResonantDiscrete { det_abs: margins.1, scale: 1.0 });
    }

    let i_half = c(0.0, 0.5);
    let rhs_t1 = &expi(-(half as f64))? * d_a - d_b;
    let g1_tilde = solve_vec(&s_full, &rhs_t1)? * i_half;
    let rhs_t2 = d_b - &expi(half as f64)? * d_a;
    let g2_tilde = solve_vec(&s_full, &rhs_t2)? * i_half;

    let shrink = CMat::identity(d, d) - &omega2 * c(eps * eps / (r * r), 0.0);
    let d_a_prime = &shrink * d_a;
    let d_b_prime = &shrink * d_b;
    let (g1, g2) = if margins.0 > thr {
        let km1 = (half - 1) as f64;
        let r1 = &expi(-km1)? * &d_a_prime - &expi(-1.0)? * &d_b_prime;
        let r2 = &expi(1.0)? * &d_b_prime - &expi(km1)? * &d_a_prime;
        (solve_vec(&s_short, &r1)? * i_half, solve_vec(&s_short, &r2)? * i_half)
    } else {
        (CVec::zeros(d), CVec::zeros(d))
    };

    // same two-term relation the discrete equation produces
    let two_cos = (CMat::identity(d, d) - &omega2 * c(eps * eps / (2.0 * r * r), 0.0)) * c(2.0, 0.0);
    let mut u = Vec::with_capacity(half + 1);
    u.push(d_a.clone());
    u.push(&expi(1.0)? * &g1_tilde + &expi(-1.0)? * &g2_tilde);
    for n in 1..half {
        let next = &two_cos * &u[n] - &u[n - 1];
        u.push(next);
    }
    u[half] = d_b.clone();
    Ok(SplitSolution {
        u,
        theta: theta.map(|z| c(z.re, 0.0)),
        g1,
        g2,
        g1_tilde,
        g2_tilde,
        d_a_prime,
        d_b_prime,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, real_mat, real_vec, vec_max_abs};
    use crate::model::{make_rs_box, Coefficients};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn half() -> Complex64 {
        c(0.5, 0.0)
    }

    fn baseline() -> QuadraticLagrangian {
        QuadraticLagrangian::scalar(1.0, -0.23)
    }

    fn enumerate_safe(t0: f64, eps: f64, a: f64, b: f64, n: usize) -> Vec<i64> {
        (-50..200)
            .filter(|&k| {
                (0..4 * n as i64).all(|j| {
                    let t = t0 + (k - j) as f64 * eps;
                    t >= a - 1e-12 && t <= b + 1e-12
                })
            })
            .collect()
    }

    #[test]
    fn safety_interval_matches_enumeration() {
        for (t0, eps, a, b, n) in [
            (0.0, 1.0, 0.0, 30.0, 1),
            (0.0, 30.0 / 8.0, 0.0, 30.0, 1),
            (0.3, 0.7, 0.0, 9.0, 2),
            (0.0, 11.0, 0.0, 30.0, 1),
        ] {
            let s = safety_interval(t0, eps, a, b, n).unwrap();
            let got: Vec<i64> = if s.is_empty() { vec![] } else { (s.lo..=s.hi).collect() };
            assert_eq!(got, enumerate_safe(t0, eps, a, b, n), "case t0={t0} eps={eps}");
        }
        let s = safety_interval(0.0, 1.0, 0.0, 30.0, 1).unwrap();
        assert_eq!((s.lo, s.hi), (3, 30));
        let s = safety_interval(0.0, 30.0 / 8.0, 0.0, 30.0, 1).unwrap();
        assert_eq!((s.lo, s.hi), (3, 8));
    }

    #[test]
    fn baseline_block_row() {
        let op = make_rs_box(half(), half(), 1.0, (0.0, 30.0)).unwrap();
        let sys = companion(&baseline(), &op, 0.0, 3).unwrap();
        let want = [0.0, 1.08, 0.0, -1.0];
        for (blk, w) in sys.blocks.iter().zip(want) {
            assert_abs_diff_eq!(blk[(0, 0)].re, w, epsilon = 1e-14);
            assert_abs_diff_eq!(blk[(0, 0)].im, 0.0, epsilon = 1e-14);
        }
        assert!(vec_max_abs(&sys.b) == 0.0);
        // the quartic lambda^4 - 1.08 lambda^2 + 1 has root product +1
        assert_abs_diff_eq!(det(&sys.a).unwrap().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn generic_blocks_match_closed_form() {
        let j1 = real_mat(&[&[0.0, 0.4], &[-0.4, 0.0]]);
        let p = real_mat(&[&[2.0, 0.3], &[0.3, 1.5]]);
        let q = real_mat(&[&[-1.0, 0.2], &[0.2, -0.7]]);
        let l = QuadraticLagrangian::oscillator(p.clone(), q.clone()).unwrap().with_j1(j1.clone()).unwrap();
        let eps = 0.3;
        let op = BoxOperator::new(1, eps, vec![c(-0.7, 0.1), c(0.2, -0.3), c(0.5, 0.2)], (0.0, 3.0)).unwrap();
        let (cm, c0, cp) = (op.coeff(-1), op.coeff(0), op.coeff(1));
        let blocks = interior_blocks(&l, &op, 0.0, 3).unwrap();
        let pinv = inverse(&p).unwrap();
        let k = cp * cm;
        let id = CMat::identity(2, 2);
        let b1 = &id * (-(cp + cm) * c0 / k) - &pinv * &j1 * ((cp - cm) / k);
        let b2 = &id * (-(cp * cp + c0 * c0 + cm * cm) / k) - &pinv * &q / k;
        let b3 = &id * (-(cp + cm) * c0 / k) - &pinv * &j1 * ((cm - cp) / k);
        let want = [b1, b2, b3, -id.clone()];
        for (got, w) in blocks.iter().zip(want.iter()) {
            assert!(max_abs(&(got - w)) < 1e-12, "{got} vs {w}");
        }
    }

    #[test]
    fn half_width_two_layout() {
        let l = QuadraticLagrangian::scalar(1.0, -0.5);
        let coeffs = vec![c(0.1, 0.0), c(-0.7, 0.0), c(0.0, 0.0), c(0.7, 0.0), c(-0.1, 0.0)];
        let op = BoxOperator::new(2, 0.5, coeffs, (0.0, 10.0)).unwrap();
        let s = safety_interval(0.0, 0.5, 0.0, 10.0, 2).unwrap();
        let sys = companion(&l, &op, 0.0, s.lo).unwrap();
        assert_eq!(sys.a.nrows(), 8);
        for i in 1..8 {
            for j in 0..8 {
                let want = if j + 1 == i { 1.0 } else { 0.0 };
                assert_eq!(sys.a[(i, j)], c(want, 0.0));
            }
        }
        assert!(sys.a.row(0).iter().all(|z| z.re.is_finite()));
        // last block is -I for any stationary recurrence
        assert_abs_diff_eq!(sys.blocks[7][(0, 0)].re, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn baseline_dirichlet_residual_and_boundaries() {
        let l = baseline();
        let (da, db) = (real_vec(&[12.0]), real_vec(&[-14.0]));
        for m in [30_usize, 120] {
            let eps = 30.0 / m as f64;
            let op = make_rs_box(half(), half(), eps, (0.0, 30.0)).unwrap();
            let res = solve_dirichlet(&l, &op, &da, &db, 0.0, 30.0, m).unwrap();
            let sol = &res.solution;
            assert_eq!(sol.values[0], da);
            assert_eq!(sol.values[m], db);
            let scale = sol.sup_norm();
            for n in 1..m {
                let r = residual_del(&l, &op, sol, sol.grid.time(n)).unwrap();
                assert!(vec_max_abs(&r) <= 1e-9 * scale, "M={m} n={n} residual {r}");
            }
            assert!(res.shoot_det.norm() > 1e-6);
            assert_eq!(res.stage_matrices.len(), 5);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let op = make_rs_box(half(), half(), 1.0, (0.0, 30.0)).unwrap();
        let z = real_vec(&[0.0]);
        let res = solve_dirichlet(&baseline(), &op, &z, &z, 0.0, 30.0, 30).unwrap();
        assert!(res.solution.sup_norm() == 0.0);
    }

    #[test]
    fn constant_particular_solution() {
        let l = baseline().with_sources(real_vec(&[0.3]), real_vec(&[0.5])).unwrap();
        let op = make_rs_box(half(), half(), 1.0, (0.0, 30.0)).unwrap();
        let sys = stationary_companion(&l, &op).unwrap();
        let j6 = sys.j6.clone().unwrap();
        assert_abs_diff_eq!(j6[0].re, 0.5 / 0.23, epsilon = 1e-12);
        let grid = Grid::uniform(0.0, 30.0, 30).unwrap();
        let f = GridFunction::new(grid, vec![j6.clone(); 31], None).unwrap();
        // interior stencils see the constant; boundary-adjacent ones do not
        for n in 2..=28 {
            let r = residual_del(&l, &op, &f, n as f64).unwrap();
            assert!(vec_max_abs(&r) < 1e-12);
        }
        assert!(vec_max_abs(&residual_del(&l, &op, &f, 1.0).unwrap()) > 1e-3);
    }

    #[test]
    fn node_equation_agrees_with_composed_residual() {
        let l = baseline().with_sources(real_vec(&[0.3]), real_vec(&[0.5])).unwrap();
        let op = BoxOperator::new(1, 0.5, vec![c(-0.9, 0.2), c(0.3, -0.4), c(0.6, 0.2)], (0.0, 4.0)).unwrap();
        let grid = Grid::uniform(0.0, 4.0, 8).unwrap();
        let vals: Vec<CVec> = (0..9).map(|k| CVec::from_element(1, c((k as f64).sin(), 0.1 * k as f64))).collect();
        let f = GridFunction::new(grid.clone(), vals, None).unwrap();
        for n in 0..=8_usize {
            let t = grid.time(n);
            let eq = node_equation(&l, &op, t);
            let mut lhs = eq.constant.clone();
            for k in eq.offsets() {
                lhs += eq.term(k).unwrap() * &f.values[(n as i64 + k) as usize];
            }
            let r = residual_del(&l, &op, &f, t).unwrap();
            assert!((lhs - r).norm() < 1e-12, "node {n}");
        }
    }

    #[test]
    fn time_dependent_dirichlet() {
        let reference = baseline().coefficients().clone();
        let sched: crate::model::Schedule = Arc::new(|t: f64| Coefficients {
            p: real_mat(&[&[1.0 + 0.1 * t.sin()]]),
            q: real_mat(&[&[-0.23 - 0.05 * t.cos()]]),
            j1: CMat::zeros(1, 1),
            j2: real_vec(&[0.1 * t]),
            j3: real_vec(&[0.2]),
            j4: c(0.0, 0.0),
        });
        let l = QuadraticLagrangian::time_dependent(reference, sched).unwrap();
        let op = make_rs_box(c(0.6, 0.0), c(0.4, 0.0), 0.25, (0.0, 10.0)).unwrap();
        let res = solve_dirichlet(&l, &op, &real_vec(&[1.0]), &real_vec(&[2.0]), 0.0, 10.0, 40).unwrap();
        let scale = res.solution.sup_norm();
        for n in 1..40 {
            let r = residual_del(&l, &op, &res.solution, res.solution.grid.time(n)).unwrap();
            assert!(vec_max_abs(&r) <= 1e-9 * scale);
        }
    }

    #[test]
    fn unsupported_and_mismatched_inputs() {
        let l = baseline();
        let op2 = BoxOperator::new(2, 1.0, vec![c(0.0, 0.0); 5], (0.0, 30.0)).unwrap();
        let z = real_vec(&[0.0]);
        assert!(matches!(solve_dirichlet(&l, &op2, &z, &z, 0.0, 30.0, 30), Err(Error::Unsupported(_))));
        let op = make_rs_box(half(), half(), 0.5, (0.0, 30.0)).unwrap();
        assert!(matches!(solve_dirichlet(&l, &op, &z, &z, 0.0, 30.0, 30), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn free_iteration_cases() {
        let l = baseline();
        let op = make_rs_box(c(0.6, 0.0), c(0.4, 0.0), 1.0, (0.0, 9.5)).unwrap();
        // hits a only
        let grid = Grid::new(0.0, 1.0, 0.0, 9.5).unwrap();
        assert!(grid.hits_a() && !grid.hits_b());
        let f = solve_free(&l, &op, &grid, Some(&real_vec(&[1.0])), &[real_vec(&[0.5])]).unwrap();
        assert_eq!(f.values.len(), 10);
        for n in 0..=7_usize {
            let r = residual_del(&l, &op, &f, n as f64).unwrap();
            assert!(vec_max_abs(&r) < 1e-10 * (1.0 + f.sup_norm()), "node {n}");
        }
        assert!(solve_free(&l, &op, &grid, Some(&real_vec(&[1.0])), &[]).is_err());

        // hits b only: equations at the top nodes hold after the backward sweep
        let grid = Grid::new(0.5, 1.0, 0.0, 9.5).unwrap();
        assert!(!grid.hits_a() && grid.hits_b());
        let f = solve_free(&l, &op, &grid, Some(&real_vec(&[2.0])), &[real_vec(&[-1.0])]).unwrap();
        assert_eq!(*f.values.last().unwrap(), real_vec(&[2.0]));
        for n in 2..=9_usize {
            let r = residual_del(&l, &op, &f, grid.time(n)).unwrap();
            assert!(vec_max_abs(&r) < 1e-10 * (1.0 + f.sup_norm()), "node {n}");
        }

        // neither endpoint: two seeds, linear in the seeds
        let op = op.on_interval((0.0, 10.0));
        let grid = Grid::new(0.5, 1.0, 0.0, 10.0).unwrap();
        let zero = solve_free(&l, &op, &grid, None, &[real_vec(&[0.0]), real_vec(&[0.0])]).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        let one = solve_free(&l, &op, &grid, None, &[real_vec(&[1.0]), real_vec(&[-2.0])]).unwrap();
        let three = solve_free(&l, &op, &grid, None, &[real_vec(&[3.0]), real_vec(&[-6.0])]).unwrap();
        for (x, y) in one.values.iter().zip(&three.values) {
            assert!((x * c(3.0, 0.0) - y).norm() < 1e-10 * (1.0 + y.norm()));
        }
        assert!(solve_free(&l, &op, &grid, None, &[real_vec(&[1.0])]).is_err());
        let both = Grid::uniform(0.0, 10.0, 10).unwrap();
        assert!(solve_free(&l, &op, &both, Some(&real_vec(&[1.0])), &[real_vec(&[1.0])]).is_err());
    }

    #[test]
    fn split_solver_matches_shooting() {
        let l = baseline();
        let (da, db) = (real_vec(&[12.0]), real_vec(&[-14.0]));
        let m = 30;
        let sp = split_solve_oscillator(&l, 0.5, &da, &db, 0.0, 30.0, m).unwrap();
        assert_abs_diff_eq!(sp.theta[(0, 0)].re, 0.54_f64.acos(), epsilon = 1e-12);
        let op = make_rs_box(half(), half(), 1.0, (0.0, 30.0)).unwrap();
        let res = solve_dirichlet(&l, &op, &da, &db, 0.0, 30.0, m).unwrap();
        for (n, u) in sp.u.iter().enumerate() {
            let gap = (u - &res.solution.values[2 * n]).norm();
            assert!(gap <= 1e-8 * res.solution.sup_norm(), "n={n} gap {gap}");
        }
        // odd nodes vanish for a homogeneous oscillator
        for n in (1..m).step_by(2) {
            assert!(res.solution.values[n].norm() < 1e-9);
        }
        // the auxiliary amplitudes interpolate the shifted boundary vectors
        let th = sp.theta[(0, 0)];
        let at = |k: f64| Complex64::from_polar(1.0, k * th.re);
        let k = (m / 2) as f64;
        let lhs_a = at(1.0) * sp.g1[0] + at(-1.0) * sp.g2[0];
        let lhs_b = at(k - 1.0) * sp.g1[0] + at(1.0 - k) * sp.g2[0];
        assert!((lhs_a - sp.d_a_prime[0]).norm() < 1e-10);
        assert!((lhs_b - sp.d_b_prime[0]).norm() < 1e-10);
        assert!((sp.g1_tilde[0] + sp.g2_tilde[0] - da[0]).norm() < 1e-12);

        let z = real_vec(&[0.0]);
        let sp0 = split_solve_oscillator(&l, 0.5, &z, &z, 0.0, 30.0, m).unwrap();
        assert!(sp0.u.iter().all(|v| v.norm() == 0.0));
        assert_eq!(sp0.g1.norm() + sp0.g2.norm(), 0.0);
    }

    #[test]
    fn shooting_determinant_controls() {
        let l = baseline();
        for m in [8_usize, 30] {
            let op = make_rs_box(half(), half(), 30.0 / m as f64, (0.0, 30.0)).unwrap();
            let s = shooting_determinant(&l, &op, 0.0, 30.0, m).unwrap();
            assert!(s.det.norm() > 1e-6 && !s.is_singular(), "M={m}");
        }
        let l = QuadraticLagrangian::scalar(1.3, -0.4);
        let op = BoxOperator::new(1, 1.0, vec![c(-0.3, 0.0), c(-0.4, 0.0), c(0.7, 0.0)], (0.0, 8.0)).unwrap();
        let s = shooting_determinant(&l, &op, 0.0, 8.0, 8).unwrap();
        assert!(!s.is_singular());
        assert!(s.det.norm() <= s.scale * (1.0 + 1e-12));
    }
}
