//! Quadratic Lagrangians, scale-derivative operators, grids and grid functions.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, cond2, max_abs, CMat, CVec};

/// The coefficient tuple `(P, Q, J1, J2, J3, J4)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub p: CMat,
    pub q: CMat,
    pub j1: CMat,
    pub j2: CVec,
    pub j3: CVec,
    pub j4: Complex64,
}

impl Coefficients {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.p.nrows();
        let square = |m: &CMat| m.nrows() == d && m.ncols() == d;
        if d == 0 || !square(&self.p) || !square(&self.q) || !square(&self.j1) {
            return Err(Error::InvalidArgument(
                "P, Q and J1 must be square of a common positive size".into(),
            ));
        }
        if self.j2.len() != d || self.j3.len() != d {
            return Err(Error::InvalidArgument(format!(
                "J2 and J3 must have length {d}"
            )));
        }
        Ok(())
    }
}

pub type Schedule = Arc<dyn Fn(f64) -> Coefficients + Send + Sync>;

/// `L(x, y, t) = 1/2 y'Py + 1/2 x'Qx + x'J1 y + J2'y + J3'x + J4`.
#[derive(Clone)]
pub struct QuadraticLagrangian {
    base: Coefficients,
    schedule: Option<Schedule>,
}

impl fmt::Debug for QuadraticLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadraticLagrangian")
            .field("base", &self.base)
            .field("time_dependent", &self.schedule.is_some())
            .finish()
    }
}

impl QuadraticLagrangian {
    pub fn stationary(coeffs: Coefficients) -> Result<Self> {
        coeffs.check_shapes()?;
        Ok(Self {
            base: coeffs,
            schedule: None,
        })
    }

    /// Oscillator `1/2 y'Py + 1/2 x'Qx` with all J terms zero.
    pub fn oscillator(p: CMat, q: CMat) -> Result<Self> {
        let d = p.nrows();
        Self::stationary(Coefficients {
            p,
            q,
            j1: CMat::zeros(d, d),
            j2: CVec::zeros(d),
            j3: CVec::zeros(d),
            j4: c(0.0, 0.0),
        })
    }

    /// Scalar oscillator with real `p`, `q`.
    pub fn scalar(p: f64, q: f64) -> Self {
        Self::oscillator(
            CMat::from_element(1, 1, c(p, 0.0)),
            CMat::from_element(1, 1, c(q, 0.0)),
        )
        .expect("1x1 shapes are consistent")
    }

    /// Time-dependent coefficients. `reference` fixes the dimension and is
    /// what `coefficients()` returns; the schedule is sampled at nodes.
    pub fn time_dependent(reference: Coefficients, schedule: Schedule) -> Result<Self> {
        reference.check_shapes()?;
        Ok(Self {
            base: reference,
            schedule: Some(schedule),
        })
    }

    pub fn with_sources(mut self, j2: CVec, j3: CVec) -> Result<Self> {
        self.base.j2 = j2;
        self.base.j3 = j3;
        self.base.check_shapes()?;
        Ok(self)
    }

    pub fn with_j1(mut self, j1: CMat) -> Result<Self> {
        self.base.j1 = j1;
        self.base.check_shapes()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn is_stationary(&self) -> bool {
        self.schedule.is_none()
    }

    /// Stationary coefficients, or the reference tuple of a schedule.
    pub fn coefficients(&self) -> &Coefficients {
        &self.base
    }

    pub fn at(&self, t: f64) -> Cow<'_, Coefficients> {
        match &self.schedule {
            None => Cow::Borrowed(&self.base),
            Some(f) => Cow::Owned(f(t)),
        }
    }

    /// Same Lagrangian with `J2`, `J3`, `J4` removed.
    pub fn homogeneous_part(&self) -> Self {
        let strip = |mut k: Coefficients| {
            let d = k.dim();
            k.j2 = CVec::zeros(d);
            k.j3 = CVec::zeros(d);
            k.j4 = c(0.0, 0.0);
            k
        };
        Self {
            base: strip(self.base.clone()),
            schedule: self.schedule.clone().map(|f| {
                let g: Schedule = Arc::new(move |t| strip(f(t)));
                g
            }),
        }
    }
}

/// The `2N+1`-sample scale derivative with boundary windows on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxOperator {
    n: usize,
    epsilon: f64,
    coeffs: Vec<Complex64>,
    orientation: i8,
    interval: (f64, f64),
}

impl BoxOperator {
    /// `coeffs` lists `c_{-N} .. c_N`.
    pub fn new(n: usize, epsilon: f64, coeffs: Vec<Complex64>, interval: (f64, f64)) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("half-width must be positive".into()));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if coeffs.len() != 2 * n + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                2 * n + 1,
                coeffs.len()
            )));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::InvalidArgument("interval must satisfy a < b".into()));
        }
        Ok(Self {
            n,
            epsilon,
            coeffs,
            orientation: 1,
            interval,
        })
    }

    pub fn half_width(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `c_i` for `i` in `-N..=N`.
    pub fn coeff(&self, i: i64) -> Complex64 {
        self.coeffs[(i + self.n as i64) as usize]
    }

    /// Same operator on a different interval.
    pub fn on_interval(&self, interval: (f64, f64)) -> Self {
        Self {
            interval,
            ..self.clone()
        }
    }

    /// Same coefficients as the positively oriented operator.
    pub fn forward(&self) -> Self {
        Self {
            orientation: 1,
            ..self.clone()
        }
    }

    fn tol(&self) -> f64 {
        1e-9 * self.epsilon
    }

    pub fn inside(&self, t: f64) -> bool {
        let tol = self.tol();
        t >= self.interval.0 - tol && t <= self.interval.1 + tol
    }

    /// Time of the sample attached to `c_i` at `t`.
    pub fn sample_time(&self, t: f64, i: i64) -> f64 {
        t + self.orientation as f64 * i as f64 * self.epsilon
    }

    /// Window factor of `c_i` at `t`: both `t` and its sample lie in `[a, b]`.
    pub fn window(&self, t: f64, i: i64) -> bool {
        self.inside(t) && self.inside(self.sample_time(t, i))
    }
}

/// Three-term operator with `c1 = r/eps`, `c0 = (s-r)/eps`, `c-1 = -s/eps`.
pub fn make_rs_box(r: Complex64, s: Complex64, epsilon: f64, interval: (f64, f64)) -> Result<BoxOperator> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    BoxOperator::new(
        1,
        epsilon,
        vec![-s / epsilon, (s - r) / epsilon, r / epsilon],
        interval,
    )
}

/// The operator obtained by `eps -> -eps`: same coefficients, mirrored samples.
pub fn reverse_box(op: &BoxOperator) -> BoxOperator {
    BoxOperator {
        orientation: -op.orientation,
        ..op.clone()
    }
}

/// Anything that can be sampled at a time.
pub trait Sampler {
    fn sample(&self, t: f64) -> Result<CVec>;
}

impl<F: Fn(f64) -> CVec> Sampler for F {
    fn sample(&self, t: f64) -> Result<CVec> {
        Ok(self(t))
    }
}

/// Sampler over a fallible closure.
pub struct TrySampler<F>(pub F);

impl<F: Fn(f64) -> Result<CVec>> Sampler for TrySampler<F> {
    fn sample(&self, t: f64) -> Result<CVec> {
        (self.0)(t)
    }
}

/// `sum_i c_i f(t + sigma i eps) chi(t)`.
pub fn apply_box<S: Sampler + ?Sized>(op: &BoxOperator, f: &S, t: f64) -> Result<CVec> {
    if !op.inside(t) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside [{}, {}]",
            op.interval.0, op.interval.1
        )));
    }
    let n = op.n as i64;
    let mut acc: Option<CVec> = None;
    for i in -n..=n {
        if !op.window(t, i) {
            continue;
        }
        let v = f.sample(op.sample_time(t, i))? * op.coeff(i);
        acc = Some(match acc {
            None => v,
            Some(a) => a + v,
        });
    }
    Ok(acc.expect("the i = 0 sample is always inside"))
}

/// Nodes `t0 + n eps` inside `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    t0: f64,
    epsilon: f64,
    a: f64,
    b: f64,
    lo: i64,
    hi: i64,
    // set for grids anchored at a with (b-a)/eps = M exactly
    steps: Option<usize>,
}

impl Grid {
    pub fn new(t0: f64, epsilon: f64, a: f64, b: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(a < b) || t0 < a || t0 > b {
            return Err(Error::InvalidArgument(
                "grid needs eps > 0, a < b and t0 in [a, b]".into(),
            ));
        }
        let tol = 1e-9;
        let lo = ((a - t0) / epsilon - tol).ceil() as i64;
        let hi = ((b - t0) / epsilon + tol).floor() as i64;
        Ok(Self {
            t0,
            epsilon,
            a,
            b,
            lo,
            hi,
            steps: None,
        })
    }

    /// `M + 1` nodes from `a` to `b`, endpoints exact.
    pub fn uniform(a: f64, b: f64, m: usize) -> Result<Self> {
        if m == 0 || !(a < b) {
            return Err(Error::InvalidArgument("uniform grid needs M > 0 and a < b".into()));
        }
        Ok(Self {
            t0: a,
            epsilon: (b - a) / m as f64,
            a,
            b,
            lo: 0,
            hi: m as i64,
            steps: Some(m),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn indices(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of index `n`.
    pub fn node(&self, n: i64) -> f64 {
        match self.steps {
            Some(m) => {
                if n == m as i64 {
                    self.b
                } else {
                    self.a + (self.b - self.a) * (n as f64 / m as f64)
                }
            }
            None => self.t0 + n as f64 * self.epsilon,
        }
    }

    /// Time of the `k`-th node in increasing order.
    pub fn time(&self, k: usize) -> f64 {
        self.node(self.lo + k as i64)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Position in `times()` of a node time.
    pub fn position(&self, t: f64) -> Option<usize> {
        let n = ((t - self.t0) / self.epsilon).round() as i64;
        if n < self.lo || n > self.hi {
            return None;
        }
        if (self.node(n) - t).abs() <= 1e-9 * self.epsilon {
            Some((n - self.lo) as usize)
        } else {
            None
        }
    }

    pub fn hits_a(&self) -> bool {
        (self.time(0) - self.a).abs() <= 1e-9 * self.epsilon
    }

    pub fn hits_b(&self) -> bool {
        !self.is_empty() && (self.time(self.len() - 1) - self.b).abs() <= 1e-9 * self.epsilon
    }
}

/// Vector samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<CVec>,
    pub boundary: Option<(CVec, CVec)>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<CVec>, boundary: Option<(CVec, CVec)>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn value_at(&self, t: f64) -> Result<&CVec> {
        self.grid
            .position(t)
            .map(|k| &self.values[k])
            .ok_or(Error::Alignment { t })
    }

    /// Largest component modulus over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, z| m.max(z.norm()))
    }
}

impl Sampler for GridFunction {
    fn sample(&self, t: f64) -> Result<CVec> {
        self.value_at(t).cloned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub p_asymmetry: f64,
    pub q_asymmetry: f64,
    pub j1_skew_defect: f64,
    pub p_cond: f64,
    pub q_cond: f64,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Largest `|m_ij - sign * m_ji|`.
fn transpose_defect(m: &CMat, sign: f64) -> f64 {
    let mut dev = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)] * sign).norm());
        }
    }
    dev
}

/// Checks symmetry of `P`, `Q`, skew-symmetry of `J1` and invertibility of
/// `P`, `Q` at each sample time (or once for stationary Lagrangians).
pub fn validate_lagrangian(l: &QuadraticLagrangian, sample_times: &[f64]) -> ValidationReport {
    let mut rep = ValidationReport {
        p_asymmetry: 0.0,
        q_asymmetry: 0.0,
        j1_skew_defect: 0.0,
        p_cond: 1.0,
        q_cond: 1.0,
        issues: vec![],
    };
    let times: Vec<Option<f64>> = if l.is_stationary() || sample_times.is_empty() {
        vec![None]
    } else {
        sample_times.iter().map(|&t| Some(t)).collect()
    };
    for t in times {
        let k = match t {
            None => Cow::Borrowed(l.coefficients()),
            Some(t) => l.at(t),
        };
        let at = t.map_or(String::new(), |t| format!(" at t = {t}"));
        let checks = [
            ("P", transpose_defect(&k.p, 1.0), max_abs(&k.p), "symmetric"),
            ("Q", transpose_defect(&k.q, 1.0), max_abs(&k.q), "symmetric"),
            ("J1", transpose_defect(&k.j1, -1.0), max_abs(&k.j1), "skew-symmetric"),
        ];
        for (name, dev, scale, what) in checks {
            match name {
                "P" => rep.p_asymmetry = rep.p_asymmetry.max(dev),
                "Q" => rep.q_asymmetry = rep.q_asymmetry.max(dev),
                _ => rep.j1_skew_defect = rep.j1_skew_defect.max(dev),
            }
            if dev > 1e-12 * scale {
                rep.issues.push(format!("{name} is not {what}{at}: deviation {dev:e}"));
            }
        }
        let pc = cond2(&k.p);
        let qc = cond2(&k.q);
        rep.p_cond = rep.p_cond.max(pc);
        rep.q_cond = rep.q_cond.max(qc);
        if !(pc <= 1e12) {
            rep.issues.push(format!("P is singular{at}: condition {pc:e}"));
        }
        if !(qc <= 1e12) {
            rep.issues.push(format!("Q is singular{at}: condition {qc:e}"));
        }
    }
    rep
}

pub fn eval_lagrangian(l: &QuadraticLagrangian, x: &CVec, y: &CVec, t: f64) -> Complex64 {
    let k = l.at(t);
    let half = c(0.5, 0.0);
    half * y.dot(&(&k.p * y)) + half * x.dot(&(&k.q * x)) + x.dot(&(&k.j1 * y)) + k.j2.dot(y) + k.j3.dot(x) + k.j4
}

/// Composite midpoint rule for the discrete action on `op`'s interval,
/// with cells aligned to the window breakpoints `a + i eps`, `b - i eps`.
pub fn discrete_action<S: Sampler + ?Sized>(
    l: &QuadraticLagrangian,
    op: &BoxOperator,
    f: &S,
    quad_step: f64,
) -> Result<Complex64> {
    if !(quad_step > 0.0) {
        return Err(Error::InvalidArgument("quad_step must be positive".into()));
    }
    let (a, b) = op.interval();
    let eps = op.epsilon();
    let mut breaks = vec![a, b];
    for i in 1..=op.half_width() {
        for t in [a + i as f64 * eps, b - i as f64 * eps] {
            if t > a && t < b {
                breaks.push(t);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (b - a));

    let mut sum = c(0.0, 0.0);
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let cells = ((hi - lo) / quad_step - 1e-9).ceil().max(1.0) as usize;
        let h = (hi - lo) / cells as f64;
        for k in 0..cells {
            let t = lo + (k as f64 + 0.5) * h;
            let x = f.sample(t)?;
            let y = apply_box(op, f, t)?;
            sum += eval_lagrangian(l, &x, &y, t) * h;
        }
    }
    Ok(sum)
}
