//! Convergence of the pseudo-periodic discrete solutions towards the
//! continuous solution, and the numeric checks that accompany it.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::cel::{solve_cel, ContinuousSolution, LimitProfile};
use crate::del::{shooting_determinant, solve_dirichlet, stationary_companion, ShootingDeterminant};
use crate::error::{Error, Result};
use crate::linalg::{c, cosm, eig, matfun_from, max_abs, solve_vec, vec_max_abs, CMat, CVec};
use crate::model::{apply_box, discrete_action, make_rs_box, reverse_box, BoxOperator, QuadraticLagrangian, Sampler};
use crate::spectral::{modal_expansion, theta_matrix, ModalExpansion};

pub const DEFAULT_SAMPLES: usize = 2048;
pub const DEFAULT_DELTA: f64 = 1.0;

/// A discrete mode belongs to the group of a continuous frequency when its
/// scaled phase is within this fraction of that frequency.
pub const PHASE_MATCH_REL: f64 = 0.1;

/// Final sup error allowed for a convergence verdict, relative to the data.
const VERDICT_FRACTION: f64 = 0.05;
/// `sup|z' - z|` must exceed the final `z'` error by this factor.
const VERDICT_SEPARATION: f64 = 10.0;

/// `max_i ||f(t_i) - g(t_i)||_inf` over `samples` equispaced points of
/// `[a + delta, b - delta]`.
pub fn sup_error<F, G>(f: F, g: G, a: f64, b: f64, delta: f64, samples: usize) -> f64
where
    F: Fn(f64) -> CVec,
    G: Fn(f64) -> CVec,
{
    let (lo, hi) = (a + delta, b - delta);
    let n = samples.max(2);
    (0..n)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            vec_max_abs(&(f(t) - g(t)))
        })
        .fold(0.0, f64::max)
}

/// Parameters of one convergence experiment on `[a, b]` with `eps = (b-a)/M`.
#[derive(Debug, Clone)]
pub struct ConvergenceScenario {
    pub lagrangian: QuadraticLagrangian,
    pub r: Complex64,
    pub s: Complex64,
    pub d_a: CVec,
    pub d_b: CVec,
    pub a: f64,
    pub b: f64,
    pub m_list: Vec<usize>,
    pub delta: f64,
    pub samples: usize,
}

impl ConvergenceScenario {
    /// The scalar oscillator `p = 1`, `q = -0.23` on `[0, 30]` with
    /// `x(0) = 12`, `x(30) = -14` and the `(r, r)` operator.
    pub fn baseline(r: Complex64, m_list: Vec<usize>) -> Self {
        ConvergenceScenario {
            lagrangian: QuadraticLagrangian::scalar(1.0, -0.23),
            r,
            s: r,
            d_a: CVec::from_element(1, c(12.0, 0.0)),
            d_b: CVec::from_element(1, c(-14.0, 0.0)),
            a: 0.0,
            b: 30.0,
            m_list,
            delta: DEFAULT_DELTA,
            samples: DEFAULT_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lagrangian.dim();
        if self.d_a.len() != d || self.d_b.len() != d {
            return Err(Error::InvalidArgument(format!("boundary vectors must have length {d}")));
        }
        if !(self.b > self.a) {
            return Err(Error::InvalidArgument("need a < b".into()));
        }
        if self.m_list.is_empty() || self.m_list.iter().any(|&m| m % 2 != 0 || m < 8) {
            return Err(Error::InvalidArgument("every M must be even and at least 8".into()));
        }
        if !(self.delta > 0.0) || 2.0 * self.delta >= self.b - self.a {
            return Err(Error::InvalidArgument("delta must lie in (0, (b-a)/2)".into()));
        }
        if self.samples < 100 {
            return Err(Error::InvalidArgument("at least 100 samples per sup-norm".into()));
        }
        Ok(())
    }

    pub fn operator(&self, m: usize) -> Result<BoxOperator> {
        make_rs_box(self.r, self.s, (self.b - self.a) / m as f64, (self.a, self.b))
    }

    /// `r` when the operator is a real `(r, r)` operator, where the limit
    /// profile `z'` is defined.
    pub fn real_symmetric_r(&self) -> Option<f64> {
        (self.r == self.s && self.r.im == 0.0).then_some(self.r.re)
    }

    fn scale(&self) -> f64 {
        vec_max_abs(&self.d_a).max(vec_max_abs(&self.d_b))
    }
}

/// How the discrete solution was compared with the continuous ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Pseudo-periodic extension evaluated at equispaced samples.
    Modal,
    /// Spectrum off the unit circle: comparison at grid nodes only.
    GridOnly,
}

/// The three sums of the modal error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// `sum |g_theta|` over discrete modes matching no continuous frequency.
    pub residual_mass: f64,
    /// `sum |g_{eps,omega} - f_omega|` plus the offset mismatch.
    pub amplitude_term: f64,
    /// `(b - a) sum |f_omega| sup |theta/eps - omega|`.
    pub phase_term: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.residual_mass + self.amplitude_term + self.phase_term
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub m: usize,
    pub epsilon: f64,
    pub extension: Option<Extension>,
    pub sup_err_to_z: Option<f64>,
    pub sup_err_to_zprime: Option<f64>,
    /// `|det| / scale` of the shooting system.
    pub shoot_margin: f64,
    /// `|theta/eps_eff - omega|` per discrete mode, against the nearest `omega`.
    pub phase_gaps: Vec<f64>,
    /// `|g_{eps,omega} - f_omega|` per continuous frequency.
    pub amplitude_gaps: Vec<f64>,
    pub residual_group_mass: f64,
    pub bound: Option<BoundTerms>,
    pub singular: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ConvergesToZ,
    ConvergesToZPrime,
    Singular,
    Diverges,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConvergesToZ => "converges-to-z",
            Verdict::ConvergesToZPrime => "converges-to-zprime",
            Verdict::Singular => "singular",
            Verdict::Diverges => "diverges",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// `sup |z' - z|` on the same samples, when `z'` is defined.
    pub zprime_gap: Option<f64>,
    pub continuous_margin: f64,
    pub verdict: Verdict,
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn converges(errs: &[Option<f64>], limit: f64) -> bool {
    let Some(v) = errs.iter().copied().collect::<Option<Vec<f64>>>() else {
        return false;
    };
    strictly_decreasing(&v) && v.last().is_some_and(|&e| e <= limit)
}

/// Verdict from the rows alone.
pub fn verdict(rows: &[ConvergenceRow], zprime_gap: Option<f64>, data_scale: f64) -> Verdict {
    if rows.iter().any(|r| r.singular) {
        return Verdict::Singular;
    }
    let limit = VERDICT_FRACTION * data_scale;
    let to_z: Vec<_> = rows.iter().map(|r| r.sup_err_to_z).collect();
    if converges(&to_z, limit) {
        return Verdict::ConvergesToZ;
    }
    let to_zp: Vec<_> = rows.iter().map(|r| r.sup_err_to_zprime).collect();
    if let (true, Some(gap), Some(Some(last))) = (converges(&to_zp, limit), zprime_gap, to_zp.last()) {
        if gap > VERDICT_SEPARATION * last {
            return Verdict::ConvergesToZPrime;
        }
    }
    Verdict::Diverges
}

/// Per-mode phase gaps, per-frequency amplitude gaps and the bound sums.
pub fn bound_terms(exp: &ModalExpansion, csol: &ContinuousSolution) -> (BoundTerms, Vec<f64>, Vec<f64>) {
    let step = exp.effective_step();
    let cmodes = csol.modes();
    let d = csol.dim();
    let mut groups = vec![CVec::zeros(d); cmodes.len()];
    let mut worst_gap = vec![0.0_f64; cmodes.len()];
    let mut phase_gaps = Vec::with_capacity(exp.modes().len());
    let mut residual = 0.0;
    for m in exp.modes() {
        let rate = c(m.theta / step, 0.0);
        let nearest = cmodes
            .iter()
            .enumerate()
            .map(|(j, cm)| (j, (rate - cm.omega).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        let Some((j, gap)) = nearest else {
            residual += vec_max_abs(&m.amplitude);
            continue;
        };
        phase_gaps.push(gap);
        if gap <= PHASE_MATCH_REL * cmodes[j].omega.norm() {
            groups[j] += &m.amplitude;
            worst_gap[j] = worst_gap[j].max(gap);
        } else {
            residual += vec_max_abs(&m.amplitude);
        }
    }
    let amplitude_gaps: Vec<f64> = cmodes
        .iter()
        .zip(&groups)
        .map(|(cm, g)| vec_max_abs(&(g - &cm.vector)))
        .collect();
    let offset_gap = vec_max_abs(&(&exp.offset - &csol.offset));
    let phase_term = (exp.b - exp.a)
        * cmodes
            .iter()
            .zip(&worst_gap)
            .map(|(cm, g)| vec_max_abs(&cm.vector) * g)
            .sum::<f64>();
    let terms = BoundTerms {
        residual_mass: residual,
        amplitude_term: amplitude_gaps.iter().sum::<f64>() + offset_gap,
        phase_term,
    };
    (terms, phase_gaps, amplitude_gaps)
}

fn singular_row(m: usize, epsilon: f64, margin: f64, note: String) -> ConvergenceRow {
    ConvergenceRow {
        m,
        epsilon,
        extension: None,
        sup_err_to_z: None,
        sup_err_to_zprime: None,
        shoot_margin: margin,
        phase_gaps: vec![],
        amplitude_gaps: vec![],
        residual_group_mass: 0.0,
        bound: None,
        singular: true,
        note: Some(note),
    }
}

fn run_row(
    s: &ConvergenceScenario,
    csol: &ContinuousSolution,
    zprime: Option<&ShiftedProfile>,
    m: usize,
) -> Result<ConvergenceRow> {
    let l = &s.lagrangian;
    let op = s.operator(m)?;
    let eps = op.epsilon();
    let shot = match solve_dirichlet(l, &op, &s.d_a, &s.d_b, s.a, s.b, m) {
        Ok(shot) => shot,
        Err(e @ Error::ResonantDiscrete { .. }) => {
            let rel = shooting_determinant(l, &op, s.a, s.b, m)?.relative();
            return Ok(singular_row(m, eps, rel, e.to_string()));
        }
        Err(e) => return Err(e),
    };
    let margin = ShootingDeterminant {
        det: shot.shoot_det,
        scale: shot.det_scale,
    }
    .relative();
    let system = stationary_companion(l, &op)?;
    let (lo, hi) = (s.a + s.delta, s.b - s.delta);

    match modal_expansion(&system, &shot.solution) {
        Ok(exp) => {
            let y = |t: f64| exp.eval(t);
            let to_z = sup_error(y, |t| csol.eval(t), s.a, s.b, s.delta, s.samples);
            let to_zp = zprime.map(|zp| sup_error(y, |t| zp.eval(t), s.a, s.b, s.delta, s.samples));
            let (bound, phase_gaps, amplitude_gaps) = bound_terms(&exp, csol);
            Ok(ConvergenceRow {
                m,
                epsilon: eps,
                extension: Some(Extension::Modal),
                sup_err_to_z: Some(to_z),
                sup_err_to_zprime: to_zp,
                shoot_margin: margin,
                phase_gaps,
                amplitude_gaps,
                residual_group_mass: bound.residual_mass,
                bound: Some(bound),
                singular: false,
                note: None,
            })
        }
        Err(e @ (Error::NonUnimodular { .. } | Error::DegenerateSpectrum { .. } | Error::NotDiagonalizable { .. })) => {
            let grid = &shot.solution.grid;
            let mut to_z = 0.0_f64;
            let mut to_zp = zprime.map(|_| 0.0_f64);
            for (k, x) in shot.solution.values.iter().enumerate() {
                let t = grid.time(k);
                if t < lo || t > hi {
                    continue;
                }
                to_z = to_z.max(vec_max_abs(&(x - csol.eval(t))));
                if let (Some(acc), Some(zp)) = (to_zp.as_mut(), zprime) {
                    *acc = acc.max(vec_max_abs(&(x - zp.eval(t))));
                }
            }
            Ok(ConvergenceRow {
                m,
                epsilon: eps,
                extension: Some(Extension::GridOnly),
                sup_err_to_z: Some(to_z),
                sup_err_to_zprime: to_zp,
                shoot_margin: margin,
                phase_gaps: vec![],
                amplitude_gaps: vec![],
                residual_group_mass: 0.0,
                bound: None,
                singular: false,
                note: Some(format!("no pseudo-periodic extension: {e}")),
            })
        }
        Err(e) => Err(e),
    }
}

/// Runs every `M` of the scenario. Rows are computed on separate threads
/// and assembled in list order.
pub fn run_scenario(s: &ConvergenceScenario) -> Result<ConvergenceReport> {
    s.validate()?;
    let csol = solve_cel(&s.lagrangian, &s.d_a, &s.d_b, s.a, s.b)?;
    // z' is the limit profile of the homogeneous problem, shifted back by
    // the constant particular solution.
    let zprime = match s.real_symmetric_r() {
        Some(r) if s.lagrangian.coefficients().j1.iter().all(|z| z.norm() == 0.0) => Some(ShiftedProfile {
            profile: LimitProfile::new(r, &csol.omega1, &(&s.d_a - &csol.offset), &(&s.d_b - &csol.offset), s.a, s.b)?,
            offset: csol.offset.clone(),
        }),
        _ => None,
    };

    let rows: Vec<Result<ConvergenceRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = s
            .m_list
            .iter()
            .map(|&m| {
                let (csol, zp) = (&csol, zprime.as_ref());
                scope.spawn(move || run_row(s, csol, zp, m))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("row worker panicked"))
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let zprime_gap = zprime
        .as_ref()
        .map(|zp| sup_error(|t| zp.eval(t), |t| csol.eval(t), s.a, s.b, s.delta, s.samples));
    let verdict = verdict(&rows, zprime_gap, s.scale());
    Ok(ConvergenceReport {
        rows,
        zprime_gap,
        continuous_margin: csol.resonance.margin,
        verdict,
    })
}

struct ShiftedProfile {
    profile: LimitProfile,
    offset: CVec,
}

impl ShiftedProfile {
    fn eval(&self, t: f64) -> CVec {
        self.profile.eval(t) + &self.offset
    }
}

/// One line of a resonance scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceRow {
    pub b: f64,
    /// `|det sin((b-a) Omega)|`.
    pub continuous_margin: f64,
    /// `(M, |det sin((M/2-2) Theta)|, |det sin((M/2) Theta)|)`; `None` when
    /// `Theta` is undefined at that step.
    pub discrete: Vec<(usize, Option<(f64, f64)>)>,
}

/// Continuous and discrete non-resonance margins of the `(r, r)` oscillator
/// for each right endpoint in `bs`.
pub fn resonance_scan(l: &QuadraticLagrangian, r: f64, a: f64, bs: &[f64], m_list: &[usize]) -> Result<Vec<ResonanceRow>> {
    let k = l.coefficients();
    if !l.is_stationary() || max_abs(&k.j1) != 0.0 {
        return Err(Error::InvalidArgument("resonance scan needs a stationary Lagrangian with J1 = 0".into()));
    }
    let omega = crate::cel::solve_omega(&k.p, &k.q, &k.j1)?.0;
    let sin_det = |m: &CMat, tau: f64| -> Result<f64> {
        let e = eig(m)?;
        Ok(e.values.iter().map(|w| (w * tau).sin().norm()).product())
    };
    bs.iter()
        .map(|&b| {
            let continuous_margin = sin_det(&omega, b - a)?;
            let discrete = m_list
                .iter()
                .map(|&m| {
                    let eps = (b - a) / m as f64;
                    let margins = theta_matrix(&omega, eps, r).ok().and_then(|th| {
                        let half = (m / 2) as f64;
                        Some((sin_det(&th, half - 2.0).ok()?, sin_det(&th, half).ok()?))
                    });
                    (m, margins)
                })
                .collect();
            Ok(ResonanceRow {
                b,
                continuous_margin,
                discrete,
            })
        })
        .collect()
}

/// `b = a + (asin(rho) + 2 K pi) / omega` with `K = round((target - a) omega / 2 pi)`,
/// so that `sin((b - a) omega) = rho`.
pub fn quasi_resonant_b(omega: f64, a: f64, rho: f64, target: f64) -> (f64, i64) {
    let k = ((target - a) * omega / (2.0 * PI)).round() as i64;
    (a + (rho.asin() + 2.0 * PI * k as f64) / omega, k)
}

/// Shooting determinant of the `(r, r)` operator with `M` steps.
pub fn odd_m_check(l: &QuadraticLagrangian, r: f64, a: f64, b: f64, m: usize) -> Result<ShootingDeterminant> {
    let op = make_rs_box(c(r, 0.0), c(r, 0.0), (b - a) / m as f64, (a, b))?;
    shooting_determinant(l, &op, a, b, m)
}

/// Compares the pseudo-periodic solution for `l` with that of its
/// homogeneous part, whose boundary data are shifted by
/// `Q^-1 (box_{-eps} J2 + J3)`. Returns the largest mismatch of
/// `(y - y0) + Q^-1 (box_{-eps} J2 + J3)` over the nodes of
/// `[a + 2N eps, b - 2N eps]`.
pub fn j_reduction_check(l: &QuadraticLagrangian, op: &BoxOperator, d_a: &CVec, d_b: &CVec, m: usize) -> Result<f64> {
    if !l.is_stationary() {
        return Err(Error::InvalidArgument("J-reduction check needs a stationary Lagrangian".into()));
    }
    let (a, b) = op.interval();
    let k = l.coefficients();
    let j2 = k.j2.clone();
    let back = reverse_box(op);
    let mid = a + (m / 2) as f64 * op.epsilon();
    let box_j2 = apply_box(&back, &move |_t: f64| j2.clone(), mid)?;
    let shift = solve_vec(&k.q, &(box_j2 + &k.j3))?;

    let l0 = l.homogeneous_part();
    let full = solve_dirichlet(l, op, d_a, d_b, a, b, m)?;
    let base = solve_dirichlet(&l0, op, &(d_a + &shift), &(d_b + &shift), a, b, m)?;
    let ef = modal_expansion(&stationary_companion(l, op)?, &full.solution)?;
    let e0 = modal_expansion(&stationary_companion(&l0, op)?, &base.solution)?;
    let lo = 2 * op.half_width();
    let mut worst = 0.0_f64;
    for n in lo..=(m - lo) {
        let t = a + n as f64 * op.epsilon();
        worst = worst.max(vec_max_abs(&(ef.eval(t) - e0.eval(t) + &shift)));
    }
    Ok(worst)
}

/// `||cos(g(eps) Theta(eps)) - cos((b-a) Omega / (2r))||_max` with
/// `g(eps) = (b-a)/(2 eps)`, for each `eps`.
pub fn phase_limit_check(omega: &CMat, r: f64, length: f64, epsilons: &[f64]) -> Result<Vec<f64>> {
    let limit = cosm(&(omega * c(length / (2.0 * r), 0.0)))?;
    epsilons
        .iter()
        .map(|&eps| {
            let theta = theta_matrix(omega, eps, r)?;
            let g = length / (2.0 * eps);
            let e = eig(&theta)?;
            let got = matfun_from(&e, |z| (z * g).cos())?;
            Ok(max_abs(&(got - &limit)))
        })
        .collect()
}

/// Central difference `(A(f + eta h) - A(f - eta h)) / (2 eta)` of the
/// discrete action. The action is quadratic, so this is the exact
/// directional derivative up to rounding.
pub fn action_variation<F, H>(
    l: &QuadraticLagrangian,
    op: &BoxOperator,
    f: &F,
    h: &H,
    eta: f64,
    quad_step: f64,
) -> Result<Complex64>
where
    F: Sampler + ?Sized,
    H: Sampler + ?Sized,
{
    let plus = crate::model::TrySampler(|t: f64| Ok(f.sample(t)? + h.sample(t)? * c(eta, 0.0)));
    let minus = crate::model::TrySampler(|t: f64| Ok(f.sample(t)? - h.sample(t)? * c(eta, 0.0)));
    let ap = discrete_action(l, op, &plus, quad_step)?;
    let am = discrete_action(l, op, &minus, quad_step)?;
    Ok((ap - am) / (2.0 * eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_mat;

    #[test]
    fn sup_error_trivial_cases() {
        let f = |t: f64| CVec::from_element(2, c(t.sin(), 0.0));
        assert_eq!(sup_error(f, f, 0.0, 10.0, 1.0, 200), 0.0);
        let g = |t: f64| f(t) + CVec::from_vec(vec![c(0.25, 0.0), c(0.0, -0.5)]);
        assert!((sup_error(f, g, 0.0, 10.0, 1.0, 200) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scenario_validation() {
        let mut s = ConvergenceScenario::baseline(c(0.5, 0.0), vec![30, 120]);
        assert!(s.validate().is_ok());
        s.m_list = vec![31];
        assert!(s.validate().is_err());
        s.m_list = vec![6];
        assert!(s.validate().is_err());
        s.m_list = vec![30];
        s.samples = 10;
        assert!(s.validate().is_err());
        s.samples = 2048;
        s.delta = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn baseline_converges_to_z() {
        let s = ConvergenceScenario::baseline(c(0.5, 0.0), vec![30, 120]);
        let rep = run_scenario(&s).unwrap();
        let e: Vec<f64> = rep.rows.iter().map(|r| r.sup_err_to_z.unwrap()).collect();
        assert!(e[1] < e[0], "{e:?}");
        assert_eq!(rep.verdict, Verdict::ConvergesToZ);
        // r = 1/2 makes z' = z
        assert!(rep.zprime_gap.unwrap() < 1e-9);
        for row in &rep.rows {
            let b = row.bound.unwrap();
            assert!(b.total() >= row.sup_err_to_z.unwrap() - 1e-6);
            assert_eq!(row.extension, Some(Extension::Modal));
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let s = ConvergenceScenario::baseline(c(0.6, 0.0), vec![30, 60]);
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    }

    #[test]
    fn phase_term_shrinks_for_half() {
        let s = ConvergenceScenario::baseline(c(0.5, 0.0), vec![30, 120, 480]);
        let rep = run_scenario(&s).unwrap();
        let p: Vec<f64> = rep.rows.iter().map(|r| r.bound.unwrap().phase_term).collect();
        assert!(strictly_decreasing(&p), "{p:?}");
    }

    #[test]
    fn complex_r_takes_the_grid_path() {
        let s = ConvergenceScenario::baseline(c(0.5, 0.5), vec![30, 60]);
        let rep = run_scenario(&s).unwrap();
        assert!(rep.zprime_gap.is_none());
        for row in &rep.rows {
            assert!(row.sup_err_to_z.is_some() || row.singular);
        }
    }

    #[test]
    fn single_planted_mode_has_zero_bound() {
        // y = z exactly: one mode, matching phase and amplitude.
        use crate::cel::solve_cel;
        use crate::spectral::{Branch, Mode};
        let l = QuadraticLagrangian::scalar(1.0, -0.23);
        let csol = solve_cel(&l, &CVec::from_element(1, c(12.0, 0.0)), &CVec::from_element(1, c(-14.0, 0.0)), 0.0, 30.0).unwrap();
        let eps = 0.1;
        let modes = csol
            .modes()
            .iter()
            .map(|m| Mode {
                theta: m.omega.re * eps,
                amplitude: m.vector.clone(),
            })
            .collect();
        let exp = ModalExpansion {
            branches: vec![Branch {
                parity: 0,
                stride: 1,
                anchor: 0.0,
                modes,
            }],
            offset: csol.offset.clone(),
            a: 0.0,
            b: 30.0,
            epsilon: eps,
            vandermonde_cond: 1.0,
            reconstruction_error: 0.0,
        };
        let (b, _, _) = bound_terms(&exp, &csol);
        assert!(b.residual_mass <= 1e-10 && b.amplitude_term <= 1e-10 && b.phase_term <= 1e-10);
    }

    #[test]
    fn verdict_rules() {
        let row = |e: f64, ep: Option<f64>| ConvergenceRow {
            m: 8,
            epsilon: 1.0,
            extension: Some(Extension::Modal),
            sup_err_to_z: Some(e),
            sup_err_to_zprime: ep,
            shoot_margin: 1.0,
            phase_gaps: vec![],
            amplitude_gaps: vec![],
            residual_group_mass: 0.0,
            bound: None,
            singular: false,
            note: None,
        };
        assert_eq!(verdict(&[row(3.0, None), row(0.5, None)], None, 14.0), Verdict::ConvergesToZ);
        assert_eq!(verdict(&[row(3.0, None), row(3.5, None)], None, 14.0), Verdict::Diverges);
        let rows = [row(5.0, Some(3.0)), row(5.0, Some(0.2))];
        assert_eq!(verdict(&rows, Some(5.0), 14.0), Verdict::ConvergesToZPrime);
        assert_eq!(verdict(&rows, Some(1.0), 14.0), Verdict::Diverges);
        let mut sing = row(1.0, None);
        sing.singular = true;
        assert_eq!(verdict(&[row(3.0, None), sing], None, 14.0), Verdict::Singular);
    }

    #[test]
    fn resonance_scan_margins() {
        let l = QuadraticLagrangian::scalar(1.0, -0.23);
        let w = 0.23f64.sqrt();
        let rows = resonance_scan(&l, 0.5, 0.0, &[30.0, PI / w], &[30, 120]).unwrap();
        assert!((rows[0].continuous_margin - (30.0 * w).sin().abs()).abs() < 1e-12);
        assert!((rows[0].continuous_margin - 0.968).abs() < 1e-3);
        assert!(rows[1].continuous_margin < 1e-12);
        assert!(rows[0].discrete.iter().all(|(_, m)| m.is_some()));
    }

    #[test]
    fn quasi_resonant_endpoint() {
        let w = 0.23f64.sqrt();
        let (b, k) = quasi_resonant_b(w, 0.0, 1e-3, 30.0);
        assert_eq!(k, 2);
        assert!((((b * w).sin()) - 1e-3).abs() < 1e-12);
        assert!((b - 26.2).abs() < 0.1);
    }

    #[test]
    fn j_reduction_trivial_and_shifted() {
        let l = QuadraticLagrangian::scalar(1.0, -0.23);
        let op = make_rs_box(c(0.5, 0.0), c(0.5, 0.0), 0.25, (0.0, 30.0)).unwrap();
        let (da, db) = (CVec::from_element(1, c(12.0, 0.0)), CVec::from_element(1, c(-14.0, 0.0)));
        assert!(j_reduction_check(&l, &op, &da, &db, 120).unwrap() < 1e-10);
        let lj = l
            .clone()
            .with_sources(CVec::from_element(1, c(0.3, 0.0)), CVec::from_element(1, c(0.5, 0.0)))
            .unwrap();
        assert!(j_reduction_check(&lj, &op, &da, &db, 120).unwrap() < 1e-10 * 14.0);
    }

    #[test]
    fn phase_limit_errors_decrease() {
        let omega = real_mat(&[&[0.23f64.sqrt()]]);
        let errs = phase_limit_check(&omega, 0.5, 30.0, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(strictly_decreasing(&errs), "{errs:?}");
        assert!(errs[2] <= 1e-5);
    }
}
