//! Dispatch of each command to the core solvers.

use quadlag_core::converge::quasi_resonant_b;
use quadlag_core::del::residual_del;
use quadlag_core::linalg::{c, vec_max_abs};
use quadlag_core::{
    modal_expansion, run_scenario, solve_cel, solve_dirichlet, spectrum, stationary_companion, CVec,
    Complex64, ContinuousSolution, ConvergenceScenario, LimitProfile, QuadraticLagrangian, Verdict,
};

use crate::config::{Command, Figure, RunConfig};
use crate::output::{float, path, Report, Table, Trajectory};
use crate::CliError;

/// Exit status of a run that produced its outputs.
pub const OK: u8 = 0;
pub const SINGULAR: u8 = 2;

/// Continuous solution `z` and, for real `(r, r)` operators without gyroscopic
/// term, the limit profile `z'` of the discrete solutions.
struct Continuous {
    z: ContinuousSolution,
    zprime: Option<(LimitProfile, CVec)>,
}

impl Continuous {
    fn new(
        l: &QuadraticLagrangian,
        rs: Option<(Complex64, Complex64)>,
        d_a: &CVec,
        d_b: &CVec,
        a: f64,
        b: f64,
    ) -> Result<Self, CliError> {
        let z = solve_cel(l, d_a, d_b, a, b)?;
        let gyroscopic = l.coefficients().j1.iter().any(|x| x.norm() != 0.0);
        let zprime = match rs {
            Some((r, s)) if r == s && r.im == 0.0 && !gyroscopic => {
                // the limit profile solves the homogeneous problem
                let off = z.offset.clone();
                let p = LimitProfile::new(r.re, &z.omega1, &(d_a - &off), &(d_b - &off), a, b)?;
                Some((p, off))
            }
            _ => None,
        };
        Ok(Continuous { z, zprime })
    }

    fn zprime(&self, t: f64) -> Option<CVec> {
        self.zprime.as_ref().map(|(p, off)| p.eval(t) + off)
    }

    /// Curves `z` and, when defined, `z'` at the given times.
    fn series(&self, times: &[f64]) -> Vec<(&'static str, Vec<CVec>)> {
        let mut out = vec![("z", times.iter().map(|&t| self.z.eval(t)).collect())];
        if self.zprime.is_some() {
            out.push(("zp", times.iter().map(|&t| self.zprime(t).unwrap()).collect()));
        }
        out
    }
}

fn continuous_or_note(
    cfg: &RunConfig,
    l: &QuadraticLagrangian,
    report: &mut Report,
) -> Result<Option<Continuous>, CliError> {
    let (d_a, d_b) = cfg.boundary();
    match Continuous::new(l, cfg.rs(), &d_a, &d_b, cfg.a(), cfg.b()) {
        Ok(cont) => {
            report.line("continuous_margin", float(cont.z.resonance.margin));
            Ok(Some(cont))
        }
        Err(CliError::Core(e)) if e.is_resonance() => {
            report.line("continuous", format!("not solved ({e})"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn equispaced(a: f64, b: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|k| a + (b - a) * k as f64 / (samples - 1) as f64)
        .collect()
}

/// `max |y - z|` over every `stride`-th node in `[a + delta, b - delta]`.
fn sup_gap(times: &[f64], y: &[CVec], z: &[CVec], stride: usize, a: f64, b: f64, delta: f64) -> f64 {
    times
        .iter()
        .zip(y.iter().zip(z))
        .step_by(stride)
        .filter(|(&t, _)| t >= a + delta && t <= b - delta)
        .map(|(_, (y, z))| vec_max_abs(&(y - z)))
        .fold(0.0, f64::max)
}

/// `(r, r)` operators decouple even and odd nodes; only the chain through
/// `a` carries the boundary data and is compared with `z`.
fn chain_stride(rs: Option<(Complex64, Complex64)>) -> usize {
    match rs {
        Some((r, s)) if r == s => 2,
        _ => 1,
    }
}

pub fn run(cfg: &RunConfig, prefix: &str) -> Result<u8, CliError> {
    cfg.validate()?;
    match cfg.command.unwrap_or(Command::SolveDel) {
        Command::SolveDel => solve_del(cfg, prefix),
        Command::SolveCel => solve_cel_cmd(cfg, prefix),
        Command::Spectrum => spectrum_cmd(cfg, prefix),
        Command::Extend => extend(cfg, prefix),
        Command::Converge => converge(cfg, prefix),
        Command::Repro => {
            let fig = cfg
                .figure
                .ok_or_else(|| CliError::Config("repro needs a figure".into()))?;
            repro(cfg, fig, prefix)
        }
    }
}

fn solve_del(cfg: &RunConfig, prefix: &str) -> Result<u8, CliError> {
    let l = cfg.lagrangian()?;
    let (d_a, d_b) = cfg.boundary();
    let m = cfg.m;
    let op = cfg.operator(m)?;
    let mut report = Report::default();
    report.line("command", "solve-del");
    report.line("M", m);
    report.line("epsilon", float(op.epsilon()));

    let res = solve_dirichlet(&l, &op, &d_a, &d_b, cfg.a(), cfg.b(), m)?;
    let sol = &res.solution;
    let sup = sol.sup_norm().max(f64::MIN_POSITIVE);
    let mut residual: f64 = 0.0;
    for n in 1..m {
        let r = residual_del(&l, &op, sol, sol.grid.time(n))?;
        residual = residual.max(vec_max_abs(&r) / sup);
    }
    let boundary = vec_max_abs(&(&sol.values[0] - &d_a)).max(vec_max_abs(&(&sol.values[m] - &d_b)));
    report.line("shooting_det_abs", float(res.shoot_det.norm()));
    report.line("shooting_det_scale", float(res.det_scale));
    report.line("shooting_margin", float(res.shoot_det.norm() / res.det_scale));
    report.line("max_relative_residual", float(residual));
    report.line("boundary_error", float(boundary));

    let times = sol.grid.times();
    let mut series = vec![("y", sol.values.clone())];
    if let Some(cont) = continuous_or_note(cfg, &l, &mut report)? {
        let extra = cont.series(&times);
        let stride = chain_stride(cfg.rs());
        report.line(
            "sup_chain_y_minus_z",
            float(sup_gap(&times, &sol.values, &extra[0].1, stride, cfg.a(), cfg.b(), cfg.delta)),
        );
        series.extend(extra);
    }
    Trajectory { times: &times, series }.save(&path(prefix, ".csv"))?;
    report.save(prefix)?;
    Ok(OK)
}

fn solve_cel_cmd(cfg: &RunConfig, prefix: &str) -> Result<u8, CliError> {
    let l = cfg.lagrangian()?;
    let (d_a, d_b) = cfg.boundary();
    let cont = Continuous::new(&l, cfg.rs(), &d_a, &d_b, cfg.a(), cfg.b())?;
    let times = equispaced(cfg.a(), cfg.b(), cfg.samples);
    let ode = times
        .iter()
        .map(|&t| vec_max_abs(&cont.z.ode_residual(&l, t)))
        .fold(0.0, f64::max);

    let mut report = Report::default();
    report.line("command", "solve-cel");
    report.line("continuous_margin", float(cont.z.resonance.margin));
    report.line("margin_scale", float(cont.z.resonance.scale));
    report.line("max_ode_residual", float(ode));
    for (k, mode) in cont.z.modes().iter().enumerate() {
        report.line(&format!("omega_{k}"), format!("{} {}", float(mode.omega.re), float(mode.omega.im)));
    }
    Trajectory { times: &times, series: cont.series(&times) }.save(&path(prefix, ".csv"))?;
    report.save(prefix)?;
    Ok(OK)
}

fn spectrum_cmd(cfg: &RunConfig, prefix: &str) -> Result<u8, CliError> {
    let l = cfg.lagrangian()?;
    let op = cfg.operator(cfg.m)?;
    let rep = spectrum(&stationary_companion(&l, &op)?)?;

    let mut table = Table::new(&["index", "re", "im", "modulus", "phase", "unimodular"]);
    let mut report = Report::default();
    report.line("command", "spectrum");
    report.line("epsilon", float(op.epsilon()));
    report.line("eigenvalues", rep.eigenvalues.len());
    report.line("unimodular", rep.unimodular.iter().filter(|&&u| u).count());
    report.line("all_unimodular", rep.all_unimodular());
    report.line("max_modulus_deviation", float(rep.max_deviation()));
    report.line("shape_residual", float(rep.shape_residual));
    report.line("charpoly_residual", float(rep.charpoly_residual));
    for (k, z) in rep.eigenvalues.iter().enumerate() {
        let flag = if rep.unimodular[k] { "unimodular" } else { "off-circle" };
        report.line(
            &format!("lambda_{k}"),
            format!("{} {} |{}| {flag}", float(z.re), float(z.im), float(z.norm())),
        );
        table.row(&[
            k.to_string(),
            float(z.re),
            float(z.im),
            float(z.norm()),
            float(rep.phases[k]),
            rep.unimodular[k].to_string(),
        ]);
    }
    table.save(&path(prefix, ".csv"))?;
    report.save(prefix)?;
    Ok(OK)
}

fn extend(cfg: &RunConfig, prefix: &str) -> Result<u8, CliError> {
    let l = cfg.lagrangian()?;
    let (d_a, d_b) = cfg.boundary();
    let op = cfg.operator(cfg.m)?;
    let res = solve_dirichlet(&l, &op, &d_a, &d_b, cfg.a(), cfg.b(), cfg.m)?;
    let exp = modal_expansion(&stationary_companion(&l, &op)?, &res.solution)?;

    let mut report = Report::default();
    report.line("command", "extend");
    report.line("M", cfg.m);
    report.line("split", exp.is_split());
    report.line("modes", exp.modes().len());
    report.line("vandermonde_cond", float(exp.vandermonde_cond));
    report.line("reconstruction_error", float(exp.reconstruction_error));
    report.line("amplitude_bound", float(exp.amplitude_bound()));

    let d = l.dim();
    let mut header = vec!["branch".to_string(), "theta".to_string()];
    for k in 0..d {
        header.push(format!("re_w_{k}"));
        header.push(format!("im_w_{k}"));
    }
    let mut modes = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (bi, branch) in exp.branches.iter().enumerate() {
        for mode in &branch.modes {
            let mut row = vec![bi.to_string(), float(mode.theta)];
            for w in mode.amplitude.iter() {
                row.push(float(w.re));
                row.push(float(w.im));
            }
            modes.row(&row);
        }
    }
    modes.save(&path(prefix, ".modes.csv"))?;

    let times = equispaced(cfg.a(), cfg.b(), cfg.samples);
    let mut series = vec![("y", times.iter().map(|&t| exp.eval(t)).collect())];
    if let Some(cont) = continuous_or_note(cfg, &l, &mut report)? {
        series.extend(cont.series(&times));
    }
    Trajectory { times: &times, series }.save(&path(prefix, ".csv"))?;
    report.save(prefix)?;
    Ok(OK)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, float)
}

fn converge(cfg: &RunConfig, prefix: &str) -> Result<u8, CliError> {
    let (r, s) = cfg
        .rs()
        .ok_or_else(|| CliError::Config("converge needs a three-term (r, s) operator".into()))?;
    let (d_a, d_b) = cfg.boundary();
    let scenario = ConvergenceScenario {
        lagrangian: cfg.lagrangian()?,
        r,
        s,
        d_a,
        d_b,
        a: cfg.a(),
        b: cfg.b(),
        m_list: cfg.m_list.clone(),
        delta: cfg.delta,
        samples: cfg.samples,
    };
    let rep = run_scenario(&scenario)?;

    let mut table = Table::new(&[
        "M",
        "epsilon",
        "sup_err_to_z",
        "sup_err_to_zprime",
        "shoot_margin",
        "residual_mass",
        "amplitude_term",
        "phase_term",
        "singular",
    ]);
    let mut report = Report::default();
    report.line("command", "converge");
    report.line("verdict", rep.verdict.as_str());
    report.line("continuous_margin", float(rep.continuous_margin));
    report.line("zprime_gap", opt(rep.zprime_gap));
    for row in &rep.rows {
        let b = row.bound;
        table.row(&[
            row.m.to_string(),
            float(row.epsilon),
            opt(row.sup_err_to_z),
            opt(row.sup_err_to_zprime),
            float(row.shoot_margin),
            opt(b.map(|b| b.residual_mass)),
            opt(b.map(|b| b.amplitude_term)),
            opt(b.map(|b| b.phase_term)),
            row.singular.to_string(),
        ]);
        let mut line = format!(
            "err_z={} err_zprime={} shoot_margin={}",
            opt(row.sup_err_to_z),
            opt(row.sup_err_to_zprime),
            float(row.shoot_margin)
        );
        if let Some(note) = &row.note {
            line.push_str(&format!(" note={note}"));
        }
        report.line(&format!("M={}", row.m), line);
    }
    table.save(&path(prefix, ".csv"))?;
    report.save(prefix)?;
    Ok(if rep.verdict == Verdict::Singular { SINGULAR } else { OK })
}

/// Grid solution next to `z` (and `z'`) for one operator and one `M`.
fn figure_panel(
    cfg: &RunConfig,
    l: &QuadraticLagrangian,
    rs: (Complex64, Complex64),
    m: usize,
    file: &str,
    report: &mut Report,
) -> Result<(), CliError> {
    let (d_a, d_b) = cfg.boundary();
    let (a, b) = (cfg.a(), cfg.b());
    let op = quadlag_core::make_rs_box(rs.0, rs.1, (b - a) / m as f64, (a, b))?;
    let res = solve_dirichlet(l, &op, &d_a, &d_b, a, b, m)?;
    let cont = Continuous::new(l, Some(rs), &d_a, &d_b, a, b)?;
    let times = res.solution.grid.times();
    let extra = cont.series(&times);
    let stride = chain_stride(Some(rs));
    let mut line = format!(
        "sup_chain_y_minus_z={}",
        float(sup_gap(&times, &res.solution.values, &extra[0].1, stride, a, b, cfg.delta))
    );
    if let Some((_, zp)) = extra.get(1) {
        line.push_str(&format!(
            " sup_chain_y_minus_zp={}",
            float(sup_gap(&times, &res.solution.values, zp, stride, a, b, cfg.delta))
        ));
    }
    report.line(file, line);
    let mut series = vec![("y", res.solution.values.clone())];
    series.extend(extra);
    Trajectory { times: &times, series }.save(&path(file, ".csv"))
}

fn repro(cfg: &RunConfig, fig: Figure, prefix: &str) -> Result<u8, CliError> {
    let l = cfg.lagrangian()?;
    let mut report = Report::default();
    report.line("command", "repro");
    report.line("figure", fig.name());
    match fig {
        Figure::Figure1 => {
            let rs = cfg.rs().ok_or_else(|| CliError::Config("figure1 needs an (r, s) operator".into()))?;
            for &m in &cfg.m_list {
                figure_panel(cfg, &l, rs, m, &format!("{prefix}_M{m}"), &mut report)?;
            }
        }
        Figure::Figure2 => {
            let k = l.coefficients();
            if l.dim() != 1 || k.p[(0, 0)].im != 0.0 || k.q[(0, 0)].im != 0.0 {
                return Err(CliError::Config("figure2 needs a real scalar oscillator".into()));
            }
            let omega = (-k.q[(0, 0)].re / k.p[(0, 0)].re).sqrt();
            if !omega.is_finite() || omega == 0.0 {
                return Err(CliError::Config("figure2 needs -q/p > 0".into()));
            }
            let (b, turns) = quasi_resonant_b(omega, cfg.a(), 1e-3, cfg.b());
            report.line("rho", float(1e-3));
            report.line("K", turns);
            report.line("b", float(b));
            let shifted = RunConfig { interval: [cfg.a(), b], ..cfg.clone() };
            let rs = cfg.rs().ok_or_else(|| CliError::Config("figure2 needs an (r, s) operator".into()))?;
            for &m in &cfg.m_list {
                figure_panel(&shifted, &l, rs, m, &format!("{prefix}_M{m}"), &mut report)?;
            }
        }
        Figure::Figure3 => {
            let m = cfg.m;
            let real = (c(0.6, 0.0), c(0.6, 0.0));
            let complex = (c(0.5, 0.5), c(0.5, 0.5));
            figure_panel(cfg, &l, real, m, &format!("{prefix}_real_M{m}"), &mut report)?;
            figure_panel(cfg, &l, complex, m, &format!("{prefix}_complex_M{m}"), &mut report)?;
        }
    }
    report.save(prefix)?;
    Ok(OK)
}
