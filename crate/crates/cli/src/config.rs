//! JSON run configuration.
//!
//! Complex scalars are `[re, im]` pairs and matrices are row-major nested
//! arrays. Every field has a default taken from the scalar baseline
//! (`p = 1`, `q = -0.23` on `[0, 30]`, `x(0) = 12`, `x(30) = -14`), so a
//! config only needs the keys it changes. Unknown keys are rejected.

use clap::ValueEnum;
use quadlag_core::linalg::c;
use quadlag_core::model::validate_lagrangian;
use quadlag_core::{
    make_rs_box, BoxOperator, CMat, CVec, Coefficients, Complex64, QuadraticLagrangian,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type Cx = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveDel,
    SolveCel,
    Spectrum,
    Extend,
    Converge,
    Repro,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveDel => "solve-del",
            Command::SolveCel => "solve-cel",
            Command::Spectrum => "spectrum",
            Command::Extend => "extend",
            Command::Converge => "converge",
            Command::Repro => "repro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    Figure1,
    Figure2,
    Figure3,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Figure1 => "figure1",
            Figure::Figure2 => "figure2",
            Figure::Figure3 => "figure3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianSpec {
    pub p: Vec<Vec<Cx>>,
    pub q: Vec<Vec<Cx>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j1: Option<Vec<Vec<Cx>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<Vec<Cx>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j3: Option<Vec<Cx>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j4: Option<Cx>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `(r, s) = (1/2, 1/2)`.
    HalfHalf,
    /// `(r, s) = ((1-i)/2, (1+i)/2)`.
    Cresson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsLiteral {
    pub r: Cx,
    pub s: Cx,
}

/// General `2N+1` sample stencil, coefficients ordered from `-N` to `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilLiteral {
    pub n: usize,
    pub coeffs: Vec<Cx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Preset(Preset),
    Rs(RsLiteral),
    Stencil(StencilLiteral),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub d_a: Vec<Cx>,
    pub d_b: Vec<Cx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure: Option<Figure>,
    pub lagrangian: LagrangianSpec,
    pub operator: OperatorSpec,
    pub interval: [f64; 2],
    pub boundary: Boundary,
    /// Grid size for single-grid commands.
    #[serde(rename = "M")]
    pub m: usize,
    /// Grid sizes for `converge`.
    #[serde(rename = "M_list")]
    pub m_list: Vec<usize>,
    pub delta: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            figure: None,
            lagrangian: LagrangianSpec {
                p: vec![vec![[1.0, 0.0]]],
                q: vec![vec![[-0.23, 0.0]]],
                j1: None,
                j2: None,
                j3: None,
                j4: None,
            },
            operator: OperatorSpec::Preset(Preset::HalfHalf),
            interval: [0.0, 30.0],
            boundary: Boundary {
                d_a: vec![[12.0, 0.0]],
                d_b: vec![[-14.0, 0.0]],
            },
            m: 30,
            m_list: vec![30, 120, 480, 1920],
            delta: 1.0,
            samples: 2048,
            out: None,
        }
    }
}

fn cx(z: Cx) -> Complex64 {
    c(z[0], z[1])
}

fn vector(v: &[Cx]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|&z| cx(z)))
}

fn matrix(rows: &[Vec<Cx>], name: &str) -> Result<CMat, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("`{name}` must be a non-empty square matrix")));
    }
    Ok(CMat::from_fn(n, n, |i, j| cx(rows[i][j])))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn a(&self) -> f64 {
        self.interval[0]
    }

    pub fn b(&self) -> f64 {
        self.interval[1]
    }

    pub fn lagrangian(&self) -> Result<QuadraticLagrangian, CliError> {
        let spec = &self.lagrangian;
        let p = matrix(&spec.p, "p")?;
        let d = p.nrows();
        let q = matrix(&spec.q, "q")?;
        let j1 = match &spec.j1 {
            Some(m) => matrix(m, "j1")?,
            None => CMat::zeros(d, d),
        };
        let j2 = spec.j2.as_deref().map_or_else(|| CVec::zeros(d), vector);
        let j3 = spec.j3.as_deref().map_or_else(|| CVec::zeros(d), vector);
        let j4 = spec.j4.map_or(c(0.0, 0.0), cx);
        if q.nrows() != d || j1.nrows() != d || j2.len() != d || j3.len() != d {
            return Err(CliError::Config(format!("all Lagrangian coefficients must have dimension {d}")));
        }
        let l = QuadraticLagrangian::stationary(Coefficients { p, q, j1, j2, j3, j4 })?;
        let check = validate_lagrangian(&l, &[self.a()]);
        if !check.is_valid() {
            return Err(CliError::Config(format!("invalid Lagrangian: {}", check.issues.join("; "))));
        }
        Ok(l)
    }

    pub fn boundary(&self) -> (CVec, CVec) {
        (vector(&self.boundary.d_a), vector(&self.boundary.d_b))
    }

    /// `(r, s)` of a three-term operator; `None` for a general stencil.
    pub fn rs(&self) -> Option<(Complex64, Complex64)> {
        match &self.operator {
            OperatorSpec::Preset(Preset::HalfHalf) => Some((c(0.5, 0.0), c(0.5, 0.0))),
            OperatorSpec::Preset(Preset::Cresson) => Some((c(0.5, -0.5), c(0.5, 0.5))),
            OperatorSpec::Rs(l) => Some((cx(l.r), cx(l.s))),
            OperatorSpec::Stencil(_) => None,
        }
    }

    /// Operator on `[a, b]` with `eps = (b - a)/M`.
    pub fn operator(&self, m: usize) -> Result<BoxOperator, CliError> {
        let eps = (self.b() - self.a()) / m as f64;
        let interval = (self.a(), self.b());
        Ok(match (&self.operator, self.rs()) {
            (_, Some((r, s))) => make_rs_box(r, s, eps, interval)?,
            (OperatorSpec::Stencil(st), None) => {
                BoxOperator::new(st.n, eps, st.coeffs.iter().map(|&z| cx(z)).collect(), interval)?
            }
            _ => unreachable!("every non-stencil operator has (r, s)"),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.a() < self.b()) {
            return fail("interval must satisfy a < b");
        }
        if self.m == 0 {
            return fail("M must be positive");
        }
        if !(self.delta > 0.0) {
            return fail("delta must be positive");
        }
        if self.samples < 2 {
            return fail("samples must be at least 2");
        }
        let d = self.lagrangian.p.len();
        if self.boundary.d_a.len() != d || self.boundary.d_b.len() != d {
            return fail("boundary vectors must match the Lagrangian dimension");
        }
        Ok(())
    }

    /// Fixed parameters of a reproduced figure.
    pub fn repro(figure: Figure) -> Self {
        let mut cfg = RunConfig {
            command: Some(Command::Repro),
            figure: Some(figure),
            ..RunConfig::default()
        };
        match figure {
            Figure::Figure1 => cfg.m_list = vec![30, 120],
            Figure::Figure2 => cfg.m_list = vec![1000, 50000],
            Figure::Figure3 => {
                cfg.m = 120;
                cfg.m_list = vec![120];
            }
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_baseline() {
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::parse(r#"{"boundary": {"d_a": [[1,0]], "d_b": [[1,0]], "x": 0}}"#).is_err());
    }

    #[test]
    fn presets_expand_exactly() {
        let cfg = RunConfig::parse(r#"{"operator": "cresson"}"#).unwrap();
        assert_eq!(cfg.rs(), Some((c(0.5, -0.5), c(0.5, 0.5))));
        let cfg = RunConfig::parse(r#"{"operator": "half-half"}"#).unwrap();
        assert_eq!(cfg.rs(), Some((c(0.5, 0.0), c(0.5, 0.0))));
        let cfg = RunConfig::parse(r#"{"operator": {"r": [0.6, 0], "s": [0.6, 0]}}"#).unwrap();
        assert_eq!(cfg.rs(), Some((c(0.6, 0.0), c(0.6, 0.0))));
    }

    #[test]
    fn round_trip_is_identical() {
        let mut cfg = RunConfig::repro(Figure::Figure2);
        cfg.lagrangian.j2 = Some(vec![[0.1 + 0.2, -1.0 / 3.0]]);
        cfg.out = Some("x/y".into());
        assert_eq!(RunConfig::parse(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn matrices_are_row_major() {
        let cfg = RunConfig::parse(
            r#"{"lagrangian": {"p": [[[2,0],[0,0]],[[0,0],[3,0]]], "q": [[[-1,0],[0.5,0]],[[0.5,0],[-2,0]]]},
                "boundary": {"d_a": [[1,0],[0,0]], "d_b": [[0,0],[1,0]]}}"#,
        )
        .unwrap();
        let l = cfg.lagrangian().unwrap();
        assert_eq!(l.coefficients().q[(0, 1)], c(0.5, 0.0));
        assert_eq!(l.coefficients().p[(1, 1)], c(3.0, 0.0));
    }

    #[test]
    fn ragged_matrix_is_a_config_error() {
        let cfg = RunConfig::parse(r#"{"lagrangian": {"p": [[[1,0],[0,0]]], "q": [[[1,0]]]}}"#).unwrap();
        assert!(matches!(cfg.lagrangian(), Err(CliError::Config(_))));
    }
}
