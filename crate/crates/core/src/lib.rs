//! Discrete and continuous Euler-Lagrange problems for quadratic Lagrangians
//! with scale-derivative operators: shooting solvers, companion spectra,
//! pseudo-periodic extensions, closed-form continuous solutions and the
//! convergence study that ties them together.

pub mod cel;
pub mod converge;
pub mod del;
pub mod error;
pub mod linalg;
pub mod model;
pub mod spectral;

pub use cel::{solve_cel, ContinuousSolution, LimitProfile};
pub use converge::{run_scenario, ConvergenceReport, ConvergenceRow, ConvergenceScenario, Verdict};
pub use del::{solve_dirichlet, stationary_companion, CompanionSystem, ShootingResult};
pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
pub use model::{make_rs_box, BoxOperator, Coefficients, Grid, GridFunction, QuadraticLagrangian};
pub use num_complex::Complex64;
pub use spectral::{modal_expansion, spectrum, ModalExpansion, SpectrumReport};
