//! Companion spectra, phase laws and pseudo-periodic modal expansions.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::del::CompanionSystem;
use crate::error::{Error, Result};
use crate::linalg::{c, det, eig, matfun_from, vandermonde_solve, CMat, CVec, EigenDecomposition};
use crate::model::GridFunction;

/// Eigenvalues closer than this to the unit circle count as unimodular.
pub const UNIMODULAR_TOL: f64 = 1e-10;

/// Eigenvalues closer than this are reported as one cluster.
pub const CLUSTER_TOL: f64 = 1e-9;

// A defective eigenvalue splits by about sqrt(machine eps) in floating point;
// such pairs are recognised by nearly parallel eigenvectors.
const DEFECTIVE_SPLIT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    /// `||lambda| - 1|`.
    pub deviations: Vec<f64>,
    pub unimodular: Vec<bool>,
    /// Principal arguments.
    pub phases: Vec<f64>,
    /// Index groups of eigenvalues within `CLUSTER_TOL` of each other;
    /// only groups with more than one member are listed.
    pub clusters: Vec<Vec<usize>>,
    /// Largest defect of the `(w lambda^{m-1}, .., w)` layout and of
    /// `w` lying in the kernel of the matrix polynomial, relative.
    pub shape_residual: f64,
    /// Largest relative gap of `det(A - lambda I) = det(sum B_i lambda^{m-i} - lambda^m I)`
    /// on sample points of the unit circle, with the sign `(-1)^{(m+1)d}`.
    pub charpoly_residual: f64,
}

impl SpectrumReport {
    pub fn all_unimodular(&self) -> bool {
        self.unimodular.iter().all(|&u| u)
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().cloned().fold(0.0, f64::max)
    }
}

fn same_cluster(e: &EigenDecomposition, i: usize, j: usize) -> bool {
    let gap = (e.values[i] - e.values[j]).norm();
    if gap <= CLUSTER_TOL {
        return true;
    }
    let scale = e.values[i].norm().max(e.values[j].norm()).max(1.0);
    gap <= DEFECTIVE_SPLIT * scale && e.vectors.column(i).dotc(&e.vectors.column(j)).norm() >= 1.0 - DEFECTIVE_SPLIT
}

fn clusters(e: &EigenDecomposition) -> Vec<Vec<usize>> {
    let n = e.values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if same_cluster(e, i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[rj] = ri;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = groups.len();
            groups.push(vec![]);
        }
        groups[root_of[r]].push(i);
    }
    groups.into_iter().filter(|g| g.len() > 1).collect()
}

/// Points on the unit circle used for the characteristic-polynomial check.
pub fn unit_circle_samples(count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| Complex64::from_polar(1.0, 0.1 + 2.0 * PI * k as f64 / count as f64))
        .collect()
}

pub fn spectrum(system: &CompanionSystem) -> Result<SpectrumReport> {
    let e = eig(&system.a)?;
    let d = system.dim;
    let m = system.order();
    let deviations: Vec<f64> = e.values.iter().map(|z| (z.norm() - 1.0).abs()).collect();
    let unimodular = deviations.iter().map(|&x| x <= UNIMODULAR_TOL).collect();
    let phases = e.values.iter().map(|z| z.arg()).collect();

    let scale = 1.0 + system.blocks.iter().map(|b| b.norm()).sum::<f64>();
    let mut shape = 0.0_f64;
    for (k, &lam) in e.values.iter().enumerate() {
        let v = e.vectors.column(k);
        let w: CVec = v.rows((m - 1) * d, d).into_owned();
        let vn = v.norm().max(f64::MIN_POSITIVE);
        for j in 0..m {
            let want = &w * lam.powu((m - 1 - j) as u32);
            shape = shape.max((v.rows(j * d, d) - want).norm() / vn);
        }
        let wn = w.norm();
        if wn > 0.0 {
            let kernel = system.matrix_polynomial(lam) * &w;
            shape = shape.max(kernel.norm() / (wn * scale));
        }
    }

    let sign = if ((m + 1) * d) % 2 == 0 { 1.0 } else { -1.0 };
    let mut charpoly = 0.0_f64;
    let id = CMat::identity(m * d, m * d);
    for lam in unit_circle_samples(20) {
        let lhs = det(&(&system.a - &id * lam))?;
        let rhs = det(&system.matrix_polynomial(lam))? * sign;
        let denom = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        charpoly = charpoly.max((lhs - rhs).norm() / denom);
    }

    Ok(SpectrumReport {
        clusters: clusters(&e),
        eigenvalues: e.values,
        deviations,
        unimodular,
        phases,
        shape_residual: shape,
        charpoly_residual: charpoly,
    })
}

/// Two-step companion `[[B_2, B_4], [I, 0]]` when the odd blocks of a
/// three-term recurrence vanish, as for `(r, r)` operators with `J1 = 0`.
pub fn split_companion(system: &CompanionSystem) -> Option<CMat> {
    if system.half_width != 1 {
        return None;
    }
    let scale = 1.0 + system.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let tiny = |b: &CMat| b.norm() <= 1e-14 * scale;
    if !tiny(&system.blocks[0]) || !tiny(&system.blocks[2]) {
        return None;
    }
    let d = system.dim;
    let mut k = CMat::zeros(2 * d, 2 * d);
    k.view_mut((0, 0), (d, d)).copy_from(&system.blocks[1]);
    k.view_mut((0, d), (d, d)).copy_from(&system.blocks[3]);
    k.view_mut((d, 0), (d, d)).fill_with_identity();
    Some(k)
}

/// `arccos(1 - eps^2 |q/p| / (2 r^2))` per mode.
pub fn rr_phases(p_eigs: &[f64], q_eigs: &[f64], epsilon: f64, r: f64) -> Result<Vec<f64>> {
    if p_eigs.len() != q_eigs.len() {
        return Err(Error::InvalidArgument("p and q eigenvalue lists differ in length".into()));
    }
    p_eigs
        .iter()
        .zip(q_eigs)
        .map(|(&p, &q)| {
            if p == 0.0 {
                return Err(Error::InvalidArgument("zero p eigenvalue".into()));
            }
            let arg = 1.0 - epsilon * epsilon * (q / p).abs() / (2.0 * r * r);
            if arg < -1.0 - 1e-15 {
                return Err(Error::OutOfRange(format!(
                    "eps^2 |q/p| = {} exceeds 4 r^2: eigenvalues leave the unit circle",
                    epsilon * epsilon * (q / p).abs()
                )));
            }
            Ok(arg.clamp(-1.0, 1.0).acos())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CressonEigenvalue {
    pub value: Complex64,
    pub omega: f64,
    pub zeta1: i8,
    pub zeta2: i8,
    /// Inner square root real, so the value lies on the unit circle.
    pub in_range: bool,
}

/// Closed-form spectrum of the `((1-i)/2, (1+i)/2)` operator on a diagonal
/// oscillator with frequencies `omegas`; four values per frequency:
///
/// `lambda = (1 + z1 u)/2 + i z2 sqrt(1 + v^2 - z1 u) / sqrt(2)`,
/// `u = sqrt(1 - 2 v^2)`, `v = eps omega`.
pub fn cresson_spectrum(omegas: &[f64], epsilon: f64) -> Vec<CressonEigenvalue> {
    let mut out = Vec::with_capacity(4 * omegas.len());
    for &omega in omegas {
        let v = epsilon * omega;
        let u = c(1.0 - 2.0 * v * v, 0.0).sqrt();
        for zeta1 in [1_i8, -1] {
            for zeta2 in [1_i8, -1] {
                let z1 = zeta1 as f64;
                let z2 = zeta2 as f64;
                let inner = (c(1.0 + v * v, 0.0) - u * z1).sqrt();
                let value = (c(1.0, 0.0) + u * z1) * 0.5 + c(0.0, z2 * 0.5_f64.sqrt()) * inner;
                out.push(CressonEigenvalue {
                    value,
                    omega,
                    zeta1,
                    zeta2,
                    in_range: 2.0 * v * v <= 1.0,
                });
            }
        }
    }
    out
}

/// `Theta = B diag(theta_i) B^-1` with `cos theta_i = 1 - x_i^2/2`,
/// `sin theta_i = x_i sqrt(1 - x_i^2/4)`, `x_i = eps omega_i / r`.
pub fn theta_matrix(omega: &CMat, epsilon: f64, r: f64) -> Result<CMat> {
    if r == 0.0 {
        return Err(Error::InvalidArgument("r must be nonzero".into()));
    }
    let e = eig(omega)?;
    let scale = e.values.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    for z in &e.values {
        if z.im.abs() > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!("Omega has non-real eigenvalue {z}")));
        }
        if (epsilon * z.re / r).abs() >= 2.0 {
            return Err(Error::OutOfRange(format!(
                "eps |omega| / |r| = {} must stay below 2",
                (epsilon * z.re / r).abs()
            )));
        }
    }
    let theta = matfun_from(&e, |z| {
        let x = epsilon * z.re / r;
        c((x * (1.0 - x * x / 4.0).sqrt()).atan2(1.0 - x * x / 2.0), 0.0)
    })?;
    let d = omega.nrows();
    let cos_theta = crate::linalg::cosm(&theta)?;
    let want = CMat::identity(d, d) - omega * omega * c(epsilon * epsilon / (2.0 * r * r), 0.0);
    let gap = (&cos_theta - &want).norm();
    if gap > 1e-10 * (1.0 + want.norm()) {
        return Err(Error::NumericFailure(format!("cos(Theta) identity off by {gap:e}")));
    }
    Ok(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Principal argument of the eigenvalue.
    pub theta: f64,
    pub amplitude: CVec,
}

/// Expansion of the samples `x(anchor + k stride eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub parity: usize,
    pub stride: usize,
    pub anchor: f64,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalExpansion {
    /// The first branch (anchored at `a`) is the one used off the grid.
    pub branches: Vec<Branch>,
    pub offset: CVec,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub vandermonde_cond: f64,
    /// Max-norm misfit on the safe window, relative to the grid sup-norm.
    pub reconstruction_error: f64,
}

impl Branch {
    fn eval(&self, t: f64, epsilon: f64, offset: &CVec) -> CVec {
        let step = self.stride as f64 * epsilon;
        let tau = (t - self.anchor) / step;
        let mut acc = offset.clone();
        for m in &self.modes {
            acc += &m.amplitude * Complex64::from_polar(1.0, m.theta * tau);
        }
        acc
    }
}

impl ModalExpansion {
    pub fn is_split(&self) -> bool {
        self.branches.len() > 1
    }

    /// Node spacing of the primary branch.
    pub fn effective_step(&self) -> f64 {
        self.branches[0].stride as f64 * self.epsilon
    }

    pub fn modes(&self) -> &[Mode] {
        &self.branches[0].modes
    }

    /// Pseudo-periodic extension at any real `t`.
    pub fn eval(&self, t: f64) -> CVec {
        self.branches[0].eval(t, self.epsilon, &self.offset)
    }

    /// Value at grid node `a + n eps`, using the branch of that parity.
    pub fn eval_node(&self, n: usize) -> CVec {
        let stride = self.branches[0].stride;
        let br = &self.branches[n % stride];
        br.eval(self.a + n as f64 * self.epsilon, self.epsilon, &self.offset)
    }

    /// Bound `sum |w_j| + |offset|` in the max-norm.
    pub fn amplitude_bound(&self) -> f64 {
        let mx = |v: &CVec| v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        self.modes().iter().map(|m| mx(&m.amplitude)).sum::<f64>() + mx(&self.offset)
    }
}

pub fn extend_pseudo_periodic(exp: &ModalExpansion, t: f64) -> CVec {
    exp.eval(t)
}

fn check_unit_simple(e: &EigenDecomposition) -> Result<()> {
    let dev = e.values.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    if dev > UNIMODULAR_TOL {
        return Err(Error::NonUnimodular { deviation: dev });
    }
    if let Some(g) = clusters(e).first() {
        return Err(Error::DegenerateSpectrum {
            gap: (e.values[g[0]] - e.values[g[1]]).norm(),
        });
    }
    Ok(())
}

/// Modal expansion of a Dirichlet grid solution on `a + n eps`, `n = 0..=M`.
///
/// Samples come from the safe window `[a + 2N eps, b - 2N eps]`. When the
/// odd blocks vanish the even and odd nodes are expanded separately with
/// the two-step companion.
pub fn modal_expansion(system: &CompanionSystem, sol: &GridFunction) -> Result<ModalExpansion> {
    if !system.stationary {
        return Err(Error::InvalidArgument("modal expansion needs a stationary system".into()));
    }
    let grid = &sol.grid;
    let (a, b) = grid.interval();
    if !grid.hits_a() || !grid.hits_b() {
        return Err(Error::InvalidArgument("grid must be anchored at both endpoints".into()));
    }
    let m = grid.len() - 1;
    let d = system.dim;
    let hw = system.half_width;
    if m <= 4 * hw * (d + 1) {
        return Err(Error::InvalidArgument(format!(
            "need M > 4N(d+1) = {} samples for a unique expansion",
            4 * hw * (d + 1)
        )));
    }
    let offset = match (&system.j5, &system.j6) {
        (_, Some(j6)) => j6.clone(),
        (Some(j5), None) if j5.iter().any(|z| z.norm() > 0.0) => {
            return Err(Error::Singular("1 is an eigenvalue of A; no constant particular solution".into()))
        }
        _ => CVec::zeros(d),
    };
    let eps = grid.epsilon();
    let lo = 2 * hw;

    let (transition, stride) = match split_companion(system) {
        Some(k) => (k, 2),
        None => (system.a.clone(), 1),
    };
    let e = eig(&transition)?;
    check_unit_simple(&e)?;
    let count = e.values.len();

    let mut branches = Vec::with_capacity(stride);
    let mut worst_cond = 0.0_f64;
    for parity in 0..stride {
        // first branch index k with node parity + stride k inside the window
        let k0 = (lo.saturating_sub(parity) + stride - 1) / stride;
        let rhs: Vec<CVec> = (0..count)
            .map(|j| &sol.values[parity + stride * (k0 + j)] - &offset)
            .collect();
        let vs = vandermonde_solve(&e.values, &rhs)?;
        worst_cond = worst_cond.max(vs.cond);
        // rhs row j is branch index k0 + j, i.e. power k0 + j = (k0 - 1) + (j + 1)
        let shift = k0 as i32 - 1;
        let modes = e
            .values
            .iter()
            .zip(vs.amplitudes)
            .map(|(lam, u)| Mode {
                theta: lam.arg(),
                amplitude: u * lam.powi(-shift),
            })
            .collect();
        branches.push(Branch {
            parity,
            stride,
            anchor: a + parity as f64 * eps,
            modes,
        });
    }

    let mut exp = ModalExpansion {
        branches,
        offset,
        a,
        b,
        epsilon: eps,
        vandermonde_cond: worst_cond,
        reconstruction_error: 0.0,
    };
    let sup = sol.sup_norm().max(f64::MIN_POSITIVE);
    let mut err = 0.0_f64;
    for n in lo..=(m - lo) {
        let diff = exp.eval_node(n) - &sol.values[n];
        err = err.max(diff.iter().fold(0.0_f64, |x, z| x.max(z.norm())));
    }
    exp.reconstruction_error = err / sup;
    Ok(exp)
}
