//! Property tests for the invariants of each module.

use proptest::prelude::*;
use quadlag_core::cel::{solve_cel, LimitProfile};
use quadlag_core::del::{residual_del, solve_dirichlet, stationary_companion};
use quadlag_core::linalg::{
    c, cosm, expm, max_abs, principal_sqrt, sinm, vec_max_abs, CMat, CVec, SqrtBranch,
};
use quadlag_core::model::{apply_box, make_rs_box, BoxOperator, Coefficients, QuadraticLagrangian};
use quadlag_core::spectral::{cresson_spectrum, modal_expansion, spectrum};
use quadlag_core::Complex64;

fn cx() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| c(re, im))
}

fn cvec(d: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec(cx(), d).prop_map(CVec::from_vec)
}

fn real_square(d: usize, s: f64) -> impl Strategy<Value = CMat> {
    prop::collection::vec(-s..s, d * d).prop_map(move |v| CMat::from_fn(d, d, |i, j| c(v[i * d + j], 0.0)))
}

/// Real oscillator with positive `P` and negative `Q`: real frequencies.
fn oscillator(d: usize) -> impl Strategy<Value = QuadraticLagrangian> {
    (real_square(d, 1.0), real_square(d, 1.0)).prop_map(move |(g, h)| {
        let p = &g * g.transpose() + CMat::identity(d, d);
        let q = -(&h * h.transpose() + CMat::identity(d, d) * c(0.3, 0.0));
        QuadraticLagrangian::oscillator(p, q).unwrap()
    })
}

fn with_sources(d: usize) -> impl Strategy<Value = QuadraticLagrangian> {
    (oscillator(d), cvec(d), cvec(d)).prop_map(|(l, j2, j3)| l.with_sources(j2, j3).unwrap())
}

fn three_term(eps: f64) -> impl Strategy<Value = BoxOperator> {
    (cx(), cx(), cx()).prop_map(move |(a, b, d)| BoxOperator::new(1, eps, vec![a, b, d], (0.0, 3.0)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_is_linear(op in three_term(0.25), alpha in cx(), t in 0.0..3.0f64, u in cvec(2), v in cvec(2)) {
        let f = move |s: f64| CVec::from_vec(vec![u[0] * s.sin(), u[1] * s * s]);
        let g = move |s: f64| CVec::from_vec(vec![v[0] * s.cos(), v[1] + v[0] * s]);
        let fg = |s: f64| f(s) * alpha + g(s);
        let lhs = apply_box(&op, &fg, t).unwrap();
        let rhs = apply_box(&op, &f, t).unwrap() * alpha + apply_box(&op, &g, t).unwrap();
        prop_assert!(vec_max_abs(&(lhs - rhs)) <= 1e-12 * (1.0 + 1.0 / op.epsilon()) * 10.0);
    }

    #[test]
    fn exponential_round_trip(a in real_square(3, 1.0)) {
        let e = expm(&a);
        prop_assume!(e.is_ok());
        let back = expm(&(-&a)).unwrap();
        let id = CMat::identity(3, 3);
        prop_assert!(max_abs(&(e.unwrap() * back - id)) <= 1e-8);
    }

    #[test]
    fn pythagorean_identity(a in real_square(3, 1.0)) {
        let (s, co) = (sinm(&a), cosm(&a));
        prop_assume!(s.is_ok() && co.is_ok());
        let (s, co) = (s.unwrap(), co.unwrap());
        prop_assert!(max_abs(&(&s * &s + &co * &co - CMat::identity(3, 3))) <= 1e-8);
    }

    #[test]
    fn square_root_squares_back(g in real_square(3, 1.0)) {
        // symmetric positive definite: principal root exists
        let a = &g * g.transpose() + CMat::identity(3, 3);
        let r = principal_sqrt(&a, SqrtBranch::Principal).unwrap();
        prop_assert!(max_abs(&(&r * &r - &a)) <= 1e-10 * max_abs(&a));
    }

    #[test]
    fn dirichlet_solution_is_linear_in_data(
        l in oscillator(2),
        d1 in cvec(2), d2 in cvec(2), d3 in cvec(2), d4 in cvec(2), alpha in cx(),
    ) {
        let op = make_rs_box(c(0.5, -0.5), c(0.5, 0.5), 0.2, (0.0, 4.0)).unwrap();
        let solve = |da: &CVec, db: &CVec| solve_dirichlet(&l, &op, da, db, 0.0, 4.0, 20);
        let (s1, s2) = (solve(&d1, &d2), solve(&d3, &d4));
        prop_assume!(s1.is_ok() && s2.is_ok());
        let (s1, s2) = (s1.unwrap().solution, s2.unwrap().solution);
        let s = solve(&(&d1 * alpha + &d3), &(&d2 * alpha + &d4)).unwrap().solution;
        let sup = s1.sup_norm() * alpha.norm() + s2.sup_norm() + 1.0;
        for n in 0..=20 {
            let comb = &s1.values[n] * alpha + &s2.values[n];
            prop_assert!(vec_max_abs(&(comb - &s.values[n])) <= 1e-9 * sup);
        }
    }

    #[test]
    fn dirichlet_residual_vanishes(l in with_sources(2), da in cvec(2), db in cvec(2)) {
        let op = make_rs_box(c(0.5, 0.0), c(0.5, 0.0), 0.25, (0.0, 5.0)).unwrap();
        let res = solve_dirichlet(&l, &op, &da, &db, 0.0, 5.0, 20);
        prop_assume!(res.is_ok());
        let sol = res.unwrap().solution;
        let sup = sol.sup_norm().max(1.0);
        for n in 1..20 {
            let r = residual_del(&l, &op, &sol, sol.grid.time(n)).unwrap();
            prop_assert!(vec_max_abs(&r) <= 1e-8 * sup / 0.0625);
        }
    }

    #[test]
    fn continuous_solution_interpolates(l in with_sources(3), da in cvec(3), db in cvec(3), b in 1.0..5.0f64) {
        let s = solve_cel(&l, &da, &db, 0.0, b);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let scale = vec_max_abs(&da).max(vec_max_abs(&db)).max(1.0);
        prop_assert!(vec_max_abs(&(s.eval(0.0) - &da)) <= 1e-9 * scale);
        prop_assert!(vec_max_abs(&(s.eval(b) - &db)) <= 1e-9 * scale);
    }

    #[test]
    fn limit_profile_collapses(l in oscillator(2), da in cvec(2), db in cvec(2), t in 0.0..3.0f64) {
        let s = solve_cel(&l, &da, &db, 0.0, 3.0);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        for r in [0.5, -0.5] {
            let zp = LimitProfile::new(r, &s.omega1, &da, &db, 0.0, 3.0);
            prop_assume!(zp.is_ok());
            let scale = vec_max_abs(&da).max(vec_max_abs(&db)).max(1.0);
            prop_assert!(vec_max_abs(&(zp.unwrap().eval(t) - s.eval(t))) <= 1e-8 * scale);
        }
    }

    #[test]
    fn cresson_closed_form_is_unimodular(v in 0.0..0.7f64) {
        for e in cresson_spectrum(&[v], 1.0) {
            prop_assert!(e.in_range);
            prop_assert!((e.value.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetric_spectrum_is_unimodular(l in oscillator(2), eps in 0.01..0.3f64) {
        let op = make_rs_box(c(0.5, 0.0), c(0.5, 0.0), eps, (0.0, 1.0)).unwrap();
        let rep = spectrum(&stationary_companion(&l, &op).unwrap()).unwrap();
        prop_assert!(rep.max_deviation() <= 1e-9);
        prop_assert!(rep.shape_residual <= 1e-8);
    }

    #[test]
    fn modal_expansion_reconstructs(l in with_sources(1), da in cvec(1), db in cvec(1)) {
        let op = make_rs_box(c(0.5, -0.5), c(0.5, 0.5), 0.25, (0.0, 10.0)).unwrap();
        let res = solve_dirichlet(&l, &op, &da, &db, 0.0, 10.0, 40);
        prop_assume!(res.is_ok());
        let sol = res.unwrap().solution;
        let exp = modal_expansion(&stationary_companion(&l, &op).unwrap(), &sol);
        prop_assume!(exp.is_ok());
        prop_assert!(exp.unwrap().reconstruction_error <= 1e-8);
    }

    #[test]
    fn stationary_coefficients_are_constant(l in with_sources(2), t in -5.0..5.0f64) {
        let k: &Coefficients = l.coefficients();
        prop_assert_eq!(l.at(t).into_owned(), k.clone());
    }
}
