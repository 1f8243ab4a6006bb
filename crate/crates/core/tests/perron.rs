mod common;

use common::{direct_model_solve, model, model_certificate, model_supersolution};
use levy_perron::barriers::build_subsolution;
use levy_perron::grid::GridFunction;
use levy_perron::nonlocal_op::{bellman_isaacs, BellmanProblem, Coefficient, PairCoefficients};
use levy_perron::perron::*;

fn solve(m: &common::Model, sup: &GridFunction, mode: SweepMode, tol: f64) -> (GridFunction, SolveReport) {
    let cfg = SolverConfig { tol, max_sweeps: 50_000, mode };
    discrete_perron_solve(&m.problem, &m.zero, sup, &m.q, &cfg).unwrap()
}

fn with_forcing(p: &BellmanProblem, f: f64) -> BellmanProblem {
    let k = p.pairs[0].kernel.clone();
    BellmanProblem::linear(p.domain.clone(), p.datum.clone(), k, Coefficient::Constant(0.0), Coefficient::Constant(f)).unwrap()
}

#[test]
fn five_node_update_matches_scalar_scan() {
    let m = model(5, 1.5);
    let u = m.zero.with_interior(|x| 0.1 * (1.0 - x[0] * x[0]));
    let node = u.interior()[2];
    let x = u.node(node);
    let r_star = pointwise_update(&m.problem, &u, node, &m.q, 1e-13).unwrap();

    let residual = |r: f64| {
        let mut v = u.clone();
        v.set(node, r);
        bellman_isaacs(&m.problem, &v, &x, None, &m.q).unwrap().value
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    while hi - lo > 1e-12 {
        let step = (hi - lo) / 16.0;
        let k = (0..=16).find(|&k| residual(lo + k as f64 * step) >= 0.0).unwrap();
        hi = lo + k as f64 * step;
        lo = hi - step;
    }
    assert!((r_star - 0.5 * (lo + hi)).abs() < 1e-10, "{r_star} vs [{lo}, {hi}]");
}

#[test]
fn perron_solution_matches_direct_solve() {
    let m = model(32, 1.5);
    let sup = model_supersolution(&m);
    let (w, rep) = solve(&m, &sup.function, SweepMode::GaussSeidel, 1e-12);
    assert!(rep.converged && rep.monotone && rep.sandwich_ok);
    assert_eq!(rep.clamps, 0);
    let direct = direct_model_solve(&m);
    let err = w.interior_values().iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn solution_is_positive_symmetric_and_peaked() {
    let m = model(31, 1.5);
    let sup = model_supersolution(&m);
    let (w, _) = solve(&m, &sup.function, SweepMode::GaussSeidel, 1e-11);
    let v = w.interior_values();
    let n = v.len();
    assert!(v.iter().all(|&x| x > 0.0));
    for i in 0..n {
        assert!((v[i] - v[n - 1 - i]).abs() < 1e-7);
    }
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(v[n / 2], top);
}

#[test]
fn exterior_values_stay_at_datum() {
    let m = model(16, 1.5);
    let sup = model_supersolution(&m);
    let (w, _) = solve(&m, &sup.function, SweepMode::Jacobi, 1e-9);
    for i in 0..w.values().len() {
        if !w.is_inside(i) {
            assert_eq!(w.values()[i], 0.0);
        }
    }
}

#[test]
fn zero_forcing_gives_zero() {
    let m = model(16, 1.0);
    let p = with_forcing(&m.problem, 0.0);
    let cfg = SolverConfig { tol: 1e-12, max_sweeps: 100, mode: SweepMode::GaussSeidel };
    let (w, rep) = discrete_perron_solve(&p, &m.zero, &m.zero, &m.q, &cfg).unwrap();
    assert!(rep.converged);
    assert!(w.values().iter().all(|&v| v == 0.0));
}

#[test]
fn sweep_from_subsolution_raises_every_node() {
    let m = model(24, 1.5);
    let sup = model_supersolution(&m);
    let op = DiscreteOperator::assemble(&m.problem, &m.zero, &m.q).unwrap();
    let mut u = m.zero.clone();
    let stats = op.sweep(&mut u, Some(&sup.function), SweepMode::GaussSeidel, 1e-10).unwrap();
    assert_eq!(stats.decreased, 0);
    assert_eq!(stats.clamps, 0);
    for &i in u.interior() {
        assert!(u.values()[i] > 0.0);
    }
}

#[test]
fn converged_solution_barely_moves() {
    let m = model(16, 1.5);
    let sup = model_supersolution(&m);
    let (mut w, _) = solve(&m, &sup.function, SweepMode::GaussSeidel, 1e-12);
    let op = DiscreteOperator::assemble(&m.problem, &w, &m.q).unwrap();
    let stats = op.sweep(&mut w, Some(&sup.function), SweepMode::GaussSeidel, 1e-12).unwrap();
    assert!(stats.max_delta < 1e-12);
}

#[test]
fn residual_checks() {
    let m = model(24, 1.5);
    let sup = model_supersolution(&m);
    assert!(check_discrete_subsolution(&m.problem, &m.zero, &m.q, 0.0).unwrap().pass);
    let zero_as_super = check_discrete_supersolution(&m.problem, &m.zero, &m.q, 1e-9).unwrap();
    assert!(!zero_as_super.pass);
    assert!(zero_as_super.worst < -0.5);
    assert!(check_discrete_supersolution(&m.problem, &sup.function, &m.q, 1e-9).unwrap().pass);
    let (w, _) = solve(&m, &sup.function, SweepMode::GaussSeidel, 1e-12);
    assert!(check_discrete_subsolution(&m.problem, &w, &m.q, 1e-6).unwrap().pass);
    assert!(check_discrete_supersolution(&m.problem, &w, &m.q, 1e-6).unwrap().pass);
}

#[test]
fn built_subsolution_is_a_discrete_subsolution() {
    let m = model(24, 1.5);
    let cert = model_certificate(&m);
    let sub = build_subsolution(&m.problem, m.zero.lattice(), &cert, &common::MODEL_RADII).unwrap();
    let rep = check_discrete_subsolution(&m.problem, &sub.function, &m.q, 1e-9).unwrap();
    assert!(rep.pass, "worst {}", rep.worst);
}

#[test]
fn larger_forcing_gives_smaller_solution() {
    let m = model(20, 1.5);
    let sup = model_supersolution(&m);
    let (w, _) = solve(&m, &sup.function, SweepMode::GaussSeidel, 1e-11);
    let p = with_forcing(&m.problem, -0.5);
    let cfg = SolverConfig { tol: 1e-11, max_sweeps: 50_000, mode: SweepMode::GaussSeidel };
    let (w2, _) = discrete_perron_solve(&p, &m.zero, &sup.function, &m.q, &cfg).unwrap();
    for &i in w.interior() {
        assert!(w.values()[i] >= w2.values()[i]);
    }
}

#[test]
fn jacobi_is_independent_of_thread_count() {
    let m = model(20, 1.5);
    let sup = model_supersolution(&m);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solve(&m, &sup.function, SweepMode::Jacobi, 1e-9).0)
    };
    assert_eq!(run(1).values(), run(4).values());
}

#[test]
fn jacobi_and_gauss_seidel_agree() {
    let m = model(20, 1.5);
    let sup = model_supersolution(&m);
    let (a, _) = solve(&m, &sup.function, SweepMode::GaussSeidel, 1e-11);
    let (b, _) = solve(&m, &sup.function, SweepMode::Jacobi, 1e-11);
    let err = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn two_by_two_problem_solves() {
    let m = model(12, 1.5);
    let k = m.problem.pairs[0].kernel.clone();
    let pairs = [-1.0, -3.0, -2.0, -0.5]
        .iter()
        .map(|&f| PairCoefficients::new(k.clone(), Coefficient::Constant(1.0), Coefficient::Constant(f)))
        .collect();
    let p = BellmanProblem::new(m.problem.domain.clone(), m.problem.datum.clone(), k.params, 1.0, 2, 2, pairs).unwrap();
    let sup = m.zero.with_interior(|_| 3.0);
    let cfg = SolverConfig { tol: 1e-11, max_sweeps: 50_000, mode: SweepMode::GaussSeidel };
    let (w, rep) = discrete_perron_solve(&p, &m.zero, &sup, &m.q, &cfg).unwrap();
    assert!(rep.converged && rep.monotone);
    // sup(min(-1,-3), min(-2,-0.5)) = -2: the active pair is (1, 0) everywhere
    assert!(rep.active_indices.iter().all(|&a| a == (1, 0)));
    assert!(check_discrete_supersolution(&p, &w, &m.q, 1e-7).unwrap().pass);
}

#[test]
fn lemma_max_of_subsolutions() {
    use rand::{Rng, SeedableRng};
    let m = model(20, 1.5);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let random_sub = |rng: &mut rand_chacha::ChaCha8Rng| {
        let raw: Vec<f64> = (0..m.zero.interior().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut amp = 1.0;
        loop {
            let mut u = m.zero.clone();
            u.set_interior_values(&raw.iter().map(|v| amp * v).collect::<Vec<_>>());
            if check_discrete_subsolution(&m.problem, &u, &m.q, 0.0).unwrap().pass {
                return u;
            }
            amp *= 0.5;
        }
    };
    for _ in 0..5 {
        let a = random_sub(&mut rng);
        let b = random_sub(&mut rng);
        let c = a.zip_with(&b, f64::max).unwrap();
        assert!(check_discrete_subsolution(&m.problem, &c, &m.q, 1e-12).unwrap().pass);
    }
}
