//! End-to-end acceptance criteria. Each test prints one `PASS`/`FAIL` line
//! and then asserts, so a failing criterion shows up both in the log and in
//! the test summary. Tests hold a global lock so that runtime budgets are
//! measured without competing for cores.

use std::sync::Mutex;
use std::time::Instant;

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::Rng;

use randpol_cli::csvio::read_aggregate_csv;
use randpol_cli::experiment::{seed_file, AGGREGATE_FILE};
use randpol_cli::{run_experiment, EnvSpec, ExperimentConfig, LqSpec, SyntheticSpec};
use randpol_core::envs::{discounted_return, LqParams};
use randpol_core::features::{sample_feature_params, FeatureDistribution, Normalization};
use randpol_core::oracles::{discretize_synthetic, exact_value_iteration, grid_search_box_lsq, riccati_oracle};
use randpol_core::rng::seeded;
use randpol_core::theory::{
    chain_distribution_after, chain_stationary, delta_prime, error_propagation_bound, k_star, k_star_raw,
    min_iterations_raw, mixing_time_bound, sample_bounds, simulate_chain, total_variation,
};
use randpol_core::{
    fit_q, q_grad_action, q_value, run, synthetic_1d, BoxLsqConfig, Bounds, Error, Policy, QFunction, RandpolConfig,
    TargetBatch, TheoryInputs,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) {
    println!("{} criterion {criterion} ({title}): {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} ({title}) failed: {detail}");
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn criterion_1_synthetic_reproduction() {
    let _g = lock();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(EnvSpec::Synthetic1d(SyntheticSpec::default()));
    cfg.seeds = (0..5).collect();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.timing = true;
    cfg.plot = false;
    let r = &cfg.randpol;
    assert_eq!((r.n_q, r.n_pi, r.j_q, r.j_pi, r.m, r.k_iterations), (100, 100, 20, 20, 10, 50));
    let outcome = run_experiment(&cfg, |_, _| {}).unwrap();

    let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
    let mut policy_errors = Vec::new();
    let mut improved = 0;
    let mut slowest: f64 = 0.0;
    for run in &outcome.runs {
        let err = grid.iter().map(|x| (run.result.policy.act(&[*x])[0] - x).abs()).fold(0.0, f64::max);
        policy_errors.push(err);
        let d = &run.result.diagnostics;
        let (first, last) = (d[0].perf_error_sup.unwrap(), d[d.len() - 1].perf_error_sup.unwrap());
        if last < first {
            improved += 1;
        }
        slowest = slowest.max(d.iter().map(|x| x.wall_ms).sum::<f64>() / 1000.0);
        println!("  seed {}: policy error {err:.4}, perf error K=1 {first:.4}, K=50 {last:.4}", run.seed);
    }
    let mean_policy = policy_errors.iter().sum::<f64>() / policy_errors.len() as f64;
    let agg = read_aggregate_csv(&dir.path().join(AGGREGATE_FILE)).unwrap();
    let perf = agg.column("perf_error_sup_mean").unwrap();
    let final_perf = perf.last().unwrap().unwrap();

    let a = mean_policy <= 0.1;
    let b = final_perf <= 0.05;
    let c = improved >= 4;
    let t = slowest <= 60.0;
    verdict(
        1,
        "synthetic_1d reproduction",
        a && b && c && t,
        &format!(
            "(a) mean policy error {mean_policy:.4} <= 0.1: {a}; (b) final mean perf error {final_perf:.4} <= 0.05: {b}; \
             (c) improved on {improved}/5 seeds: {c}; slowest seed {slowest:.1}s <= 60s: {t}"
        ),
    );
}

#[test]
fn criterion_2_oracle_equivalence() {
    let _g = lock();
    let start = Instant::now();
    let env = synthetic_1d();
    let cfg = RandpolConfig {
        n_q: 2000,
        j_q: 200,
        m: 50,
        k_iterations: 10,
        evaluate: false,
        gap_resolution: 21,
        seed: 0,
        ..Default::default()
    };
    let result = run(&env, &cfg).unwrap();
    let mdp = discretize_synthetic(101, 101, env.gamma()).unwrap();
    let vi = exact_value_iteration(&mdp, 1e-10).unwrap();

    let mut rng = seeded(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (x, u): (f64, f64) = (rng.random(), rng.random());
        let learned = q_value(&result.q, &[x], &[u]).unwrap();
        worst = worst.max((learned - vi.interpolate(&mdp, x, u)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let threshold = 0.1 * env.q_max();
    let pass = worst <= threshold && secs <= 300.0;
    verdict(
        2,
        "oracle equivalence",
        pass,
        &format!("max |Q_K - Q*_grid| over 500 points {worst:.4} (limit {threshold:.4}); runtime {secs:.1}s <= 300s"),
    );
}

#[test]
fn criterion_3_dominating_chain() {
    let _g = lock();
    let start = Instant::now();
    let mut rng = seeded(7);
    let mut worst_sim: f64 = 0.0;
    let mut mixing_ok = true;
    for q in [0.3, 0.5, 0.9] {
        for ks in [2u64, 5, 10] {
            let stationary = chain_stationary(q, ks).unwrap().probabilities;
            let freq = simulate_chain(q, ks, 1_000_000, &mut rng).unwrap();
            let tv = total_variation(&freq, &stationary).unwrap();
            worst_sim = worst_sim.max(tv);
            for dp in [0.25, 0.1] {
                let steps = mixing_time_bound(dp, q, ks).unwrap().ceil() as u64;
                let law = chain_distribution_after(q, ks, steps).unwrap();
                let tv_exact = total_variation(&law, &stationary).unwrap();
                let ok = tv_exact <= dp;
                mixing_ok &= ok;
                if !ok {
                    println!("  q={q} K*={ks} delta'={dp}: TV {tv_exact:.4} after {steps} steps exceeds {dp}");
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let sim_ok = worst_sim <= 0.01;
    verdict(
        3,
        "dominating chain",
        sim_ok && mixing_ok && secs <= 5.0,
        &format!(
            "worst simulated TV {worst_sim:.5} <= 0.01: {sim_ok}; exact law within delta' at the mixing bound: {mixing_ok}; \
             runtime {secs:.2}s <= 5s"
        ),
    );
}

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

struct Big {
    cc: Consts,
}

impl Big {
    fn new() -> Self {
        Self { cc: Consts::new().unwrap() }
    }

    fn f(&self, v: f64) -> BigFloat {
        BigFloat::from_f64(v, PREC)
    }

    fn ln(&mut self, v: &BigFloat) -> BigFloat {
        v.ln(PREC, RM, &mut self.cc)
    }

    fn pow(&mut self, v: &BigFloat, e: &BigFloat) -> BigFloat {
        v.pow(e, PREC, RM, &mut self.cc)
    }

    fn e(&mut self) -> BigFloat {
        self.cc.e(PREC, RM)
    }

    fn to_f64(&self, v: &BigFloat) -> f64 {
        format!("{v}").parse().unwrap()
    }
}

fn add(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.add(b, PREC, RM)
}
fn sub(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.sub(b, PREC, RM)
}
fn mul(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.mul(b, PREC, RM)
}
fn div(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.div(b, PREC, RM)
}
fn sq(a: &BigFloat) -> BigFloat {
    mul(a, a)
}

/// Raw sample-size formulas written directly from their definitions, with
/// the `J`-th powers kept inside the logarithm.
fn big_bounds(b: &mut Big, i: &TheoryInputs) -> [f64; 5] {
    let (one, two) = (b.f(1.0), b.f(2.0));
    let eps = b.f(i.epsilon);
    let delta = b.f(i.delta);
    let v = b.f(i.q_max);
    let e = b.e();
    let e5 = div(&eps, &b.f(5.0));
    let e3 = div(&eps, &b.f(3.0));
    let jq = b.f(i.j_q as f64);
    let jpi = b.f(i.j_pi as f64);

    let root = |b: &mut Big, k: f64| {
        let l = b.ln(&div(&b.f(k), &delta));
        add(&one, &mul(&two, &l).sqrt(PREC, RM))
    };
    let r5 = root(b, 5.0);
    let j_q0 = sq(&mul(&div(&mul(&b.f(5.0), &b.f(i.c_bound)), &eps), &r5));
    let r3 = root(b, 3.0);
    let j_pi0 = sq(&mul(&div(&mul(&b.f(3.0 * i.l_u), &b.f(i.c_prime)), &eps), &r3));
    let l_m = b.ln(&div(&mul(&b.f(10.0), &b.f(i.n_for_m as f64)), &delta));
    let m0 = mul(&div(&mul(&two, &sq(&v)), &sq(&e5)), &l_m);

    let base_q = div(&mul(&mul(&two, &e), &v), &e5);
    let inner_q = mul(&div(&mul(&mul(&b.f(40.0), &e), &add(&jq, &one)), &delta), &b.pow(&base_q, &jq));
    let n_q0 = mul(&div(&mul(&b.f(128.0), &sq(&v)), &sq(&e5)), &b.ln(&inner_q));
    let base_pi = div(&mul(&mul(&two, &e), &v), &sq(&e3));
    let inner_pi = mul(&div(&mul(&mul(&b.f(24.0), &e), &add(&jpi, &one)), &delta), &b.pow(&base_pi, &jpi));
    let n_pi0 = mul(&div(&mul(&b.f(128.0), &sq(&v)), &sq(&e3)), &b.ln(&inner_pi));
    [j_q0, j_pi0, m0, n_q0, n_pi0].map(|x| b.to_f64(&x))
}

fn ten_digits(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-11 * b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_4_theory_calculators() {
    let _g = lock();
    let mut b = Big::new();
    let mut checks: Vec<(String, f64, f64)> = Vec::new();

    let base = TheoryInputs {
        epsilon: 0.5,
        delta: 0.05,
        gamma: 0.7,
        q_max: 10.0 / 3.0,
        c_mu: 1.0,
        c_bound: 1.0,
        c_prime: 1.0,
        l_u: 2.0,
        j_q: 20,
        j_pi: 20,
        n_for_m: 100,
        q_good: 0.5,
    };
    let small_m = TheoryInputs { q_max: 1.0, epsilon: 5.0, n_for_m: 1, delta: 0.1, ..base };
    for (tag, inputs) in [("base", base), ("small", small_m)] {
        let got = sample_bounds(&inputs).unwrap().raw;
        let want = big_bounds(&mut b, &inputs);
        for (name, g, w) in [
            ("j_q0", got.j_q0, want[0]),
            ("j_pi0", got.j_pi0, want[1]),
            ("m0", got.m0, want[2]),
            ("n_q0", got.n_q0, want[3]),
            ("n_pi0", got.n_pi0, want[4]),
        ] {
            checks.push((format!("{name} ({tag})"), g, w));
        }
    }

    // K* = (ln(C_mu eps) - ln(2 Q_max)) / ln gamma
    for (eps, c_mu, q_max, gamma) in [(0.05, 1.0, 1.0 / 0.3, 0.7), (0.25, 1.0, 1.0, 0.5)] {
        let num = sub(&b.ln(&mul(&b.f(c_mu), &b.f(eps))), &b.ln(&mul(&b.f(2.0), &b.f(q_max))));
        let want = div(&num, &b.ln(&b.f(gamma)));
        checks.push((format!("k_star_raw({eps}, {gamma})"), k_star_raw(eps, c_mu, q_max, gamma).unwrap(), b.to_f64(&want)));
    }

    // delta' = 1 - (1/2 + delta/2)^(1/(K*-1))
    for (delta, ks) in [(0.1, 5u64), (0.5, 2), (0.5, 3)] {
        let base = add(&b.f(0.5), &div(&b.f(delta), &b.f(2.0)));
        let want = sub(&b.f(1.0), &b.pow(&base, &div(&b.f(1.0), &b.f((ks - 1) as f64))));
        checks.push((format!("delta_prime({delta}, {ks})"), delta_prime(delta, ks).unwrap(), b.to_f64(&want)));
    }

    // K_min = ln(4 / ((1/2 - delta/2)(1-q) q^(K*-1)))
    for (delta, q, ks) in [(0.2, 0.9, 10u64), (0.0, 0.5, 2)] {
        let half = sub(&b.f(0.5), &div(&b.f(delta), &b.f(2.0)));
        let qk = b.pow(&b.f(q), &b.f((ks - 1) as f64));
        let den = mul(&mul(&half, &sub(&b.f(1.0), &b.f(q))), &qk);
        let want = b.ln(&div(&b.f(4.0), &den));
        checks.push((format!("min_iterations({delta}, {q}, {ks})"), min_iterations_raw(delta, q, ks).unwrap(), b.to_f64(&want)));
    }

    // Stationary law of the chain.
    for (q, ks) in [(0.9, 5u64), (0.5, 3)] {
        let got = chain_stationary(q, ks).unwrap().probabilities;
        let bq = b.f(q);
        let one_minus = sub(&b.f(1.0), &bq);
        for (i, g) in got.iter().enumerate() {
            let state = i as u64 + 1;
            let want = if state == 1 {
                b.pow(&bq, &b.f((ks - 1) as f64))
            } else if state == ks {
                one_minus.clone()
            } else {
                mul(&one_minus, &b.pow(&bq, &b.f((ks - state) as f64)))
            };
            checks.push((format!("stationary({q}, {ks})[{state}]"), *g, b.to_f64(&want)));
        }
    }

    // ln(1 / (delta' (1-q) q^(K*-1)))
    for (dp, q, ks) in [(0.25, 0.5, 2u64), (0.1, 0.9, 10)] {
        let den = mul(&mul(&b.f(dp), &sub(&b.f(1.0), &b.f(q))), &b.pow(&b.f(q), &b.f((ks - 1) as f64)));
        let want = b.ln(&div(&b.f(1.0), &den));
        checks.push((format!("mixing_time_bound({dp}, {q}, {ks})"), mixing_time_bound(dp, q, ks).unwrap(), b.to_f64(&want)));
    }

    // 2 (1 - gamma^(K+1)) / (1-gamma)^2 (C_mu eps + gamma^(K/2) 2 Q_max)
    for (eps, k, gamma, c_mu, q_max) in [(0.05, 50u64, 0.7, 1.0, 10.0 / 3.0), (0.0, 0, 0.5, 1.0, 1.0)] {
        let g = b.f(gamma);
        let horizon = div(&sub(&b.f(1.0), &b.pow(&g, &b.f((k + 1) as f64))), &sq(&sub(&b.f(1.0), &g)));
        let tail = mul(&mul(&b.pow(&g, &b.f(k as f64 / 2.0)), &b.f(2.0)), &b.f(q_max));
        let want = mul(&mul(&b.f(2.0), &horizon), &add(&mul(&b.f(c_mu), &b.f(eps)), &tail));
        checks.push((
            format!("error_propagation_bound({eps}, {k}, {gamma})"),
            error_propagation_bound(eps, k, gamma, c_mu, q_max).unwrap(),
            b.to_f64(&want),
        ));
    }

    let mismatches: Vec<String> = checks
        .iter()
        .filter(|(_, g, w)| !ten_digits(*g, *w))
        .map(|(n, g, w)| format!("{n}: {g} vs {w}"))
        .collect();
    for m in &mismatches {
        println!("  mismatch {m}");
    }

    // Monotonicity over 100-point sweeps.
    let mut monotone = true;
    let mut prev: Option<(randpol_core::theory::RawSampleBounds, u64)> = None;
    for i in 0..100 {
        let eps = 0.05 + 0.05 * i as f64;
        let inputs = TheoryInputs { epsilon: eps, ..base };
        let raw = sample_bounds(&inputs).unwrap().raw;
        let ks = k_star(eps, base.c_mu, base.q_max, base.gamma).unwrap();
        if let Some((p, pk)) = prev {
            monotone &= raw.j_q0 < p.j_q0 && raw.j_pi0 < p.j_pi0 && raw.m0 < p.m0 && raw.n_q0 < p.n_q0 && raw.n_pi0 < p.n_pi0;
            monotone &= ks <= pk;
        }
        prev = Some((raw, ks));
    }
    let mut prev: Option<randpol_core::theory::RawSampleBounds> = None;
    for i in 0..100 {
        let delta = 0.005 + 0.0099 * i as f64;
        let raw = sample_bounds(&TheoryInputs { delta, ..base }).unwrap().raw;
        if let Some(p) = prev {
            monotone &= raw.j_q0 < p.j_q0 && raw.j_pi0 < p.j_pi0 && raw.m0 < p.m0 && raw.n_q0 < p.n_q0 && raw.n_pi0 < p.n_pi0;
        }
        prev = Some(raw);
    }

    verdict(
        4,
        "theory calculators",
        mismatches.is_empty() && monotone,
        &format!(
            "{}/{} spot values agree with 256-bit evaluation to 10 significant digits; monotone sweeps: {monotone}",
            checks.len() - mismatches.len(),
            checks.len()
        ),
    );
}

fn random_q(rng: &mut impl Rng, state: &Bounds, action: &Bounds, j: usize) -> QFunction {
    let dim = state.dim() + action.dim();
    let dist = FeatureDistribution::new(rng.random_range(0.5..3.0), dim).unwrap();
    let norm = Normalization::concat(&Normalization::from_bounds(state), &Normalization::from_bounds(action));
    let features = sample_feature_params(&dist, j, rng).unwrap().with_normalization(norm).unwrap();
    let c = j as f64;
    let weights = (0..j).map(|_| rng.random_range(-1.0..1.0)).collect();
    QFunction::new(features, weights, c, state.dim()).unwrap()
}

#[test]
fn criterion_5_numerical_soundness() {
    let _g = lock();
    let mut rng = seeded(11);

    // Analytic action gradient against central differences.
    let state = Bounds::new(vec![-1.0, -2.0], vec![1.0, 2.0]).unwrap();
    let actions = [Bounds::cube(1, -3.0, 3.0).unwrap(), Bounds::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap()];
    let h = 1e-5;
    let mut worst_grad: f64 = 0.0;
    for trial in 0..100 {
        let action = &actions[trial % 2];
        let q = random_q(&mut rng, &state, action, 30);
        let x = state.sample(&mut rng);
        let u: Vec<f64> = (0..action.dim())
            .map(|k| {
                let (lo, hi) = (action.lower()[k], action.upper()[k]);
                let pad = 0.05 * (hi - lo);
                rng.random_range(lo + pad..hi - pad)
            })
            .collect();
        let g = q_grad_action(&q, &x, &u).unwrap();
        let fd: Vec<f64> = (0..u.len())
            .map(|k| {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[k] += h;
                dn[k] -= h;
                (q_value(&q, &x, &up).unwrap() - q_value(&q, &x, &dn).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst_grad = worst_grad.max(diff / norm);
    }
    let grad_ok = worst_grad <= 1e-6;

    // Box constraint on random fits, including ones that stop at the cap.
    let unit = Bounds::cube(1, 0.0, 1.0).unwrap();
    let mut box_ok = true;
    let mut capped = 0;
    for trial in 0..1000 {
        let j = 2 + trial % 15;
        let n = 5 + trial % 40;
        let c = rng.random_range(0.01..5.0) * j as f64;
        let template = random_q(&mut rng, &unit, &unit, j);
        let points: Vec<(Vec<f64>, Vec<f64>)> = (0..n).map(|_| (vec![rng.random()], vec![rng.random()])).collect();
        let scale = rng.random_range(0.1..20.0);
        let targets = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let batch = TargetBatch { points, targets };
        let cfg = BoxLsqConfig { max_iterations: 500, ..Default::default() };
        let bound = c / j as f64;
        let weights = match fit_q(&batch, template.features().clone(), c, &cfg) {
            Ok(fit) => fit.q.weights().to_vec(),
            Err(Error::NotConverged { weights, .. }) => {
                capped += 1;
                weights
            }
            Err(e) => panic!("fit failed: {e}"),
        };
        box_ok &= weights.len() == j && weights.iter().all(|w| w.abs() <= bound);
    }

    // Two-weight fits against exhaustive grid search.
    let mut worst_obj: f64 = 0.0;
    for _ in 0..20 {
        let template = random_q(&mut rng, &unit, &unit, 2);
        let n = 20;
        let points: Vec<(Vec<f64>, Vec<f64>)> = (0..n).map(|_| (vec![rng.random()], vec![rng.random()])).collect();
        let targets: Vec<f64> = points.iter().map(|(x, u)| 3.0 * (x[0] - u[0]) + rng.random_range(-0.5..0.5)).collect();
        let c = 1.0;
        let batch = TargetBatch { points: points.clone(), targets: targets.clone() };
        let cfg = BoxLsqConfig { max_iterations: 100_000, tolerance: 1e-15, ..Default::default() };
        let fit = fit_q(&batch, template.features().clone(), c, &cfg).unwrap();
        let design = randpol_core::critic::design_matrix(
            template.features(),
            points.iter().map(|(x, u)| vec![x[0], u[0]]),
        )
        .unwrap();
        let (_, grid_obj) = grid_search_box_lsq(&design, &targets, c / 2.0, 5e-4).unwrap();
        worst_obj = worst_obj.max((fit.objective - grid_obj).abs());
    }
    let grid_ok = worst_obj <= 1e-5;

    verdict(
        5,
        "numerical soundness",
        grad_ok && box_ok && grid_ok,
        &format!(
            "worst gradient relative error {worst_grad:.2e} <= 1e-6: {grad_ok}; box constraint on 1000 fits \
             ({capped} stopped at the cap): {box_ok}; worst objective gap to grid search {worst_obj:.2e} <= 1e-5: {grid_ok}"
        ),
    );
}

#[test]
fn criterion_6_linear_quadratic() {
    let _g = lock();
    let start = Instant::now();
    let params = LqParams::new(0.5, 0.8);
    let env = params.build().unwrap();
    let cfg = RandpolConfig {
        n_q: 2000,
        j_q: 200,
        n_pi: 200,
        j_pi: 20,
        m: 1,
        k_iterations: 10,
        q_bandwidth: Some(2.0),
        pi_bandwidth: Some(0.5),
        c_bound: Some(100.0 * env.q_max()),
        gap_resolution: 21,
        evaluate: false,
        seed: 0,
        ..Default::default()
    };
    let result = run(&env, &cfg).unwrap();
    let oracle = riccati_oracle(&params.lq_spec(), params.gamma, 1e-12).unwrap();

    let mut rng = seeded(99);
    let mut worst: f64 = 0.0;
    let (mut learned_total, mut optimal_total) = (0.0, 0.0);
    for _ in 0..10 {
        let x0 = vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let u0 = result.policy.act(&x0);
        let ret = discounted_return(&env, &result.policy, &x0, &u0, 200, &mut rng);
        let opt = oracle.value(&x0);
        let rel = (ret - opt).abs() / opt.abs();
        worst = worst.max(rel);
        learned_total += ret;
        optimal_total += opt;
        println!("  x0 = ({:.3}, {:.3}): return {ret:.5}, optimal {opt:.5}, relative gap {rel:.4}", x0[0], x0[1]);
    }
    let aggregate = (learned_total - optimal_total).abs() / optimal_total.abs();
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 0.1 && secs <= 180.0;
    verdict(
        6,
        "linear-quadratic control",
        pass,
        &format!(
            "worst per-state relative gap {worst:.4} <= 0.1 (aggregate {aggregate:.4}); runtime {secs:.1}s <= 180s"
        ),
    );
}

fn determinism_config(dir: &std::path::Path, env: EnvSpec) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(env);
    cfg.output_dir = dir.to_path_buf();
    cfg.seeds = vec![0, 5, 9];
    let r = &mut cfg.randpol;
    r.k_iterations = 4;
    r.n_q = 60;
    r.n_pi = 30;
    r.m = 3;
    r.j_q = 15;
    r.j_pi = 6;
    r.held_out = 30;
    r.gap_resolution = 11;
    r.eval.grid = 6;
    r.eval.horizon = 20;
    r.eval.episodes = 5;
    r.lsq.max_iterations = 500;
    cfg
}

#[test]
fn criterion_7_determinism() {
    let _g = lock();
    let mut identical = true;
    let mut compared = 0;
    for env in [EnvSpec::Synthetic1d(SyntheticSpec::default()), EnvSpec::LinearQuadratic(LqSpec::default())] {
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        for (dir, threads) in dirs.iter().zip([1, 1, 4]) {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_experiment(&determinism_config(dir.path(), env), |_, _| {})).unwrap();
        }
        let mut names: Vec<String> = [0, 5, 9].iter().map(|s| seed_file(*s)).collect();
        names.push(AGGREGATE_FILE.to_string());
        for name in &names {
            let reference = std::fs::read(dirs[0].path().join(name)).unwrap();
            for other in &dirs[1..] {
                compared += 1;
                let bytes = std::fs::read(other.path().join(name)).unwrap();
                if bytes != reference {
                    println!("  {} differs for {}", name, env.name());
                    identical = false;
                }
            }
        }
    }
    verdict(
        7,
        "determinism",
        identical,
        &format!("{compared} CSV comparisons across repeated runs and 1 vs 4 worker threads, all byte-identical: {identical}"),
    );
}

#[test]
fn criterion_8_excluded_benchmarks() {
    println!(
        "PASS criterion 8 (excluded benchmarks): the Lunar Lander reward table and the Minitaur results depend on \
         external physics engines and millions of training steps; they are not reproduced and are replaced by \
         criteria 1-6"
    );
}
