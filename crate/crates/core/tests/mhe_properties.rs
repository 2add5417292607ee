mod common;

use common::{dense_window_solution, protocol, rom_generated_run, three_sensor_layout};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tunnel_rom::dataio::{Channel, SensorLayout};
use tunnel_rom::mhe::solve_horizon;
use tunnel_rom::mhe::{
    auto_sigma, estimate_run, run_offline, sensor_readings, HorizonBuffer, HorizonSolver, HorizonWeights, MheConfig,
    MheEstimator, ObservabilityGate, OutputBounds, OutputConstraints, ResolvedWeights, SolverSettings, Weight,
};
use tunnel_rom::rom::{discretize, open_loop_simulate, DiscreteModel};
use tunnel_rom::Error;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Random model, weights and a buffer that has seen `steps` samples.
fn random_instance(seed: u64) -> (DiscreteModel<f64>, HorizonWeights<f64>, HorizonBuffer<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6);
    let p = rng.random_range(1..=4);
    let m = rng.random_range(1..=3);
    let horizon = rng.random_range(1..=10);
    let steps = rng.random_range(1..=2 * horizon);
    let model = DiscreteModel {
        ad: random_matrix(&mut rng, n, n, 0.6),
        bd: random_matrix(&mut rng, n, m, 1.0),
        c: random_matrix(&mut rng, p, n, 1.0),
        d: random_matrix(&mut rng, p, m, 0.5),
        dt: 1.0,
    };
    let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
    let weights =
        HorizonWeights::from_matrices(&random_spd(&mut rng, p), &random_spd(&mut rng, n), lambda, horizon).unwrap();
    let mut buffer = HorizonBuffer::new(horizon, random_matrix(&mut rng, n, 1, 1.0).column(0).into_owned());
    for _ in 0..steps {
        buffer.push(
            random_matrix(&mut rng, p, 1, 5.0).column(0).into_owned(),
            random_matrix(&mut rng, m, 1, 1.0).column(0).into_owned(),
        );
    }
    (model, weights, buffer)
}

fn oracle_gap(seed: u64) -> f64 {
    let (model, weights, buffer) = random_instance(seed);
    let sol = solve_horizon(&model, &buffer, &weights, None, &SolverSettings::default()).unwrap();
    let dense = dense_window_solution(&model, &buffer, &weights);
    assert_eq!(sol.states.len(), dense.len());
    let scale = dense.iter().map(|z| z.amax()).fold(1.0, f64::max);
    sol.states
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn unconstrained_window_matches_dense_least_squares() {
    let worst = (0..100).map(oracle_gap).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "worst relative gap {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_random_window_matches_dense_least_squares(seed in any::<u64>()) {
        let gap = oracle_gap(seed);
        prop_assert!(gap <= 1e-8, "gap {gap:e}");
    }
}

#[test]
fn measurement_dominated_window_follows_the_data() {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = DiscreteModel {
        ad: random_matrix(&mut rng, n, n, 0.5),
        bd: random_matrix(&mut rng, n, 1, 1.0),
        c: DMatrix::identity(n, n),
        d: DMatrix::zeros(n, 1),
        dt: 1.0,
    };
    let weights = HorizonWeights::from_diagonals(&[1e-12; 4], &[1.0; 4], 1.0, 6).unwrap();
    let mut buffer = HorizonBuffer::new(6, DVector::zeros(n));
    let mut ys = Vec::new();
    for _ in 0..9 {
        let y = random_matrix(&mut rng, n, 1, 10.0).column(0).into_owned();
        ys.push(y.clone());
        buffer.push(y, DVector::from_element(1, rng.random::<f64>()));
    }
    let sol = solve_horizon(&model, &buffer, &weights, None, &SolverSettings::default()).unwrap();
    for (z, y) in sol.states.iter().zip(&ys[ys.len() - 6..]) {
        assert!((z - y).amax() <= 1e-6, "gap {:e}", (z - y).amax());
    }
}

#[test]
fn active_constraints_hold_at_tolerance() {
    let model = DiscreteModel {
        ad: DMatrix::from_element(1, 1, 0.9),
        bd: DMatrix::from_element(1, 1, 1.0),
        c: DMatrix::from_element(1, 1, 1.0),
        d: DMatrix::zeros(1, 1),
        dt: 1.0,
    };
    let cons = OutputConstraints {
        c: DMatrix::from_row_slice(2, 1, &[1.0, -2.0]),
        d: DMatrix::zeros(2, 1),
        lower: vec![Some(0.0), None],
        upper: vec![None, Some(1.0)],
    };
    let weights = HorizonWeights::from_diagonals(&[0.01], &[1.0], 1.0, 5).unwrap();
    let mut buffer = HorizonBuffer::new(5, DVector::zeros(1));
    for y in [-3.0, -1.0, 0.5, -2.0, 0.2, -0.7] {
        buffer.push(DVector::from_element(1, y), DVector::zeros(1));
    }
    let sol = solve_horizon(&model, &buffer, &weights, Some(&cons), &SolverSettings::default()).unwrap();
    assert!(sol.active_constraints > 0);
    for z in &sol.states {
        let out = &cons.c * z;
        assert!(out[0] >= -1e-9, "lower bound violated: {}", out[0]);
        assert!(out[1] <= 1.0 + 1e-9, "upper bound violated: {}", out[1]);
    }
}

fn noisy_config(seed: u64) -> MheConfig {
    let mut cfg = MheConfig::default();
    cfg.noise.temperature_sigma = 0.5;
    cfg.noise.smoke_sigma = 2e-5;
    cfg.noise.seed = seed;
    cfg
}

#[test]
fn reconstructed_smoke_respects_its_bound_under_noise() {
    let p = protocol();
    let (trace, _) = estimate_run(&p.model, &p.runs.validation, &three_sensor_layout(), &noisy_config(11)).unwrap();
    let min = trace.smoke.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    assert!(min >= -1e-9, "minimum smoke {min:e}");
    assert!(trace.diagnostics.iter().any(|d| d.active_constraints > 0));
}

#[test]
fn estimator_beats_open_loop_at_sensor_nodes_on_every_run() {
    let p = protocol();
    let layout = three_sensor_layout();
    let cfg = MheConfig::default();
    for run in p.runs.train.iter().chain([&p.runs.validation]) {
        let rep = run_offline(&p.model, run, &layout, &cfg).unwrap();
        for i in layout.nodes() {
            let (m, o) = (rep.mhe_rmse.temperature[i - 1], rep.open_loop_rmse.temperature[i - 1]);
            assert!(m < o, "temperature node {i}: mhe {m} open-loop {o}");
            let (m, o) = (rep.mhe_rmse.smoke[i - 1], rep.open_loop_rmse.smoke[i - 1]);
            assert!(m < o, "smoke node {i}: mhe {m} open-loop {o}");
        }
    }
}

#[test]
fn warm_up_hands_over_without_a_jump() {
    let p = protocol();
    let cfg = MheConfig::default();
    let (trace, _) = estimate_run(&p.model, &p.runs.validation, &three_sensor_layout(), &cfg).unwrap();
    let change = |k: usize| {
        (0..trace.node_count())
            .map(|i| (trace.temperature[i][k] - trace.temperature[i][k - 1]).abs())
            .fold(0.0, f64::max)
    };
    let typical = (1..trace.len()).map(change).sum::<f64>() / (trace.len() - 1) as f64;
    // steps W-1 and W are trace rows W-2 and W-1
    let handover = change(cfg.horizon - 1);
    assert!(handover <= 10.0 * typical, "handover {handover} typical {typical}");
}

#[test]
fn estimates_are_deterministic() {
    let p = protocol();
    let layout = three_sensor_layout();
    for cfg in [MheConfig::default(), noisy_config(5)] {
        let a = estimate_run(&p.model, &p.runs.validation, &layout, &cfg).unwrap();
        let b = estimate_run(&p.model, &p.runs.validation, &layout, &cfg).unwrap();
        assert_eq!(a, b);
    }
    let a = sensor_readings(&p.runs.validation, &layout, &noisy_config(5)).unwrap();
    let b = sensor_readings(&p.runs.validation, &layout, &noisy_config(6)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn exact_model_data_is_recovered_with_full_sensing() {
    let p = protocol();
    let truth = rom_generated_run(&p.model, &p.runs.validation);
    let layout = SensorLayout::full(truth.node_count());
    let mut cfg = MheConfig::default();
    // the model's own smoke response dips marginally below zero
    cfg.bounds = OutputBounds::none();
    let (trace, _) = estimate_run(&p.model, &truth, &layout, &cfg).unwrap();
    let ol = open_loop_simulate(&p.model, &truth).unwrap();
    for i in 0..truth.node_count() {
        let dt = common::max_abs_diff(&trace.temperature[i], &truth.temperature[i]);
        let ds = common::max_abs_diff(&trace.smoke[i], &truth.smoke[i]);
        assert!(
            dt <= 1e-6 && ds <= 1e-6,
            "node {}: temperature {dt:e} smoke {ds:e}",
            i + 1
        );
    }
    for (a, b) in trace.states.iter().zip(&ol.states) {
        assert!(common::max_abs_diff(a, b) <= 1e-6);
    }
}

#[test]
fn out_of_order_step_is_rejected() {
    let p = protocol();
    let layout = three_sensor_layout();
    let model = p.model.with_layout(&layout).unwrap();
    let cfg = MheConfig::default();
    let w = ResolvedWeights::resolve(&cfg, &model, (1.0, 1e-5)).unwrap();
    let mut est = MheEstimator::new(&model, &cfg, &w, None).unwrap();
    let y = DVector::from_element(3, 15.0);
    let s = DVector::zeros(3);
    assert!(matches!(
        est.step(2, &y, &s, 0.0, 15.0),
        Err(Error::StepOrder { expected: 1, got: 2 })
    ));
    est.step(1, &y, &s, 0.0, 15.0).unwrap();
    assert!(matches!(
        est.step(1, &y, &s, 0.0, 15.0),
        Err(Error::StepOrder { expected: 2, got: 1 })
    ));
    assert_eq!(est.step_count(), 1);
}

#[test]
fn smoke_chain_uses_same_step_temperature_estimates() {
    let p = protocol();
    let run = &p.runs.validation;
    let layout = three_sensor_layout();
    let model = p.model.with_layout(&layout).unwrap();
    let cfg = MheConfig::default();
    let meas = sensor_readings(run, &layout, &cfg).unwrap();
    let weights = ResolvedWeights::resolve(&cfg, &model, auto_sigma(run, &meas, &cfg)).unwrap();
    let mut est = MheEstimator::new(&model, &cfg, &weights, None).unwrap();

    let dt = model.dt();
    let smoke_full = discretize(&model.smoke.full_model(), dt).unwrap();
    let cons = OutputConstraints {
        c: smoke_full.c.clone(),
        d: smoke_full.d.clone(),
        lower: vec![Some(0.0); model.node_count()],
        upper: vec![None; model.node_count()],
    };
    let sw = HorizonWeights::from_diagonals(&weights.smoke_r, &weights.smoke_q, cfg.lambda, cfg.horizon).unwrap();
    let settings = SolverSettings {
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
    };
    let mut solver = HorizonSolver::new(
        discretize(&model.smoke.sensor_model(), dt).unwrap(),
        sw,
        Some(cons),
        settings,
    )
    .unwrap();
    let mut buffer = HorizonBuffer::new(cfg.horizon, DVector::zeros(model.smoke.state_dim()));
    let inputs = |temps: &DVector<f64>, k: usize| {
        DVector::from_iterator(
            model.smoke.inputs.len(),
            model.smoke.inputs.iter().map(|c| match *c {
                Channel::Hrr => run.hrr[k],
                Channel::Ambient => run.ambient[k],
                Channel::Temperature(i) => temps[i - 1],
                Channel::Smoke(_) => 0.0,
            }),
        )
    };
    let start = run.hrr.iter().position(|q| *q > 0.0).unwrap();
    let mut saw_difference = false;
    for k in 0..start + cfg.horizon - 1 {
        let yt = DVector::from_vec(meas.temperature[k].clone());
        let ys = DVector::from_vec(meas.smoke[k].clone());
        let s = est.step(k + 1, &yt, &ys, run.hrr[k], run.ambient[k]).unwrap();
        buffer.push(ys, inputs(&s.temperature, k));
        let sol = solver.solve(&buffer).unwrap();
        if k + 1 >= cfg.horizon {
            buffer.set_prior(sol.states[1].clone());
        }
        assert!((sol.current() - &s.smoke_state).amax() <= 1e-12, "step {}", k + 1);
        let truth: DVector<f64> =
            DVector::from_iterator(run.node_count(), (0..run.node_count()).map(|i| run.temperature[i][k]));
        saw_difference |= (inputs(&truth, k) - inputs(&s.temperature, k)).amax() > 1e-9;
    }
    assert!(saw_difference, "temperature estimates never differed from the truth");
}

#[test]
fn layouts_without_enough_sensors_are_refused() {
    let p = protocol();
    let run = &p.runs.validation;
    let cfg = MheConfig::default();
    let empty = SensorLayout::empty(run.node_count());
    assert!(matches!(
        estimate_run(&p.model, run, &empty, &cfg),
        Err(Error::NotObservable { rank: 0, .. })
    ));
    let mut partial = cfg.clone();
    partial.observability = ObservabilityGate::Partial;
    assert!(matches!(
        estimate_run(&p.model, run, &empty, &partial),
        Err(Error::NotObservable { rank: 0, .. })
    ));
    let middle = SensorLayout::new([5], run.node_count()).unwrap();
    assert!(matches!(
        estimate_run(&p.model, run, &middle, &cfg),
        Err(Error::NotObservable { .. })
    ));
    assert!(estimate_run(&p.model, run, &middle, &partial).is_ok());
}

#[test]
fn explicit_weights_override_auto() {
    let p = protocol();
    let model = p.model.with_layout(&three_sensor_layout()).unwrap();
    let mut cfg = MheConfig::default();
    cfg.thermal.r = Weight::Diagonal(vec![0.1, 0.2, 0.3]);
    let w = ResolvedWeights::resolve(&cfg, &model, (9.0, 9.0)).unwrap();
    assert_eq!(w.thermal_r, vec![0.1, 0.2, 0.3]);
    assert_eq!(w.smoke_r, vec![81.0; 3]);
    assert_eq!(w.thermal_q, vec![1e-2; model.thermal.state_dim()]);
}

/// Constrained optimum by enumerating every working set of a small QP.
fn brute_force_qp(h: &DMatrix<f64>, g: &DVector<f64>, rows: &[(DVector<f64>, f64)]) -> DVector<f64> {
    let dim = g.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let act: Vec<_> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        let k = act.len();
        let mut kkt = DMatrix::zeros(dim + k, dim + k);
        let mut rhs = DVector::zeros(dim + k);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(h);
        rhs.rows_mut(0, dim).copy_from(g);
        for (a, &i) in act.iter().enumerate() {
            for s in 0..dim {
                kkt[(dim + a, s)] = rows[i].0[s];
                kkt[(s, dim + a)] = rows[i].0[s];
            }
            rhs[dim + a] = rows[i].1;
        }
        let svd = kkt.svd(true, true);
        if svd.singular_values.min() < 1e-10 * svd.singular_values.max() {
            continue;
        }
        let x = svd.solve(&rhs, 0.0).unwrap().rows(0, dim).into_owned();
        if rows.iter().all(|(c, b)| c.dot(&x) >= b - 1e-9) {
            let cost = 0.5 * x.dot(&(h * &x)) - g.dot(&x);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, x));
            }
        }
    }
    best.expect("feasible QP").1
}

#[test]
fn constrained_window_matches_enumerated_working_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..60 {
        let n = rng.random_range(1..=2);
        let w = rng.random_range(1..=3);
        let model = DiscreteModel {
            ad: random_matrix(&mut rng, n, n, 0.8),
            bd: random_matrix(&mut rng, n, 1, 1.0),
            c: random_matrix(&mut rng, 1, n, 1.0),
            d: DMatrix::zeros(1, 1),
            dt: 1.0,
        };
        // two outputs, the second often nearly parallel to the first
        let c1 = random_matrix(&mut rng, 1, n, 1.0);
        let tilt = 0.1 * rng.random_range(0..2) as f64;
        let c2 = &c1 * -2.0 + random_matrix(&mut rng, 1, n, tilt);
        let cons = OutputConstraints {
            c: DMatrix::from_rows(&[c1.row(0).into_owned(), c2.row(0).into_owned()]),
            d: DMatrix::zeros(2, 1),
            lower: vec![Some(0.0), None],
            upper: vec![Some(3.0), Some(1.0)],
        };
        let weights =
            HorizonWeights::from_matrices(&random_spd(&mut rng, 1), &random_spd(&mut rng, n), 1.0, w).unwrap();
        let mut buffer = HorizonBuffer::new(w, DVector::zeros(n));
        for _ in 0..w {
            buffer.push(
                random_matrix(&mut rng, 1, 1, 6.0).column(0).into_owned(),
                random_matrix(&mut rng, 1, 1, 1.0).column(0).into_owned(),
            );
        }
        let mut solver =
            HorizonSolver::new(model, weights.clone(), Some(cons.clone()), SolverSettings::default()).unwrap();
        let sol = solver.solve(&buffer).unwrap();
        let lambda = tunnel_rom::mhe::effective_horizon(buffer.step(), w, weights.lambda).1;
        let h = solver.normal_matrix(w, lambda);
        let g = solver.gradient(&buffer, lambda);
        let mut rows = Vec::new();
        for j in 0..w {
            for (r, lo, hi) in [(0, Some(0.0), Some(3.0)), (1, None, Some(1.0))] {
                let mut v = DVector::zeros(w * n);
                v.rows_mut(j * n, n).copy_from(&cons.c.row(r).transpose());
                if let Some(lo) = lo {
                    rows.push((v.clone(), lo));
                }
                if let Some(hi) = hi {
                    rows.push((-v, -hi));
                }
            }
        }
        let expect = brute_force_qp(&h, &g, &rows);
        let got = DVector::from_iterator(w * n, sol.states.iter().flat_map(|z| z.iter().copied()));
        assert!(
            (&got - &expect).amax() <= 1e-7 * (1.0 + expect.amax()),
            "{got} vs {expect}"
        );
    }
}
