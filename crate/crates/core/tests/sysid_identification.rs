mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tunnel_rom::dataio::ModelKind;
use tunnel_rom::sysid::{subspace_identify, validate_node, Conversion, IdentificationConfig, ModelFile};
use tunnel_rom::StateSpace;

fn white(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Discrete rollout `x+ = a x + b u`, `y = c x + d u`.
fn rollout(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = DVector::zeros(a.nrows());
    let mut y = DMatrix::zeros(u.nrows(), c.nrows());
    for k in 0..u.nrows() {
        let uk = u.row(k).transpose();
        y.set_row(k, &(c * &x + d * &uk).transpose());
        x = a * &x + b * &uk;
    }
    y
}

fn assert_markov_close(got: &[DMatrix<f64>], want: &[DMatrix<f64>], rel: f64) {
    let scale = want.iter().map(|h| h.amax()).fold(0.0, f64::max);
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        let gap = (g - w).amax();
        assert!(gap <= rel * scale, "Markov parameter {k}: gap {gap:e}, scale {scale:e}");
    }
}

#[test]
fn every_node_model_fits_the_validation_run() {
    let p = common::protocol();
    for m in p.model.thermal_nodes.iter().chain(&p.model.smoke_nodes) {
        let v = validate_node(m, &p.runs.validation).unwrap();
        assert!(
            v.relative() <= 0.15,
            "{} node {}: {:.3} of range",
            m.kind(),
            m.node(),
            v.relative()
        );
        let eig = tunnel_rom::linalg::eigenvalues(&m.model.a).unwrap();
        assert!(
            eig.iter().all(|l| l.re <= 0.0),
            "{} node {} unstable",
            m.kind(),
            m.node()
        );
    }
}

#[test]
fn first_order_system_markov_parameters() {
    let m = |v| DMatrix::from_element(1, 1, v);
    let u = white(2000, 1, 11);
    let y = rollout(&m(0.9), &m(1.0), &m(1.0), &m(0.0), &u);
    let cfg = IdentificationConfig {
        order: 1,
        ..Default::default()
    };
    let ss = subspace_identify(&u, &y, &[], &cfg, 1.0).unwrap();
    assert_eq!(ss.conversion, Conversion::MatrixLog);
    let want: Vec<DMatrix<f64>> = (0..20)
        .map(|k| m(if k == 0 { 0.0 } else { 0.9f64.powi(k - 1) }))
        .collect();
    let got = ss.markov_parameters(20);
    for (k, (g, w)) in got.iter().zip(&want).enumerate() {
        let (g, w) = (g[(0, 0)], w[(0, 0)]);
        assert!((g - w).abs() <= 1e-6 * w.abs().max(1e-12), "k={k}: {g} vs {w}");
    }
}

#[test]
fn reidentification_reproduces_transfer_behaviour() {
    let truth = StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[-0.1, 0.05, -0.05, -0.2]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.4, 0.8]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
        DMatrix::zeros(1, 2),
        1.0,
    )
    .unwrap();
    let (ad, bd) = truth.zoh(1.0);
    let u = white(3000, 2, 5);
    let y = rollout(&ad, &bd, &truth.c, &truth.d, &u);
    let ss = subspace_identify(&u, &y, &[], &IdentificationConfig::default(), 1.0).unwrap();
    assert_markov_close(&ss.markov_parameters(20), &truth.markov_parameters(20), 1e-6);
}

#[test]
fn euler_gap_is_first_order() {
    let model = StateSpace::new(
        DMatrix::from_row_slice(2, 2, &[-0.3, 0.1, 0.0, -0.5]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DMatrix::zeros(1, 1),
        1.0,
    )
    .unwrap();
    // constant input, so the zero-order-hold map is the exact solution
    let horizon = 10.0;
    let gap = |dt: f64| {
        let steps = (horizon / dt).round() as usize;
        let u = DMatrix::from_element(steps + 1, 1, 1.0);
        let x0 = DVector::zeros(2);
        let euler = model.simulate_euler(&u, &x0, dt).unwrap();
        let (ad, bd) = model.zoh(dt);
        let exact = rollout(&ad, &bd, &model.c, &model.d, &u);
        (euler - exact).amax()
    };
    for dt in [0.2, 0.1, 0.05] {
        let ratio = gap(dt) / gap(dt / 2.0);
        assert!((ratio - 2.0).abs() <= 0.4, "dt={dt}: ratio {ratio}");
    }
}

#[test]
fn model_file_round_trip_keeps_behaviour() {
    let p = common::protocol();
    let file = p.model.to_model_file(IdentificationConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    file.save(&path).unwrap();
    let back = ModelFile::load(&path).unwrap();
    assert_eq!(back.nodes.len(), 20);
    assert_eq!(back.compact.len(), 2);
    for kind in [ModelKind::Thermal, ModelKind::Smoke] {
        let orig = match kind {
            ModelKind::Thermal => &p.model.thermal_nodes,
            ModelKind::Smoke => &p.model.smoke_nodes,
        };
        for (a, b) in orig.iter().zip(back.models(kind).unwrap()) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.markov_parameters(20), b.markov_parameters(20));
        }
    }
    let compact = tunnel_rom::CompactModel::from_record(&back.compact[0]).unwrap();
    assert_eq!(compact.a, p.model.thermal.a);
}

#[test]
fn unreadable_model_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let err = ModelFile::load(&path).unwrap_err();
    assert!(err.to_string().contains("bad.json"), "{err}");
}
