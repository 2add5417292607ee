#![allow(dead_code)]

use std::sync::OnceLock;

use tunnel_rom::dataio::{concatenate_runs, SensorLayout, TimeSeriesRun};
use tunnel_rom::harness::{identify_tunnel, FIRE_NODE};
use tunnel_rom::simkit::{generate_protocol_runs, ProtocolRuns, SimConfig};
use tunnel_rom::TunnelModel;

pub struct Protocol {
    pub runs: ProtocolRuns,
    pub train: TimeSeriesRun,
    pub model: TunnelModel,
}

/// Protocol runs and the model identified from them, built once per test
/// binary.
pub fn protocol() -> &'static Protocol {
    static CELL: OnceLock<Protocol> = OnceLock::new();
    CELL.get_or_init(|| {
        let runs = generate_protocol_runs(&SimConfig::default()).unwrap();
        let train = concatenate_runs(&runs.train).unwrap();
        let model = identify_tunnel(
            &train,
            &Default::default(),
            &[FIRE_NODE],
            &SensorLayout::full(train.node_count()),
        )
        .unwrap();
        Protocol { runs, train, model }
    })
}

pub fn three_sensor_layout() -> SensorLayout {
    SensorLayout::new([1, 5, 10], 10).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

use nalgebra::{DMatrix, DVector};
use tunnel_rom::mhe::{effective_horizon, HorizonBuffer, HorizonWeights};
use tunnel_rom::rom::{open_loop_simulate, DiscreteModel};

/// Unconstrained window estimate from the stacked weighted residual
/// `[L_R (y - Cz - Du); L_Q (z+ - Az - Bu); sqrt(lambda) (z0 - prior)]`,
/// solved by Householder QR. Independent of the solver's normal-matrix
/// path.
pub fn dense_window_solution(
    model: &DiscreteModel<f64>,
    buffer: &HorizonBuffer<f64>,
    weights: &HorizonWeights<f64>,
) -> Vec<DVector<f64>> {
    let (n, p) = (model.ad.nrows(), model.c.nrows());
    let w = buffer.len();
    let (_, lambda) = effective_horizon(buffer.step(), weights.horizon, weights.lambda);
    let lr = weights.r_inv.clone().cholesky().unwrap().l().transpose();
    let lq = weights.q_inv.clone().cholesky().unwrap().l().transpose();
    let rows = w * p + (w - 1) * n + n;
    let mut j = DMatrix::<f64>::zeros(rows, w * n);
    let mut r = DVector::<f64>::zeros(rows);
    let ys: Vec<_> = buffer.measurements().iter().collect();
    let us: Vec<_> = buffer.inputs().iter().collect();
    let mut row = 0;
    for k in 0..w {
        j.view_mut((row, k * n), (p, n)).copy_from(&(&lr * &model.c));
        r.rows_mut(row, p).copy_from(&(&lr * (ys[k] - &model.d * us[k])));
        row += p;
    }
    for k in 0..w - 1 {
        j.view_mut((row, (k + 1) * n), (n, n)).copy_from(&lq);
        j.view_mut((row, k * n), (n, n)).copy_from(&(-&lq * &model.ad));
        r.rows_mut(row, n).copy_from(&(&lq * &model.bd * us[k]));
        row += n;
    }
    let s = lambda.sqrt();
    j.view_mut((row, 0), (n, n))
        .copy_from(&(DMatrix::<f64>::identity(n, n) * s));
    r.rows_mut(row, n).copy_from(&(buffer.prior() * s));
    let qr = j.qr();
    let x = qr.r().solve_upper_triangular(&(qr.q().transpose() * r)).unwrap();
    (0..w).map(|k| x.rows(k * n, n).into_owned()).collect()
}

/// A run whose node signals are the model's own open-loop outputs on the
/// inputs of `run`.
pub fn rom_generated_run(model: &TunnelModel, run: &TimeSeriesRun) -> TimeSeriesRun {
    let ol = open_loop_simulate(model, run).unwrap();
    assert!(ol.diverged_at.is_none());
    let mut out = run.clone();
    out.temperature = ol.temperature;
    out.smoke = ol.smoke;
    out
}
