#![allow(dead_code)]

use lazylink::hybridsim::{ClosedLoop, InitialCondition};
use lazylink::matlib::Matrix;
use lazylink::policy::{
    design_async, design_sync, AsyncPolicy, Policy, SyncPolicy, TabuadaBaseline, TimerParams,
};
use lazylink::system::{build_error_system, Cascade, ErrorSystem, ObserverConfig};

pub fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

pub fn scalar_cascade() -> Cascade {
    Cascade::new(
        m(&[&[2.0, 1.5], &[2.0, 0.0]]),
        m(&[&[-18.0], &[0.0]]),
        m(&[&[0.5, 0.5]]),
    )
    .unwrap()
}

pub fn lqr_cascade() -> Cascade {
    Cascade::new(
        m(&[&[1.0, 1.0], &[0.0, 1.0]]),
        m(&[&[-2.1961, -0.7545], &[-0.7545, -2.7146]]),
        Matrix::identity(2),
    )
    .unwrap()
}

pub fn err(c: &Cascade) -> ErrorSystem {
    build_error_system(c).unwrap()
}

pub fn sync_policy(p2: f64) -> SyncPolicy {
    design_sync(
        &err(&scalar_cascade()),
        &Matrix::identity(2),
        1e-3,
        1e3,
        &m(&[&[p2]]),
        TimerParams::default(),
    )
    .unwrap()
}

pub fn async_policy(alpha: [f64; 2]) -> AsyncPolicy {
    design_async(
        &err(&lqr_cascade()),
        &Matrix::identity(2),
        1e-3,
        0.05,
        &alpha,
        &[1.0, 1.0],
        TimerParams::default(),
    )
    .unwrap()
}

pub fn baseline() -> Policy {
    Policy::Tabuada(TabuadaBaseline::new(0.9, 1.0, 4.046, TimerParams::default()).unwrap())
}

pub fn observer() -> ObserverConfig {
    ObserverConfig::new(&scalar_cascade(), m(&[&[14.77], &[6.68]])).unwrap()
}

pub fn state_loop(c: Cascade) -> ClosedLoop {
    ClosedLoop::new(c, None)
}

pub fn init(x0: &[f64], q: usize) -> InitialCondition {
    InitialCondition {
        x0: x0.to_vec(),
        nu0: vec![0.0; q],
        xhat0: None,
        tau0: None,
    }
}

/// exp(M t) by scaling and squaring of a truncated Taylor series.
pub fn expm(mat: &Matrix, t: f64) -> Matrix {
    let n = mat.rows();
    let scaled = mat.scale(t);
    let mut s = 0u32;
    while scaled.max_abs() / 2f64.powi(s as i32) > 0.5 {
        s += 1;
    }
    let a = scaled.scale(1.0 / 2f64.powi(s as i32));
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..30 {
        term = term.matmul(&a).unwrap().scale(1.0 / k as f64);
        sum = sum.add(&term).unwrap();
    }
    for _ in 0..s {
        sum = sum.matmul(&sum).unwrap();
    }
    sum
}
