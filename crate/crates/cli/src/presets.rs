//! Built-in experiments. Values reproduce the reference examples; the observer
//! gain is stored with the sign that makes A − LC Hurwitz for the
//! ẋ̂ = Ax̂ + Bν + L(y − Cx̂) convention used here.

use lazylink::hybridsim::{InitialCondition, NoiseKind, PerturbationSpec, SimConfig};
use lazylink::matlib::Matrix;
use lazylink::policy::TimerParams;

use crate::config::{
    AsyncSpec, ExperimentConfig, OutputSpec, PolicySpec, SyncSpec, SystemSpec, TabuadaSpec,
};

pub const PRESET_NAMES: [&str; 4] = [
    "paper-7.1-sync",
    "paper-7.1-tabuada",
    "paper-7.1-observer",
    "paper-7.2-async",
];

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(rows).expect("preset matrices are rectangular")
}

pub fn scalar_output_system() -> SystemSpec {
    SystemSpec {
        a: m(&[&[2.0, 1.5], &[2.0, 0.0]]),
        b: m(&[&[-18.0], &[0.0]]),
        c: m(&[&[0.5, 0.5]]),
        l: None,
    }
}

pub fn lqr_system() -> SystemSpec {
    SystemSpec {
        a: m(&[&[1.0, 1.0], &[0.0, 1.0]]),
        b: m(&[&[-2.1961, -0.7545], &[-0.7545, -2.7146]]),
        c: Matrix::identity(2),
        l: None,
    }
}

pub fn reference_p1() -> Matrix {
    m(&[&[0.091, 0.067], &[0.067, 0.573]])
}

pub fn sync_spec(p2: f64) -> SyncSpec {
    SyncSpec {
        timer: TimerParams::default(),
        lambda: 1.0,
        p1: Some(reference_p1()),
        q: None,
        p2: m(&[&[p2]]),
        gamma_x: 1e-3,
        gamma_e: 1e3,
        observer_weight: None,
    }
}

/// Uniform ±0.1 corruption of transmitted samples, off unless enabled.
pub fn channel_noise(seed: u64) -> PerturbationSpec {
    PerturbationSpec {
        sample_noise_amp: 0.1,
        noise_kind: NoiseKind::Uniform,
        seed,
        ..PerturbationSpec::default()
    }
}

fn initial(x0: &[f64], q: usize) -> InitialCondition {
    InitialCondition {
        x0: x0.to_vec(),
        nu0: vec![0.0; q],
        xhat0: None,
        tau0: None,
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let sim = SimConfig::default();
    let cfg = match name {
        "paper-7.1-sync" => ExperimentConfig {
            name: name.into(),
            system: scalar_output_system(),
            policy: PolicySpec::Sync(sync_spec(0.1)),
            initial: initial(&[1.0, 1.0], 1),
            sim,
            perturbation: PerturbationSpec::default(),
            outputs: OutputSpec::default(),
        },
        "paper-7.1-tabuada" => ExperimentConfig {
            name: name.into(),
            system: scalar_output_system(),
            policy: PolicySpec::Tabuada(TabuadaSpec {
                timer: TimerParams::default(),
                lambda: 1.0,
                sigma: 0.9,
                alpha_rate: 1.0,
                gamma_gain: 4.046,
                observer_weight: None,
            }),
            initial: initial(&[10.0, 1.0], 1),
            sim,
            perturbation: PerturbationSpec::default(),
            outputs: OutputSpec::default(),
        },
        "paper-7.1-observer" => ExperimentConfig {
            name: name.into(),
            system: SystemSpec {
                l: Some(m(&[&[14.77], &[6.68]])),
                ..scalar_output_system()
            },
            policy: PolicySpec::Sync(sync_spec(0.1)),
            initial: InitialCondition {
                xhat0: Some(vec![0.0, 0.0]),
                ..initial(&[1.0, 1.0], 1)
            },
            sim: SimConfig { t_max: 15.0, ..sim },
            perturbation: PerturbationSpec::default(),
            outputs: OutputSpec::default(),
        },
        "paper-7.2-async" => ExperimentConfig {
            name: name.into(),
            system: lqr_system(),
            policy: PolicySpec::Async(AsyncSpec {
                timer: TimerParams::default(),
                lambda: 1.0,
                p1: None,
                q: Some(Matrix::identity(2)),
                gamma_x: 1e-3,
                epsilon: 0.05,
                alpha: vec![0.9, 0.1],
                p: vec![1.0, 1.0],
                relaxed_norm: false,
                observer_weight: None,
            }),
            initial: initial(&[1.0, 1.0], 2),
            sim,
            perturbation: PerturbationSpec::default(),
            outputs: OutputSpec::default(),
        },
        _ => return None,
    };
    Some(cfg)
}

pub fn describe(name: &str) -> &'static str {
    match name {
        "paper-7.1-sync" => "scalar-output cascade, synchronous policy, P2 = 0.1, x0 = [1, 1]",
        "paper-7.1-tabuada" => {
            "same cascade, norm-threshold baseline (sigma 0.9, gamma 4.046), x0 = [10, 1]"
        }
        "paper-7.1-observer" => "synchronous policy driven by a Luenberger estimate, eta0 = [1, 1]",
        "paper-7.2-async" => "two-sensor LQR loop, asynchronous policy, alpha = (0.9, 0.1)",
        _ => "",
    }
}
