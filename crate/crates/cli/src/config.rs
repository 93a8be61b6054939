//! Experiment configuration files and their translation into library objects.

use std::path::Path;

use lazylink::analysis::{LyapunovMonitor, ObserverWeight};
use lazylink::hybridsim::{ClosedLoop, InitialCondition, PerturbationSpec, SimConfig};
use lazylink::matlib::Matrix;
use lazylink::policy::{
    design_async, design_sync, implied_decay_matrix, AsyncPolicy, Policy, SyncPolicy,
    TabuadaBaseline, TimerParams,
};
use lazylink::system::{
    build_error_system, check_assumption1, Cascade, ErrorSystem, ObserverConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_OBSERVER_WEIGHT: f64 = 1e3;

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
    /// Observer gain; its presence switches the loop to output feedback.
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSpec {
    pub timer: TimerParams,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Explicit certificate; when omitted it is designed from Q.
    #[serde(rename = "P1", default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Matrix>,
    /// Decay matrix; when omitted with P1 given it is −(F11ᵀP1 + P1F11).
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Matrix>,
    #[serde(rename = "P2")]
    pub p2: Matrix,
    pub gamma_x: f64,
    pub gamma_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsyncSpec {
    pub timer: TimerParams,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(rename = "P1", default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Matrix>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Matrix>,
    pub gamma_x: f64,
    pub epsilon: f64,
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(default)]
    pub relaxed_norm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabuadaSpec {
    pub timer: TimerParams,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub sigma: f64,
    pub alpha_rate: f64,
    pub gamma_gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicySpec {
    Sync(SyncSpec),
    Async(AsyncSpec),
    Tabuada(TabuadaSpec),
}

impl PolicySpec {
    pub fn lambda(&self) -> f64 {
        match self {
            PolicySpec::Sync(s) => s.lambda,
            PolicySpec::Async(s) => s.lambda,
            PolicySpec::Tabuada(s) => s.lambda,
        }
    }

    pub fn observer_weight(&self) -> f64 {
        match self {
            PolicySpec::Sync(s) => s.observer_weight,
            PolicySpec::Async(s) => s.observer_weight,
            PolicySpec::Tabuada(s) => s.observer_weight,
        }
        .unwrap_or(DEFAULT_OBSERVER_WEIGHT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub trace: bool,
    pub summary: bool,
    pub plots: bool,
    pub format: TraceFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trace: true,
            summary: true,
            plots: true,
            format: TraceFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemSpec,
    pub policy: PolicySpec,
    pub initial: InitialCondition,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }
}

/// A config with every object built and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub cascade: Cascade,
    pub err: ErrorSystem,
    pub system: ClosedLoop,
    pub policy: Policy,
    pub monitor: LyapunovMonitor,
    pub init: InitialCondition,
    pub sim: SimConfig,
    pub pert: PerturbationSpec,
    pub outputs: OutputSpec,
}

/// Named pass/fail line of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub config: String,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{}\n", self.config);
        for i in &self.items {
            let mark = if i.passed { "pass" } else { "FAIL" };
            out.push_str(&format!("  [{mark}] {}: {}\n", i.name, i.detail));
        }
        out
    }
}

struct Checks {
    items: Vec<CheckItem>,
}

impl Checks {
    fn record<T>(&mut self, name: &str, r: Result<T, String>, ok_detail: &str) -> Option<T> {
        match r {
            Ok(v) => {
                self.items.push(CheckItem {
                    name: name.into(),
                    passed: true,
                    detail: ok_detail.into(),
                });
                Some(v)
            }
            Err(e) => {
                self.items.push(CheckItem {
                    name: name.into(),
                    passed: false,
                    detail: e,
                });
                None
            }
        }
    }
}

fn certificate(
    err: &ErrorSystem,
    p1: &Option<Matrix>,
    q: &Option<Matrix>,
) -> Result<(Option<Matrix>, Matrix), String> {
    match (p1, q) {
        (Some(p1), Some(q)) => Ok((Some(p1.clone()), q.clone())),
        (Some(p1), None) => Ok((
            Some(p1.clone()),
            implied_decay_matrix(err, p1).map_err(|e| e.to_string())?,
        )),
        (None, Some(q)) => Ok((None, q.clone())),
        (None, None) => Ok((None, Matrix::identity(err.n()))),
    }
}

fn build_policy(err: &ErrorSystem, spec: &PolicySpec) -> Result<Policy, String> {
    let s = |e: lazylink::policy::PolicyError| e.to_string();
    Ok(match spec {
        PolicySpec::Sync(p) => {
            let (p1, q) = certificate(err, &p.p1, &p.q)?;
            Policy::Sync(
                match p1 {
                    Some(p1) => SyncPolicy::from_parts(
                        err,
                        p1,
                        p.p2.clone(),
                        q,
                        p.gamma_x,
                        p.gamma_e,
                        p.timer,
                    ),
                    None => design_sync(err, &q, p.gamma_x, p.gamma_e, &p.p2, p.timer),
                }
                .map_err(s)?,
            )
        }
        PolicySpec::Async(p) => {
            let (p1, q) = certificate(err, &p.p1, &p.q)?;
            let pol = match p1 {
                Some(p1) => AsyncPolicy::from_parts(
                    err,
                    p1,
                    q,
                    p.gamma_x,
                    p.epsilon,
                    p.alpha.clone(),
                    p.p.clone(),
                    p.timer,
                ),
                None => design_async(err, &q, p.gamma_x, p.epsilon, &p.alpha, &p.p, p.timer),
            }
            .map_err(s)?;
            Policy::Async(pol.with_relaxed_norm(p.relaxed_norm))
        }
        PolicySpec::Tabuada(p) => Policy::Tabuada(
            TabuadaBaseline::new(p.sigma, p.alpha_rate, p.gamma_gain, p.timer).map_err(s)?,
        ),
    })
}

/// Runs every check and, when all pass, returns the built experiment.
pub fn check(cfg: &ExperimentConfig) -> (CheckReport, Option<Experiment>) {
    let mut c = Checks { items: Vec::new() };
    let sys = &cfg.system;
    let cascade = c.record(
        "dimensions",
        Cascade::new(sys.a.clone(), sys.b.clone(), sys.c.clone()).map_err(|e| e.to_string()),
        "A, B, C are consistent",
    );
    let Some(cascade) = cascade else {
        return (report(cfg, c), None);
    };
    c.record(
        "nominal loop (A+BC Hurwitz)",
        if check_assumption1(&cascade) {
            Ok(())
        } else {
            Err(format!(
                "A+BC is not Hurwitz: {:?}",
                lazylink::matlib::check_hurwitz(&cascade.closed_loop()).reason
            ))
        },
        "A+BC is Hurwitz",
    );
    let observer = match &sys.l {
        None => Some(None),
        Some(l) => c
            .record(
                "observer (A-LC Hurwitz)",
                ObserverConfig::new(&cascade, l.clone()).map_err(|e| e.to_string()),
                "A-LC is Hurwitz",
            )
            .map(Some),
    };
    let err = build_error_system(&cascade).map_err(|e| e.to_string());
    let err = c.record("error system", err, "F assembled");
    let policy = err.as_ref().and_then(|err| {
        c.record(
            "policy invariants",
            build_policy(err, &cfg.policy),
            "all policy conditions hold",
        )
    });
    let timers = policy.as_ref().map_or(1, |p| p.timers(cascade.q()));
    let timer = policy
        .as_ref()
        .map_or_else(TimerParams::default, |p| *p.timer());
    let closed = observer
        .clone()
        .map(|o| ClosedLoop::new(cascade.clone(), o));
    if let Some(closed) = &closed {
        c.record(
            "initial condition",
            cfg.initial
                .state(closed, &timer, timers)
                .map(|_| ())
                .map_err(|e| e.to_string()),
            "x0, nu0, xhat0, tau0 consistent",
        );
    }
    c.record(
        "sim config",
        cfg.sim.validate().map_err(|e| e.to_string()),
        "dt, event_tol, t_max valid",
    );
    c.record(
        "perturbation",
        cfg.perturbation.validate().map_err(|e| e.to_string()),
        "amplitudes finite and non-negative",
    );
    let monitor = match (&err, &policy) {
        (Some(err), Some(policy)) => {
            let m = LyapunovMonitor::for_policy(policy, err, cfg.policy.lambda())
                .map_err(|e| e.to_string());
            let m = match (m, observer.clone().flatten()) {
                (Ok(m), Some(o)) => {
                    ObserverWeight::from_observer(&cascade, &o, cfg.policy.observer_weight())
                        .map(|w| m.with_observer(w))
                        .map_err(|e| e.to_string())
                }
                (m, _) => m,
            };
            c.record("monitor", m, "Lyapunov monitor built")
        }
        _ => None,
    };

    let report = report(cfg, c);
    if !report.passed() {
        return (report, None);
    }
    let (Some(err), Some(policy), Some(system), Some(monitor)) = (err, policy, closed, monitor)
    else {
        return (report, None);
    };
    let exp = Experiment {
        name: cfg.name.clone(),
        cascade,
        err,
        system,
        policy,
        monitor,
        init: cfg.initial.clone(),
        sim: cfg.sim,
        pert: cfg.perturbation,
        outputs: cfg.outputs.clone(),
    };
    (report, Some(exp))
}

fn report(cfg: &ExperimentConfig, c: Checks) -> CheckReport {
    CheckReport {
        config: cfg.name.clone(),
        items: c.items,
    }
}

/// Builds the experiment or fails with the rendered check report.
pub fn build(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    match check(cfg) {
        (_, Some(exp)) => Ok(exp),
        (report, None) => Err(CliError::Validation(report.render_text())),
    }
}
