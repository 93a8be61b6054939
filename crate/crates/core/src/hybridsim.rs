//! Hybrid-time simulation of the sampled loop.
//!
//! Flows use fixed-step classical RK4; jump-set entry inside a step is
//! located by bisection on the step length. At every instant the guards are
//! evaluated first, so a state in the overlap of flow and jump sets jumps.
//! Simultaneous asynchronous triggers become consecutive jumps at equal t,
//! in ascending sensor order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matlib::Matrix;
use crate::policy::{timer_rate, Policy, PolicyError, TimerParams};
use crate::system::{loop_flow_matrix, Cascade, ObserverConfig};

/// Bisection iterations before falling back to the step endpoint.
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("state became non-finite at t={t}, j={j}")]
    NonFiniteState { t: f64, j: usize },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackMode {
    StateFeedback,
    OutputFeedback,
}

/// Cascade plus optional observer, with the flow matrix cached.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    cascade: Cascade,
    observer: Option<ObserverConfig>,
    flow: Matrix,
}

impl ClosedLoop {
    pub fn new(cascade: Cascade, observer: Option<ObserverConfig>) -> Self {
        let flow = loop_flow_matrix(&cascade, observer.as_ref());
        Self {
            cascade,
            observer,
            flow,
        }
    }

    pub fn cascade(&self) -> &Cascade {
        &self.cascade
    }

    pub fn observer(&self) -> Option<&ObserverConfig> {
        self.observer.as_ref()
    }

    pub fn mode(&self) -> FeedbackMode {
        if self.observer.is_some() {
            FeedbackMode::OutputFeedback
        } else {
            FeedbackMode::StateFeedback
        }
    }
}

/// Instantaneous state. `e` is ν − Cx, or ν − Cx̂ when an estimate is carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub tau: Vec<f64>,
    pub xhat: Option<Vec<f64>>,
}

impl HybridState {
    pub fn mode(&self) -> FeedbackMode {
        if self.xhat.is_some() {
            FeedbackMode::OutputFeedback
        } else {
            FeedbackMode::StateFeedback
        }
    }

    /// The state the transmission policy sees: x̂ when observed, else x.
    pub fn policy_state(&self) -> &[f64] {
        self.xhat.as_deref().unwrap_or(&self.x)
    }

    /// Estimation error η = x − x̂.
    pub fn eta(&self) -> Option<Vec<f64>> {
        self.xhat
            .as_ref()
            .map(|xh| self.x.iter().zip(xh).map(|(a, b)| a - b).collect())
    }

    /// Held samples ν = e + C·(policy state).
    pub fn nu(&self, cascade: &Cascade) -> Vec<f64> {
        cascade
            .output(self.policy_state())
            .iter()
            .zip(&self.e)
            .map(|(y, e)| y + e)
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.e)
            .chain(&self.tau)
            .chain(self.xhat.iter().flatten())
            .all(|v| v.is_finite())
    }

    fn pack(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        if let Some(xh) = &self.xhat {
            z.extend_from_slice(xh);
        }
        z.extend_from_slice(&self.e);
        z
    }

    fn unpack(&mut self, z: &[f64]) {
        let n = self.x.len();
        self.x.copy_from_slice(&z[..n]);
        let mut off = n;
        if let Some(xh) = &mut self.xhat {
            xh.copy_from_slice(&z[n..2 * n]);
            off = 2 * n;
        }
        self.e.copy_from_slice(&z[off..]);
    }
}

/// Distance of a state to {0}×{0}(×{0})×[0, 2ρ]^p.
pub fn distance_to_target(state: &HybridState) -> f64 {
    let mut acc = crate::matlib::dot(state.policy_state(), state.policy_state())
        + crate::matlib::dot(&state.e, &state.e);
    if let Some(eta) = state.eta() {
        acc += crate::matlib::dot(&eta, &eta);
    }
    acc.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub j: usize,
    pub state: HybridState,
    pub dist: f64,
    /// Extra per-sample signals attached by callers (e.g. a Lyapunov value).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub monitors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Transmission,
    /// Trigger while the transmitted error was already zero.
    Apparent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    /// Jump counter after this jump.
    pub j: usize,
    pub kind: EventKind,
    /// Output channels refreshed by this jump.
    pub sensors: Vec<usize>,
    /// Timer index that fired (0 for the single synchronous timer).
    pub timer: usize,
    pub e_before: Vec<f64>,
    pub tau_before: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Time,
    Jumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Converged { t: f64 },
    BudgetExceeded(Budget),
}

/// A recorded solution on a hybrid time domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridArc {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub termination: Termination,
    /// Number of output channels q.
    pub sensors: usize,
    /// Number of timers (1 or q).
    pub timers: usize,
    pub timer: TimerParams,
}

impl HybridArc {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Converged { .. })
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples
            .last()
            .expect("arcs hold at least the initial sample")
    }

    pub fn jumps(&self) -> usize {
        self.final_sample().j
    }

    /// Checks the hybrid time domain structure; returns the first defect.
    pub fn check_time_domain(&self) -> Result<(), String> {
        for (k, w) in self.samples.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            if b.j == a.j {
                if !(b.t > a.t) {
                    return Err(format!(
                        "flow pair {k} does not advance time ({} -> {})",
                        a.t, b.t
                    ));
                }
            } else if b.j == a.j + 1 {
                if b.t != a.t {
                    return Err(format!(
                        "jump at pair {k} changes time ({} -> {})",
                        a.t, b.t
                    ));
                }
            } else {
                return Err(format!(
                    "jump counter skips at pair {k} ({} -> {})",
                    a.j, b.j
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub event_tol: f64,
    pub t_max: f64,
    pub j_max: usize,
    pub convergence_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            event_tol: 1e-7,
            t_max: 10.0,
            j_max: 1_000_000,
            convergence_radius: 1e-4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.dt) {
            return Err(SimError::InvalidConfig(format!(
                "event_tol must lie in (0, dt), got {}",
                self.event_tol
            )));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "t_max must be finite and >= 0, got {}",
                self.t_max
            )));
        }
        if !(self.convergence_radius >= 0.0) {
            return Err(SimError::InvalidConfig(
                "convergence_radius must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Uniform,
    None,
}

/// Bounded perturbations of the sampled loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    /// d₄: additive corruption of each transmitted sample.
    pub sample_noise_amp: f64,
    /// d₂, d₃, d₅, d₆: corruption of the guard inputs (x, e).
    pub guard_noise_amp: f64,
    /// d₁: corruption of the timer input of the rate law.
    pub timer_drift_amp: f64,
    /// Extra flow time between a trigger and the transmission it causes.
    pub delay_slack: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            sample_noise_amp: 0.0,
            guard_noise_amp: 0.0,
            timer_drift_amp: 0.0,
            delay_slack: 0.0,
            noise_kind: NoiseKind::None,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("sample_noise_amp", self.sample_noise_amp),
            ("guard_noise_amp", self.guard_noise_amp),
            ("timer_drift_amp", self.timer_drift_amp),
            ("delay_slack", self.delay_slack),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_nominal(&self) -> bool {
        self.noise_kind == NoiseKind::None || self.noise_amplitudes_zero()
    }

    fn noise_amplitudes_zero(&self) -> bool {
        self.sample_noise_amp == 0.0 && self.guard_noise_amp == 0.0 && self.timer_drift_amp == 0.0
    }

    fn active(&self, amp: f64) -> bool {
        self.noise_kind == NoiseKind::Uniform && amp > 0.0
    }
}

struct Noise {
    rng: ChaCha8Rng,
    spec: PerturbationSpec,
}

impl Noise {
    fn new(spec: PerturbationSpec) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
        }
    }

    fn draw(&mut self, amp: f64, len: usize) -> Option<Vec<f64>> {
        if !self.spec.active(amp) {
            return None;
        }
        Some(
            (0..len)
                .map(|_| amp * (2.0 * self.rng.random::<f64>() - 1.0))
                .collect(),
        )
    }
}

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub x0: Vec<f64>,
    pub nu0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    /// Initial timers; defaults to 2ρ (no transmission in the recent past).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<Vec<f64>>,
}

impl InitialCondition {
    pub fn state(
        &self,
        system: &ClosedLoop,
        timer: &TimerParams,
        timers: usize,
    ) -> Result<HybridState, SimError> {
        let casc = system.cascade();
        if self.x0.len() != casc.n() || self.nu0.len() != casc.q() {
            return Err(SimError::InvalidConfig(format!(
                "x0/nu0 lengths {}/{} do not match n={}, q={}",
                self.x0.len(),
                self.nu0.len(),
                casc.n(),
                casc.q()
            )));
        }
        let xhat = match system.mode() {
            FeedbackMode::StateFeedback => {
                if self.xhat0.is_some() {
                    return Err(SimError::InvalidConfig(
                        "xhat0 given without an observer".into(),
                    ));
                }
                None
            }
            FeedbackMode::OutputFeedback => {
                let xh = self.xhat0.clone().unwrap_or_else(|| vec![0.0; casc.n()]);
                if xh.len() != casc.n() {
                    return Err(SimError::InvalidConfig(
                        "xhat0 length does not match n".into(),
                    ));
                }
                Some(xh)
            }
        };
        let y = casc.output(xhat.as_deref().unwrap_or(&self.x0));
        let e = self.nu0.iter().zip(&y).map(|(nu, y)| nu - y).collect();
        let tau = match &self.tau0 {
            None => vec![2.0 * timer.rho(); timers],
            Some(t)
                if t.len() == timers && t.iter().all(|v| (0.0..=2.0 * timer.rho()).contains(v)) =>
            {
                t.clone()
            }
            Some(t) => {
                return Err(SimError::InvalidConfig(format!(
                    "tau0 must hold {timers} values in [0, 2rho], got {t:?}"
                )))
            }
        };
        Ok(HybridState {
            x: self.x0.clone(),
            e,
            tau,
            xhat,
        })
    }
}

fn rk4_linear(m: &Matrix, z: &[f64], h: f64) -> Vec<f64> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + s * y).collect()
    };
    let k1 = m.mul_vec(z);
    let k2 = m.mul_vec(&axpy(z, 0.5 * h, &k1));
    let k3 = m.mul_vec(&axpy(z, 0.5 * h, &k2));
    let k4 = m.mul_vec(&axpy(z, h, &k3));
    z.iter()
        .enumerate()
        .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn rk4_timer(tau: f64, drift: f64, timer: &TimerParams, h: f64) -> f64 {
    let rate = |t: f64| timer_rate(&[t + drift], timer)[0];
    let k1 = rate(tau);
    let k2 = rate(tau + 0.5 * h * k1);
    let k3 = rate(tau + 0.5 * h * k2);
    let k4 = rate(tau + h * k3);
    let next = tau + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    next.clamp(0.0, 2.0 * timer.rho())
}

/// Advances the flow by `dt` with RK4. `timer_drift` is the per-timer d₁
/// offset seen by the rate law, if any.
pub fn flow_step(
    state: &HybridState,
    system: &ClosedLoop,
    timer: &TimerParams,
    dt: f64,
    timer_drift: Option<&[f64]>,
) -> HybridState {
    let mut next = state.clone();
    next.unpack(&rk4_linear(&system.flow, &state.pack(), dt));
    for (i, tau) in next.tau.iter_mut().enumerate() {
        let d = timer_drift.map_or(0.0, |d| d[i]);
        *tau = rk4_timer(state.tau[i], d, timer, dt);
    }
    next
}

/// Sampling disabled (ν ≡ Cx): integrates ẋ = (A+BC)x with the same RK4
/// scheme and returns (t, x) after every step.
pub fn simulate_nominal(
    cascade: &Cascade,
    x0: &[f64],
    dt: f64,
    t_end: f64,
) -> Vec<(f64, Vec<f64>)> {
    let m = cascade.closed_loop();
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    out.push((0.0, x.clone()));
    for k in 1..=steps {
        x = rk4_linear(&m, &x, dt);
        out.push((k as f64 * dt, x.clone()));
    }
    out
}

/// Bisects on (0, h] for the earliest length at which `fires` holds, to
/// within `tol`. `fires(h)` must hold; if bisection stagnates `h` is returned.
pub fn locate_event(h: f64, tol: f64, mut fires: impl FnMut(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fires(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Which timer indices fire at `state`, skipping those already pending.
fn fired(
    policy: &Policy,
    state: &HybridState,
    guard_noise: Option<&[f64]>,
    pending: &[Option<f64>],
) -> Vec<usize> {
    let (xs, es);
    let (x, e): (&[f64], &[f64]) = match guard_noise {
        None => (state.policy_state(), &state.e),
        Some(d) => {
            let n = state.policy_state().len();
            xs = state
                .policy_state()
                .iter()
                .zip(&d[..n])
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>();
            es = state
                .e
                .iter()
                .zip(&d[n..])
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>();
            (&xs, &es)
        }
    };
    policy
        .triggered(x, e, &state.tau)
        .into_iter()
        .filter(|&i| pending[i].is_none())
        .collect()
}

/// Runs one hybrid solution from `init` until convergence or budget.
pub fn simulate(
    system: &ClosedLoop,
    policy: &Policy,
    init: &InitialCondition,
    config: &SimConfig,
    pert: &PerturbationSpec,
) -> Result<HybridArc, SimError> {
    config.validate()?;
    pert.validate()?;
    let (n, q) = (system.cascade().n(), system.cascade().q());
    policy.check_dimensions(n, q)?;
    let timers = policy.timers(q);
    let timer = *policy.timer();
    let mut state = init.state(system, &timer, timers)?;
    let mut noise = Noise::new(*pert);
    let mut t = 0.0;
    let mut j = 0usize;
    let mut pending: Vec<Option<f64>> = vec![None; timers];
    let mut samples = vec![Sample {
        t,
        j,
        dist: distance_to_target(&state),
        state: state.clone(),
        monitors: BTreeMap::new(),
    }];
    let mut events = Vec::new();

    let termination = loop {
        let last = samples.last().expect("initial sample");
        if last.dist < config.convergence_radius {
            break Termination::Converged { t };
        }
        if j >= config.j_max {
            break Termination::BudgetExceeded(Budget::Jumps);
        }

        let guard_noise = noise.draw(pert.guard_noise_amp, n + q);
        for i in fired(policy, &state, guard_noise.as_deref(), &pending) {
            pending[i] = Some(t + pert.delay_slack);
        }

        let due: Vec<usize> = (0..timers)
            .filter(|&i| pending[i].is_some_and(|d| d <= t))
            .collect();
        if !due.is_empty() {
            for i in due {
                pending[i] = None;
                let sensors: Vec<usize> = if timers == 1 {
                    (0..q).collect()
                } else {
                    vec![i]
                };
                let e_before: Vec<f64> = sensors.iter().map(|&s| state.e[s]).collect();
                let kind = if e_before.iter().all(|v| *v == 0.0) {
                    EventKind::Apparent
                } else {
                    EventKind::Transmission
                };
                let sample_noise = noise.draw(pert.sample_noise_amp, sensors.len());
                let tau_before = state.tau[i];
                for (k, &s) in sensors.iter().enumerate() {
                    state.e[s] = sample_noise.as_ref().map_or(0.0, |d| d[k]);
                }
                state.tau[i] = 0.0;
                j += 1;
                events.push(Event {
                    t,
                    j,
                    kind,
                    sensors,
                    timer: i,
                    e_before,
                    tau_before,
                });
                samples.push(Sample {
                    t,
                    j,
                    dist: distance_to_target(&state),
                    state: state.clone(),
                    monitors: BTreeMap::new(),
                });
                if j >= config.j_max {
                    break;
                }
            }
            continue;
        }

        if t >= config.t_max {
            break Termination::BudgetExceeded(Budget::Time);
        }

        let mut h = config.dt.min(config.t_max - t);
        if let Some(deadline) = pending.iter().flatten().copied().reduce(f64::min) {
            h = h.min(deadline - t);
        }
        let drift = noise.draw(pert.timer_drift_amp, timers);
        let mut next = flow_step(&state, system, &timer, h, drift.as_deref());
        if !fired(policy, &next, guard_noise.as_deref(), &pending).is_empty() {
            let located = locate_event(h, config.event_tol, |s| {
                let probe = flow_step(&state, system, &timer, s, drift.as_deref());
                !fired(policy, &probe, guard_noise.as_deref(), &pending).is_empty()
            });
            if located < h {
                h = located;
                next = flow_step(&state, system, &timer, h, drift.as_deref());
            }
        }
        if !next.is_finite() {
            return Err(SimError::NonFiniteState { t: t + h, j });
        }
        // pending deadlines are hit exactly so the deferred jump fires on time
        t = match pending.iter().flatten().copied().reduce(f64::min) {
            Some(d) if (t + h - d).abs() <= 1e-12 * d.abs().max(1.0) => d,
            _ => t + h,
        };
        state = next;
        samples.push(Sample {
            t,
            j,
            dist: distance_to_target(&state),
            state: state.clone(),
            monitors: BTreeMap::new(),
        });
    };

    Ok(HybridArc {
        samples,
        events,
        termination,
        sensors: q,
        timers,
        timer,
    })
}
