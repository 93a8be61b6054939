//! Lyapunov monitors, arc audits, decay fits and transmission statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybridsim::{EventKind, HybridArc, HybridState};
use crate::matlib::{norm, solve_lyapunov, sym_eig_bounds, MatError, Matrix};
use crate::policy::Policy;
use crate::system::{Cascade, ErrorSystem, ObserverConfig};

pub use crate::hybridsim::distance_to_target;

/// Largest exponent tried by [`find_lambda`].
pub const LAMBDA_MAX: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid monitor: {0}")]
    InvalidMonitor(String),
    #[error(transparent)]
    Matrix(#[from] MatError),
}

/// Weight on the held-sample error in W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErrorWeight {
    /// One timer, full matrix P2.
    Sync(Matrix),
    /// One timer per sensor, scalar weights pᵢ.
    Async(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverWeight {
    pub gamma: f64,
    pub p_o: Matrix,
}

impl ObserverWeight {
    /// P_o from (A−LC)ᵀP_o + P_o(A−LC) = −I.
    pub fn from_observer(
        cascade: &Cascade,
        observer: &ObserverConfig,
        gamma: f64,
    ) -> Result<Self, AnalysisError> {
        if !(gamma > 0.0) {
            return Err(AnalysisError::InvalidMonitor(format!(
                "observer weight must be positive, got {gamma}"
            )));
        }
        let n = cascade.n();
        let p_o = solve_lyapunov(&observer.error_matrix(cascade), &Matrix::identity(n))?;
        Ok(Self { gamma, p_o })
    }
}

/// W(X) = xᵀP1x + Σ exp((2ρ−τ)λ)·(error terms) (+ γ ηᵀP_oη).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovMonitor {
    pub lambda: f64,
    pub p1: Matrix,
    pub weight: ErrorWeight,
    pub rho: f64,
    pub observer: Option<ObserverWeight>,
}

impl LyapunovMonitor {
    /// Monitor built from a policy's own certificate. The baseline policy
    /// carries none, so its monitor uses P1 from F11ᵀP1 + P1F11 = −I and
    /// P2 = 0 (see [`LyapunovMonitor::for_baseline`]).
    pub fn for_policy(
        policy: &Policy,
        err: &ErrorSystem,
        lambda: f64,
    ) -> Result<Self, AnalysisError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(AnalysisError::InvalidMonitor(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let rho = policy.timer().rho();
        let (p1, weight) = match policy {
            Policy::Sync(p) => (p.p1().clone(), ErrorWeight::Sync(p.p2().clone())),
            Policy::Async(p) => (p.p1().clone(), ErrorWeight::Async(p.p().to_vec())),
            Policy::Tabuada(_) => return Self::for_baseline(err, rho, lambda),
        };
        Ok(Self {
            lambda,
            p1,
            weight,
            rho,
            observer: None,
        })
    }

    pub fn for_baseline(err: &ErrorSystem, rho: f64, lambda: f64) -> Result<Self, AnalysisError> {
        let p1 = solve_lyapunov(&err.f11, &Matrix::identity(err.n()))?;
        Ok(Self {
            lambda,
            p1,
            weight: ErrorWeight::Sync(Matrix::zeros(err.q(), err.q())),
            rho,
            observer: None,
        })
    }

    pub fn with_observer(mut self, observer: ObserverWeight) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    fn phi(&self, tau: f64) -> f64 {
        ((2.0 * self.rho - tau) * self.lambda).exp()
    }

    /// Constants (α̲, α̅) with α̲·d² ≤ W ≤ α̅·d², d the distance to target.
    pub fn sandwich_bounds(&self) -> Result<(f64, f64), AnalysisError> {
        let (p1_lo, p1_hi) = sym_eig_bounds(&self.p1)?;
        let (p2_lo, p2_hi) = match &self.weight {
            ErrorWeight::Sync(p2) => sym_eig_bounds(p2)?,
            ErrorWeight::Async(p) => (
                p.iter().copied().fold(f64::INFINITY, f64::min),
                p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        };
        let peak = self.phi(0.0);
        let mut lo = p1_lo.min(p2_lo);
        let mut hi = p1_hi.max(peak * p2_hi);
        if let Some(obs) = &self.observer {
            let (o_lo, o_hi) = sym_eig_bounds(&obs.p_o)?;
            lo = lo.min(obs.gamma * o_lo);
            hi = hi.max(obs.gamma * o_hi);
        }
        Ok((lo, hi))
    }
}

pub fn evaluate_w(state: &HybridState, monitor: &LyapunovMonitor) -> f64 {
    let x = state.policy_state();
    let mut w = monitor.p1.quad_form(x);
    match &monitor.weight {
        ErrorWeight::Sync(p2) => {
            let tau = state.tau[0];
            w += monitor.phi(tau) * p2.quad_form(&state.e);
        }
        ErrorWeight::Async(p) => {
            for (i, (pi, ei)) in p.iter().zip(&state.e).enumerate() {
                w += pi * monitor.phi(state.tau[i]) * ei * ei;
            }
        }
    }
    if let (Some(obs), Some(eta)) = (&monitor.observer, state.eta()) {
        w += obs.gamma * obs.p_o.quad_form(&eta);
    }
    w
}

/// One sample pair on which W grew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index of the later sample of the pair.
    pub sample: usize,
    pub t: f64,
    pub j: usize,
    pub w_before: f64,
    pub w_after: f64,
    pub x_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellViolation {
    pub timer: usize,
    pub t_prev: f64,
    pub t_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Violations with |x| at or below this radius are reported separately.
    pub radius: f64,
    /// Relative slack on W increases: W⁺ > W + rtol·(1 + W).
    pub w_rtol: f64,
    pub event_tol: f64,
    pub tau_tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            radius: 1e-4,
            w_rtol: 1e-9,
            event_tol: 1e-7,
            tau_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub lambda: f64,
    pub jump_violations: Vec<Violation>,
    pub flow_violations: Vec<Violation>,
    /// W increases with |x| inside the radius (expected under perturbation).
    pub jump_violations_inside: usize,
    pub flow_violations_inside: usize,
    pub dwell_violations: Vec<DwellViolation>,
    pub max_tau: f64,
    pub timer_bound_ok: bool,
    /// Jumps recovered from the samples match the event log one-to-one.
    pub event_log_agrees: bool,
    pub suggestion: Option<String>,
}

impl AuditReport {
    /// No W growth outside the radius, and dwell/timer/log checks pass.
    pub fn is_clean(&self) -> bool {
        self.jump_violations.is_empty()
            && self.flow_violations.is_empty()
            && self.dwell_violations.is_empty()
            && self.timer_bound_ok
            && self.event_log_agrees
    }

    pub fn monotone(&self) -> bool {
        self.jump_violations.is_empty() && self.flow_violations.is_empty()
    }
}

pub fn audit_arc(arc: &HybridArc, monitor: &LyapunovMonitor, opts: &AuditOptions) -> AuditReport {
    let ws: Vec<f64> = arc
        .samples
        .iter()
        .map(|s| evaluate_w(&s.state, monitor))
        .collect();
    let mut report = AuditReport {
        lambda: monitor.lambda,
        jump_violations: Vec::new(),
        flow_violations: Vec::new(),
        jump_violations_inside: 0,
        flow_violations_inside: 0,
        dwell_violations: Vec::new(),
        max_tau: 0.0,
        timer_bound_ok: true,
        event_log_agrees: true,
        suggestion: None,
    };
    let mut dwell_flow_growth = false;

    for k in 1..arc.samples.len() {
        let (a, b) = (&arc.samples[k - 1], &arc.samples[k]);
        let (w0, w1) = (ws[k - 1], ws[k]);
        if w1 <= w0 + opts.w_rtol * (1.0 + w0.abs()) {
            continue;
        }
        let x_norm = norm(a.state.policy_state());
        let v = Violation {
            sample: k,
            t: b.t,
            j: b.j,
            w_before: w0,
            w_after: w1,
            x_norm,
        };
        let inside = x_norm <= opts.radius;
        match (b.j == a.j, inside) {
            (true, false) => {
                if a.state.tau.iter().any(|&t| t < arc.timer.delta()) {
                    dwell_flow_growth = true;
                }
                report.flow_violations.push(v);
            }
            (true, true) => report.flow_violations_inside += 1,
            (false, false) => report.jump_violations.push(v),
            (false, true) => report.jump_violations_inside += 1,
        }
    }
    if dwell_flow_growth {
        report.suggestion = Some(format!(
            "W grew during dwell-time flow; retry the audit with lambda = {}",
            2.0 * monitor.lambda
        ));
    }

    // dwell time and timer bound, recomputed from samples only
    let mut last_reset: Vec<Option<f64>> = vec![None; arc.timers];
    let mut recovered = Vec::new();
    for (k, s) in arc.samples.iter().enumerate() {
        for &tau in &s.state.tau {
            report.max_tau = report.max_tau.max(tau);
        }
        if k == 0 || s.j == arc.samples[k - 1].j {
            continue;
        }
        let prev = &arc.samples[k - 1];
        // a jump resets exactly one timer, which must have been running
        let reset: Vec<usize> = (0..arc.timers)
            .filter(|&i| s.state.tau[i] == 0.0 && prev.state.tau[i] != 0.0)
            .collect();
        let [i] = reset[..] else {
            report.event_log_agrees = false;
            continue;
        };
        recovered.push((s.t, i));
        if let Some(tp) = last_reset[i] {
            if s.t - tp < arc.timer.delta() - opts.event_tol {
                report.dwell_violations.push(DwellViolation {
                    timer: i,
                    t_prev: tp,
                    t_next: s.t,
                });
            }
        }
        last_reset[i] = Some(s.t);
    }
    report.timer_bound_ok = report.max_tau <= 2.0 * arc.timer.rho() + opts.tau_tol;
    report.event_log_agrees &= recovered.len() == arc.events.len()
        && recovered
            .iter()
            .zip(&arc.events)
            .all(|(&(t, i), ev)| t == ev.t && i == ev.timer);
    report
}

/// Doubles λ from `start` until the audit shows no W growth outside the
/// radius, up to [`LAMBDA_MAX`]. Returns the last report either way.
pub fn find_lambda(
    arc: &HybridArc,
    monitor: &LyapunovMonitor,
    opts: &AuditOptions,
    start: f64,
) -> AuditReport {
    let mut lambda = start;
    loop {
        let report = audit_arc(arc, &monitor.with_lambda(lambda), opts);
        if report.monotone() || 2.0 * lambda > LAMBDA_MAX {
            return report;
        }
        lambda *= 2.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub k: f64,
    /// Rate per unit of hybrid time t + j.
    pub gamma_rate: f64,
    pub r2: f64,
    pub points: usize,
    pub converging: bool,
}

/// Least-squares fit of log(distance) = log k − γ(t + j) over the samples
/// whose distance exceeds `radius`.
pub fn fit_decay(arc: &HybridArc, radius: f64) -> Result<DecayFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = arc
        .samples
        .iter()
        .filter(|s| s.dist > radius && s.dist > 0.0)
        .map(|s| (s.t + s.j as f64, s.dist.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(AnalysisError::InsufficientData(format!(
            "{} samples outside radius {radius}, need at least 10",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let ms = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - ms).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - ms) * (p.1 - ml)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientData(
            "all samples share one hybrid time".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = ml - slope * ms;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let gamma_rate = -slope;
    Ok(DecayFit {
        k: intercept.exp(),
        gamma_rate,
        r2,
        points: pts.len(),
        converging: gamma_rate > 1e-9,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl IntervalStats {
    fn from_times(times: &[f64]) -> Option<Self> {
        let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            return None;
        }
        Some(Self {
            count: gaps.len(),
            min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
            mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
            max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionStats {
    pub total: usize,
    pub apparent: usize,
    /// Transmissions per output channel (apparent ones excluded).
    pub per_sensor: Vec<usize>,
    pub apparent_per_sensor: Vec<usize>,
    pub intervals: Option<IntervalStats>,
    pub per_sensor_intervals: Vec<Option<IntervalStats>>,
    /// Transmissions per unit time over the arc's horizon.
    pub rate: f64,
}

pub fn transmission_stats(arc: &HybridArc) -> TransmissionStats {
    let q = arc.sensors;
    let mut per_sensor = vec![0; q];
    let mut apparent_per_sensor = vec![0; q];
    let mut times = Vec::new();
    let mut sensor_times = vec![Vec::new(); q];
    let mut apparent = 0;
    for ev in &arc.events {
        match ev.kind {
            EventKind::Transmission => {
                times.push(ev.t);
                for &s in &ev.sensors {
                    per_sensor[s] += 1;
                    sensor_times[s].push(ev.t);
                }
            }
            EventKind::Apparent => {
                apparent += 1;
                for &s in &ev.sensors {
                    apparent_per_sensor[s] += 1;
                }
            }
        }
    }
    let horizon = arc.samples.last().map_or(0.0, |s| s.t);
    TransmissionStats {
        total: times.len(),
        apparent,
        per_sensor,
        apparent_per_sensor,
        intervals: IntervalStats::from_times(&times),
        per_sensor_intervals: sensor_times
            .iter()
            .map(|t| IntervalStats::from_times(t))
            .collect(),
        rate: if horizon > 0.0 {
            times.len() as f64 / horizon
        } else {
            0.0
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub transmissions: usize,
    pub apparent: usize,
    pub per_sensor: Vec<usize>,
    pub final_t: f64,
    pub final_distance: f64,
    pub converged: bool,
    pub decay: Option<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>8}  {:>16}  {:>10}  {:>12}  {:>9}  {:>10}\n",
            "label", "tx", "apparent", "per-sensor", "final t", "final dist", "converged", "decay"
        );
        for r in &self.rows {
            let per = r
                .per_sensor
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("/");
            let decay = r
                .decay
                .map_or("-".to_string(), |d| format!("{:.4}", d.gamma_rate));
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>8}  {:>16}  {:>10.4}  {:>12.4e}  {:>9}  {:>10}\n",
                r.label,
                r.transmissions,
                r.apparent,
                per,
                r.final_t,
                r.final_distance,
                r.converged,
                decay
            ));
        }
        out
    }
}

pub fn compare_runs(runs: &[(String, &HybridArc)], radius: f64) -> ComparisonTable {
    let rows = runs
        .iter()
        .map(|(label, arc)| {
            let stats = transmission_stats(arc);
            let last = arc.final_sample();
            ComparisonRow {
                label: label.clone(),
                transmissions: stats.total,
                apparent: stats.apparent,
                per_sensor: stats.per_sensor,
                final_t: last.t,
                final_distance: last.dist,
                converged: arc.converged(),
                decay: fit_decay(arc, radius).ok(),
            }
        })
        .collect();
    ComparisonTable { rows }
}

/// Adds W to every sample's monitor map under `key`.
pub fn annotate_w(arc: &mut HybridArc, monitor: &LyapunovMonitor, key: &str) {
    for s in &mut arc.samples {
        let w = evaluate_w(&s.state, monitor);
        s.monitors.insert(key.to_string(), w);
    }
}

/// Per-signal (t, value) series for plotting.
pub fn plot_series(arc: &HybridArc) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &arc.samples {
        let st = &s.state;
        for (i, v) in st.x.iter().enumerate() {
            out.entry(format!("x{}", i + 1))
                .or_default()
                .push((s.t, *v));
        }
        if let Some(xh) = &st.xhat {
            for (i, v) in xh.iter().enumerate() {
                out.entry(format!("xhat{}", i + 1))
                    .or_default()
                    .push((s.t, *v));
            }
        }
        for (i, v) in st.e.iter().enumerate() {
            out.entry(format!("e{}", i + 1))
                .or_default()
                .push((s.t, *v));
        }
        for (i, v) in st.tau.iter().enumerate() {
            out.entry(format!("tau{}", i + 1))
                .or_default()
                .push((s.t, *v));
        }
        out.entry("dist".into()).or_default().push((s.t, s.dist));
        for (k, v) in &s.monitors {
            out.entry(k.clone()).or_default().push((s.t, *v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybridsim::{Event, Sample, Termination};
    use crate::policy::TimerParams;

    fn state(x: &[f64], e: &[f64], tau: &[f64]) -> HybridState {
        HybridState {
            x: x.to_vec(),
            e: e.to_vec(),
            tau: tau.to_vec(),
            xhat: None,
        }
    }

    fn reference_monitor(p2: f64) -> LyapunovMonitor {
        LyapunovMonitor {
            lambda: 1.0,
            p1: Matrix::from_rows(&[&[0.091, 0.067], &[0.067, 0.573]]).unwrap(),
            weight: ErrorWeight::Sync(Matrix::from_rows(&[&[p2]]).unwrap()),
            rho: 2e-3,
            observer: None,
        }
    }

    fn arc(points: &[(f64, usize, f64)], events: Vec<Event>, sensors: usize) -> HybridArc {
        HybridArc {
            samples: points
                .iter()
                .map(|&(t, j, d)| Sample {
                    t,
                    j,
                    state: state(&[d, 0.0], &vec![0.0; sensors], &vec![1e-3; sensors]),
                    dist: d,
                    monitors: BTreeMap::new(),
                })
                .collect(),
            events,
            termination: Termination::BudgetExceeded(crate::hybridsim::Budget::Time),
            sensors,
            timers: sensors,
            timer: TimerParams::default(),
        }
    }

    fn event(t: f64, j: usize, sensor: usize, kind: EventKind) -> Event {
        Event {
            t,
            j,
            kind,
            sensors: vec![sensor],
            timer: sensor,
            e_before: vec![1.0],
            tau_before: 1e-3,
        }
    }

    #[test]
    fn w_examples() {
        let mon = reference_monitor(0.1);
        let x = [1.0, 1.0];
        let quad = 0.091 + 2.0 * 0.067 + 0.573;
        assert_eq!(
            evaluate_w(&state(&x, &[0.0], &[0.0]), &mon),
            mon.p1.quad_form(&x)
        );
        let at_2rho = evaluate_w(&state(&x, &[0.2], &[4e-3]), &mon);
        assert!((at_2rho - (quad + 0.1 * 0.04)).abs() < 1e-12);
        let at_zero = evaluate_w(&state(&x, &[0.2], &[0.0]), &mon);
        assert!((at_zero - (quad + 0.004f64.exp() * 0.1 * 0.04)).abs() < 1e-12);
    }

    #[test]
    fn async_w_sums_per_sensor_terms() {
        let mon = LyapunovMonitor {
            lambda: 2.0,
            p1: Matrix::identity(2),
            weight: ErrorWeight::Async(vec![1.0, 3.0]),
            rho: 2e-3,
            observer: None,
        };
        let w = evaluate_w(&state(&[1.0, 0.0], &[0.5, 1.0], &[4e-3, 0.0]), &mon);
        assert!((w - (1.0 + 0.25 + 3.0 * (0.008f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_decay() {
        let pts: Vec<(f64, usize, f64)> = (0..40)
            .map(|k| {
                let t = 0.25 * k as f64;
                let j = k / 4;
                (t, j, 2.0 * (-0.5 * (t + j as f64)).exp())
            })
            .collect();
        let fit = fit_decay(&arc(&pts, vec![], 1), 0.0).unwrap();
        assert!((fit.k - 2.0).abs() < 1e-9 && (fit.gamma_rate - 0.5).abs() < 1e-12);
        assert!(fit.r2 > 1.0 - 1e-12 && fit.converging);
    }

    #[test]
    fn fit_flags_constant_distance() {
        let pts: Vec<(f64, usize, f64)> = (0..20).map(|k| (k as f64, 0, 1.0)).collect();
        let fit = fit_decay(&arc(&pts, vec![], 1), 0.0).unwrap();
        assert!(fit.gamma_rate.abs() < 1e-12);
        assert!(!fit.converging);
    }

    #[test]
    fn fit_needs_ten_points() {
        let pts: Vec<(f64, usize, f64)> = (0..9).map(|k| (k as f64, 0, 1.0)).collect();
        assert!(matches!(
            fit_decay(&arc(&pts, vec![], 1), 0.0),
            Err(AnalysisError::InsufficientData(_))
        ));
    }

    #[test]
    fn stats_examples() {
        let empty = transmission_stats(&arc(&[(0.0, 0, 1.0), (5.0, 0, 1.0)], vec![], 1));
        assert_eq!(empty.total, 0);
        assert!(empty.intervals.is_none());
        assert_eq!(empty.rate, 0.0);

        let evs = vec![
            event(1.0, 1, 0, EventKind::Transmission),
            event(2.0, 2, 0, EventKind::Transmission),
            event(3.0, 3, 0, EventKind::Apparent),
            event(4.0, 4, 0, EventKind::Transmission),
        ];
        let s = transmission_stats(&arc(&[(0.0, 0, 1.0), (4.0, 4, 1.0)], evs, 1));
        assert_eq!((s.total, s.apparent), (3, 1));
        let iv = s.intervals.unwrap();
        assert_eq!((iv.count, iv.min, iv.mean, iv.max), (2, 1.0, 1.5, 2.0));
        assert_eq!(s.rate, 0.75);
    }

    #[test]
    fn compare_rows_mirror_inputs() {
        let a = arc(&[(0.0, 0, 1.0), (1.0, 0, 0.5)], vec![], 1);
        let single = compare_runs(&[("a".into(), &a)], 0.0);
        assert_eq!(single.rows.len(), 1);
        let twin = compare_runs(&[("x".into(), &a), ("y".into(), &a)], 0.0);
        let (mut r0, r1) = (twin.rows[0].clone(), twin.rows[1].clone());
        r0.label = r1.label.clone();
        assert_eq!(r0, r1);
        assert!(twin.render_text().lines().count() == 3);
    }

    #[test]
    fn sandwich_bounds_for_sync_weight() {
        let mon = reference_monitor(0.1);
        let (lo, hi) = mon.sandwich_bounds().unwrap();
        let (p1_lo, p1_hi) = sym_eig_bounds(&mon.p1).unwrap();
        assert_eq!(lo, p1_lo.min(0.1));
        assert_eq!(hi, p1_hi.max(0.004f64.exp() * 0.1));
    }

    #[test]
    fn rejects_non_positive_lambda() {
        let casc = Cascade::new(
            Matrix::from_rows(&[&[2.0, 1.5], &[2.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[&[-18.0], &[0.0]]).unwrap(),
            Matrix::from_rows(&[&[0.5, 0.5]]).unwrap(),
        )
        .unwrap();
        let err = crate::system::build_error_system(&casc).unwrap();
        let pol = Policy::Tabuada(
            crate::policy::TabuadaBaseline::new(0.9, 1.0, 4.046, TimerParams::default()).unwrap(),
        );
        assert!(LyapunovMonitor::for_policy(&pol, &err, 0.0).is_err());
        assert!(LyapunovMonitor::for_policy(&pol, &err, 1.0).is_ok());
    }
}
