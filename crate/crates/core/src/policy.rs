//! Transmission policies: timers, guard predicates, jump maps, and the
//! design checks behind the synchronous and asynchronous Lyapunov policies.
//!
//! Guards resolve the overlap of flow and jump sets in favour of jumping:
//! every comparison that decides a transmission is inclusive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matlib::{is_positive_definite, norm, spectral_norm, sym_eig_bounds, MatError, Matrix};
use crate::system::ErrorSystem;

/// Slack accepted when checking F11ᵀP1 + P1F11 + Q ≤ 0.
pub const LYAPUNOV_INEQ_RTOL: f64 = 1e-8;
/// Slack accepted on Σα = 1.
pub const ALPHA_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("design infeasible: {condition}")]
    DesignInfeasible { condition: String },
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("asynchronous jump requested with no triggered sensor")]
    EmptyTrigger,
}

fn infeasible(condition: impl Into<String>) -> PolicyError {
    PolicyError::DesignInfeasible {
        condition: condition.into(),
    }
}

/// Dwell time Δ and saturation scale ρ of the sensor timers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTimer", into = "RawTimer")]
pub struct TimerParams {
    delta: f64,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimer {
    delta: f64,
    rho: f64,
}

impl TryFrom<RawTimer> for TimerParams {
    type Error = PolicyError;

    fn try_from(raw: RawTimer) -> Result<Self, Self::Error> {
        TimerParams::new(raw.delta, raw.rho)
    }
}

impl From<TimerParams> for RawTimer {
    fn from(t: TimerParams) -> Self {
        RawTimer {
            delta: t.delta,
            rho: t.rho,
        }
    }
}

impl TimerParams {
    pub fn new(delta: f64, rho: f64) -> Result<Self, PolicyError> {
        if !(delta > 0.0 && delta < rho && rho.is_finite()) {
            return Err(infeasible(format!(
                "timer needs 0 < delta < rho, got delta={delta}, rho={rho}"
            )));
        }
        Ok(Self { delta, rho })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

impl Default for TimerParams {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            rho: 2e-3,
        }
    }
}

pub fn deadzone_scalar(s: f64) -> f64 {
    if s.abs() <= 1.0 {
        0.0
    } else {
        s.signum() * (s.abs() - 1.0)
    }
}

pub fn deadzone(s: &[f64]) -> Vec<f64> {
    s.iter().copied().map(deadzone_scalar).collect()
}

/// τ̇ = 1 − dz(τ/ρ): unit rate up to ρ, then a linear roll-off reaching zero at 2ρ.
pub fn timer_rate(tau: &[f64], timer: &TimerParams) -> Vec<f64> {
    tau.iter()
        .map(|t| 1.0 - deadzone_scalar(t / timer.rho))
        .collect()
}

/// Result of evaluating the flow/jump partition at one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Guard {
    MustFlow,
    MayJump,
}

impl Guard {
    pub fn is_jump(self) -> bool {
        self == Guard::MayJump
    }
}

/// Largest eigenvalue of F11ᵀP1 + P1F11 + Q, required ≤ 0 up to slack.
fn check_lyapunov_inequality(
    err: &ErrorSystem,
    p1: &Matrix,
    q: &Matrix,
) -> Result<(), PolicyError> {
    let lhs = err
        .f11
        .transpose()
        .matmul(p1)?
        .add(&p1.matmul(&err.f11)?)?
        .add(q)?
        .symmetrized();
    let (_, hi) = sym_eig_bounds(&lhs)?;
    let slack = LYAPUNOV_INEQ_RTOL * q.frobenius_norm().max(1.0);
    if hi > slack {
        return Err(infeasible(format!(
            "F11'P1 + P1 F11 <= -Q violated (largest eigenvalue {hi:.3e})"
        )));
    }
    Ok(())
}

fn require_symmetric_pd(name: &str, m: &Matrix, n: usize) -> Result<(), PolicyError> {
    if m.shape() != (n, n) {
        return Err(PolicyError::Dimension(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.rows(),
            m.cols()
        )));
    }
    match is_positive_definite(m) {
        Ok(true) => Ok(()),
        Ok(false) => Err(infeasible(format!("{name} is not positive definite"))),
        Err(e) => Err(infeasible(format!("{name}: {e}"))),
    }
}

/// Derives Q := −(F11ᵀP1 + P1F11) for a supplied certificate P1.
pub fn implied_decay_matrix(err: &ErrorSystem, p1: &Matrix) -> Result<Matrix, PolicyError> {
    Ok(err
        .f11
        .transpose()
        .matmul(p1)?
        .add(&p1.matmul(&err.f11)?)?
        .scale(-1.0)
        .symmetrized())
}

/// Synchronous policy: one shared timer, the whole output vector is sent at once.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncPolicy {
    err: ErrorSystem,
    p1: Matrix,
    p2: Matrix,
    q: Matrix,
    gamma_x: f64,
    gamma_e: f64,
    timer: TimerParams,
}

impl SyncPolicy {
    /// Assembles a policy from an explicit certificate and validates it.
    pub fn from_parts(
        err: &ErrorSystem,
        p1: Matrix,
        p2: Matrix,
        q: Matrix,
        gamma_x: f64,
        gamma_e: f64,
        timer: TimerParams,
    ) -> Result<Self, PolicyError> {
        let policy = Self {
            err: err.clone(),
            p1,
            p2,
            q,
            gamma_x,
            gamma_e,
            timer,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Re-checks every invariant; fails with the first violated condition.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let (n, q) = (self.err.n(), self.err.q());
        if !(self.gamma_x > 0.0 && self.gamma_x.is_finite()) {
            return Err(infeasible("gamma_x must be positive"));
        }
        if !(self.gamma_e > 0.0) {
            return Err(infeasible("gamma_e must be positive"));
        }
        require_symmetric_pd("P1", &self.p1, n)?;
        require_symmetric_pd("P2", &self.p2, q)?;
        require_symmetric_pd("Q", &self.q, n)?;
        check_lyapunov_inequality(&self.err, &self.p1, &self.q)?;
        let (q_min, _) = sym_eig_bounds(&self.q)?;
        if self.gamma_x >= q_min {
            return Err(infeasible(format!(
                "gamma_x I < Q violated (gamma_x={}, lambda_min(Q)={q_min:.6})",
                self.gamma_x
            )));
        }
        if 2.0 * self.gamma_x >= q_min {
            return Err(infeasible(format!(
                "e = 0 must lie in the flow set: need gamma_x < lambda_min(Q)/2 = {:.6}",
                0.5 * q_min
            )));
        }
        Ok(())
    }

    pub fn error_system(&self) -> &ErrorSystem {
        &self.err
    }

    pub fn p1(&self) -> &Matrix {
        &self.p1
    }

    pub fn p2(&self) -> &Matrix {
        &self.p2
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn gamma_x(&self) -> f64 {
        self.gamma_x
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn timer(&self) -> &TimerParams {
        &self.timer
    }

    /// Joint rescaling of (P1, P2, Q, γ_x); guards are homogeneous in it.
    pub fn scaled(&self, factor: f64) -> Result<Self, PolicyError> {
        Self::from_parts(
            &self.err,
            self.p1.scale(factor),
            self.p2.scale(factor),
            self.q.scale(factor),
            self.gamma_x * factor,
            self.gamma_e,
            self.timer,
        )
    }
}

/// Builds a synchronous policy with P1 solving F11ᵀP1 + P1F11 = −Q.
pub fn design_sync(
    err: &ErrorSystem,
    q: &Matrix,
    gamma_x: f64,
    gamma_e: f64,
    p2: &Matrix,
    timer: TimerParams,
) -> Result<SyncPolicy, PolicyError> {
    let p1 = crate::matlib::solve_lyapunov(&err.f11, q)
        .map_err(|e| infeasible(format!("no Lyapunov certificate for F11: {e}")))?;
    SyncPolicy::from_parts(err, p1, p2.clone(), q.clone(), gamma_x, gamma_e, timer)
}

/// ⟨∇V(x,e), F[x;e]⟩ = xᵀP1(F11x + F12e) + eᵀP2(F21x + F22e).
pub fn sync_drift(x: &[f64], e: &[f64], policy: &SyncPolicy) -> f64 {
    let err = &policy.err;
    let mut dx = err.f11.mul_vec(x);
    err.f12.mul_vec_add(e, &mut dx);
    let mut de = err.f21.mul_vec(x);
    err.f22.mul_vec_add(e, &mut de);
    crate::matlib::dot(&policy.p1.mul_vec(x), &dx) + crate::matlib::dot(&policy.p2.mul_vec(e), &de)
}

/// Whether the pair (x, e) lies in the jump set D̄, ignoring the timer.
pub fn sync_in_jump_set(x: &[f64], e: &[f64], policy: &SyncPolicy) -> bool {
    let nx = norm(x);
    sync_drift(x, e, policy) >= -policy.gamma_x * nx * nx || norm(e) >= policy.gamma_e * nx
}

pub fn sync_classify(x: &[f64], e: &[f64], tau: f64, policy: &SyncPolicy) -> Guard {
    if tau >= policy.timer.delta && sync_in_jump_set(x, e, policy) {
        Guard::MayJump
    } else {
        Guard::MustFlow
    }
}

/// Jump map: x kept, ν ← y so e ← 0, timer reset.
pub fn sync_jump(x: &[f64], e: &[f64], _tau: f64) -> (Vec<f64>, Vec<f64>, f64) {
    (x.to_vec(), vec![0.0; e.len()], 0.0)
}

/// Asynchronous policy: each sensor owns a timer and its own guard.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncPolicy {
    p1: Matrix,
    p: Vec<f64>,
    q: Matrix,
    gamma_x: f64,
    epsilon: f64,
    alpha: Vec<f64>,
    a: f64,
    b: f64,
    c: f64,
    timer: TimerParams,
    relaxed_norm_variant: bool,
    q_min: f64,
}

fn validate_alpha(alpha: &[f64], epsilon: f64) -> Result<(), PolicyError> {
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > ALPHA_SUM_TOL {
        return Err(infeasible(format!("alpha must sum to 1, sums to {sum}")));
    }
    if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !(**a > epsilon)) {
        return Err(infeasible(format!(
            "alpha[{i}] = {a} must exceed epsilon = {epsilon}"
        )));
    }
    Ok(())
}

impl AsyncPolicy {
    /// Assembles a policy from an explicit certificate. The gains a, b, c are
    /// always recomputed from the error system.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        err: &ErrorSystem,
        p1: Matrix,
        q: Matrix,
        gamma_x: f64,
        epsilon: f64,
        alpha: Vec<f64>,
        p: Vec<f64>,
        timer: TimerParams,
    ) -> Result<Self, PolicyError> {
        let (n, nq) = (err.n(), err.q());
        if alpha.len() != nq || p.len() != nq {
            return Err(PolicyError::Dimension(format!(
                "alpha and p need {nq} entries, got {} and {}",
                alpha.len(),
                p.len()
            )));
        }
        if !(gamma_x > 0.0 && gamma_x.is_finite()) {
            return Err(infeasible("gamma_x must be positive"));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0 / nq as f64) {
            return Err(infeasible(format!(
                "epsilon must lie in (0, 1/q] = (0, {}], got {epsilon}",
                1.0 / nq as f64
            )));
        }
        validate_alpha(&alpha, epsilon)?;
        if let Some((i, pi)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(infeasible(format!("p[{i}] = {pi} must be positive")));
        }
        require_symmetric_pd("P1", &p1, n)?;
        require_symmetric_pd("Q", &q, n)?;
        check_lyapunov_inequality(err, &p1, &q)?;
        let (q_min, _) = sym_eig_bounds(&q)?;
        if gamma_x / epsilon >= q_min {
            return Err(infeasible(format!(
                "(gamma_x/epsilon) I < Q violated ({:.6} >= lambda_min(Q) = {q_min:.6})",
                gamma_x / epsilon
            )));
        }
        let a = 2.0 * spectral_norm(&p1.matmul(&err.f12)?);
        let b = 2.0 * spectral_norm(&err.f21);
        let c = 2.0 * spectral_norm(&err.f22);
        Ok(Self {
            p1,
            p,
            q,
            gamma_x,
            epsilon,
            alpha,
            a,
            b,
            c,
            timer,
            relaxed_norm_variant: false,
            q_min,
        })
    }

    /// Switches the guards to λ_min(Q)|x|² in place of xᵀQx.
    pub fn with_relaxed_norm(mut self, relaxed: bool) -> Self {
        self.relaxed_norm_variant = relaxed;
        self
    }

    /// Swaps the weights α while keeping P1 and the gains.
    pub fn retune_alpha(&self, alpha: &[f64]) -> Result<Self, PolicyError> {
        if alpha.len() != self.alpha.len() {
            return Err(PolicyError::Dimension(format!(
                "alpha needs {} entries",
                self.alpha.len()
            )));
        }
        validate_alpha(alpha, self.epsilon)?;
        Ok(Self {
            alpha: alpha.to_vec(),
            ..self.clone()
        })
    }

    pub fn p1(&self) -> &Matrix {
        &self.p1
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn gamma_x(&self) -> f64 {
        self.gamma_x
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// The (a, b, c) gains 2|P1F12|, 2|F21|, 2|F22|.
    pub fn gains(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    pub fn timer(&self) -> &TimerParams {
        &self.timer
    }

    pub fn relaxed_norm_variant(&self) -> bool {
        self.relaxed_norm_variant
    }

    pub fn sensors(&self) -> usize {
        self.alpha.len()
    }
}

/// Builds an asynchronous policy with P1 solving F11ᵀP1 + P1F11 = −Q.
pub fn design_async(
    err: &ErrorSystem,
    q: &Matrix,
    gamma_x: f64,
    epsilon: f64,
    alpha: &[f64],
    p: &[f64],
    timer: TimerParams,
) -> Result<AsyncPolicy, PolicyError> {
    let p1 = crate::matlib::solve_lyapunov(&err.f11, q)
        .map_err(|e| infeasible(format!("no Lyapunov certificate for F11: {e}")))?;
    AsyncPolicy::from_parts(
        err,
        p1,
        q.clone(),
        gamma_x,
        epsilon,
        alpha.to_vec(),
        p.to_vec(),
        timer,
    )
}

/// −αᵢ s + (a + b pᵢ)|x||eᵢ| + c pᵢ eᵢ² + γ_x|x|² for sensor `i` (0-based),
/// with s = xᵀQx (or λ_min(Q)|x|² in the relaxed variant). Non-negative
/// values put sensor `i` in its jump set.
pub fn async_margin_i(x: &[f64], e_i: f64, i: usize, policy: &AsyncPolicy) -> f64 {
    let nx2 = crate::matlib::dot(x, x);
    let nx = nx2.sqrt();
    let s = if policy.relaxed_norm_variant {
        policy.q_min * nx2
    } else {
        policy.q.quad_form(x)
    };
    let pi = policy.p[i];
    -policy.alpha[i] * s
        + (policy.a + policy.b * pi) * nx * e_i.abs()
        + policy.c * pi * e_i * e_i
        + policy.gamma_x * nx2
}

/// Sensors (ascending) whose guard and dwell time both allow a transmission.
pub fn async_triggered(x: &[f64], e: &[f64], tau: &[f64], policy: &AsyncPolicy) -> Vec<usize> {
    (0..policy.sensors())
        .filter(|&i| tau[i] >= policy.timer.delta && async_margin_i(x, e[i], i, policy) >= 0.0)
        .collect()
}

/// Resets eᵢ and τᵢ for every triggered sensor; other components untouched.
pub fn async_jump(
    e: &[f64],
    tau: &[f64],
    triggered: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), PolicyError> {
    if triggered.is_empty() {
        return Err(PolicyError::EmptyTrigger);
    }
    let mut e = e.to_vec();
    let mut tau = tau.to_vec();
    for &i in triggered {
        if i >= e.len() || i >= tau.len() {
            return Err(PolicyError::Dimension(format!(
                "sensor index {i} out of range"
            )));
        }
        e[i] = 0.0;
        tau[i] = 0.0;
    }
    Ok((e, tau))
}

/// Norm-threshold baseline: transmit once γ|e| ≥ σα|x|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabuadaBaseline {
    pub sigma: f64,
    pub alpha_rate: f64,
    pub gamma_gain: f64,
    pub timer: TimerParams,
}

impl TabuadaBaseline {
    pub fn new(
        sigma: f64,
        alpha_rate: f64,
        gamma_gain: f64,
        timer: TimerParams,
    ) -> Result<Self, PolicyError> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(infeasible(format!("sigma must lie in (0, 1), got {sigma}")));
        }
        if !(alpha_rate > 0.0 && gamma_gain > 0.0) {
            return Err(infeasible("alpha_rate and gamma_gain must be positive"));
        }
        Ok(Self {
            sigma,
            alpha_rate,
            gamma_gain,
            timer,
        })
    }
}

pub fn tabuada_classify(x: &[f64], e: &[f64], tau: f64, baseline: &TabuadaBaseline) -> Guard {
    if tau >= baseline.timer.delta
        && baseline.gamma_gain * norm(e) >= baseline.sigma * baseline.alpha_rate * norm(x)
    {
        Guard::MayJump
    } else {
        Guard::MustFlow
    }
}

/// Any of the supported transmission policies.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Sync(SyncPolicy),
    Async(AsyncPolicy),
    Tabuada(TabuadaBaseline),
}

impl Policy {
    pub fn timer(&self) -> &TimerParams {
        match self {
            Policy::Sync(p) => p.timer(),
            Policy::Async(p) => p.timer(),
            Policy::Tabuada(p) => &p.timer,
        }
    }

    /// Number of timers: q for the asynchronous policy, otherwise 1.
    pub fn timers(&self, q: usize) -> usize {
        match self {
            Policy::Async(_) => q,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Sync(_) => "sync",
            Policy::Async(_) => "async",
            Policy::Tabuada(_) => "tabuada",
        }
    }

    /// Timer indices allowed to transmit at (x, e, τ), ascending.
    pub fn triggered(&self, x: &[f64], e: &[f64], tau: &[f64]) -> Vec<usize> {
        match self {
            Policy::Sync(p) => sync_classify(x, e, tau[0], p)
                .is_jump()
                .then_some(vec![0])
                .unwrap_or_default(),
            Policy::Tabuada(p) => tabuada_classify(x, e, tau[0], p)
                .is_jump()
                .then_some(vec![0])
                .unwrap_or_default(),
            Policy::Async(p) => async_triggered(x, e, tau, p),
        }
    }

    /// Checks vector lengths against the cascade dimensions.
    pub fn check_dimensions(&self, n: usize, q: usize) -> Result<(), PolicyError> {
        match self {
            Policy::Sync(p) => {
                if p.err.n() != n || p.err.q() != q {
                    return Err(PolicyError::Dimension(format!(
                        "policy built for n={}, q={}; system has n={n}, q={q}",
                        p.err.n(),
                        p.err.q()
                    )));
                }
            }
            Policy::Async(p) => {
                if p.p1.rows() != n || p.sensors() != q {
                    return Err(PolicyError::Dimension(format!(
                        "policy built for n={}, q={}; system has n={n}, q={q}",
                        p.p1.rows(),
                        p.sensors()
                    )));
                }
            }
            Policy::Tabuada(_) => {}
        }
        Ok(())
    }
}
