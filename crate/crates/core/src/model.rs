//! Device parameterization and the metastable switch population update.
//!
//! The device current is a blend of a memory branch, carried by `N` switches
//! that each sit in a conducting state A or B, and a Schottky diode branch:
//!
//! ```text
//! I   = phi * V * G_m + (1 - phi) * I_s(V)
//! I_s = alpha_f * exp(beta_f * V) - alpha_r * exp(-beta_r * V)
//! G_m = N_A * g_a + N_B * g_b,   g_x = G_x_total / N
//! ```
//!
//! Each step, a switch in B moves to A with probability
//! `p_a = (dt / t_c) * Gamma(V, V_A)` and a switch in A moves to B with
//! probability `p_b = (dt / t_c) * (1 - Gamma(V, -V_B))`, where
//! `Gamma(V, V_th) = 1 / (1 + exp((V - V_th) / V_T))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::{sample_transitions, RandomStream, SamplerMode};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;

/// Thermal voltage `kT/q` in volts.
pub fn thermal_voltage(temperature: f64) -> f64 {
    BOLTZMANN * temperature / ELEMENTARY_CHARGE
}

/// Forward and reverse exponential coefficients of the Schottky branch.
///
/// Magnitudes are in amperes, slopes in 1/V. A zero magnitude disables the
/// corresponding direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiodeParams {
    pub alpha_f: f64,
    pub beta_f: f64,
    pub alpha_r: f64,
    pub beta_r: f64,
}

impl DiodeParams {
    pub const DISABLED: DiodeParams = DiodeParams {
        alpha_f: 0.0,
        beta_f: 0.0,
        alpha_r: 0.0,
        beta_r: 0.0,
    };

    /// Equal forward and reverse coefficients.
    pub fn symmetric(alpha: f64, beta: f64) -> Self {
        DiodeParams {
            alpha_f: alpha,
            beta_f: beta,
            alpha_r: alpha,
            beta_r: beta,
        }
    }

    /// True when either direction can carry current.
    pub fn is_active(&self) -> bool {
        self.alpha_f > 0.0 || self.alpha_r > 0.0
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        [
            ("diode.alpha_f", self.alpha_f),
            ("diode.beta_f", self.beta_f),
            ("diode.alpha_r", self.alpha_r),
            ("diode.beta_r", self.beta_r),
        ]
        .into_iter()
        .filter(|(_, value)| !(value.is_finite() && *value >= 0.0))
        .map(|(name, value)| (name, format!("must be finite and >= 0, got {value}")))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::Parameter(format!("{field} {msg}"))),
        }
    }
}

fn default_temperature() -> f64 {
    300.0
}

/// Full parameter set of one generalized MSS device.
///
/// `g_a_total` and `g_b_total` are device-level conductances reached when
/// every switch sits in A (resp. B); a single switch contributes `G / N`.
/// No ordering between them is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MssParams {
    pub n_switches: u64,
    /// Characteristic switching time, seconds.
    pub t_c: f64,
    pub g_a_total: f64,
    pub g_b_total: f64,
    pub v_a: f64,
    pub v_b: f64,
    /// Weight of the memory branch against the diode branch, in [0, 1].
    pub phi: f64,
    #[serde(default)]
    pub diode: DiodeParams,
    /// Kelvin.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

impl MssParams {
    /// W-Ag-chalcogenide reference device: N = 1000, t_c = 0.1 ms,
    /// G_A = 2.125 mS, G_B = 0.67 mS, V_A = 0.27 V, V_B = 0.37 V, phi = 1.
    pub fn reference_device() -> Self {
        MssParams {
            n_switches: 1000,
            t_c: 1e-4,
            g_a_total: 2.125e-3,
            g_b_total: 0.67e-3,
            v_a: 0.27,
            v_b: 0.37,
            phi: 1.0,
            diode: DiodeParams::DISABLED,
            temperature: 300.0,
        }
    }

    /// The reference device reduced to ten switches.
    pub fn few_switch_device() -> Self {
        MssParams {
            n_switches: 10,
            ..Self::reference_device()
        }
    }

    /// The reference device with a symmetric diode branch blended in at
    /// phi = 0.45 (alpha = 5e-5 A, beta = 6 /V).
    pub fn diode_blend_device() -> Self {
        MssParams {
            phi: 0.45,
            diode: DiodeParams::symmetric(5e-5, 6.0),
            ..Self::reference_device()
        }
    }

    /// Every constraint violation as `(field, message)`; empty when valid.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.n_switches == 0 {
            out.push(("n_switches", "must be >= 1".to_string()));
        }
        if !(self.t_c.is_finite() && self.t_c > 0.0) {
            out.push(("t_c", format!("must be finite and > 0, got {}", self.t_c)));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            out.push(("temperature", format!("must be finite and > 0, got {}", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.phi) {
            out.push(("phi", format!("must lie in [0, 1], got {}", self.phi)));
        }
        for (name, g) in [("g_a_total", self.g_a_total), ("g_b_total", self.g_b_total)] {
            if !(g.is_finite() && g > 0.0) {
                out.push((name, format!("must be finite and > 0, got {g}")));
            } else if self.n_switches > 0 {
                let per_switch = g / self.n_switches as f64;
                if !(per_switch.is_finite() && per_switch > 0.0) {
                    out.push((name, format!("per-switch conductance underflows to {per_switch}")));
                }
            }
        }
        if !self.v_a.is_finite() {
            out.push(("v_a", format!("must be finite, got {}", self.v_a)));
        }
        if !self.v_b.is_finite() {
            out.push(("v_b", format!("must be finite, got {}", self.v_b)));
        }
        out.extend(self.diode.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::Parameter(format!("{field} {msg}"))),
        }
    }

    /// Per-switch conductance in state A.
    pub fn g_a(&self) -> f64 {
        self.g_a_total / self.n_switches as f64
    }

    /// Per-switch conductance in state B.
    pub fn g_b(&self) -> f64 {
        self.g_b_total / self.n_switches as f64
    }

    /// Inverse thermal voltage `q / kT`, 1/V.
    pub fn beta(&self) -> f64 {
        1.0 / thermal_voltage(self.temperature)
    }

    /// `(min, max)` of the two aggregate conductances.
    pub fn conductance_bounds(&self) -> (f64, f64) {
        (
            self.g_a_total.min(self.g_b_total),
            self.g_a_total.max(self.g_b_total),
        )
    }

    /// Rejects time steps that would make `dt / t_c` leave (0, 1].
    pub fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be finite and > 0, got {dt}")));
        }
        if dt > self.t_c {
            return Err(Error::Parameter(format!(
                "dt = {dt} s exceeds t_c = {} s (dt / t_c must not exceed 1)",
                self.t_c
            )));
        }
        Ok(())
    }
}

/// Logistic switching factor `1 / (1 + exp(beta * (v - v_th)))`.
///
/// Saturates cleanly to 0 or 1 for arbitrarily large arguments.
pub fn logistic_gamma(v: f64, v_th: f64, beta: f64) -> Result<f64> {
    if !v.is_finite() || !v_th.is_finite() || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "logistic_gamma needs finite inputs, got v={v}, v_th={v_th}, beta={beta}"
        )));
    }
    if beta <= 0.0 {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    Ok(logistic(beta * (v - v_th)))
}

// 1 / (1 + e^x) without overflow.
#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionProbabilities {
    /// B -> A, per switch per step.
    pub p_a: f64,
    /// A -> B, per switch per step.
    pub p_b: f64,
    /// `dt / t_c`.
    pub alpha: f64,
    /// `q / kT`, 1/V.
    pub beta: f64,
}

pub fn transition_probabilities(
    v: f64,
    params: &MssParams,
    dt: f64,
) -> Result<TransitionProbabilities> {
    params.check_dt(dt)?;
    let alpha = dt / params.t_c;
    let beta = params.beta();
    let p_a = alpha * logistic_gamma(v, params.v_a, beta)?;
    // 1 - Gamma(v, -v_b) == Gamma(-v_b, v); the second form keeps precision in the tail.
    let p_b = alpha * logistic_gamma(-params.v_b, v, beta)?;
    Ok(TransitionProbabilities {
        p_a,
        p_b,
        alpha,
        beta,
    })
}

/// Schottky branch current with a saturation flag.
///
/// Exponential overflow is clamped to `±f64::MAX` and reported through the
/// returned flag.
pub fn schottky_current_flagged(v: f64, diode: &DiodeParams) -> (f64, bool) {
    let term = |alpha: f64, exponent: f64| {
        if alpha == 0.0 {
            0.0
        } else {
            alpha * exponent.exp()
        }
    };
    let forward = term(diode.alpha_f, diode.beta_f * v);
    let reverse = term(diode.alpha_r, -diode.beta_r * v);
    let current = forward - reverse;
    if current.is_finite() {
        (current, false)
    } else if forward.is_infinite() {
        (f64::MAX, true)
    } else {
        (-f64::MAX, true)
    }
}

/// `alpha_f * exp(beta_f * v) - alpha_r * exp(-beta_r * v)`, saturating.
pub fn schottky_current(v: f64, diode: &DiodeParams) -> f64 {
    schottky_current_flagged(v, diode).0
}

/// Evaluates `fa * G_A + fb * G_B` with exact endpoints and clamps to the
/// aggregate conductance range.
fn blend_conductance(frac_a: f64, frac_b: f64, params: &MssParams) -> f64 {
    let (lo, hi) = params.conductance_bounds();
    (frac_a * params.g_a_total + frac_b * params.g_b_total).clamp(lo, hi)
}

/// Integer switch populations of a stochastic device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    n_a: u64,
    n_b: u64,
    g_m: f64,
}

impl DeviceState {
    /// State with `n_a` switches in A and the rest in B.
    pub fn new(n_a: u64, params: &MssParams) -> Result<Self> {
        if n_a > params.n_switches {
            return Err(Error::State(format!(
                "n_a = {n_a} exceeds n_switches = {}",
                params.n_switches
            )));
        }
        Self::from_counts(n_a, params.n_switches - n_a, params)
    }

    /// `round(fraction * N)` switches in A.
    pub fn with_fraction_a(fraction: f64, params: &MssParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::State(format!(
                "initial fraction must lie in [0, 1], got {fraction}"
            )));
        }
        let n_a = (fraction * params.n_switches as f64).round() as u64;
        Self::new(n_a.min(params.n_switches), params)
    }

    pub fn from_counts(n_a: u64, n_b: u64, params: &MssParams) -> Result<Self> {
        let mut state = DeviceState { n_a, n_b, g_m: 0.0 };
        state.g_m = device_conductance(&state, params)?;
        Ok(state)
    }

    pub fn n_a(&self) -> u64 {
        self.n_a
    }

    pub fn n_b(&self) -> u64 {
        self.n_b
    }

    /// Cached device conductance, siemens.
    pub fn g_m(&self) -> f64 {
        self.g_m
    }
}

/// Real-valued populations used by the deterministic mean-field update.
///
/// Only `n_a` is stored; `n_b` is derived as `N - n_a` so the two always sum
/// to `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    n_a: f64,
    n: f64,
    g_m: f64,
}

impl MeanFieldState {
    pub fn new(n_a: f64, params: &MssParams) -> Result<Self> {
        let n = params.n_switches as f64;
        if !(0.0..=n).contains(&n_a) {
            return Err(Error::State(format!("n_a = {n_a} outside [0, {n}]")));
        }
        let mut state = MeanFieldState { n_a, n, g_m: 0.0 };
        state.g_m = mean_field_conductance(&state, params)?;
        Ok(state)
    }

    pub fn with_fraction_a(fraction: f64, params: &MssParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::State(format!(
                "initial fraction must lie in [0, 1], got {fraction}"
            )));
        }
        Self::new(fraction * params.n_switches as f64, params)
    }

    pub fn n_a(&self) -> f64 {
        self.n_a
    }

    pub fn n_b(&self) -> f64 {
        self.n - self.n_a
    }

    pub fn g_m(&self) -> f64 {
        self.g_m
    }
}

/// Device conductance `n_a * g_a + n_b * g_b`.
pub fn device_conductance(state: &DeviceState, params: &MssParams) -> Result<f64> {
    let total = state.n_a.checked_add(state.n_b);
    if total != Some(params.n_switches) {
        return Err(Error::State(format!(
            "populations {} + {} do not sum to n_switches = {}",
            state.n_a, state.n_b, params.n_switches
        )));
    }
    let n = params.n_switches as f64;
    Ok(blend_conductance(
        state.n_a as f64 / n,
        state.n_b as f64 / n,
        params,
    ))
}

pub fn mean_field_conductance(state: &MeanFieldState, params: &MssParams) -> Result<f64> {
    let n = params.n_switches as f64;
    if state.n != n {
        return Err(Error::State(format!(
            "mean-field state built for N = {} used with n_switches = {n}",
            state.n
        )));
    }
    Ok(blend_conductance(state.n_a / n, state.n_b() / n, params))
}

/// One stochastic step: samples B->A and A->B transition counts from the
/// pre-step populations, then recomputes the conductance.
///
/// Returns the new state and `delta_g = g_new - g_old`.
pub fn step_stochastic(
    state: &DeviceState,
    v: f64,
    dt: f64,
    params: &MssParams,
    rng: &mut RandomStream,
    sampler: SamplerMode,
) -> Result<(DeviceState, f64)> {
    let probs = transition_probabilities(v, params, dt)?;
    let to_a = sample_transitions(state.n_b, probs.p_a, rng, sampler)?.min(state.n_b);
    let to_b = sample_transitions(state.n_a, probs.p_b, rng, sampler)?.min(state.n_a);
    let n_a = state.n_a + to_a - to_b;
    let next = DeviceState::from_counts(n_a, params.n_switches - n_a, params)?;
    let delta_g = next.g_m - state.g_m;
    Ok((next, delta_g))
}

/// One mean-field step: the transition counts are replaced by their
/// expectations `n_b * p_a` and `n_a * p_b`.
pub fn step_expected(
    state: &MeanFieldState,
    v: f64,
    dt: f64,
    params: &MssParams,
) -> Result<(MeanFieldState, f64)> {
    let probs = transition_probabilities(v, params, dt)?;
    let to_a = state.n_b() * probs.p_a;
    let to_b = state.n_a * probs.p_b;
    let n_a = (state.n_a + (to_a - to_b)).clamp(0.0, state.n);
    let next = MeanFieldState::new(n_a, params)?;
    let delta_g = next.g_m - state.g_m;
    Ok((next, delta_g))
}

/// Blended device current at voltage `v` and memory conductance `g_m`
/// (use the post-step conductance, `G_m + delta_G_m`).
pub fn total_current(v: f64, g_m: f64, params: &MssParams) -> f64 {
    total_current_flagged(v, g_m, params).0
}

pub fn total_current_flagged(v: f64, g_m: f64, params: &MssParams) -> (f64, bool) {
    let memory = params.phi * v * g_m;
    if params.phi == 1.0 {
        return (memory, false);
    }
    let (diode, saturated) = schottky_current_flagged(v, &params.diode);
    let current = memory + (1.0 - params.phi) * diode;
    if current.is_finite() {
        (current, saturated)
    } else {
        (current.clamp(-f64::MAX, f64::MAX), true)
    }
}

/// How a [`Memristor`] advances its populations.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Stochastic {
        state: DeviceState,
        rng: RandomStream,
        sampler: SamplerMode,
    },
    MeanField {
        state: MeanFieldState,
    },
}

/// Result of advancing a device by one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub delta_g: f64,
    /// Post-step device conductance.
    pub g_m: f64,
    pub current: f64,
    pub saturated: bool,
}

/// A parameterized device together with its evolving state.
#[derive(Debug, Clone)]
pub struct Memristor {
    params: MssParams,
    dynamics: Dynamics,
}

impl Memristor {
    pub fn stochastic(
        params: MssParams,
        initial_fraction_a: f64,
        rng: RandomStream,
        sampler: SamplerMode,
    ) -> Result<Self> {
        params.validate()?;
        let state = DeviceState::with_fraction_a(initial_fraction_a, &params)?;
        Ok(Memristor {
            params,
            dynamics: Dynamics::Stochastic {
                state,
                rng,
                sampler,
            },
        })
    }

    pub fn mean_field(params: MssParams, initial_fraction_a: f64) -> Result<Self> {
        params.validate()?;
        let state = MeanFieldState::with_fraction_a(initial_fraction_a, &params)?;
        Ok(Memristor {
            params,
            dynamics: Dynamics::MeanField { state },
        })
    }

    pub fn params(&self) -> &MssParams {
        &self.params
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn is_mean_field(&self) -> bool {
        matches!(self.dynamics, Dynamics::MeanField { .. })
    }

    pub fn conductance(&self) -> f64 {
        match &self.dynamics {
            Dynamics::Stochastic { state, .. } => state.g_m(),
            Dynamics::MeanField { state } => state.g_m(),
        }
    }

    /// Switches in state A (fractional in mean-field mode).
    pub fn n_a(&self) -> f64 {
        match &self.dynamics {
            Dynamics::Stochastic { state, .. } => state.n_a() as f64,
            Dynamics::MeanField { state } => state.n_a(),
        }
    }

    /// Static I(V) at the current (frozen) conductance.
    pub fn current_at(&self, v: f64) -> f64 {
        total_current(v, self.conductance(), &self.params)
    }

    /// Advances the populations with voltage `v` held for `dt`, then
    /// evaluates the current with the post-step conductance.
    pub fn step(&mut self, v: f64, dt: f64) -> Result<StepOutcome> {
        let delta_g = match &mut self.dynamics {
            Dynamics::Stochastic {
                state,
                rng,
                sampler,
            } => {
                let (next, dg) = step_stochastic(state, v, dt, &self.params, rng, *sampler)?;
                *state = next;
                dg
            }
            Dynamics::MeanField { state } => {
                let (next, dg) = step_expected(state, v, dt, &self.params)?;
                *state = next;
                dg
            }
        };
        let g_m = self.conductance();
        let (current, saturated) = total_current_flagged(v, g_m, &self.params);
        Ok(StepOutcome {
            delta_g,
            g_m,
            current,
            saturated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::make_stream;
    use approx::assert_relative_eq;

    #[test]
    fn thermal_voltage_at_room_temperature() {
        assert_relative_eq!(thermal_voltage(300.0), 0.025_851_999_786_435_53, max_relative = 1e-12);
    }

    #[test]
    fn logistic_midpoint_and_tail() {
        let beta = 1.0 / 0.026;
        assert_eq!(logistic_gamma(0.27, 0.27, beta).unwrap(), 0.5);
        // mpmath, 40 digits: 0.99996909665997360458...
        assert_relative_eq!(
            logistic_gamma(0.0, 0.27, beta).unwrap(),
            0.999_969_096_659_973_6,
            max_relative = 1e-15
        );
    }

    #[test]
    fn logistic_saturates_without_overflow() {
        let beta = 1.0 / 0.026;
        assert_eq!(logistic_gamma(1e6, 0.0, beta).unwrap(), 0.0);
        assert_eq!(logistic_gamma(-1e6, 0.0, beta).unwrap(), 1.0);
        assert_eq!(logistic_gamma(f64::MAX, 0.0, beta).unwrap(), 0.0);
        assert_eq!(logistic_gamma(-f64::MAX, 0.0, beta).unwrap(), 1.0);
        for x in [-700.0, -350.0, 350.0, 700.0] {
            let g = logistic_gamma(x, 0.0, 1.0).unwrap();
            assert!((0.0..=1.0).contains(&g));
        }
    }

    #[test]
    fn logistic_rejects_non_finite() {
        assert!(matches!(logistic_gamma(f64::NAN, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(logistic_gamma(f64::INFINITY, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(logistic_gamma(0.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn probabilities_saturate_at_one_volt() {
        let p = MssParams::reference_device();
        let pr = transition_probabilities(1.0, &p, p.t_c / 100.0).unwrap();
        assert_relative_eq!(pr.alpha, 0.01, max_relative = 1e-15);
        assert!(pr.p_a < 1e-9);
        // mpmath: 5.4517979e-15
        assert_relative_eq!(pr.p_a, 5.451_797_912_549e-15, max_relative = 1e-9);
        assert_relative_eq!(pr.p_b, 0.01, max_relative = 1e-15);
        assert_relative_eq!(pr.beta, 38.681_727_071_833_6, max_relative = 1e-12);
    }

    #[test]
    fn probabilities_at_thresholds() {
        let p = MssParams::reference_device();
        let dt = 1e-6;
        let at_va = transition_probabilities(p.v_a, &p, dt).unwrap();
        assert_eq!(at_va.p_a, at_va.alpha / 2.0);
        let at_vb = transition_probabilities(-p.v_b, &p, dt).unwrap();
        assert_eq!(at_vb.p_b, at_vb.alpha / 2.0);
    }

    #[test]
    fn probabilities_reject_bad_dt() {
        let p = MssParams::reference_device();
        assert!(matches!(transition_probabilities(0.0, &p, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(transition_probabilities(0.0, &p, -1e-6), Err(Error::Parameter(_))));
        assert!(matches!(
            transition_probabilities(0.0, &p, p.t_c * 1.0001),
            Err(Error::Parameter(_))
        ));
        assert!(transition_probabilities(0.0, &p, p.t_c).is_ok());
    }

    #[test]
    fn schottky_values() {
        let d = DiodeParams::symmetric(5e-5, 6.0);
        assert_eq!(schottky_current(0.0, &d), 0.0);
        let asym = DiodeParams { alpha_f: 3e-6, beta_f: 1.0, alpha_r: 1e-6, beta_r: 2.0 };
        assert_relative_eq!(schottky_current(0.0, &asym), 2e-6, max_relative = 1e-15);
        // mpmath: 5e-5 * (e^3 - e^-3) = 1.00178749274099e-3
        assert_relative_eq!(schottky_current(0.5, &d), 1.001_787_492_740_99e-3, max_relative = 1e-14);
        for v in [-3.0, 0.0, 0.4, 100.0] {
            assert_eq!(schottky_current(v, &DiodeParams::DISABLED), 0.0);
        }
    }

    #[test]
    fn schottky_overflow_saturates_with_flag() {
        let d = DiodeParams::symmetric(1e-3, 10.0);
        assert_eq!(schottky_current_flagged(1e3, &d), (f64::MAX, true));
        assert_eq!(schottky_current_flagged(-1e3, &d), (-f64::MAX, true));
        assert!(!schottky_current_flagged(1.0, &d).1);
    }

    #[test]
    fn conductance_examples() {
        let p = MssParams::reference_device();
        assert_eq!(DeviceState::new(1000, &p).unwrap().g_m(), p.g_a_total);
        assert_eq!(DeviceState::new(0, &p).unwrap().g_m(), p.g_b_total);
        let mixed = DeviceState::new(400, &p).unwrap();
        assert_relative_eq!(mixed.g_m(), 1.252e-3, max_relative = 1e-14);
        assert_relative_eq!(
            device_conductance(&mixed, &p).unwrap(),
            400.0 * p.g_a() + 600.0 * p.g_b(),
            max_relative = 8.0 * f64::EPSILON
        );
    }

    #[test]
    fn conductance_rejects_foreign_state() {
        let p = MssParams::reference_device();
        let state = DeviceState::new(5, &MssParams::few_switch_device()).unwrap();
        assert!(matches!(device_conductance(&state, &p), Err(Error::State(_))));
        assert!(DeviceState::new(1001, &p).is_err());
    }

    #[test]
    fn stochastic_step_with_vanishing_probabilities_is_a_no_op() {
        // V_A << v << -V_B pushes both logistic factors below 1e-300.
        let p = MssParams { v_a: -20.0, v_b: -20.0, ..MssParams::reference_device() };
        let pr = transition_probabilities(0.0, &p, 1e-6).unwrap();
        assert!(pr.p_a < 1e-300 && pr.p_b < 1e-300);
        let mut rng = make_stream(3, 0);
        let state = DeviceState::new(417, &p).unwrap();
        for _ in 0..100 {
            let (next, dg) =
                step_stochastic(&state, 0.0, 1e-6, &p, &mut rng, SamplerMode::Auto).unwrap();
            assert_eq!(next, state);
            assert_eq!(dg, 0.0);
        }
    }

    #[test]
    fn stochastic_step_from_full_a_population_cannot_gain_a() {
        let p = MssParams::reference_device();
        let mut rng = make_stream(11, 0);
        let full = DeviceState::new(p.n_switches, &p).unwrap();
        for v in [-1.0, -0.3, 0.0, 0.5] {
            let (next, _) =
                step_stochastic(&full, v, 1e-5, &p, &mut rng, SamplerMode::Auto).unwrap();
            assert!(next.n_a() <= full.n_a());
            assert_eq!(next.n_a() + next.n_b(), p.n_switches);
        }
    }

    #[test]
    fn stochastic_delta_matches_transition_counts() {
        let p = MssParams::reference_device();
        let mut rng = make_stream(5, 2);
        let mut state = DeviceState::new(500, &p).unwrap();
        for k in 0..500 {
            let v = 0.5 * (k as f64 * 0.01).sin();
            let (next, dg) =
                step_stochastic(&state, v, 1e-6, &p, &mut rng, SamplerMode::Auto).unwrap();
            let net = next.n_a() as f64 - state.n_a() as f64;
            let expected = net * (p.g_a() - p.g_b());
            assert!((dg - expected).abs() <= 1e-15, "{dg} vs {expected}");
            state = next;
        }
    }

    #[test]
    fn mean_field_balanced_flows_cancel() {
        // v = (V_A - V_B) / 2 makes both logistic factors equal.
        let p = MssParams { v_a: 0.3, v_b: 0.3, ..MssParams::reference_device() };
        let pr = transition_probabilities(0.0, &p, 1e-5).unwrap();
        assert_eq!(pr.p_a, pr.p_b);
        let state = MeanFieldState::new(500.0, &p).unwrap();
        let (next, dg) = step_expected(&state, 0.0, 1e-5, &p).unwrap();
        assert_eq!(next.n_a(), 500.0);
        assert_eq!(dg, 0.0);
    }

    #[test]
    fn mean_field_single_outflow() {
        let p = MssParams::reference_device();
        let dt = 1e-5;
        let state = MeanFieldState::new(1000.0, &p).unwrap();
        let pr = transition_probabilities(5.0, &p, dt).unwrap();
        assert_relative_eq!(pr.p_b, pr.alpha, max_relative = 1e-15);
        let (next, _) = step_expected(&state, 5.0, dt, &p).unwrap();
        assert_relative_eq!(next.n_a(), 1000.0 * (1.0 - pr.alpha), max_relative = 1e-14);
    }

    #[test]
    fn mean_field_converges_to_fixed_point() {
        let p = MssParams::reference_device();
        let (v, dt) = (0.3, 1e-6);
        let pr = transition_probabilities(v, &p, dt).unwrap();
        let fixed = p.n_switches as f64 * pr.p_a / (pr.p_a + pr.p_b);
        let mut state = MeanFieldState::new(1000.0, &p).unwrap();
        for _ in 0..100_000 {
            state = step_expected(&state, v, dt, &p).unwrap().0;
        }
        assert_relative_eq!(state.n_a(), fixed, max_relative = 1e-9, epsilon = 1e-9);
    }

    #[test]
    fn total_current_examples() {
        let top = MssParams::reference_device();
        assert_eq!(total_current(0.37, 1.3e-3, &top), 0.37 * 1.3e-3);
        assert_eq!(total_current(0.0, 1.3e-3, &top), 0.0);
        let bottom = MssParams::diode_blend_device();
        // 0.45 * 0.5 * 1 mS + 0.55 * 1.0017875e-3 (mpmath: 7.75983121007545e-4)
        assert_relative_eq!(
            total_current(0.5, 1.0e-3, &bottom),
            7.759_831_210_075_446e-4,
            max_relative = 1e-14
        );
    }

    #[test]
    fn params_validation() {
        let good = MssParams::reference_device();
        assert!(good.validate().is_ok());
        let cases = [
            MssParams { n_switches: 0, ..good },
            MssParams { t_c: 0.0, ..good },
            MssParams { temperature: -1.0, ..good },
            MssParams { phi: 1.5, ..good },
            MssParams { g_b_total: 0.0, ..good },
            MssParams { v_a: f64::NAN, ..good },
            MssParams { diode: DiodeParams { alpha_f: -1.0, ..DiodeParams::DISABLED }, ..good },
        ];
        for bad in cases {
            assert!(matches!(bad.validate(), Err(Error::Parameter(_))), "{bad:?}");
        }
    }

    #[test]
    fn memristor_step_reports_post_step_current() {
        let mut dev = Memristor::mean_field(MssParams::reference_device(), 0.5).unwrap();
        let out = dev.step(0.4, 1e-6).unwrap();
        assert_eq!(out.g_m, dev.conductance());
        assert_eq!(out.current, 0.4 * out.g_m);
        assert!(dev.is_mean_field());
    }
}
