//! Recovering device parameters from a measured I-V trace.
//!
//! The objective replays the measured voltage through the mean-field model
//! and scores the current mismatch, so it is a pure deterministic function of
//! the parameters. A bounded Nelder-Mead simplex minimizes it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Memristor, MssParams};
use crate::stochastics::make_stream;
use crate::trace::{Trace, TraceRow};

/// One measured sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredSample {
    pub t: f64,
    pub v: f64,
    pub i: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrace {
    samples: Vec<MeasuredSample>,
    pub source: String,
}

impl MeasuredTrace {
    pub const MIN_SAMPLES: usize = 10;

    pub fn new(samples: Vec<MeasuredSample>, source: impl Into<String>) -> Result<Self> {
        if samples.len() < Self::MIN_SAMPLES {
            return Err(Error::Validation(format!(
                "a measured trace needs at least {} samples, got {}",
                Self::MIN_SAMPLES,
                samples.len()
            )));
        }
        if let Some(k) = samples
            .iter()
            .position(|s| !(s.t.is_finite() && s.v.is_finite() && s.i.is_finite()))
        {
            return Err(Error::Validation(format!("sample {k} is not finite")));
        }
        if let Some(k) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Validation(format!(
                "timestamps must be strictly increasing (sample {} at t = {} follows t = {})",
                k + 1,
                samples[k + 1].t,
                samples[k].t
            )));
        }
        Ok(MeasuredTrace {
            samples,
            source: source.into(),
        })
    }

    /// Uses the `(t, v, i)` columns of a simulated trace as a measurement.
    pub fn from_trace(trace: &Trace, source: impl Into<String>) -> Result<Self> {
        let samples = trace
            .rows
            .iter()
            .map(|r| MeasuredSample { t: r.t, v: r.v, i: r.i })
            .collect();
        Self::new(samples, source)
    }

    pub fn samples(&self) -> &[MeasuredSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Step preceding sample `k`; sample 0 reuses the first interval.
    fn dt(&self, k: usize) -> f64 {
        let k = k.max(1);
        self.samples[k].t - self.samples[k - 1].t
    }

    pub fn max_dt(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .fold(0.0, f64::max)
    }

    /// Root mean square of the measured current.
    pub fn current_rms(&self) -> f64 {
        let n = self.samples.len() as f64;
        (self.samples.iter().map(|s| s.i * s.i).sum::<f64>() / n).sqrt()
    }

    /// Population standard deviation of the measured current.
    pub fn current_std(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().map(|s| s.i).sum::<f64>() / n;
        (self.samples.iter().map(|s| (s.i - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Parameters that can be freed in a fit. The switch count is an integer and
/// is always held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    TC,
    GATotal,
    GBTotal,
    VA,
    VB,
    Phi,
    AlphaF,
    BetaF,
    AlphaR,
    BetaR,
    Temperature,
}

impl ParamName {
    pub const ALL: [ParamName; 11] = [
        ParamName::TC,
        ParamName::GATotal,
        ParamName::GBTotal,
        ParamName::VA,
        ParamName::VB,
        ParamName::Phi,
        ParamName::AlphaF,
        ParamName::BetaF,
        ParamName::AlphaR,
        ParamName::BetaR,
        ParamName::Temperature,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::TC => "t_c",
            ParamName::GATotal => "g_a_total",
            ParamName::GBTotal => "g_b_total",
            ParamName::VA => "v_a",
            ParamName::VB => "v_b",
            ParamName::Phi => "phi",
            ParamName::AlphaF => "alpha_f",
            ParamName::BetaF => "beta_f",
            ParamName::AlphaR => "alpha_r",
            ParamName::BetaR => "beta_r",
            ParamName::Temperature => "temperature",
        }
    }

    pub fn get(self, p: &MssParams) -> f64 {
        match self {
            ParamName::TC => p.t_c,
            ParamName::GATotal => p.g_a_total,
            ParamName::GBTotal => p.g_b_total,
            ParamName::VA => p.v_a,
            ParamName::VB => p.v_b,
            ParamName::Phi => p.phi,
            ParamName::AlphaF => p.diode.alpha_f,
            ParamName::BetaF => p.diode.beta_f,
            ParamName::AlphaR => p.diode.alpha_r,
            ParamName::BetaR => p.diode.beta_r,
            ParamName::Temperature => p.temperature,
        }
    }

    pub fn set(self, p: &mut MssParams, value: f64) {
        let slot = match self {
            ParamName::TC => &mut p.t_c,
            ParamName::GATotal => &mut p.g_a_total,
            ParamName::GBTotal => &mut p.g_b_total,
            ParamName::VA => &mut p.v_a,
            ParamName::VB => &mut p.v_b,
            ParamName::Phi => &mut p.phi,
            ParamName::AlphaF => &mut p.diode.alpha_f,
            ParamName::BetaF => &mut p.diode.beta_f,
            ParamName::AlphaR => &mut p.diode.alpha_r,
            ParamName::BetaR => &mut p.diode.beta_r,
            ParamName::Temperature => &mut p.temperature,
        };
        *slot = value;
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.strip_prefix("diode.").unwrap_or(s);
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown fit parameter '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: ParamName,
    pub lower: f64,
    pub upper: f64,
    /// Starting value; defaults to the base parameter value.
    #[serde(default)]
    pub initial: Option<f64>,
}

impl FreeParam {
    pub fn new(name: ParamName, lower: f64, upper: f64) -> Self {
        FreeParam {
            name,
            lower,
            upper,
            initial: None,
        }
    }

    pub fn starting_at(mut self, initial: f64) -> Self {
        self.initial = Some(initial);
        self
    }
}

/// How the switch populations are initialized before the scored pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialStatePolicy {
    /// Start at `n_a = N/2`, replay the first `period` seconds of the
    /// measured drive (the whole record when `period` is absent), discard it,
    /// then score from the resulting state.
    BurnIn {
        #[serde(default)]
        period: Option<f64>,
    },
    /// Score directly from `n_a = fraction * N`.
    FixedFraction { fraction: f64 },
}

impl Default for InitialStatePolicy {
    fn default() -> Self {
        InitialStatePolicy::BurnIn { period: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Amperes.
    Rmse,
    /// RMSE over the measured current's standard deviation.
    #[default]
    NormalizedRmse,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Rmse => "rmse",
            LossKind::NormalizedRmse => "normalized-rmse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Optimizer {
    NelderMead { max_iters: usize, tol: f64 },
    RandomSearch { budget: usize, seed: u64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::NelderMead {
            max_iters: 2000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub measured: MeasuredTrace,
    /// Supplies every parameter not listed in `free`.
    pub base: MssParams,
    pub free: Vec<FreeParam>,
    pub initial_state: InitialStatePolicy,
    pub loss: LossKind,
    pub optimizer: Optimizer,
}

impl FitProblem {
    pub fn new(measured: MeasuredTrace, base: MssParams, free: Vec<FreeParam>) -> Self {
        FitProblem {
            measured,
            base,
            free,
            initial_state: InitialStatePolicy::default(),
            loss: LossKind::default(),
            optimizer: Optimizer::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for (k, fp) in self.free.iter().enumerate() {
            if !(fp.lower.is_finite() && fp.upper.is_finite() && fp.lower < fp.upper) {
                return Err(Error::Parameter(format!(
                    "free parameter {}: bounds must be finite with lower < upper, got [{}, {}]",
                    fp.name, fp.lower, fp.upper
                )));
            }
            let x0 = fp.initial.unwrap_or_else(|| fp.name.get(&self.base));
            if !(fp.lower..=fp.upper).contains(&x0) {
                return Err(Error::Parameter(format!(
                    "free parameter {}: initial value {x0} outside [{}, {}]",
                    fp.name, fp.lower, fp.upper
                )));
            }
            if self.free[..k].iter().any(|other| other.name == fp.name) {
                return Err(Error::Parameter(format!("free parameter {} listed twice", fp.name)));
            }
        }
        match self.optimizer {
            Optimizer::NelderMead { max_iters, tol } => {
                if max_iters == 0 || !(tol.is_finite() && tol >= 0.0) {
                    return Err(Error::Parameter(
                        "nelder-mead needs max_iters >= 1 and a finite tol >= 0".into(),
                    ));
                }
            }
            Optimizer::RandomSearch { budget, .. } => {
                if budget == 0 {
                    return Err(Error::Parameter("random search needs budget >= 1".into()));
                }
            }
        }
        if let InitialStatePolicy::FixedFraction { fraction } = self.initial_state {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::Parameter(format!(
                    "initial fraction must lie in [0, 1], got {fraction}"
                )));
            }
        }
        Ok(())
    }

    fn initial_point(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|fp| fp.initial.unwrap_or_else(|| fp.name.get(&self.base)))
            .collect()
    }

    /// Base parameters with the free coordinates replaced by `x`.
    pub fn params_at(&self, x: &[f64]) -> MssParams {
        let mut p = self.base;
        for (fp, &value) in self.free.iter().zip(x) {
            fp.name.set(&mut p, value);
        }
        p
    }

    /// Objective at `x`; invalid parameter combinations score `+inf`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let params = self.params_at(x);
        simulate_for_fit_with(&params, &self.measured, self.initial_state)
            .and_then(|model| loss(&model, &self.measured, self.loss))
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MssParams,
    pub loss_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best-so-far loss after each iteration.
    pub loss_history: Vec<f64>,
}

/// Mean-field replay of `measured` with the default burn-in policy.
pub fn simulate_for_fit(params: &MssParams, measured: &MeasuredTrace) -> Result<Trace> {
    simulate_for_fit_with(params, measured, InitialStatePolicy::default())
}

/// Mean-field replay of the measured voltage samples. Sample `k` is stepped
/// with its own voltage over the preceding interval, matching a grid
/// simulation when the samples are uniform.
pub fn simulate_for_fit_with(
    params: &MssParams,
    measured: &MeasuredTrace,
    policy: InitialStatePolicy,
) -> Result<Trace> {
    params.validate()?;
    let max_dt = measured.max_dt();
    if max_dt > params.t_c {
        return Err(Error::Parameter(format!(
            "measured sample spacing {max_dt} s exceeds t_c = {} s",
            params.t_c
        )));
    }
    let samples = measured.samples();
    let mut device = match policy {
        InitialStatePolicy::BurnIn { period } => {
            let mut device = Memristor::mean_field(*params, 0.5)?;
            let t0 = samples[0].t;
            let end = match period {
                Some(p) => samples.partition_point(|s| s.t - t0 < p),
                None => samples.len(),
            };
            for (k, s) in samples[..end].iter().enumerate() {
                device.step(s.v, measured.dt(k))?;
            }
            device
        }
        InitialStatePolicy::FixedFraction { fraction } => Memristor::mean_field(*params, fraction)?,
    };

    let mut trace = Trace::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let out = device.step(s.v, measured.dt(k))?;
        trace.saturated |= out.saturated;
        trace.rows.push(TraceRow {
            t: s.t,
            v: s.v,
            i: out.current,
            g: out.g_m,
            n_a: device.n_a(),
        });
    }
    Ok(trace)
}

/// Current mismatch between a model trace and the measurement.
pub fn loss(model: &Trace, measured: &MeasuredTrace, kind: LossKind) -> Result<f64> {
    if model.len() != measured.len() {
        return Err(Error::Domain(format!(
            "model has {} rows but the measurement has {} samples",
            model.len(),
            measured.len()
        )));
    }
    let n = measured.len() as f64;
    let sse: f64 = model
        .rows
        .iter()
        .zip(measured.samples())
        .map(|(m, s)| (m.i - s.i).powi(2))
        .sum();
    let rmse = (sse / n).sqrt();
    Ok(match kind {
        LossKind::Rmse => rmse,
        LossKind::NormalizedRmse => {
            let sd = measured.current_std();
            if sd > 0.0 {
                rmse / sd
            } else if rmse == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    })
}

/// Relative perturbation of each initial coordinate in the starting simplex.
pub const SIMPLEX_RELATIVE_STEP: f64 = 0.05;
/// Floor on the perturbation, as a fraction of the parameter's bound width.
pub const SIMPLEX_MIN_STEP_FRACTION: f64 = 0.01;

pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let x0 = problem.initial_point();
    let params0 = problem.params_at(&x0);
    let f0 = simulate_for_fit_with(&params0, &problem.measured, problem.initial_state)
        .and_then(|model| loss(&model, &problem.measured, problem.loss))
        .map_err(|e| Error::FitInit(format!("objective failed at the initial point: {e}")))?;
    if !f0.is_finite() {
        return Err(Error::FitInit(format!("objective is {f0} at the initial point")));
    }
    if problem.free.is_empty() {
        return Ok(FitResult {
            params: params0,
            loss_value: f0,
            iterations: 0,
            evaluations: 1,
            converged: true,
            loss_history: vec![f0],
        });
    }
    match problem.optimizer {
        Optimizer::NelderMead { max_iters, tol } => {
            Ok(nelder_mead(problem, &x0, f0, max_iters, tol))
        }
        Optimizer::RandomSearch { budget, seed } => Ok(random_search(problem, &x0, f0, budget, seed)),
    }
}

// Internally the simplex lives in unit-box coordinates u in [0,1]^d with
// x = lower + u * (upper - lower); trial points are clamped into the box.
struct UnitBox<'a> {
    free: &'a [FreeParam],
}

impl UnitBox<'_> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(u)
            .map(|(fp, &ui)| (fp.lower + ui * (fp.upper - fp.lower)).clamp(fp.lower, fp.upper))
            .collect()
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .zip(x)
            .map(|(fp, &xi)| (xi - fp.lower) / (fp.upper - fp.lower))
            .collect()
    }
}

fn clamp_unit(u: &mut [f64]) {
    for ui in u {
        *ui = ui.clamp(0.0, 1.0);
    }
}

fn initial_simplex(bx: &UnitBox, x0: &[f64]) -> Vec<Vec<f64>> {
    let u0 = bx.to_u(x0);
    let mut simplex = vec![u0.clone()];
    for (j, fp) in bx.free.iter().enumerate() {
        let width = fp.upper - fp.lower;
        let step = (SIMPLEX_RELATIVE_STEP * x0[j].abs()).max(SIMPLEX_MIN_STEP_FRACTION * width);
        let mut x = x0.to_vec();
        x[j] = if x0[j] + step <= fp.upper {
            x0[j] + step
        } else {
            x0[j] - step
        };
        let mut u = bx.to_u(&x);
        clamp_unit(&mut u);
        simplex.push(u);
    }
    simplex
}

fn nelder_mead(problem: &FitProblem, x0: &[f64], f0: f64, max_iters: usize, tol: f64) -> FitResult {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;
    // a converged simplex is restarted around its best vertex until a restart
    // fails to improve the loss
    const MAX_RESTARTS: usize = 20;

    let bx = UnitBox { free: &problem.free };
    let d = problem.free.len();
    let mut evaluations = 0usize;
    let mut eval = |u: &[f64]| {
        evaluations += 1;
        problem.objective(&bx.to_x(u))
    };

    let mut best_u = bx.to_u(x0);
    let mut best_f = f0;
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;
    let mut start_x = x0.to_vec();

    for _restart in 0..=MAX_RESTARTS {
        let restart_best = best_f;
        let mut simplex = initial_simplex(&bx, &start_x);
        let mut values: Vec<f64> = simplex
            .iter()
            .enumerate()
            .map(|(k, u)| if k == 0 { best_f } else { eval(u) })
            .collect();
        let mut inner_converged = false;

        while iterations < max_iters {
            let mut order: Vec<usize> = (0..=d).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            simplex = order.iter().map(|&k| simplex[k].clone()).collect();
            values = order.iter().map(|&k| values[k]).collect();

            if values[0] < best_f {
                best_f = values[0];
                best_u = simplex[0].clone();
            }

            let f_spread = values[d] - values[0];
            let x_spread = simplex[1..]
                .iter()
                .flat_map(|u| u.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if x_spread <= tol || (f_spread.is_finite() && f_spread <= tol * values[0].abs()) {
                inner_converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..d)
                .map(|j| simplex[..d].iter().map(|u| u[j]).sum::<f64>() / d as f64)
                .collect();
            let along = |coef: f64| -> Vec<f64> {
                let mut u: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[d])
                    .map(|(c, w)| c + coef * (c - w))
                    .collect();
                clamp_unit(&mut u);
                u
            };

            let reflected = along(REFLECT);
            let f_r = eval(&reflected);
            if f_r < values[0] {
                let expanded = along(EXPAND);
                let f_e = eval(&expanded);
                if f_e < f_r {
                    simplex[d] = expanded;
                    values[d] = f_e;
                } else {
                    simplex[d] = reflected;
                    values[d] = f_r;
                }
            } else if f_r < values[d - 1] {
                simplex[d] = reflected;
                values[d] = f_r;
            } else {
                let (contracted, f_c) = if f_r < values[d] {
                    let u = along(CONTRACT);
                    let f = eval(&u);
                    (u, f)
                } else {
                    let u = along(-CONTRACT);
                    let f = eval(&u);
                    (u, f)
                };
                if f_c < values[d].min(f_r) {
                    simplex[d] = contracted;
                    values[d] = f_c;
                } else {
                    for k in 1..=d {
                        let shrunk: Vec<f64> = simplex[k]
                            .iter()
                            .zip(&simplex[0])
                            .map(|(x, b)| b + SHRINK * (x - b))
                            .collect();
                        values[k] = eval(&shrunk);
                        simplex[k] = shrunk;
                    }
                }
            }

            let iter_best = values.iter().copied().fold(f64::INFINITY, f64::min);
            if iter_best < best_f {
                let k = values.iter().position(|&v| v == iter_best).unwrap_or(0);
                best_f = iter_best;
                best_u = simplex[k].clone();
            }
            history.push(best_f);
        }

        if !inner_converged {
            break;
        }
        let improved = best_f < restart_best - tol * restart_best.abs();
        if !improved || best_f == 0.0 {
            converged = true;
            break;
        }
        start_x = bx.to_x(&best_u);
    }

    let x = bx.to_x(&best_u);
    FitResult {
        params: problem.params_at(&x),
        loss_value: best_f,
        iterations,
        evaluations: evaluations + 1,
        converged,
        loss_history: history,
    }
}

fn random_search(problem: &FitProblem, x0: &[f64], f0: f64, budget: usize, seed: u64) -> FitResult {
    let mut rng = make_stream(seed, 0);
    let candidates: Vec<Vec<f64>> = (0..budget)
        .map(|_| {
            problem
                .free
                .iter()
                .map(|fp| fp.lower + rng.random::<f64>() * (fp.upper - fp.lower))
                .collect()
        })
        .collect();
    let losses: Vec<f64> = candidates.par_iter().map(|x| problem.objective(x)).collect();

    let mut best_x = x0.to_vec();
    let mut best_f = f0;
    let mut history = Vec::with_capacity(budget);
    for (x, &f) in candidates.iter().zip(&losses) {
        if f < best_f {
            best_f = f;
            best_x = x.clone();
        }
        history.push(best_f);
    }
    FitResult {
        params: problem.params_at(&best_x),
        loss_value: best_f,
        iterations: budget,
        evaluations: budget + 1,
        // the whole budget is always spent
        converged: false,
        loss_history: history,
    }
}
