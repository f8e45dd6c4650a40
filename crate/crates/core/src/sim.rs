//! Standalone device simulation over a time grid.

use serde::{Deserialize, Serialize};

use crate::drivers::{TimeGrid, WaveformSpec};
use crate::error::{Error, Result};
use crate::model::{Memristor, MssParams};
use crate::stochastics::{make_stream, SamplerMode};
use crate::trace::{Trace, TraceRow};

/// How device populations evolve during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Mode {
    Stochastic {
        seed: u64,
        #[serde(default)]
        sampler: SamplerMode,
    },
    /// Deterministic expectation of the stochastic update (no sampling).
    MeanField,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Stochastic { .. } => "stochastic",
            Mode::MeanField => "mean-field",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Mode::Stochastic { seed, .. } => Some(*seed),
            Mode::MeanField => None,
        }
    }

    /// Builds a device in this mode. Stochastic devices draw from
    /// `(seed, stream_id)`.
    pub fn device(
        &self,
        params: MssParams,
        initial_fraction_a: f64,
        stream_id: u64,
    ) -> Result<Memristor> {
        match *self {
            Mode::Stochastic { seed, sampler } => Memristor::stochastic(
                params,
                initial_fraction_a,
                make_stream(seed, stream_id),
                sampler,
            ),
            Mode::MeanField => Memristor::mean_field(params, initial_fraction_a),
        }
    }
}

/// Steps `device` across `grid` under `drive`. Row `k` holds `t_k`, the
/// drive voltage at `t_k`, and the current and state after the step taken
/// with that voltage.
pub fn run_device(device: &mut Memristor, drive: &WaveformSpec, grid: &TimeGrid) -> Result<Trace> {
    drive.validate()?;
    if let Some((field, msg)) = grid.violations().first() {
        return Err(Error::Parameter(format!("grid {field}: {msg}")));
    }
    device.params().check_dt(grid.dt)?;
    let mut trace = Trace::with_capacity(grid.n_steps);
    for k in 0..grid.n_steps {
        let t = grid.time(k);
        let v = drive.value(t);
        let out = device.step(v, grid.dt)?;
        trace.saturated |= out.saturated;
        trace.rows.push(TraceRow {
            t,
            v,
            i: out.current,
            g: out.g_m,
            n_a: device.n_a(),
        });
    }
    Ok(trace)
}

/// Builds a fresh device in `mode` (stream 0) and runs it.
pub fn simulate(
    params: &MssParams,
    initial_fraction_a: f64,
    drive: &WaveformSpec,
    grid: &TimeGrid,
    mode: Mode,
) -> Result<Trace> {
    let mut device = mode.device(*params, initial_fraction_a, 0)?;
    let mut trace = run_device(&mut device, drive, grid)?;
    annotate(&mut trace, params, mode);
    Ok(trace)
}

/// Echoes mode and parameters into the trace header.
pub fn annotate(trace: &mut Trace, params: &MssParams, mode: Mode) {
    trace.push_meta("tool_version", env!("CARGO_PKG_VERSION"));
    trace.push_meta("mode", mode.label());
    match mode {
        Mode::Stochastic { seed, sampler } => {
            trace.push_meta("seed", seed.to_string());
            trace.push_meta("sampler", sampler.as_str());
        }
        Mode::MeanField => {
            trace.push_meta("note", "mean-field expectation, no sampling (not part of the stochastic model)");
        }
    }
    let p = params;
    for (k, v) in [
        ("n_switches", p.n_switches as f64),
        ("t_c", p.t_c),
        ("g_a_total", p.g_a_total),
        ("g_b_total", p.g_b_total),
        ("v_a", p.v_a),
        ("v_b", p.v_b),
        ("phi", p.phi),
        ("diode.alpha_f", p.diode.alpha_f),
        ("diode.beta_f", p.diode.beta_f),
        ("diode.alpha_r", p.diode.alpha_r),
        ("diode.beta_r", p.diode.beta_r),
        ("temperature", p.temperature),
    ] {
        trace.push_meta(format!("param.{k}"), format!("{v:e}"));
    }
}
