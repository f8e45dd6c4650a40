//! Drive waveforms and the fixed-step time grid.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Value of the latest point at or before `t`.
    #[default]
    Hold,
    Linear,
}

/// Time to voltage drive description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WaveformSpec {
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Symmetric triangle through `offset` at t = 0, rising first.
    Triangle {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `high` for `width` at the start of each `period`, `low` otherwise.
    /// After `count` periods the output stays at `low`; `count = 0` repeats
    /// forever.
    PulseTrain {
        high: f64,
        low: f64,
        width: f64,
        period: f64,
        count: u64,
    },
    /// `(t, v)` breakpoints, strictly increasing in `t`. Queries before the
    /// first point return the first value, queries after the last point the
    /// last value.
    Piecewise {
        points: Vec<(f64, f64)>,
        #[serde(default)]
        interpolation: Interpolation,
    },
    Dc {
        v: f64,
    },
}

impl WaveformSpec {
    /// The drive used throughout the reference reproduction: 0.5 V, 500 Hz sine.
    pub fn reference_sine() -> Self {
        WaveformSpec::Sine {
            amplitude: 0.5,
            frequency: 500.0,
            phase: 0.0,
            offset: 0.0,
        }
    }

    /// Returns a list of `(field, message)` violations; empty when valid.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut finite = |name: &'static str, x: f64| {
            if !x.is_finite() {
                out.push((name, format!("must be finite, got {x}")));
            }
        };
        match self {
            WaveformSpec::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                finite("amplitude", *amplitude);
                finite("phase", *phase);
                finite("offset", *offset);
                if !(frequency.is_finite() && *frequency > 0.0) {
                    out.push(("frequency", format!("must be > 0, got {frequency}")));
                }
            }
            WaveformSpec::Triangle {
                amplitude,
                frequency,
                offset,
            } => {
                finite("amplitude", *amplitude);
                finite("offset", *offset);
                if !(frequency.is_finite() && *frequency > 0.0) {
                    out.push(("frequency", format!("must be > 0, got {frequency}")));
                }
            }
            WaveformSpec::PulseTrain {
                high,
                low,
                width,
                period,
                ..
            } => {
                finite("high", *high);
                finite("low", *low);
                if !(width.is_finite() && *width > 0.0) {
                    out.push(("width", format!("must be > 0, got {width}")));
                }
                if !(period.is_finite() && period > width) {
                    out.push(("period", format!("must exceed width ({width}), got {period}")));
                }
            }
            WaveformSpec::Piecewise { points, .. } => {
                if points.is_empty() {
                    out.push(("points", "must contain at least one point".into()));
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    out.push(("points", "all coordinates must be finite".into()));
                }
                if let Some(i) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
                    out.push((
                        "points",
                        format!("times must be strictly increasing (index {})", i + 1),
                    ));
                }
            }
            WaveformSpec::Dc { v } => finite("v", *v),
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::Parameter(format!("waveform {field}: {msg}"))),
        }
    }

    /// Drive period in seconds, if the waveform is periodic.
    pub fn period(&self) -> Option<f64> {
        match self {
            WaveformSpec::Sine { frequency, .. } | WaveformSpec::Triangle { frequency, .. } => {
                Some(1.0 / frequency)
            }
            WaveformSpec::PulseTrain { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// Voltage at time `t`, evaluated analytically.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            WaveformSpec::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (TAU * cycle_fraction(*frequency, t) + phase).sin(),
            WaveformSpec::Triangle {
                amplitude,
                frequency,
                offset,
            } => {
                let x = cycle_fraction(*frequency, t);
                let unit = if x < 0.25 {
                    4.0 * x
                } else if x < 0.75 {
                    2.0 - 4.0 * x
                } else {
                    4.0 * x - 4.0
                };
                offset + amplitude * unit
            }
            WaveformSpec::PulseTrain {
                high,
                low,
                width,
                period,
                count,
            } => {
                if t < 0.0 || (*count > 0 && t >= *count as f64 * period) {
                    return *low;
                }
                if t.rem_euclid(*period) < *width {
                    *high
                } else {
                    *low
                }
            }
            WaveformSpec::Piecewise {
                points,
                interpolation,
            } => piecewise_value(points, *interpolation, t),
            WaveformSpec::Dc { v } => *v,
        }
    }
}

/// Fractional part of `frequency * t`, with the product's rounding error
/// recovered through `mul_add`.
fn cycle_fraction(frequency: f64, t: f64) -> f64 {
    let hi = frequency * t;
    let lo = frequency.mul_add(t, -hi);
    let x = (hi - hi.floor()) + lo;
    x - x.floor()
}

fn piecewise_value(points: &[(f64, f64)], interpolation: Interpolation, t: f64) -> f64 {
    let Some(&(t0, v0)) = points.first() else {
        return 0.0;
    };
    if t <= t0 {
        return v0;
    }
    // index of the first point strictly after t
    let next = points.partition_point(|&(ti, _)| ti <= t);
    if next == points.len() {
        return points[next - 1].1;
    }
    let (ta, va) = points[next - 1];
    match interpolation {
        Interpolation::Hold => va,
        Interpolation::Linear => {
            let (tb, vb) = points[next];
            va + (vb - va) * (t - ta) / (tb - ta)
        }
    }
}

/// Convenience free function mirroring [`WaveformSpec::value`].
pub fn waveform_value(spec: &WaveformSpec, t: f64) -> f64 {
    spec.value(t)
}

/// Uniform time grid `t_k = t_start + k * dt`, `k = 0..n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub dt: f64,
    #[serde(rename = "steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub t_start: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        TimeGrid {
            dt,
            n_steps,
            t_start: 0.0,
        }
    }

    /// 1 µs steps covering two periods of the 500 Hz reference drive.
    pub fn reference() -> Self {
        TimeGrid::new(1e-6, 4000)
    }

    /// Computed from the index, never accumulated.
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(|k| self.time(k))
    }

    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            out.push(("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            out.push(("steps", "must be >= 1".into()));
        }
        if !self.t_start.is_finite() {
            out.push(("t_start", format!("must be finite, got {}", self.t_start)));
        }
        out
    }
}
