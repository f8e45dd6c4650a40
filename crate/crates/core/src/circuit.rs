//! Series chains of memristors and resistors driven by one voltage source.
//!
//! Each step the device conductances are frozen, the shared series current is
//! found by bisection, and only then are the device populations advanced using
//! their solved element voltages.

use crate::drivers::{TimeGrid, WaveformSpec};
use crate::error::{Error, Result};
use crate::model::Memristor;
use crate::trace::{Trace, TraceRow};

#[derive(Debug, Clone)]
pub enum Element {
    Memristor(Memristor),
    /// Linear resistor, conductance in siemens.
    Resistor { conductance: f64 },
}

impl Element {
    fn ohmic_conductance(&self) -> Option<f64> {
        match self {
            Element::Resistor { conductance } => Some(*conductance),
            Element::Memristor(m) => {
                let p = m.params();
                (p.phi == 1.0 || !p.diode.is_active()).then(|| p.phi * m.conductance())
            }
        }
    }

    /// Element voltage carrying current `i`.
    fn voltage_for(&self, i: f64) -> Result<f64> {
        if let Some(g) = self.ohmic_conductance() {
            if g > 0.0 && g.is_finite() {
                return Ok(i / g);
            }
            return Err(Error::Solver(format!(
                "element I(V) is not strictly increasing (ohmic conductance {g})"
            )));
        }
        invert_monotone(|v| element_iv(self, v), i)
    }
}

/// Static I(V) of an element at frozen conductance.
pub fn element_iv(element: &Element, v: f64) -> f64 {
    match element {
        Element::Resistor { conductance } => conductance * v,
        Element::Memristor(m) => m.current_at(v),
    }
}

const MAX_BRACKET_VOLTS: f64 = 1e6;

// Solves f(v) = target for increasing f by bracketing then bisecting to
// machine precision.
fn invert_monotone(f: impl Fn(f64) -> f64, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(hi) < target {
        hi *= 2.0;
        if hi > MAX_BRACKET_VOLTS {
            return Err(Error::Solver(format!(
                "cannot bracket current {target} A below {MAX_BRACKET_VOLTS} V"
            )));
        }
    }
    while f(lo) > target {
        lo *= 2.0;
        if lo < -MAX_BRACKET_VOLTS {
            return Err(Error::Solver(format!(
                "cannot bracket current {target} A above -{MAX_BRACKET_VOLTS} V"
            )));
        }
    }
    if f(lo) > f(hi) {
        return Err(Error::Solver("element I(V) is not monotone".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == target {
            return Ok(mid);
        } else if fm < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (elo, ehi) = ((f(lo) - target).abs(), (f(hi) - target).abs());
    Ok(if elo <= ehi { lo } else { hi })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitStepResult {
    pub element_voltages: Vec<f64>,
    pub series_current: f64,
    /// Largest deviation of any element current from the series current.
    pub kcl_residual: f64,
    pub iterations: usize,
}

impl CircuitStepResult {
    /// `|sum(element voltages) - v_applied|`.
    pub fn partition_error(&self, v_applied: f64) -> f64 {
        (self.element_voltages.iter().sum::<f64>() - v_applied).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub kcl_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            kcl_tolerance: 1e-12,
            max_iterations: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeriesCircuit {
    elements: Vec<Element>,
    drive: WaveformSpec,
    grid: TimeGrid,
    settings: SolverSettings,
}

impl SeriesCircuit {
    pub fn new(elements: Vec<Element>, drive: WaveformSpec, grid: TimeGrid) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Parameter("a series circuit needs at least one element".into()));
        }
        drive.validate()?;
        if let Some((field, msg)) = grid.violations().first() {
            return Err(Error::Parameter(format!("grid {field}: {msg}")));
        }
        for (k, e) in elements.iter().enumerate() {
            match e {
                Element::Memristor(m) => m.params().check_dt(grid.dt).map_err(|err| {
                    Error::Parameter(format!("element {k}: {err}"))
                })?,
                Element::Resistor { conductance } => {
                    if !(conductance.is_finite() && *conductance > 0.0) {
                        return Err(Error::Parameter(format!(
                            "element {k}: resistor conductance must be > 0, got {conductance}"
                        )));
                    }
                }
            }
        }
        Ok(SeriesCircuit {
            elements,
            drive,
            grid,
            settings: SolverSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn drive(&self) -> &WaveformSpec {
        &self.drive
    }

    fn partition(&self, current: f64, v_applied: f64) -> Result<(Vec<f64>, f64)> {
        let last = self.elements.len() - 1;
        let mut voltages = Vec::with_capacity(self.elements.len());
        for e in &self.elements[..last] {
            voltages.push(e.voltage_for(current)?);
        }
        // the last element takes the remainder so the partition is exact
        let rest = v_applied - voltages.iter().sum::<f64>();
        voltages.push(rest);
        let residual = self
            .elements
            .iter()
            .zip(&voltages)
            .map(|(e, &v)| (element_iv(e, v) - current).abs())
            .fold(0.0, f64::max);
        Ok((voltages, residual))
    }

    /// Solves the voltage partition at frozen conductances without advancing
    /// any device.
    pub fn solve(&self, v_applied: f64) -> Result<CircuitStepResult> {
        if !v_applied.is_finite() {
            return Err(Error::Domain(format!("applied voltage must be finite, got {v_applied}")));
        }
        if self.elements.len() == 1 {
            let current = element_iv(&self.elements[0], v_applied);
            return Ok(CircuitStepResult {
                element_voltages: vec![v_applied],
                series_current: current,
                kcl_residual: 0.0,
                iterations: 0,
            });
        }

        // At I = min_k I_k(V/n) every element voltage is <= V/n, at the max
        // every one is >= V/n, so the two bracket the solution.
        let share = v_applied / self.elements.len() as f64;
        let (mut lo, mut hi) = self
            .elements
            .iter()
            .map(|e| element_iv(e, share))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), i| (a.min(i), b.max(i)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Solver(format!(
                "current bracket [{lo}, {hi}] A is not finite at {v_applied} V"
            )));
        }
        let sum_at = |current: f64| -> Result<f64> {
            let mut s = 0.0;
            for e in &self.elements {
                s += e.voltage_for(current)?;
            }
            Ok(s - v_applied)
        };
        // rounding in the inversions can put an endpoint a hair on the wrong
        // side (always when lo == hi, e.g. identical elements)
        let slack = |x: f64| 8.0 * f64::EPSILON * x.abs() + f64::MIN_POSITIVE;
        lo -= slack(lo);
        hi += slack(hi);
        let (f_lo, f_hi) = (sum_at(lo)?, sum_at(hi)?);
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(Error::Solver(format!(
                "bracket failure at {v_applied} V: I in [{lo}, {hi}] A gives voltage excess [{f_lo}, {f_hi}] V"
            )));
        }

        let mut best = self.partition(0.5 * (lo + hi), v_applied)?;
        let mut best_current = 0.5 * (lo + hi);
        let mut iterations = 0;
        while iterations < self.settings.max_iterations && best.1 >= self.settings.kcl_tolerance {
            iterations += 1;
            if sum_at(best_current)? < 0.0 {
                lo = best_current;
            } else {
                hi = best_current;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            best_current = mid;
            best = self.partition(mid, v_applied)?;
        }
        Ok(CircuitStepResult {
            element_voltages: best.0,
            series_current: best_current,
            kcl_residual: best.1,
            iterations,
        })
    }

    /// Solves the partition at `v_applied`, then advances every device one
    /// time step with its element voltage.
    pub fn solve_series_step(&mut self, v_applied: f64) -> Result<CircuitStepResult> {
        let result = self.solve(v_applied)?;
        let dt = self.grid.dt;
        for (e, &v) in self.elements.iter_mut().zip(&result.element_voltages) {
            if let Element::Memristor(m) = e {
                m.step(v, dt)?;
            }
        }
        Ok(result)
    }

    /// Runs the full grid. Trace rows carry the applied voltage, the series
    /// current through the chain after the step (re-solved at the updated
    /// conductances, as a standalone device reports it), and the post-step
    /// state of the first memristor in the chain. The returned step results
    /// are the solves that drove each update.
    pub fn run(&mut self) -> Result<(Trace, Vec<CircuitStepResult>)> {
        let grid = self.grid;
        let mut trace = Trace::with_capacity(grid.n_steps);
        let mut steps = Vec::with_capacity(grid.n_steps);
        for k in 0..grid.n_steps {
            let t = grid.time(k);
            let v = self.drive.value(t);
            let step = self.solve_series_step(v)?;
            let current = self.solve(v)?.series_current;
            let (g, n_a) = self
                .elements
                .iter()
                .find_map(|e| match e {
                    Element::Memristor(m) => Some((m.conductance(), m.n_a())),
                    Element::Resistor { .. } => None,
                })
                .unwrap_or((0.0, 0.0));
            trace.saturated |= !current.is_finite() || current.abs() == f64::MAX;
            trace.rows.push(TraceRow {
                t,
                v,
                i: current,
                g,
                n_a,
            });
            steps.push(step);
        }
        Ok((trace, steps))
    }
}
