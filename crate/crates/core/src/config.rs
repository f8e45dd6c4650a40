//! TOML configuration for the `mss` tool.
//!
//! A simulation file looks like:
//!
//! ```toml
//! [drive]
//! type = "sine"          # sine | triangle | pulse-train | piecewise | dc
//! amplitude = 0.5
//! frequency = 500.0
//!
//! [grid]
//! dt = 1e-6
//! steps = 4000
//!
//! [mode]
//! kind = "stochastic"    # or "mean-field"
//! seed = 1
//! sampler = "auto"       # auto | exact-binomial | normal-approx
//!
//! [[element]]            # one memristor: standalone device; more: series chain
//! kind = "memristor"
//! initial_fraction_a = 0.5
//! [element.params]
//! n_switches = 1000
//! t_c = 1e-4
//! g_a_total = 2.125e-3
//! g_b_total = 0.67e-3
//! v_a = 0.27
//! v_b = 0.37
//! phi = 1.0
//!
//! [[output]]
//! csv = "trace.csv"
//! svg = "trace.svg"
//! ```
//!
//! Validation collects every violation, each tagged with the dotted path of
//! the offending field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{Element, SeriesCircuit};
use crate::drivers::{TimeGrid, WaveformSpec};
use crate::error::Result;
use crate::fitting::{FitProblem, FreeParam, InitialStatePolicy, LossKind, MeasuredTrace, Optimizer, ParamName};
use crate::model::MssParams;
use crate::sim::{annotate, run_device, Mode};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    pub fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            issues: vec![ConfigIssue {
                path: path.into(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Default)]
struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn extend(&mut self, prefix: &str, found: Vec<(&'static str, String)>) {
        for (field, msg) in found {
            self.push(format!("{prefix}.{field}"), msg);
        }
    }

    fn finish(self) -> std::result::Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues: self.0 })
        }
    }
}

fn toml_error(e: &toml::de::Error, text: &str) -> ConfigError {
    let path = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].lines().count().max(1);
            format!("line {line}")
        }
        None => "<file>".into(),
    };
    ConfigError::single(path, e.message().replace('\n', " "))
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ElementConfig {
    Memristor {
        params: MssParams,
        #[serde(default = "half")]
        initial_fraction_a: f64,
    },
    Resistor {
        conductance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Switches,
    Param(ParamName),
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "n_switches" {
            Some(SweepParam::Switches)
        } else {
            s.parse().ok().map(SweepParam::Param)
        }
    }

    pub fn apply(self, params: &mut MssParams, value: f64) {
        match self {
            SweepParam::Switches => params.n_switches = value.round() as u64,
            SweepParam::Param(name) => name.set(params, value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Any fit parameter name, or `n_switches`.
    pub parameter: String,
    /// Index into `element` of the memristor to modify.
    #[serde(default)]
    pub element: usize,
    pub values: Vec<f64>,
    /// Output file stem; point `k` writes `<stem>_<k>.csv` and `.svg`.
    #[serde(default = "default_sweep_stem")]
    pub stem: String,
    #[serde(default)]
    pub svg: bool,
}

fn default_sweep_stem() -> String {
    "sweep".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub drive: WaveformSpec,
    pub grid: TimeGrid,
    pub mode: Mode,
    #[serde(rename = "element")]
    pub elements: Vec<ElementConfig>,
    #[serde(rename = "output", default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mean_field: Option<bool>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| toml_error(&e, text))
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn single_device(params: MssParams, drive: WaveformSpec, grid: TimeGrid, mode: Mode) -> Self {
        SimulationConfig {
            drive,
            grid,
            mode,
            elements: vec![ElementConfig::Memristor {
                params,
                initial_fraction_a: 0.5,
            }],
            outputs: Vec::new(),
            sweep: None,
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.grid.dt = dt;
        }
        if let Some(steps) = o.steps {
            self.grid.n_steps = steps;
        }
        let current_seed = self.mode.seed();
        let default_sampler = match self.mode {
            Mode::Stochastic { sampler, .. } => sampler,
            Mode::MeanField => Default::default(),
        };
        match o.mean_field {
            Some(true) => self.mode = Mode::MeanField,
            Some(false) => {
                self.mode = Mode::Stochastic {
                    seed: o.seed.or(current_seed).unwrap_or(0),
                    sampler: default_sampler,
                }
            }
            None => {}
        }
        if let (Some(seed), Mode::Stochastic { sampler, .. }) = (o.seed, self.mode) {
            self.mode = Mode::Stochastic { seed, sampler };
        }
    }

    /// Checks the entire configuration, reporting every violation.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let mut issues = Issues::default();
        issues.extend("drive", self.drive.violations());
        issues.extend("grid", self.grid.violations());
        if self.elements.is_empty() {
            issues.push("element", "at least one element is required");
        }
        for (k, e) in self.elements.iter().enumerate() {
            match e {
                ElementConfig::Memristor {
                    params,
                    initial_fraction_a,
                } => {
                    issues.extend(&format!("element[{k}].params"), params.violations());
                    if !(0.0..=1.0).contains(initial_fraction_a) {
                        issues.push(
                            format!("element[{k}].initial_fraction_a"),
                            format!("must lie in [0, 1], got {initial_fraction_a}"),
                        );
                    }
                    if self.grid.dt > params.t_c {
                        issues.push(
                            "grid.dt",
                            format!(
                                "dt = {} s exceeds t_c = {} s of element[{k}] (dt / t_c must not exceed 1)",
                                self.grid.dt, params.t_c
                            ),
                        );
                    }
                }
                ElementConfig::Resistor { conductance } => {
                    if !(conductance.is_finite() && *conductance > 0.0) {
                        issues.push(
                            format!("element[{k}].conductance"),
                            format!("must be finite and > 0, got {conductance}"),
                        );
                    }
                }
            }
        }
        if !self.elements.is_empty()
            && !self.elements.iter().any(|e| matches!(e, ElementConfig::Memristor { .. }))
        {
            issues.push("element", "at least one element must be a memristor");
        }
        for (k, out) in self.outputs.iter().enumerate() {
            if out.csv.as_os_str().is_empty() {
                issues.push(format!("output[{k}].csv"), "path must not be empty");
            }
        }
        if let Some(sweep) = &self.sweep {
            match SweepParam::parse(&sweep.parameter) {
                None => issues.push("sweep.parameter", format!("unknown parameter '{}'", sweep.parameter)),
                Some(param) => {
                    match self.elements.get(sweep.element) {
                        Some(ElementConfig::Memristor { params, .. }) => {
                            for (j, &value) in sweep.values.iter().enumerate() {
                                let mut p = *params;
                                param.apply(&mut p, value);
                                for (field, msg) in p.violations() {
                                    issues.push(format!("sweep.values[{j}]"), format!("{field} {msg}"));
                                }
                                if p.t_c.is_finite() && self.grid.dt > p.t_c {
                                    issues.push(
                                        format!("sweep.values[{j}]"),
                                        format!("t_c = {} s is below grid.dt = {} s", p.t_c, self.grid.dt),
                                    );
                                }
                            }
                        }
                        _ => issues.push(
                            "sweep.element",
                            format!("element[{}] is not a memristor", sweep.element),
                        ),
                    }
                }
            }
            if sweep.values.is_empty() {
                issues.push("sweep.values", "must list at least one value");
            }
        }
        issues.finish()
    }

    /// Runs the configured simulation. `point` selects the random streams:
    /// memristor `j` draws from stream `point + j * 2^32`.
    pub fn run(&self, point: u64) -> Result<Trace> {
        self.validate()?;
        let stream = |j: usize| point + ((j as u64) << 32);
        let mut trace = if let [ElementConfig::Memristor {
            params,
            initial_fraction_a,
        }] = self.elements.as_slice()
        {
            let mut device = self.mode.device(*params, *initial_fraction_a, stream(0))?;
            run_device(&mut device, &self.drive, &self.grid)?
        } else {
            let mut elements = Vec::with_capacity(self.elements.len());
            for (j, e) in self.elements.iter().enumerate() {
                elements.push(match e {
                    ElementConfig::Memristor {
                        params,
                        initial_fraction_a,
                    } => Element::Memristor(self.mode.device(*params, *initial_fraction_a, stream(j))?),
                    ElementConfig::Resistor { conductance } => Element::Resistor {
                        conductance: *conductance,
                    },
                });
            }
            let mut circuit = SeriesCircuit::new(elements, self.drive.clone(), self.grid)?;
            let (mut trace, _) = circuit.run()?;
            trace.push_meta("topology", format!("series chain of {} elements", self.elements.len()));
            trace
        };
        if let Some(params) = self.first_memristor() {
            annotate(&mut trace, params, self.mode);
        }
        trace.push_meta("stream_base", point.to_string());
        trace.push_meta("config", self.to_toml());
        Ok(trace)
    }

    pub fn first_memristor(&self) -> Option<&MssParams> {
        self.elements.iter().find_map(|e| match e {
            ElementConfig::Memristor { params, .. } => Some(params),
            ElementConfig::Resistor { .. } => None,
        })
    }

    /// The configuration of sweep point `k`.
    pub fn sweep_point(&self, k: usize) -> Option<SimulationConfig> {
        let sweep = self.sweep.as_ref()?;
        let value = *sweep.values.get(k)?;
        let param = SweepParam::parse(&sweep.parameter)?;
        let mut point = self.clone();
        point.sweep = None;
        if let Some(ElementConfig::Memristor { params, .. }) = point.elements.get_mut(sweep.element) {
            param.apply(params, value);
        }
        Some(point)
    }
}

/// The three demonstration panels: baseline device, few-switch device, and
/// diode blend, all under the reference 500 Hz, 0.5 V sine.
pub fn demo_fig1(mode: Mode, grid: TimeGrid) -> [(&'static str, SimulationConfig); 3] {
    let panel = |params| SimulationConfig::single_device(params, WaveformSpec::reference_sine(), grid, mode);
    [
        ("top", panel(MssParams::reference_device())),
        ("center", panel(MssParams::few_switch_device())),
        ("bottom", panel(MssParams::diode_blend_device())),
    ]
}

fn default_report() -> PathBuf {
    "fit_report.txt".into()
}

fn default_overlay() -> PathBuf {
    "fit_overlay.svg".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOutputs {
    #[serde(default = "default_report")]
    pub report: PathBuf,
    #[serde(default = "default_overlay")]
    pub svg: PathBuf,
}

impl Default for FitOutputs {
    fn default() -> Self {
        FitOutputs {
            report: default_report(),
            svg: default_overlay(),
        }
    }
}

/// Configuration of the `fit` command.
///
/// ```toml
/// measurement = "device.csv"   # relative to the config file
/// loss = "normalized-rmse"     # or "rmse"
/// initial_state = { policy = "burn-in" }
/// optimizer = { kind = "nelder-mead", max_iters = 2000, tol = 1e-10 }
///
/// [base]                       # full MssParams; free entries override
/// n_switches = 1000
/// ...
///
/// [[free]]
/// name = "v_a"
/// lower = 0.05
/// upper = 0.8
/// initial = 0.15
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub measurement: PathBuf,
    pub base: MssParams,
    #[serde(default)]
    pub free: Vec<FreeParam>,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub initial_state: InitialStatePolicy,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub output: FitOutputs,
}

impl FitConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| toml_error(&e, text))
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let mut issues = Issues::default();
        issues.extend("base", self.base.violations());
        for (k, fp) in self.free.iter().enumerate() {
            if !(fp.lower.is_finite() && fp.upper.is_finite() && fp.lower < fp.upper) {
                issues.push(
                    format!("free[{k}]"),
                    format!("bounds must be finite with lower < upper, got [{}, {}]", fp.lower, fp.upper),
                );
            }
            let x0 = fp.initial.unwrap_or_else(|| fp.name.get(&self.base));
            if !(fp.lower..=fp.upper).contains(&x0) {
                issues.push(format!("free[{k}].initial"), format!("{x0} lies outside [{}, {}]", fp.lower, fp.upper));
            }
            if self.free[..k].iter().any(|o| o.name == fp.name) {
                issues.push(format!("free[{k}].name"), format!("{} is listed more than once", fp.name));
            }
        }
        match self.optimizer {
            Optimizer::NelderMead { max_iters, tol } => {
                if max_iters == 0 {
                    issues.push("optimizer.max_iters", "must be >= 1");
                }
                if !(tol.is_finite() && tol >= 0.0) {
                    issues.push("optimizer.tol", format!("must be finite and >= 0, got {tol}"));
                }
            }
            Optimizer::RandomSearch { budget, .. } => {
                if budget == 0 {
                    issues.push("optimizer.budget", "must be >= 1");
                }
            }
        }
        if let InitialStatePolicy::FixedFraction { fraction } = self.initial_state {
            if !(0.0..=1.0).contains(&fraction) {
                issues.push("initial_state.fraction", format!("must lie in [0, 1], got {fraction}"));
            }
        }
        if let InitialStatePolicy::BurnIn { period: Some(p) } = self.initial_state {
            if !(p.is_finite() && p > 0.0) {
                issues.push("initial_state.period", format!("must be finite and > 0, got {p}"));
            }
        }
        issues.finish()
    }

    pub fn problem(&self, measured: MeasuredTrace) -> FitProblem {
        FitProblem {
            measured,
            base: self.base,
            free: self.free.clone(),
            initial_state: self.initial_state,
            loss: self.loss,
            optimizer: self.optimizer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[drive]
type = "sine"
amplitude = 0.5
frequency = 500.0

[grid]
dt = 1e-6
steps = 100

[mode]
kind = "stochastic"
seed = 7

[[element]]
kind = "memristor"
[element.params]
n_switches = 1000
t_c = 1e-4
g_a_total = 2.125e-3
g_b_total = 0.67e-3
v_a = 0.27
v_b = 0.37
phi = 1.0

[[output]]
csv = "trace.csv"
"#;

    #[test]
    fn parses_example() {
        let cfg = SimulationConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.drive, WaveformSpec::reference_sine());
        assert_eq!(cfg.grid, TimeGrid::new(1e-6, 100));
        assert_eq!(cfg.mode.seed(), Some(7));
        assert!(cfg.validate().is_ok());
        match &cfg.elements[0] {
            ElementConfig::Memristor { params, initial_fraction_a } => {
                assert_eq!(*params, MssParams::reference_device());
                assert_eq!(*initial_fraction_a, 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialized_config_parses_back() {
        let cfg = SimulationConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(SimulationConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn reports_every_violation_with_paths() {
        let text = EXAMPLE
            .replace("dt = 1e-6", "dt = 2e-4")
            .replace("phi = 1.0", "phi = 1.5")
            .replace("frequency = 500.0", "frequency = -1.0");
        let err = SimulationConfig::from_toml(&text).unwrap().validate().unwrap_err();
        let paths: Vec<&str> = err.issues.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"grid.dt"), "{paths:?}");
        assert!(paths.contains(&"element[0].params.phi"), "{paths:?}");
        assert!(paths.contains(&"drive.frequency"), "{paths:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EXAMPLE.replace("v_b = 0.37", "v_b = 0.37\nv_c = 1.0");
        let err = SimulationConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("v_c"), "{err}");
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = SimulationConfig::from_toml(EXAMPLE).unwrap();
        cfg.apply(&Overrides { seed: Some(99), dt: Some(5e-7), steps: Some(10), mean_field: None });
        assert_eq!(cfg.mode.seed(), Some(99));
        assert_eq!(cfg.grid, TimeGrid::new(5e-7, 10));
        cfg.apply(&Overrides { mean_field: Some(true), ..Default::default() });
        assert_eq!(cfg.mode, Mode::MeanField);
        cfg.apply(&Overrides { mean_field: Some(false), seed: Some(3), ..Default::default() });
        assert_eq!(cfg.mode.seed(), Some(3));
    }

    #[test]
    fn sweep_points_modify_the_chosen_element() {
        let text = format!("{EXAMPLE}\n[sweep]\nparameter = \"n_switches\"\nvalues = [10, 100]\n");
        let cfg = SimulationConfig::from_toml(&text).unwrap();
        assert!(cfg.validate().is_ok());
        let p1 = cfg.sweep_point(1).unwrap();
        assert_eq!(p1.first_memristor().unwrap().n_switches, 100);
        assert!(cfg.sweep_point(2).is_none());

        let bad = text.replace("\"n_switches\"", "\"bogus\"");
        let err = SimulationConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert_eq!(err.issues[0].path, "sweep.parameter");
    }

    #[test]
    fn series_chain_runs() {
        let text = format!("{EXAMPLE}\n[[element]]\nkind = \"resistor\"\nconductance = 1e-3\n");
        let cfg = SimulationConfig::from_toml(&text).unwrap();
        let trace = cfg.run(0).unwrap();
        assert_eq!(trace.len(), 100);
        assert!(trace.meta("topology").is_some());
    }

    #[test]
    fn fit_config_validation() {
        let text = r#"
measurement = "m.csv"
optimizer = { kind = "nelder-mead", max_iters = 0, tol = 1e-8 }
[base]
n_switches = 1000
t_c = 1e-4
g_a_total = 2.125e-3
g_b_total = 0.67e-3
v_a = 0.27
v_b = 0.37
phi = 1.0
[[free]]
name = "v_a"
lower = 0.3
upper = 0.8
"#;
        let cfg = FitConfig::from_toml(text).unwrap();
        let err = cfg.validate().unwrap_err();
        let paths: Vec<&str> = err.issues.iter().map(|i| i.path.as_str()).collect();
        assert_eq!(paths, ["free[0].initial", "optimizer.max_iters"]);
    }
}
