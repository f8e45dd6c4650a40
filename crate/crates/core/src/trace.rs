//! Simulation trace: the exchange record between simulation, plotting and
//! fitting.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// Seconds.
    pub t: f64,
    /// Applied voltage, volts.
    pub v: f64,
    /// Current, amperes.
    pub i: f64,
    /// Memory conductance, siemens.
    pub g: f64,
    /// Switches in state A (fractional for mean-field runs).
    pub n_a: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Ordered `key=value` pairs emitted as `#` header comments.
    pub metadata: Vec<(String, String)>,
    /// Set when any diode evaluation overflowed and was clamped.
    pub saturated: bool,
}

impl Trace {
    pub fn with_capacity(n: usize) -> Self {
        Trace {
            rows: Vec::with_capacity(n),
            ..Default::default()
        }
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn currents(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.i)
    }

    /// Rows with `t` in `[t0, t1)`.
    pub fn window(&self, t0: f64, t1: f64) -> &[TraceRow] {
        let start = self.rows.partition_point(|r| r.t < t0);
        let end = self.rows.partition_point(|r| r.t < t1);
        &self.rows[start..end.max(start)]
    }
}
