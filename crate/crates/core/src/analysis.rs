//! I-V loop metrics: zero crossings, shoelace areas and steady-state windows.

use crate::trace::TraceRow;

/// Signed shoelace area of the closed polygon through `points` (x = V,
/// y = I). Counter-clockwise traversal is positive.
pub fn shoelace_area(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (k, &(x0, y0)) in points.iter().enumerate() {
        let (x1, y1) = points[(k + 1) % points.len()];
        twice += x0 * y1 - x1 * y0;
    }
    0.5 * twice
}

/// A point where the applied voltage passes through zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCrossing {
    /// Index of the row at or just before the crossing.
    pub index: usize,
    pub t: f64,
    /// Current at V = 0, linearly interpolated between the bracketing rows.
    pub i: f64,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn crossing_between(rows: &[TraceRow], k: usize) -> ZeroCrossing {
    let (a, b) = (rows[k], rows[k + 1]);
    let w = a.v / (a.v - b.v);
    ZeroCrossing {
        index: k,
        t: a.t + w * (b.t - a.t),
        i: a.i + w * (b.i - a.i),
    }
}

/// All zero crossings of `v` in row order. A row with `v == 0` exactly is
/// itself a crossing; strict sign changes between rows are interpolated.
pub fn zero_crossings(rows: &[TraceRow]) -> Vec<ZeroCrossing> {
    let mut out = Vec::new();
    for k in 0..rows.len() {
        let s = sign(rows[k].v);
        if s == 0 {
            out.push(ZeroCrossing {
                index: k,
                t: rows[k].t,
                i: rows[k].i,
            });
        } else if k + 1 < rows.len() && sign(rows[k + 1].v) == -s {
            out.push(crossing_between(rows, k));
        }
    }
    out
}

/// Hysteresis strength of one drive cycle: the sum of absolute shoelace areas
/// of the lobes between successive zero crossings.
///
/// A pinched loop has two lobes of opposite orientation, so the signed area
/// of the whole figure largely cancels; summing per-lobe magnitudes does not.
/// The rows are treated as a closed cycle (the last row connects back to the
/// first).
pub fn loop_area(rows: &[TraceRow]) -> f64 {
    if rows.len() < 3 {
        return 0.0;
    }
    let mut cycle: Vec<TraceRow> = rows.to_vec();
    cycle.push(rows[0]);

    let mut total = 0.0;
    let mut lobe: Vec<(f64, f64)> = Vec::new();
    for k in 0..cycle.len() {
        let r = cycle[k];
        let s = sign(r.v);
        if s == 0 {
            lobe.push((0.0, r.i));
            total += shoelace_area(&lobe).abs();
            lobe.clear();
            lobe.push((0.0, r.i));
            continue;
        }
        lobe.push((r.v, r.i));
        if k + 1 < cycle.len() && sign(cycle[k + 1].v) == -s {
            let c = crossing_between(&cycle, k);
            lobe.push((0.0, c.i));
            total += shoelace_area(&lobe).abs();
            lobe.clear();
            lobe.push((0.0, c.i));
        }
    }
    total + shoelace_area(&lobe).abs()
}

/// Signed shoelace area of the full (V, I) figure.
pub fn net_loop_area(rows: &[TraceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.v, r.i)).collect();
    shoelace_area(&pts)
}

/// The trailing `period` worth of rows, assuming a uniform grid.
pub fn last_period(rows: &[TraceRow], period: f64) -> &[TraceRow] {
    if rows.len() < 2 {
        return rows;
    }
    let dt = rows[1].t - rows[0].t;
    let per = ((period / dt).round() as usize).clamp(1, rows.len());
    &rows[rows.len() - per..]
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Coefficient of variation (population std / |mean|).
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let (mean, std) = mean_std(values);
    std / mean.abs()
}
