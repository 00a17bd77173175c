//! Parameter-grid parser and evaluator for the closed-form leakage bounds.
//!
//! A grid spec is a comma-separated list of `key=value` assignments over the
//! keys {n_t, k, b_f, b_c, rho}; exactly one key carries a `start:step:end`
//! range and becomes the sweep axis. Omitted keys take the defaults below.

use serde_json::json;

use coopfb::analysis::{csi_feedback_bounds, thm1_upper_bound, thm2_two_user_bound, BoundInputs};
use coopfb::error::{Error, Result};

use crate::output::{Cell, Document};

/// Default spec: exchange-bit sweep at a 16-antenna, two-user operating point.
pub const DEFAULT_GRID: &str = "b_c=0:4:40,n_t=16,k=2,b_f=6,rho=1";

const KEYS: [&str; 5] = ["n_t", "k", "b_f", "b_c", "rho"];

/// Parsed grid: one swept key plus fixed values for the rest.
pub struct BoundGrid {
    /// Swept key and its values.
    pub parameter: String,
    pub values: Vec<f64>,
    /// All five keys' baseline values; the swept one is overridden per point.
    pub fixed: [f64; 5],
}

fn key_index(key: &str) -> Result<usize> {
    KEYS.iter().position(|&k| k == key).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "grid: unknown key \"{key}\"; expected one of n_t, k, b_f, b_c, rho"
        ))
    })
}

fn parse_number(key: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("grid: {key}: not a number: \"{text}\"")))
}

fn parse_range(key: &str, text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "grid: {key}: range must be start:step:end, got \"{text}\""
        )));
    }
    let start = parse_number(key, parts[0])?;
    let step = parse_number(key, parts[1])?;
    let end = parse_number(key, parts[2])?;
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "grid: {key}: range step must be positive, got {step}"
        )));
    }
    if end < start {
        return Err(Error::InvalidConfig(format!(
            "grid: {key}: range end {end} precedes start {start}"
        )));
    }
    let mut values = Vec::new();
    let mut i = 0u32;
    loop {
        let v = start + step * f64::from(i);
        if v > end + 1e-9 * step {
            break;
        }
        values.push(v);
        i += 1;
        if i > 100_000 {
            return Err(Error::InvalidConfig(format!(
                "grid: {key}: range produces more than 100000 points"
            )));
        }
    }
    Ok(values)
}

pub fn parse(spec: &str) -> Result<BoundGrid> {
    // Baselines for omitted keys, ordered like KEYS.
    let mut fixed = [16.0, 2.0, 6.0, 16.0, 1.0];
    let mut seen = [false; 5];
    let mut sweep: Option<(usize, Vec<f64>)> = None;
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("grid: expected key=value, got \"{part}\""))
        })?;
        let key = key.trim();
        let idx = key_index(key)?;
        if seen[idx] {
            return Err(Error::InvalidConfig(format!("grid: {key}: assigned twice")));
        }
        seen[idx] = true;
        if value.contains(':') {
            if sweep.is_some() {
                return Err(Error::InvalidConfig(
                    "grid: exactly one key may carry a start:step:end range".into(),
                ));
            }
            sweep = Some((idx, parse_range(key, value)?));
        } else {
            fixed[idx] = parse_number(key, value)?;
        }
    }
    let (idx, values) = sweep.ok_or_else(|| {
        Error::InvalidConfig(
            "grid: one key must carry a start:step:end range to sweep".into(),
        )
    })?;
    Ok(BoundGrid {
        parameter: KEYS[idx].into(),
        values,
        fixed,
    })
}

fn as_count(key: &str, v: f64) -> Result<usize> {
    if v.fract() != 0.0 || !(v >= 1.0) || v > 1e9 {
        return Err(Error::InvalidConfig(format!(
            "grid: {key}: must be a positive integer, got {v}"
        )));
    }
    Ok(v as usize)
}

/// Evaluates every closed-form bound over the grid. The two-user bound column
/// is empty when K differs from 2; the CSI bracket ignores b_c by definition.
pub fn evaluate(grid: &BoundGrid) -> Result<Document> {
    let sweep_idx = key_index(&grid.parameter)?;
    let mut rows = Vec::with_capacity(grid.values.len());
    for &v in &grid.values {
        let mut point = grid.fixed;
        point[sweep_idx] = v;
        let inputs = BoundInputs {
            n_t: as_count("n_t", point[0])?,
            k_users: as_count("k", point[1])?,
            b_f: point[2],
            b_c: point[3],
            rho: point[4],
        };
        let general = thm1_upper_bound(&inputs)?;
        let two_user = if inputs.k_users == 2 {
            Cell::Num(thm2_two_user_bound(&inputs)?)
        } else {
            Cell::Empty
        };
        let (csi_lower, csi_upper) = csi_feedback_bounds(&inputs)?;
        rows.push(vec![
            Cell::coord(v),
            Cell::Num(general),
            two_user,
            Cell::Num(csi_lower),
            Cell::Num(csi_upper),
        ]);
    }
    let parameter: &'static str = KEYS[sweep_idx];
    Ok(Document {
        label: "bounds".into(),
        config: Some(json!({
            "parameter": parameter,
            "values": grid.values,
            "n_t": grid.fixed[0],
            "k": grid.fixed[1],
            "b_f": grid.fixed[2],
            "b_c": grid.fixed[3],
            "rho": grid.fixed[4],
        })),
        summary: None,
        columns: vec![
            parameter,
            "general_bound",
            "two_user_bound",
            "csi_lower",
            "csi_upper",
        ],
        rows,
    })
}
