//! Result emission: a single tabular document model rendered as tidy CSV
//! (one row per data point) or as a JSON object that embeds the full
//! configuration echo so any result file can be re-run exactly.
//!
//! CSV numeric cells are formatted at six significant digits with a fixed
//! header row per command; JSON cells keep full precision.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use coopfb::error::{Error, Result};
use coopfb::sim::{AggregateResult, ChannelModel, ScenarioConfig};

use crate::Format;

/// One table cell. Sweep coordinates that are whole numbers render as
/// integers; metrics render at six significant digits.
#[derive(Clone, Debug)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    /// Integer cell when `v` is whole, numeric cell otherwise.
    pub fn coord(v: f64) -> Cell {
        if v.fract() == 0.0 && v.abs() < 1e15 {
            Cell::Int(v as i64)
        } else {
            Cell::Num(v)
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => sig6(*x),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Num(x) => json!(x),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

/// A command's complete output: fixed column set, one row per point.
pub struct Document {
    /// Command or preset name echoed into JSON output.
    pub label: String,
    /// Configuration echo embedded in JSON output.
    pub config: Option<Value>,
    /// Extra JSON-only payload (solver diagnostics and the like).
    pub summary: Option<Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// Six-significant-digit formatting; fixed notation near unity, scientific
/// for extreme magnitudes. Deterministic for identical inputs.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        format!("{x:.5e}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

/// Renders the document and writes it to `out` (stdout when absent).
pub fn emit(doc: &Document, format: Format, out: Option<&Path>) -> Result<()> {
    let rendered = match format {
        Format::Csv => render_csv(doc)?,
        Format::Json => render_json(doc),
    };
    match out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| {
            Error::InvalidConfig(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(rendered.as_bytes())
                .map_err(|e| Error::Numerical(format!("cannot write stdout: {e}")))
        }
    }
}

fn render_csv(doc: &Document) -> Result<String> {
    let enc = |e: csv::Error| Error::Numerical(format!("csv encoding: {e}"));
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&doc.columns).map_err(enc)?;
    for row in &doc.rows {
        let record: Vec<String> = row.iter().map(Cell::to_csv).collect();
        writer.write_record(&record).map_err(enc)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(format!("csv encoding: {e}")))
}

fn render_json(doc: &Document) -> String {
    let rows: Vec<Value> = doc
        .rows
        .iter()
        .map(|row| Value::Array(row.iter().map(Cell::to_json).collect()))
        .collect();
    let mut obj = serde_json::Map::new();
    obj.insert("command".into(), json!(doc.label));
    if let Some(cfg) = &doc.config {
        obj.insert("config".into(), cfg.clone());
    }
    if let Some(extra) = &doc.summary {
        obj.insert("summary".into(), extra.clone());
    }
    obj.insert("columns".into(), json!(doc.columns));
    obj.insert("rows".into(), Value::Array(rows));
    let mut text = serde_json::to_string_pretty(&Value::Object(obj))
        .expect("in-memory JSON serialization cannot fail");
    text.push('\n');
    text
}

/// Scenario echo in the same shape and key names as the TOML schema, so a
/// JSON result file determines the exact configuration that produced it.
pub fn scenario_json(cfg: &ScenarioConfig) -> Value {
    let model = match &cfg.channel_model {
        ChannelModel::Iid => "iid",
        ChannelModel::OneRing(_) => "one-ring",
    };
    let geometries: Vec<Value> = match &cfg.channel_model {
        ChannelModel::Iid => Vec::new(),
        ChannelModel::OneRing(geoms) => geoms
            .iter()
            .map(|g| {
                json!({
                    "azimuth_deg": g.mean_azimuth.to_degrees(),
                    "spread_deg": g.angular_spread.to_degrees(),
                    "spacing": g.antenna_spacing,
                    "truncation_sigmas": g.truncation_halfwidth / g.angular_spread,
                })
            })
            .collect(),
    };
    let schemes: Vec<&str> = cfg.schemes.iter().map(|s| s.name()).collect();
    let selection = match cfg.selection_rule {
        coopfb::sim::SelectionRule::MaxSlnr => "max-slnr",
        coopfb::sim::SelectionRule::MinLeakage => "min-leakage",
    };
    let backend = match cfg.backend {
        coopfb::sim::ExchangeBackend::IdealDr => "ideal-dr",
        coopfb::sim::ExchangeBackend::EcsqUniform => "ecsq-uniform",
        coopfb::sim::ExchangeBackend::DirectionRvq => "direction-rvq",
    };
    let per_link: Value = match cfg.b_c_per_link {
        // TOML spells an unbounded budget as `inf`; JSON has no infinity.
        Some(b) if b.is_infinite() => json!("inf"),
        Some(b) => json!(b),
        None => Value::Null,
    };
    json!({
        "system": {
            "antennas": cfg.n_t,
            "users": cfg.k_users,
            "power": cfg.power_total,
            "trials": cfg.trials,
            "seed": cfg.master_seed,
        },
        "feedback": {
            "precoder_bits": cfg.b_f,
            "exchange_total_bits": cfg.b_tot,
            "exchange_bits_per_link": per_link,
        },
        "channel": {
            "model": model,
            "path_loss": cfg.path_losses,
            "users": geometries,
        },
        "schemes": {
            "set": schemes,
            "selection": selection,
            "backend": backend,
        },
        "subspace": {
            "energy": cfg.subspace_energy,
            "eig_floor": cfg.eig_floor,
        },
    })
}

/// Per-scheme metric table for a single experiment.
pub fn experiment_document(label: &str, agg: &AggregateResult) -> Document {
    let mut rows = Vec::with_capacity(agg.schemes.len());
    for s in &agg.schemes {
        rows.push(vec![
            Cell::Text(s.scheme.name().into()),
            Cell::Num(s.sum_rate.mean),
            Cell::Num(s.sum_rate.ci_half_width),
            Cell::Num(s.leakage.mean),
            Cell::Num(s.leakage.ci_half_width),
        ]);
    }
    Document {
        label: label.into(),
        config: Some(scenario_json(&agg.config)),
        summary: Some(json!({
            "trials_run": agg.trials_run,
            "trials_skipped": agg.trials_skipped,
        })),
        columns: vec![
            "scheme",
            "sum_rate",
            "sum_rate_ci",
            "leakage",
            "leakage_ci",
        ],
        rows,
    }
}
