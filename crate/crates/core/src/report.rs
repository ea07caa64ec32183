//! Table emission. CSV rounds to three decimals; JSON keeps full precision
//! and adds standard deviations.

use std::io::Write;

use serde_json::{json, Value};

use crate::experiments::SweepRow;
use crate::metrics::{AggregateMetrics, DayMetrics};

/// Columns of a sweep table, after the swept value.
pub const SWEEP_COLUMNS: [&str; 5] = [
    "liquidity_ratio",
    "n_offers",
    "n_trades",
    "offered_shares",
    "traded_shares",
];

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "NA".to_string()
    }
}

/// The flat record of one day: `(name, value)`, ratio NaN when undefined.
pub fn day_record(m: &DayMetrics) -> Vec<(&'static str, f64)> {
    vec![
        ("liquidity_ratio", m.liquidity_ratio.unwrap_or(f64::NAN)),
        ("n_offers", m.n_offers as f64),
        ("n_trades", m.n_trades as f64),
        ("offered_shares", m.offered_shares as f64),
        ("traded_shares", m.traded_shares as f64),
        ("traded_notional", m.traded_notional.to_euros()),
        ("platform_revenue", m.platform_revenue.to_euros()),
    ]
}

fn write_record(record: &[(&str, f64)], mut out: impl Write) -> std::io::Result<()> {
    let names: Vec<&str> = record.iter().map(|(k, _)| *k).collect();
    let values: Vec<String> = record.iter().map(|(_, v)| cell(*v)).collect();
    writeln!(out, "{}", names.join(","))?;
    writeln!(out, "{}", values.join(","))
}

pub fn write_day_csv(m: &DayMetrics, out: impl Write) -> std::io::Result<()> {
    write_record(&day_record(m), out)
}

pub fn day_json(m: &DayMetrics) -> Value {
    let mut v = serde_json::Map::new();
    for (k, x) in day_record(m) {
        v.insert(k.to_string(), number(x));
    }
    Value::Object(v)
}

pub fn write_batch_csv(agg: &AggregateMetrics, out: impl Write) -> std::io::Result<()> {
    let mut record = agg.record();
    record.push(("n_experiments", agg.n_experiments as f64));
    write_record(&record, out)
}

fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn batch_json(agg: &AggregateMetrics) -> Value {
    let stat = |s: crate::metrics::Stat| json!({ "mean": s.mean, "std": s.std });
    json!({
        "n_experiments": agg.n_experiments,
        "n_ratio_undefined": agg.n_ratio_undefined,
        "liquidity_ratio": agg.liquidity_ratio.map(stat).unwrap_or(Value::Null),
        "n_offers": stat(agg.n_offers),
        "n_trades": stat(agg.n_trades),
        "offered_shares": stat(agg.offered_shares),
        "traded_shares": stat(agg.traded_shares),
        "traded_notional": stat(agg.traded_notional),
        "platform_revenue": stat(agg.platform_revenue),
    })
}

fn sweep_cells(m: &AggregateMetrics) -> [f64; 5] {
    [
        m.mean_ratio(),
        m.n_offers.mean,
        m.n_trades.mean,
        m.offered_shares.mean,
        m.traded_shares.mean,
    ]
}

pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "value,{}", SWEEP_COLUMNS.join(","))?;
    for row in rows {
        let cells: Vec<String> = sweep_cells(&row.metrics).iter().map(|v| cell(*v)).collect();
        writeln!(out, "{},{}", row.value, cells.join(","))?;
    }
    Ok(())
}

pub fn sweep_json(parameter: &str, rows: &[SweepRow]) -> Value {
    json!({
        "parameter": parameter,
        "rows": rows
            .iter()
            .map(|r| {
                let mut v = batch_json(&r.metrics);
                v["value"] = json!(r.value);
                v
            })
            .collect::<Vec<_>>(),
    })
}
