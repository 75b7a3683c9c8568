use serde_json::Value;

use super::run::RunRecord;
use crate::error::{Error, Result};

/// Mean and 95% half-width `1.96 * s / sqrt(n)` (sample standard deviation);
/// the half-width is `None` for a single value.
pub fn mean_ci(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, None));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, Some(1.96 * (var / n).sqrt())))
}

fn label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    }
}

fn check_key(records: &[RunRecord], key: &str) -> Result<()> {
    match records.first() {
        None => Err(Error::NoRecords),
        Some(r) => r.field(key).map(|_| ()),
    }
}

fn push_unique(list: &mut Vec<String>, item: String) {
    if !list.contains(&item) {
        list.push(item);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub markdown: String,
    /// Long format: `group,strategy,n,mean,ci_half_width`.
    pub csv: String,
}

fn cell_text(stats: Option<(f64, Option<f64>)>) -> String {
    match stats {
        None => "-".into(),
        Some((m, None)) => format!("{m:.4} (n/a)"),
        Some((m, Some(h))) => format!("{m:.4} ± {h:.4}"),
    }
}

/// Rows are the distinct `group_by` values and columns the strategies, both
/// in order of first appearance; cells are mean ± 95% CI of `metric`.
pub fn emit_table(records: &[RunRecord], group_by: &str, metric: &str) -> Result<Table> {
    check_key(records, group_by)?;
    check_key(records, metric)?;
    let mut groups = Vec::new();
    let mut strategies = Vec::new();
    let mut cells: Vec<(String, String, Vec<f64>)> = Vec::new();
    for r in records {
        let g = label(&r.field(group_by)?);
        push_unique(&mut groups, g.clone());
        push_unique(&mut strategies, r.strategy.clone());
        let value = number(&r.field(metric)?);
        match cells.iter_mut().find(|(cg, cs, _)| *cg == g && *cs == r.strategy) {
            Some((_, _, vals)) => vals.extend(value),
            None => cells.push((g, r.strategy.clone(), value.into_iter().collect())),
        }
    }
    let lookup = |g: &str, s: &str| {
        cells
            .iter()
            .find(|(cg, cs, _)| cg == g && cs == s)
            .map(|(_, _, v)| v.as_slice())
            .unwrap_or(&[])
    };

    let mut md = format!("| {group_by} | {} |\n", strategies.join(" | "));
    md.push_str(&format!("|---|{}\n", "---|".repeat(strategies.len())));
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["group", "strategy", "n", "mean", "ci_half_width"])?;
    for g in &groups {
        let row: Vec<String> = strategies.iter().map(|s| cell_text(mean_ci(lookup(g, s)))).collect();
        md.push_str(&format!("| {g} | {} |\n", row.join(" | ")));
        for s in &strategies {
            let vals = lookup(g, s);
            let (mean, half) = match mean_ci(vals) {
                Some((m, h)) => (m.to_string(), h.map_or(String::new(), |h| h.to_string())),
                None => (String::new(), String::new()),
            };
            out.write_record([g.as_str(), s.as_str(), &vals.len().to_string(), &mean, &half])?;
        }
    }
    md.push_str(&format!("\nmetric: `{metric}`, mean ± 1.96·stderr over seeds\n"));
    let csv = String::from_utf8(out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    Ok(Table { markdown: md, csv })
}

/// Long-format `x,series,mean,ci_lo,ci_hi` of `metric`. Numeric x values are
/// sorted ascending, others keep first-appearance order. Single-sample
/// points have `ci_lo = ci_hi = mean`.
pub fn emit_plotdata(records: &[RunRecord], x_axis: &str, series: &str, metric: &str) -> Result<String> {
    check_key(records, x_axis)?;
    check_key(records, series)?;
    check_key(records, metric)?;
    let mut xs: Vec<(String, Option<f64>)> = Vec::new();
    let mut names = Vec::new();
    let mut points: Vec<(String, String, Vec<f64>)> = Vec::new();
    for r in records {
        let xv = r.field(x_axis)?;
        let x = label(&xv);
        if !xs.iter().any(|(l, _)| *l == x) {
            xs.push((x.clone(), number(&xv)));
        }
        let s = label(&r.field(series)?);
        push_unique(&mut names, s.clone());
        let value = number(&r.field(metric)?);
        match points.iter_mut().find(|(px, ps, _)| *px == x && *ps == s) {
            Some((_, _, v)) => v.extend(value),
            None => points.push((x, s, value.into_iter().collect())),
        }
    }
    if xs.iter().all(|(_, n)| n.is_some()) {
        xs.sort_by(|a, b| a.1.unwrap().total_cmp(&b.1.unwrap()));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["x", "series", "mean", "ci_lo", "ci_hi"])?;
    for (x, _) in &xs {
        for s in &names {
            let Some((_, _, vals)) = points.iter().find(|(px, ps, _)| px == x && ps == s) else {
                continue;
            };
            if let Some((m, h)) = mean_ci(vals) {
                let h = h.unwrap_or(0.0);
                out.write_record([x.as_str(), s.as_str(), &m.to_string(), &(m - h).to_string(), &(m + h).to_string()])?;
            }
        }
    }
    Ok(String::from_utf8(out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8"))
}
