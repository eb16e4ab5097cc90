//! Result serialization (JSONL, CSV), SVG layer plots and a markdown summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{Analysis, LayerwiseResult};
use crate::store::Tier;

pub const CSV_HEADER: [&str; 11] = [
    "dataset",
    "model",
    "analysis",
    "tier",
    "layer",
    "value",
    "ci_low",
    "ci_high",
    "n_items",
    "config_hash",
    "toolkit_version",
];

pub fn results_to_jsonl(results: &[LayerwiseResult]) -> Result<String> {
    crate::sampling::to_jsonl(results.iter())
}

pub fn results_from_jsonl(text: &str) -> Result<Vec<LayerwiseResult>> {
    crate::sampling::from_jsonl(text)
}

pub fn results_to_csv(results: &[LayerwiseResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.metadata.dataset.as_str(),
            r.metadata.model.as_str(),
            r.analysis.as_str(),
            r.tier.as_str(),
            &r.layer.to_string(),
            &r.value.to_string(),
            &r.ci_low.to_string(),
            &r.ci_high.to_string(),
            &r.n_items.to_string(),
            r.metadata.config_hash.as_str(),
            r.metadata.toolkit_version.as_str(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Plot key: analysis name, suffixed with the tier when it is not the
/// analysis' usual one.
pub fn plot_key(analysis: Analysis, tier: Tier) -> String {
    let usual = if analysis == Analysis::Rsa { Tier::Word } else { Tier::Phone };
    if tier == usual {
        analysis.as_str().to_string()
    } else {
        format!("{}_{}", analysis.as_str(), tier.as_str())
    }
}

fn chance_for(analysis: Analysis, rows: &[&LayerwiseResult]) -> Option<f64> {
    match analysis {
        // the full inventory is the nominal class count even if a split
        // leaves a class out
        Analysis::Probe => analysis.chance_level(Some(
            rows.iter().filter_map(|r| r.metadata.n_classes).max().unwrap_or(37),
        )),
        _ => analysis.chance_level(None),
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag)
}

/// One SVG per plot key: a panel per dataset, a line with a shaded CI band
/// per model, and a dashed chance line where the measure has one.
pub fn render_plots(results: &[LayerwiseResult]) -> BTreeMap<String, String> {
    let mut groups: BTreeMap<String, (Analysis, Vec<&LayerwiseResult>)> = BTreeMap::new();
    for r in results {
        groups
            .entry(plot_key(r.analysis, r.tier))
            .or_insert_with(|| (r.analysis, Vec::new()))
            .1
            .push(r);
    }
    groups
        .into_iter()
        .map(|(key, (analysis, rows))| {
            let svg = render_one(&key, analysis, &rows);
            (key, svg)
        })
        .collect()
}

fn render_one(key: &str, analysis: Analysis, rows: &[&LayerwiseResult]) -> String {
    const W: f64 = 640.0;
    const PANEL_H: f64 = 260.0;
    const LEFT: f64 = 64.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 36.0;
    const BOTTOM: f64 = 44.0;

    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.metadata.dataset.as_str()) {
            datasets.push(&r.metadata.dataset);
        }
        if !models.contains(&r.metadata.model.as_str()) {
            models.push(&r.metadata.model);
        }
    }
    let chance = chance_for(analysis, rows);
    let height = datasets.len() as f64 * PANEL_H;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{height}" fill="white"/>"#);

    for (di, ds) in datasets.iter().enumerate() {
        let y0 = di as f64 * PANEL_H;
        let panel: Vec<&&LayerwiseResult> = rows.iter().filter(|r| r.metadata.dataset == *ds).collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lmin, mut lmax) = (u32::MAX, 0u32);
        for r in &panel {
            lo = lo.min(r.ci_low).min(r.value);
            hi = hi.max(r.ci_high).max(r.value);
            lmin = lmin.min(r.layer);
            lmax = lmax.max(r.layer);
        }
        if let Some(c) = chance {
            lo = lo.min(c);
            hi = hi.max(c);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let step = nice_step(hi - lo);
        lo = (lo / step).floor() * step;
        hi = (hi / step).ceil() * step;
        let lspan = (lmax.max(lmin + 1) - lmin) as f64;
        let pw = W - LEFT - RIGHT;
        let ph = PANEL_H - TOP - BOTTOM;
        let px = |l: u32| LEFT + (l - lmin) as f64 / lspan * pw;
        let py = |v: f64| y0 + TOP + (hi - v) / (hi - lo) * ph;

        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="{:.1}" font-size="13" font-weight="bold">{}: {}</text>"#,
            y0 + 22.0,
            esc(ds),
            esc(key)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{:.1}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##,
            y0 + TOP
        );
        let mut t = lo;
        while t <= hi + step * 1e-6 {
            let y = py(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="#444"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT - 4.0,
                LEFT - 6.0,
                y + 4.0,
                (t * 1e6).round() / 1e6
            );
            t += step;
        }
        let lstep = ((lspan / 12.0).ceil() as u32).max(1);
        let mut l = lmin;
        while l <= lmax {
            let x = px(l);
            let yb = y0 + TOP + ph;
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.1}" y1="{yb:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{l}</text>"##,
                yb + 4.0,
                yb + 16.0
            );
            l += lstep;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">layer</text>"#,
            LEFT + pw / 2.0,
            y0 + PANEL_H - 8.0
        );
        if let Some(c) = chance {
            let y = py(c);
            let _ = writeln!(
                svg,
                r##"<line class="chance" x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#777" stroke-dasharray="5,4"/><text x="{:.1}" y="{:.1}" fill="#777">chance {:.4}</text>"##,
                LEFT + pw,
                LEFT + pw + 6.0,
                y + 4.0,
                c
            );
        }
        for (mi, model) in models.iter().enumerate() {
            let color = PALETTE[mi % PALETTE.len()];
            let mut pts: Vec<&&&LayerwiseResult> =
                panel.iter().filter(|r| r.metadata.model == *model).collect();
            if pts.is_empty() {
                continue;
            }
            pts.sort_by_key(|r| r.layer);
            let upper: Vec<String> = pts.iter().map(|r| format!("{:.1},{:.1}", px(r.layer), py(r.ci_high))).collect();
            let lower: Vec<String> =
                pts.iter().rev().map(|r| format!("{:.1},{:.1}", px(r.layer), py(r.ci_low))).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                upper.join(" "),
                lower.join(" ")
            );
            let line: Vec<String> = pts.iter().map(|r| format!("{:.1},{:.1}", px(r.layer), py(r.value))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
            let ly = y0 + TOP + 14.0 + 16.0 * mi as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                LEFT + pw + 6.0,
                LEFT + pw + 24.0,
                LEFT + pw + 28.0,
                ly + 4.0,
                esc(model)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Markdown summary: per dataset, model and plot key, the best layer and
/// the full layer curve.
pub fn render_report(results: &[LayerwiseResult]) -> String {
    let mut out = String::from("# Layerwise analysis report\n");
    if let Some(r) = results.first() {
        let _ = writeln!(
            out,
            "\ntoolkit {} · config {}\n",
            r.metadata.toolkit_version, r.metadata.config_hash
        );
    }
    let mut groups: BTreeMap<(&str, &str, String), Vec<&LayerwiseResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((&r.metadata.dataset, &r.metadata.model, plot_key(r.analysis, r.tier)))
            .or_default()
            .push(r);
    }
    let _ = writeln!(out, "| dataset | model | analysis | best layer | value | 95% CI | items |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for ((ds, model, key), rows) in &groups {
        let best = rows
            .iter()
            .max_by(|a, b| a.value.total_cmp(&b.value).then(b.layer.cmp(&a.layer)))
            .expect("non-empty group");
        let _ = writeln!(
            out,
            "| {ds} | {model} | {key} | {} | {:.4} | [{:.4}, {:.4}] | {} |",
            best.layer, best.value, best.ci_low, best.ci_high, best.n_items
        );
    }
    for ((ds, model, key), rows) in &groups {
        let mut rows = rows.clone();
        rows.sort_by_key(|r| r.layer);
        let _ = writeln!(out, "\n## {ds} / {model} / {key}\n");
        let _ = writeln!(out, "| layer | value | ci_low | ci_high | n_items |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for r in &rows {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} | {:.4} | {} |",
                r.layer, r.value, r.ci_low, r.ci_high, r.n_items
            );
        }
        let warnings: Vec<&String> = {
            let mut w: Vec<&String> = rows.iter().flat_map(|r| &r.metadata.warnings).collect();
            w.sort();
            w.dedup();
            w
        };
        if !warnings.is_empty() {
            let _ = writeln!(out, "\nWarnings:\n");
            for w in warnings {
                let _ = writeln!(out, "- {w}");
            }
        }
    }
    out
}
