//! Plot-ready tables (and optional SVG charts) built from a run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::RunManifest;
use crate::greedy::{select_head, MetricsRecord, Regime, TauSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    PerModuleCurve,
    RegimeComparison,
    TauSensitivity,
    Memory,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::PerModuleCurve => "per-module-curve",
            ReportKind::RegimeComparison => "regime-comparison",
            ReportKind::TauSensitivity => "tau-sensitivity",
            ReportKind::Memory => "memory",
        }
    }
}

/// Mean and 95% normal-approximation half-width `1.96 s / sqrt(n)`, with
/// the sample standard deviation `s`; the half-width is 0 for one value.
pub fn ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Line chart data: named series of `(x, y)` points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Metrics of every run, checked for the `(module, epoch)` rows the plan
/// promises.
fn load_runs(manifest: &RunManifest, dir: &Path) -> Result<Vec<(String, u64, MetricsRecord)>> {
    let variants = manifest.config.resolved_variants();
    let modules = manifest.config.network.modules;
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for e in &manifest.runs {
        let rec = MetricsRecord::read_csv(&manifest.metrics_path(dir, e))?;
        let v = variants
            .iter()
            .find(|v| v.name == e.variant)
            .ok_or_else(|| Error::Report(format!("run references unknown variant {:?}", e.variant)))?;
        let plan = manifest.config.plan_for(v, e.seed)?;
        for k in 1..=modules {
            let epoch = plan.epochs.epochs(k);
            if !rec.rows.iter().any(|r| r.module == k && r.epoch == epoch) {
                missing.push(format!("{}/seed{}: (module {k}, epoch {epoch})", e.variant, e.seed));
            }
        }
        out.push((e.variant.clone(), e.seed, rec));
    }
    if !missing.is_empty() {
        return Err(Error::Report(format!("missing series: {}", missing.join(", "))));
    }
    Ok(out)
}

fn variant_order(manifest: &RunManifest) -> Vec<String> {
    manifest.config.resolved_variants().into_iter().map(|v| v.name).collect()
}

pub fn per_module_curve(manifest: &RunManifest, dir: &Path) -> Result<(Table, Chart)> {
    let runs = load_runs(manifest, dir)?;
    let mut table = Table::new(&["series", "module", "mean_acc", "ci95", "n"]);
    let mut chart = Chart {
        title: format!("{}: test accuracy after each module", manifest.config.name),
        x_label: "module".into(),
        y_label: "test accuracy".into(),
        series: Vec::new(),
    };
    for name in variant_order(manifest) {
        let mine: Vec<&MetricsRecord> = runs.iter().filter(|r| r.0 == name).map(|r| &r.2).collect();
        let mut points = Vec::new();
        for k in 1..=manifest.config.network.modules {
            let accs: Vec<f64> = mine.iter().map(|r| r.final_test_acc()[k - 1]).collect();
            let (m, h) = ci95(&accs);
            table.rows.push(vec![name.clone(), k.to_string(), num(m), num(h), accs.len().to_string()]);
            points.push((k as f64, m));
        }
        chart.series.push((name, points));
    }
    Ok((table, chart))
}

fn head_accuracy(manifest: &RunManifest, rec: &MetricsRecord) -> f64 {
    let k = select_head(rec, manifest.config.report.head);
    rec.final_test_acc()[k - 1]
}

pub fn regime_comparison(manifest: &RunManifest, dir: &Path) -> Result<Table> {
    let runs = load_runs(manifest, dir)?;
    let mut table = Table::new(&["series", "regime", "mean_acc", "ci95", "n", "memory_saved_pct"]);
    for v in manifest.config.resolved_variants() {
        let accs: Vec<f64> = runs.iter().filter(|r| r.0 == v.name).map(|r| head_accuracy(manifest, &r.2)).collect();
        let regime: Regime = manifest.config.plan_for(&v, 0)?.regime;
        let (m, h) = ci95(&accs);
        table.rows.push(vec![
            v.name.clone(),
            regime.name().to_string(),
            num(m),
            num(h),
            accs.len().to_string(),
            num(manifest.memory.saved_pct(&regime)),
        ]);
    }
    Ok(table)
}

/// `tau` of a variant: the configured value, `inf` without any transport
/// term, `None` for the loss-weight schedules, which have no `tau`.
fn variant_tau(manifest: &RunManifest, v: &crate::config::Variant) -> Result<Option<f64>> {
    let plan = manifest.config.plan_for(v, 0)?;
    Ok(match plan.regularizer.map(|r| r.tau) {
        None | Some(TauSchedule::Disabled) => Some(f64::INFINITY),
        Some(TauSchedule::Fixed { tau }) | Some(TauSchedule::MidpointDoubled { tau }) => Some(tau),
        Some(TauSchedule::Multiplier(_)) | Some(TauSchedule::FixedLambda { .. }) => None,
    })
}

pub fn tau_sensitivity(manifest: &RunManifest, dir: &Path) -> Result<(Table, Chart)> {
    let runs = load_runs(manifest, dir)?;
    let mut rows = Vec::new();
    for v in manifest.config.resolved_variants() {
        let Some(tau) = variant_tau(manifest, &v)? else { continue };
        let mine: Vec<&MetricsRecord> = runs.iter().filter(|r| r.0 == v.name).map(|r| &r.2).collect();
        let accs: Vec<f64> = mine.iter().map(|r| head_accuracy(manifest, r)).collect();
        let disp: Vec<f64> = mine.iter().map(|r| r.final_rows()[0].mean_sq_displacement).collect();
        rows.push((tau, v.name.clone(), ci95(&accs), accs.len(), ci95(&disp).0));
    }
    if rows.is_empty() {
        return Err(Error::Report("no variant has a tau to sweep".into()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = Table::new(&["tau", "series", "mean_acc", "ci95", "n", "module1_displacement"]);
    let mut points = Vec::new();
    for (tau, name, (m, h), n, d) in rows {
        table.rows.push(vec![num(tau), name, num(m), num(h), n.to_string(), num(d)]);
        if tau.is_finite() {
            points.push((tau.log10(), m));
        }
    }
    let chart = Chart {
        title: format!("{}: accuracy against tau", manifest.config.name),
        x_label: "log10 tau".into(),
        y_label: "test accuracy".into(),
        series: vec![("accuracy".into(), points)],
    };
    Ok((table, chart))
}

pub fn memory_table(manifest: &RunManifest) -> Table {
    let m = &manifest.memory;
    let mut table = Table::new(&["regime", "params", "optimizer", "activations", "total", "saved_pct"]);
    for (name, c, pct) in [
        ("end-to-end", m.e2e, 0.0),
        ("sequential", m.sequential, m.saved_pct(&Regime::Sequential)),
        ("parallel", m.parallel, m.saved_pct(&Regime::Parallel)),
    ] {
        table.rows.push(vec![
            name.into(),
            c.params.to_string(),
            c.optimizer.to_string(),
            c.activations.to_string(),
            c.total().to_string(),
            num(pct),
        ]);
    }
    table
}

/// Minimal static line chart.
pub fn render_svg(chart: &Chart) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let pts = chart.series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0.is_finite() && y0.is_finite()) {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(&chart.title));
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - PAD, W - PAD, H - PAD);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#, H - PAD);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(&chart.x_label));
    let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(&chart.y_label));
    for (v, anchor, x, y) in [(y0, "end", PAD - 5.0, sy(y0)), (y1, "end", PAD - 5.0, sy(y1))] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.3}</text>"#, H - PAD + 15.0);
    }
    for (i, (name, points)) in chart.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, W - PAD - 100.0, PAD + 15.0 * i as f64, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the `kind` table (and chart, when the config asks for SVG and the
/// kind has one) next to the manifest, or into `out`. Training artifacts
/// are only read.
pub fn write_report(manifest_path: &Path, kind: ReportKind, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let out = out.unwrap_or(dir);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (table, chart) = match kind {
        ReportKind::PerModuleCurve => {
            let (t, c) = per_module_curve(&manifest, dir)?;
            (t, Some(c))
        }
        ReportKind::RegimeComparison => (regime_comparison(&manifest, dir)?, None),
        ReportKind::TauSensitivity => {
            let (t, c) = tau_sensitivity(&manifest, dir)?;
            (t, Some(c))
        }
        ReportKind::Memory => (memory_table(&manifest), None),
    };
    let stem = format!("{}-{}", manifest.run_id, kind.name());
    let mut written = Vec::new();
    let csv = out.join(format!("{stem}.csv"));
    std::fs::write(&csv, table.to_csv()).map_err(|e| Error::io(&csv, e))?;
    written.push(csv);
    if let (true, Some(c)) = (manifest.config.report.svg, chart) {
        let svg = out.join(format!("{stem}.svg"));
        std::fs::write(&svg, render_svg(&c)).map_err(|e| Error::io(&svg, e))?;
        written.push(svg);
    }
    Ok(written)
}

/// Mean accuracy per series and module, from a per-module table.
pub fn curve_means(table: &Table) -> BTreeMap<(String, usize), f64> {
    let mut out = BTreeMap::new();
    for r in &table.rows {
        out.insert((r[0].clone(), r[1].parse().unwrap_or(0)), r[2].parse().unwrap_or(f64::NAN));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci95_by_hand() {
        // mean 2, sample sd 1
        let (m, h) = ci95(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((h - 1.96 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(ci95(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let c = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![("s".into(), vec![(1.0, 0.5), (2.0, 0.7)])],
        };
        let s = render_svg(&c);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
    }
}
