//! Plot-ready artifacts: dependence rows, summary rows and importance tables
//! as CSV, JSON or SVG.
//!
//! Dependence CSV headers are `id,x:<feature>,y:<variant>[,color:<partner>]`
//! and re-parse as an ordinary feature table. SVG scatters color points on a
//! linear ramp from `#1E88E5` (low) to `#FF0D57` (high); points whose color
//! value is missing are black, and points whose x value is missing are drawn
//! in a separate strip left of the x axis.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::attribution::CohortAttributions;
use crate::coredata::{push_cell, quote_field, Cell, Table};
use crate::error::{Error, Result};
use crate::importance::{term_importance_with, ImportanceEntry, TermBasis, TermScale};
use crate::interaction::{CohortInteractions, InteractionMatrix, InteractionMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(Error::Domain(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Centered SHAP value `φ_i`.
    Shap,
    /// Centered main term `Φ(x_i, x_i)`.
    Main,
    /// Centered pair term `Φ(x_i, x_j)`.
    Interaction,
    /// Centered `Φ(x_i, x_i) + s·Φ(x_i, x_j)`.
    MainPlusInteraction,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Shap => "shap",
            Variant::Main => "main",
            Variant::Interaction => "interaction",
            Variant::MainPlusInteraction => "main_plus_interaction",
        }
    }

    pub fn needs_partner(self) -> bool {
        matches!(self, Variant::Interaction | Variant::MainPlusInteraction)
    }

    /// Interaction scale used when none is requested.
    pub fn default_scale(self) -> Scale {
        match self {
            Variant::MainPlusInteraction => Scale::Half,
            _ => Scale::Full,
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shap" => Ok(Self::Shap),
            "main" => Ok(Self::Main),
            "interaction" => Ok(Self::Interaction),
            "main_plus_interaction" => Ok(Self::MainPlusInteraction),
            other => Err(Error::Domain(format!("unknown dependence variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Half,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::Full => 1.0,
            Scale::Half => 0.5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Half => "half",
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "half" => Ok(Self::Half),
            other => Err(Error::Domain(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceRow {
    pub id: usize,
    pub x: Cell<f64>,
    pub y: f64,
    pub color: Cell<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dependence {
    pub feature: String,
    pub variant: &'static str,
    pub partner: Option<String>,
    pub scale: &'static str,
    pub rows: Vec<DependenceRow>,
}

fn check_feature(table: &Table<f64>, i: usize) -> Result<()> {
    if i >= table.num_features() {
        return Err(Error::Domain(format!(
            "feature index {i} out of range for {} features",
            table.num_features()
        )));
    }
    Ok(())
}

fn build(
    table: &Table<f64>,
    feature: usize,
    color: Option<usize>,
    variant: Variant,
    scale: Scale,
    ys: Vec<f64>,
) -> Result<Dependence> {
    check_feature(table, feature)?;
    if let Some(c) = color {
        check_feature(table, c)?;
    }
    if ys.len() != table.num_rows() {
        return Err(Error::Dimension {
            expected: table.num_rows(),
            actual: ys.len(),
        });
    }
    let rows = ys
        .into_iter()
        .enumerate()
        .map(|(id, y)| DependenceRow {
            id,
            x: table.cell(id, feature),
            y,
            color: color.and_then(|c| table.cell(id, c)),
        })
        .collect();
    Ok(Dependence {
        feature: table.names()[feature].clone(),
        variant: variant.label(),
        partner: color.map(|c| table.names()[c].clone()),
        scale: scale.label(),
        rows,
    })
}

/// SHAP dependence rows from cohort attributions, optionally colored by
/// another feature.
pub fn shap_dependence(
    table: &Table<f64>,
    cohort: &CohortAttributions<f64>,
    feature: usize,
    color: Option<usize>,
) -> Result<Dependence> {
    check_feature(table, feature)?;
    build(table, feature, color, Variant::Shap, Scale::Full, cohort.centered_column(feature))
}

/// Dependence rows of one decomposition variant. `partner` is required for
/// the interaction variants and used only for coloring otherwise.
pub fn term_dependence(
    table: &Table<f64>,
    cohort: &CohortInteractions<f64>,
    feature: usize,
    variant: Variant,
    partner: Option<usize>,
    scale: Scale,
) -> Result<Dependence> {
    check_feature(table, feature)?;
    if partner == Some(feature) {
        return Err(Error::Domain(format!(
            "partner of {} must be a different feature",
            table.names()[feature]
        )));
    }
    if variant.needs_partner() && partner.is_none() {
        return Err(Error::Domain(format!("variant {} needs a partner feature", variant.label())));
    }
    if let Some(j) = partner {
        check_feature(table, j)?;
    }
    let s = scale.factor();
    let ys = cohort
        .centered
        .iter()
        .map(|m| match variant {
            Variant::Shap => m.recompose(feature),
            Variant::Main => m.main(feature),
            Variant::Interaction => s * m.get(feature, partner.unwrap_or(feature)),
            Variant::MainPlusInteraction => m.main(feature) + s * m.get(feature, partner.unwrap_or(feature)),
        })
        .collect();
    build(table, feature, partner, variant, scale, ys)
}

impl Dependence {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "id,{},{}",
            quote_field(&format!("x:{}", self.feature)),
            quote_field(&format!("y:{}", self.variant))
        );
        if let Some(p) = &self.partner {
            let _ = write!(out, ",{}", quote_field(&format!("color:{p}")));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},", r.id);
            push_cell(&mut out, r.x);
            let _ = write!(out, ",{}", r.y);
            if self.partner.is_some() {
                out.push(',');
                push_cell(&mut out, r.color);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_svg(&self) -> String {
        let title = match &self.partner {
            Some(p) => format!("{} ({}, {}, scale {})", self.feature, self.variant, p, self.scale),
            None => format!("{} ({})", self.feature, self.variant),
        };
        let points: Vec<Point> = self
            .rows
            .iter()
            .map(|r| Point {
                x: r.x,
                y: r.y,
                color: r.color,
            })
            .collect();
        scatter_svg(&title, &self.feature, &format!("y:{}", self.variant), &points)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => Ok(self.to_csv()),
            Format::Json => self.to_json(),
            Format::Svg => Ok(self.to_svg()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub feature: String,
    pub rank: usize,
    pub id: usize,
    pub shap: f64,
    /// Min-max normalized feature value; `None` when the value is missing.
    pub value: Option<f64>,
}

/// Summary rows: features in ranking order, instances in id order.
pub fn summary_rows(
    table: &Table<f64>,
    cohort: &CohortAttributions<f64>,
    ranking: &[ImportanceEntry<f64>],
) -> Result<Vec<SummaryRow>> {
    if cohort.rows.len() != table.num_rows() || cohort.num_features() != table.num_features() {
        return Err(Error::Dimension {
            expected: table.num_rows(),
            actual: cohort.rows.len(),
        });
    }
    let mut out = Vec::with_capacity(ranking.len() * table.num_rows());
    for entry in ranking {
        let i = entry.index1;
        let present: Vec<f64> = table.column(i).flatten().collect();
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (id, row) in cohort.rows.iter().enumerate() {
            let value = table.cell(id, i).map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 });
            out.push(SummaryRow {
                feature: entry.feature1.clone(),
                rank: entry.rank,
                id,
                shap: row.centered[i],
                value,
            });
        }
    }
    Ok(out)
}

pub fn render_summary(rows: &[SummaryRow], format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut out = String::from("feature,rank,id,shap,value\n");
            for r in rows {
                let _ = write!(out, "{},{},{},{},", quote_field(&r.feature), r.rank, r.id, r.shap);
                push_cell(&mut out, r.value);
                out.push('\n');
            }
            Ok(out)
        }
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Svg => Ok(summary_svg(rows)),
    }
}

pub const IMPORTANCE_HEADER: &str = "rank,feature1,feature2,importance";

#[derive(Serialize)]
struct ImportanceDoc<'a> {
    rank: usize,
    feature1: &'a str,
    feature2: &'a str,
    importance: f64,
}

pub fn render_importance(entries: &[ImportanceEntry<f64>], format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut out = format!("{IMPORTANCE_HEADER}\n");
            for e in entries {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    e.rank,
                    quote_field(&e.feature1),
                    quote_field(&e.feature2),
                    e.importance
                );
            }
            Ok(out)
        }
        Format::Json => {
            let docs: Vec<ImportanceDoc> = entries
                .iter()
                .map(|e| ImportanceDoc {
                    rank: e.rank,
                    feature1: &e.feature1,
                    feature2: &e.feature2,
                    importance: e.importance,
                })
                .collect();
            Ok(serde_json::to_string_pretty(&docs)? + "\n")
        }
        Format::Svg => Ok(importance_svg(entries)),
    }
}

/// Term importances under all four conventions, in the order of the
/// centered full-scale ranking.
pub fn importance_variants_csv(cohort: &CohortInteractions<f64>) -> String {
    let variant = |basis, scale| term_importance_with(cohort, basis, scale);
    let base = variant(TermBasis::Centered, TermScale::Full);
    let others = [
        variant(TermBasis::Centered, TermScale::Half),
        variant(TermBasis::Raw, TermScale::Full),
        variant(TermBasis::Raw, TermScale::Half),
    ];
    let lookup = |list: &[ImportanceEntry<f64>], e: &ImportanceEntry<f64>| {
        list.iter()
            .find(|o| o.index1 == e.index1 && o.index2 == e.index2)
            .map_or(0.0, |o| o.importance)
    };
    let mut out = String::from("rank,feature1,feature2,centered_full,centered_half,raw_full,raw_half\n");
    for e in &base {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.rank,
            quote_field(&e.feature1),
            quote_field(&e.feature2),
            e.importance,
            lookup(&others[0], e),
            lookup(&others[1], e),
            lookup(&others[2], e)
        );
    }
    out
}

pub const TERMS_HEADER: &str = "id,feature1,feature2,raw,centered";

/// Long-form decomposition terms: one row per instance and `i ≤ j` term.
pub fn terms_csv(cohort: &CohortInteractions<f64>) -> String {
    let k = cohort.num_features();
    let names: Vec<String> = cohort.feature_names.iter().map(|n| quote_field(n)).collect();
    let mut out = format!("{TERMS_HEADER}\n");
    for (id, (raw, centered)) in cohort.matrices.iter().zip(&cohort.centered).enumerate() {
        for i in 0..k {
            for j in i..k {
                let _ = writeln!(out, "{id},{},{},{},{}", names[i], names[j], raw.get(i, j), centered.get(i, j));
            }
        }
    }
    out
}

/// Reads a table written by [`terms_csv`]. Feature order is taken from the
/// main terms of the first instance; Shapley values are recomposed from the
/// raw terms and predictions are left empty.
pub fn parse_terms_csv(text: &str, method: InteractionMethod) -> Result<CohortInteractions<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TERMS_HEADER {
        return Err(Error::Schema(format!("terms header must be {TERMS_HEADER:?}, got {:?}", header.join(","))));
    }
    let mut records = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record?;
        let line = n as u64 + 2;
        let number = |c: usize| -> Result<f64> {
            record[c].parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: TERMS_HEADER.split(',').nth(c).unwrap_or_default().to_owned(),
                message: format!("cannot parse {:?} as a number", &record[c]),
            })
        };
        let id = record[0].parse::<usize>().map_err(|_| Error::Parse {
            line,
            column: "id".into(),
            message: format!("cannot parse {:?} as an instance id", &record[0]),
        })?;
        records.push((line, id, record[1].to_owned(), record[2].to_owned(), number(3)?, number(4)?));
    }
    let names: Vec<String> = records
        .iter()
        .take_while(|r| r.1 == 0)
        .filter(|r| r.2 == r.3)
        .map(|r| r.2.clone())
        .collect();
    let k = names.len();
    let per_row = k * (k + 1) / 2;
    if k == 0 || records.len() % per_row != 0 {
        return Err(Error::Schema("terms table does not hold whole instances".into()));
    }
    let index = |name: &str, line: u64| {
        names.iter().position(|n| n == name).ok_or_else(|| Error::Parse {
            line,
            column: "feature1".into(),
            message: format!("unknown feature {name:?}"),
        })
    };
    let mut matrices = Vec::new();
    let mut centered = Vec::new();
    for (expected, chunk) in records.chunks(per_row).enumerate() {
        let mut raw = vec![0.0; k * k];
        let mut cen = vec![0.0; k * k];
        for (line, id, f1, f2, r, c) in chunk {
            if *id != expected {
                return Err(Error::Schema(format!("line {line}: expected instance {expected}, found {id}")));
            }
            let (i, j) = (index(f1, *line)?, index(f2, *line)?);
            for (a, b) in [(i, j), (j, i)] {
                raw[a * k + b] = *r;
                cen[a * k + b] = *c;
            }
        }
        matrices.push(InteractionMatrix::from_values(k, method, raw)?);
        centered.push(InteractionMatrix::from_values(k, method, cen)?);
    }
    let shapley = matrices.iter().map(|m| (0..k).map(|i| m.recompose(i)).collect()).collect();
    Ok(CohortInteractions {
        feature_names: names,
        method,
        matrices,
        centered,
        shapley,
        predictions: Vec::new(),
        empty_values: Vec::new(),
        pair_std_errors: None,
    })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const LOW: (u8, u8, u8) = (0x1E, 0x88, 0xE5);
const HIGH: (u8, u8, u8) = (0xFF, 0x0D, 0x57);

/// `#RRGGBB` on the blue-red ramp for `t` in `[0, 1]`; black for `None`.
pub fn ramp_color(t: Option<f64>) -> String {
    match t {
        None => "#000000".to_owned(),
        Some(t) => {
            let t = t.clamp(0.0, 1.0);
            let mix = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8;
            format!("#{:02X}{:02X}{:02X}", mix(LOW.0, HIGH.0), mix(LOW.1, HIGH.1), mix(LOW.2, HIGH.2))
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#FFFFFF\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<path d=\"M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{x1:.1} {y0:.1}\" fill=\"none\" stroke=\"#333333\"/>"
    );
    let _ = writeln!(out, "<text x=\"{x0:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>", y0 + 16.0, x.0);
    let _ = writeln!(out, "<text x=\"{x1:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>", y0 + 16.0, x.1);
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{y0:.1}\" text-anchor=\"end\">{:.3}</text>", x0 - 6.0, y.0);
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>", x0 - 6.0, y1 + 4.0, y.1);
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

struct Point {
    x: Cell<f64>,
    y: f64,
    color: Cell<f64>,
}

fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[Point]) -> String {
    let xr = range(points.iter().filter_map(|p| p.x));
    let yr = range(points.iter().map(|p| p.y));
    let cr = range(points.iter().filter_map(|p| p.color));
    let has_color = points.iter().any(|p| p.color.is_some());
    let px = |v: f64| LEFT + 10.0 + (v - xr.0) / (xr.1 - xr.0) * (WIDTH - RIGHT - LEFT - 20.0);
    let py = |v: f64| HEIGHT - BOTTOM - 10.0 - (v - yr.0) / (yr.1 - yr.0) * (HEIGHT - BOTTOM - TOP - 20.0);
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out, x_label, y_label, xr, yr);
    for p in points {
        let cx = p.x.map_or(LEFT - 12.0, px);
        let fill = match (p.x, has_color) {
            (None, _) => ramp_color(None),
            (Some(_), false) => ramp_color(Some(0.0)),
            (Some(_), true) => ramp_color(p.color.map(|c| (c - cr.0) / (cr.1 - cr.0))),
        };
        let _ = writeln!(
            out,
            "<circle cx=\"{cx:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{fill}\" fill-opacity=\"0.8\"/>",
            py(p.y)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn summary_svg(rows: &[SummaryRow]) -> String {
    let mut features: Vec<(usize, &str)> = Vec::new();
    for r in rows {
        if !features.iter().any(|&(_, f)| f == r.feature) {
            features.push((r.rank, &r.feature));
        }
    }
    let xr = range(rows.iter().map(|r| r.shap));
    let band = (HEIGHT - BOTTOM - TOP) / features.len().max(1) as f64;
    let px = |v: f64| LEFT + 60.0 + (v - xr.0) / (xr.1 - xr.0) * (WIDTH - RIGHT - LEFT - 70.0);
    let mut out = String::new();
    svg_open(&mut out, "SHAP summary");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">centered SHAP value ({:.3} to {:.3})</text>",
        (LEFT + WIDTH) / 2.0,
        HEIGHT - 12.0,
        xr.0,
        xr.1
    );
    for (slot, &(_, name)) in features.iter().enumerate() {
        let cy = TOP + band * (slot as f64 + 0.5);
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT + 50.0,
            cy + 4.0,
            escape(name)
        );
        for r in rows.iter().filter(|r| r.feature == name) {
            let jitter = ((r.id as u64).wrapping_mul(0x9E37_79B9) % 1000) as f64 / 1000.0 - 0.5;
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.8\"/>",
                px(r.shap),
                cy + jitter * band * 0.6,
                ramp_color(r.value)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn importance_svg(entries: &[ImportanceEntry<f64>]) -> String {
    let max = entries.iter().map(|e| e.importance).fold(0.0, f64::max);
    let band = (HEIGHT - BOTTOM - TOP) / entries.len().max(1) as f64;
    let span = WIDTH - RIGHT - LEFT - 100.0;
    let mut out = String::new();
    svg_open(&mut out, "Term importance");
    for (slot, e) in entries.iter().enumerate() {
        let y = TOP + band * slot as f64;
        let label = if e.is_main() {
            e.feature1.clone()
        } else {
            format!("{} x {}", e.feature1, e.feature2)
        };
        let w = if max > 0.0 { e.importance / max * span } else { 0.0 };
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT + 90.0,
            y + band * 0.5 + 4.0,
            escape(&label)
        );
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.2}\" width=\"{w:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            LEFT + 96.0,
            y + band * 0.15,
            band * 0.7,
            if e.is_main() { ramp_color(Some(0.0)) } else { ramp_color(Some(1.0)) }
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::shap_for_cohort;
    use crate::importance::{feature_importance, term_importance};
    use crate::interaction::{matrices_for_cohort, InteractionMethod};
    use crate::synthetic::{make_eq5_function, make_threshold_cohort, THRESHOLD};
    use crate::valuefn::FnModel;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp_color(Some(0.0)), "#1E88E5");
        assert_eq!(ramp_color(Some(1.0)), "#FF0D57");
        assert_eq!(ramp_color(None), "#000000");
    }

    #[test]
    fn constant_model_rows_are_zero() {
        let table = Table::from_dense(vec!["p".into(), "q".into()], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let model = FnModel::new(2, |_: &[Cell<f64>]| 7.0);
        let cohort = matrices_for_cohort(&model, &table, &table, InteractionMethod::Taylor).unwrap();
        for v in [Variant::Shap, Variant::Main, Variant::Interaction, Variant::MainPlusInteraction] {
            let d = term_dependence(&table, &cohort, 0, v, Some(1), v.default_scale()).unwrap();
            assert!(d.rows.iter().all(|r| r.y == 0.0));
        }
    }

    #[test]
    fn eq5_main_dependence_and_csv_round_trip() {
        let a = 0.75;
        let spec = make_eq5_function(a, -0.5, 0.25, 1.5, -1.0);
        let bg = spec.background().unwrap();
        let cohort = matrices_for_cohort(&spec, &bg, &bg, InteractionMethod::Taylor).unwrap();
        let d = term_dependence(&bg, &cohort, 0, Variant::Main, None, Scale::Full).unwrap();
        for r in &d.rows {
            assert!((r.y - a * r.x.unwrap()).abs() < 1e-9);
        }
        let half = term_dependence(&bg, &cohort, 0, Variant::Interaction, Some(1), Scale::Half).unwrap();
        let full = term_dependence(&bg, &cohort, 0, Variant::Interaction, Some(1), Scale::Full).unwrap();
        for (h, f) in half.rows.iter().zip(&full.rows) {
            assert_eq!(h.y * 2.0, f.y);
        }
        let csv = half.to_csv();
        assert!(csv.starts_with("id,x:x,y:interaction,color:y\n"));
        let parsed = Table::<f64>::parse_csv(&csv).unwrap();
        assert_eq!(parsed.num_rows(), 8);
        for (r, row) in half.rows.iter().enumerate() {
            assert_eq!(parsed.cell(r, 0), Some(row.id as f64));
            assert_eq!(parsed.cell(r, 1), row.x);
            assert_eq!(parsed.cell(r, 2), Some(row.y));
            assert_eq!(parsed.cell(r, 3), row.color);
        }
        assert_eq!(parsed.to_csv_string(), csv);
    }

    #[test]
    fn partner_rules() {
        let spec = make_eq5_function(1.0, 1.0, 1.0, 1.0, 1.0);
        let bg = spec.background().unwrap();
        let cohort = matrices_for_cohort(&spec, &bg, &bg, InteractionMethod::Taylor).unwrap();
        assert!(matches!(
            term_dependence(&bg, &cohort, 1, Variant::Interaction, Some(1), Scale::Full),
            Err(Error::Domain(_))
        ));
        assert!(term_dependence(&bg, &cohort, 1, Variant::MainPlusInteraction, None, Scale::Half).is_err());
    }

    #[test]
    fn missing_cells_render_as_na_and_black() {
        let table = Table::new(
            vec!["p".into(), "q".into()],
            vec![vec![Some(1.0), None], vec![None, Some(2.0)], vec![Some(3.0), Some(1.0)]],
        )
        .unwrap();
        let d = build(&table, 0, Some(1), Variant::Shap, Scale::Full, vec![0.1, -0.2, 0.1]).unwrap();
        let csv = d.to_csv();
        assert_eq!(csv, "id,x:p,y:shap,color:q\n0,1,0.1,NA\n1,NA,-0.2,2\n2,3,0.1,1\n");
        let svg = d.to_svg();
        assert_eq!(svg.matches("#000000").count(), 2);
        assert_eq!(svg, d.to_svg());
        assert!(d.to_json().unwrap().contains("\"x\": null"));
    }

    #[test]
    fn importance_table_layout() {
        let model = FnModel::new(1, |r: &[Cell<f64>]| r[0].unwrap());
        let table = Table::from_dense(vec!["only".into()], vec![vec![1.0], vec![3.0]]).unwrap();
        let cohort = shap_for_cohort(&model, &table, &table).unwrap();
        let ranked = feature_importance(&cohort);
        let csv = render_importance(&ranked, Format::Csv).unwrap();
        assert_eq!(csv, "rank,feature1,feature2,importance\n1,only,only,1\n");
        let rows = summary_rows(&table, &cohort, &ranked).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].value, Some(0.0));
        assert!(render_summary(&rows, Format::Svg).unwrap().contains("only"));
    }

    #[test]
    fn three_way_ties_in_table() {
        let spec = FnModel::new(3, |r: &[Cell<f64>]| r[0].unwrap() * r[1].unwrap() * r[2].unwrap());
        let bg = make_eq5_function(0.0, 0.0, 0.0, 0.0, 0.0).background().unwrap();
        let cohort = matrices_for_cohort(&spec, &bg, &bg, InteractionMethod::Taylor).unwrap();
        let csv = render_importance(&term_importance(&cohort), Format::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().skip(1).take(3).collect();
        assert!(lines[0].starts_with("1,x,y,"));
        assert!(lines[1].starts_with("2,x,z,"));
        assert!(lines[2].starts_with("3,y,z,"));
        assert!(importance_variants_csv(&cohort).starts_with("rank,feature1,feature2,centered_full,"));
    }

    #[test]
    fn terms_round_trip() {
        let spec = make_eq5_function(0.5, -0.25, 1.0, 0.75, -1.5);
        let bg = spec.background().unwrap();
        let cohort = matrices_for_cohort(&spec, &bg, &bg, InteractionMethod::Taylor).unwrap();
        let csv = terms_csv(&cohort);
        assert!(csv.starts_with("id,feature1,feature2,raw,centered\n0,x,x,"));
        let back = parse_terms_csv(&csv, InteractionMethod::Taylor).unwrap();
        assert_eq!(back.matrices, cohort.matrices);
        assert_eq!(back.centered, cohort.centered);
        assert_eq!(term_importance(&back), term_importance(&cohort));
        assert!(parse_terms_csv("id,a,b\n", InteractionMethod::Taylor).is_err());
        assert!(parse_terms_csv(&csv.replace("0,x,y,", "0,x,q,"), InteractionMethod::Taylor).is_err());
    }

    #[test]
    fn threshold_ground_truth_main_drops() {
        let cohort = make_threshold_cohort(120, 5).unwrap();
        let bg = cohort.spec.background().unwrap();
        let explainer = crate::valuefn::Explainer::new(&cohort.spec, &bg).unwrap();
        let sample = cohort.table.select_rows(&(0..120).step_by(6).collect::<Vec<_>>()).unwrap();
        let terms = crate::interaction::interactions_for_cohort(&explainer, &sample, InteractionMethod::Taylor).unwrap();
        let d = term_dependence(&sample, &terms, 0, Variant::Main, None, Scale::Full).unwrap();
        let mean = |above: bool| {
            let ys: Vec<f64> = d
                .rows
                .iter()
                .filter(|r| (r.x.unwrap() > THRESHOLD) == above)
                .map(|r| r.y)
                .collect();
            ys.iter().sum::<f64>() / ys.len() as f64
        };
        assert!(mean(true) < mean(false));
    }
}
