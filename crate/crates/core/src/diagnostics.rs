//! Stratification diagnostics as structured plot data, with a basic static
//! SVG renderer.
//!
//! Four artifact families: size-ratio points (stratum size vs. control
//! proportion with warning zones), per-stratum propensity histograms,
//! Fisher-Mill scatters (propensity vs. prognosis per individual), and
//! prognostic-model residual tables.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dataset::DataFrame;
use crate::error::{Error, Result};
use crate::glm::{self, FittedGlm, ResidualKind};
use crate::matcher::{fit_propensity, PropensityInput};
use crate::stratifier::{stratum_assignments, IssueTableRow, Stratified};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Ok,
    Yellow,
    Red,
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Zone::Ok => write!(f, "ok"),
            Zone::Yellow => write!(f, "yellow"),
            Zone::Red => write!(f, "red"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRatioPoint {
    pub stratum: u32,
    pub total: usize,
    pub control_proportion: f64,
    pub zone: Zone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramData {
    pub stratum: u32,
    pub bin_edges: Vec<f64>,
    pub treated_counts: Vec<usize>,
    pub control_counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Treated,
    Control,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Group::Treated => write!(f, "treated"),
            Group::Control => write!(f, "control"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMillPoint {
    pub row_id: usize,
    pub group: Group,
    pub propensity: f64,
    pub prognosis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub row_id: usize,
    pub fitted: f64,
    pub response_residual: f64,
    pub pearson_residual: f64,
    pub deviance_residual: f64,
}

/// One point per stratum; zones derive from the issue flags, so the two
/// diagnostics can never disagree: red for size problems, yellow for
/// treated/control imbalance, ok otherwise.
pub fn size_ratio_data(strata: &dyn Stratified) -> Vec<SizeRatioPoint> {
    strata.issue_table().iter().map(size_ratio_point).collect()
}

pub fn size_ratio_point(row: &IssueTableRow) -> SizeRatioPoint {
    let zone = if row.issues.too_few || row.issues.too_many {
        Zone::Red
    } else if row.issues.not_enough_treated || row.issues.not_enough_control {
        Zone::Yellow
    } else {
        Zone::Ok
    };
    SizeRatioPoint {
        stratum: row.stratum,
        total: row.total,
        control_proportion: row.control_proportion,
        zone,
    }
}

fn stratum_rows(strata: &dyn Stratified, stratum: u32) -> Result<Vec<usize>> {
    let assignments = stratum_assignments(strata.analysis_set())?;
    let rows: Vec<usize> = assignments
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == stratum)
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(Error::UnknownStratum(stratum));
    }
    Ok(rows)
}

/// Propensity-score histogram for one stratum: equal-width bins spanning
/// the stratum's observed score range, counted separately for treated and
/// control rows. A zero-width range is widened by a small epsilon so every
/// value lands in one bin.
pub fn propensity_hist_data(
    strata: &dyn Stratified,
    propensity: &PropensityInput,
    stratum: u32,
    n_bins: usize,
) -> Result<HistogramData> {
    assert!(n_bins >= 1, "histogram needs at least one bin");
    let scores = fit_propensity(strata, propensity, false)?;
    let rows = stratum_rows(strata, stratum)?;
    let treat = strata
        .analysis_set()
        .binary_values(strata.treat_column())?;

    let values: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi {
        let eps = (lo.abs() * 1e-9).max(1e-9);
        (lo - eps / 2.0, hi + eps / 2.0)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|b| lo + b as f64 * width).collect();

    let mut treated_counts = vec![0usize; n_bins];
    let mut control_counts = vec![0usize; n_bins];
    for &row in &rows {
        let idx = (((scores[row] - lo) / width) as usize).min(n_bins - 1);
        if treat[row] == 1 {
            treated_counts[idx] += 1;
        } else {
            control_counts[idx] += 1;
        }
    }

    Ok(HistogramData {
        stratum,
        bin_edges,
        treated_counts,
        control_counts,
    })
}

/// Fisher-Mill points for one stratum: per row, estimated propensity
/// against estimated prognosis, optionally jittered by uniform noise on
/// `[-a, +a]` per axis (prognosis drawn first, then propensity, row by
/// row) from a ChaCha8 stream keyed by `seed`.
pub fn fisher_mill_data(
    strata: &dyn Stratified,
    propensity: &PropensityInput,
    stratum: u32,
    jitter_prognosis: f64,
    jitter_propensity: f64,
    seed: u64,
) -> Result<Vec<FisherMillPoint>> {
    let prognosis = strata
        .prognostic_scores()
        .ok_or(Error::NoPrognosticScores)?
        .to_vec();
    let propensity_scores = fit_propensity(strata, propensity, false)?;
    let rows = stratum_rows(strata, stratum)?;
    let treat = strata
        .analysis_set()
        .binary_values(strata.treat_column())?;
    let row_ids = strata.analysis_set().row_ids();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |amplitude: f64| -> f64 {
        if amplitude > 0.0 {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (2.0 * u - 1.0) * amplitude
        } else {
            0.0
        }
    };

    Ok(rows
        .iter()
        .map(|&i| {
            let dg = jitter(jitter_prognosis);
            let dp = jitter(jitter_propensity);
            FisherMillPoint {
                row_id: row_ids[i],
                group: if treat[i] == 1 {
                    Group::Treated
                } else {
                    Group::Control
                },
                propensity: propensity_scores[i] + dp,
                prognosis: prognosis[i] + dg,
            }
        })
        .collect())
}

/// Residual table of a prognostic model on a frame (normally its pilot set).
pub fn residual_data(model: &FittedGlm, df: &DataFrame) -> Result<Vec<ResidualRow>> {
    let fitted = glm::predict(model, df)?;
    let response = glm::residuals(model, df, ResidualKind::Response)?;
    let pearson = glm::residuals(model, df, ResidualKind::Pearson)?;
    let deviance = glm::residuals(model, df, ResidualKind::Deviance)?;
    Ok(df
        .row_ids()
        .iter()
        .enumerate()
        .map(|(i, &row_id)| ResidualRow {
            row_id,
            fitted: fitted[i],
            response_residual: response[i],
            pearson_residual: pearson[i],
            deviance_residual: deviance[i],
        })
        .collect())
}

// --- CSV exports ------------------------------------------------------------

pub fn size_ratio_csv(points: &[SizeRatioPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stratum", "total", "control_proportion", "zone"])
        .unwrap();
    for p in points {
        w.write_record([
            p.stratum.to_string(),
            p.total.to_string(),
            crate::numfmt::fmt_float(p.control_proportion),
            p.zone.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn histogram_csv(h: &HistogramData) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "treated", "control"]).unwrap();
    for b in 0..h.treated_counts.len() {
        w.write_record([
            crate::numfmt::fmt_float(h.bin_edges[b]),
            crate::numfmt::fmt_float(h.bin_edges[b + 1]),
            h.treated_counts[b].to_string(),
            h.control_counts[b].to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn fisher_mill_csv(points: &[FisherMillPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_id", "group", "propensity", "prognosis"]).unwrap();
    for p in points {
        w.write_record([
            p.row_id.to_string(),
            p.group.to_string(),
            crate::numfmt::fmt_float(p.propensity),
            crate::numfmt::fmt_float(p.prognosis),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn residual_csv(rows: &[ResidualRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "row_id",
        "fitted",
        "response_residual",
        "pearson_residual",
        "deviance_residual",
    ])
    .unwrap();
    for r in rows {
        w.write_record([
            r.row_id.to_string(),
            crate::numfmt::fmt_float(r.fitted),
            crate::numfmt::fmt_float(r.response_residual),
            crate::numfmt::fmt_float(r.pearson_residual),
            crate::numfmt::fmt_float(r.deviance_residual),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

// --- SVG rendering ----------------------------------------------------------

pub enum PlotData<'a> {
    SizeRatio(&'a [SizeRatioPoint]),
    Histogram(&'a HistogramData),
    FisherMill(&'a [FisherMillPoint]),
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN: f64 = 50.0;

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W:.0}\" height=\"{SVG_H:.0}\" viewBox=\"0 0 {SVG_W:.0} {SVG_H:.0}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{SVG_W:.0}\" height=\"{SVG_H:.0}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        SVG_W / 2.0
    )
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let t = if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        };
        self.px_lo + t * (self.px_hi - self.px_lo)
    }
}

fn axes(out: &mut String, xlab: &str, ylab: &str) {
    out.push_str(&format!(
        "<line x1=\"{m:.1}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{m:.1}\" y1=\"{t:.1}\" x2=\"{m:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n\
         <text x=\"{cx:.1}\" y=\"{by:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{xlab}</text>\n\
         <text x=\"14\" y=\"{cy:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {cy:.1})\">{ylab}</text>\n",
        m = MARGIN,
        r = SVG_W - MARGIN,
        t = MARGIN,
        b = SVG_H - MARGIN,
        cx = SVG_W / 2.0,
        by = SVG_H - 12.0,
        cy = SVG_H / 2.0,
    ));
}

pub fn render_svg_string(plot: &PlotData<'_>) -> String {
    match plot {
        PlotData::SizeRatio(points) => render_size_ratio(points),
        PlotData::Histogram(h) => render_histogram(h),
        PlotData::FisherMill(points) => render_fisher_mill(points),
    }
}

/// Render a plot to a file.
pub fn render_svg(plot: &PlotData<'_>, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, render_svg_string(plot))?;
    Ok(())
}

fn render_size_ratio(points: &[SizeRatioPoint]) -> String {
    let th = crate::stratifier::IssueThresholds::default();
    let max_total = points.iter().map(|p| p.total).max().unwrap_or(1) as f64;
    let x = Scale {
        lo: 0.0,
        hi: (max_total * 1.15).max(th.too_few as f64 * 1.5),
        px_lo: MARGIN,
        px_hi: SVG_W - MARGIN,
    };
    let y = Scale {
        lo: 0.0,
        hi: 1.0,
        px_lo: SVG_H - MARGIN,
        px_hi: MARGIN,
    };
    let mut out = svg_header("Stratum size vs. control proportion");

    // Yellow imbalance bands, then red size zones on top.
    let hi_band = th.ratio as f64 / (th.ratio as f64 + 1.0);
    let lo_band = 1.0 - hi_band;
    for (y0, y1) in [(hi_band, 1.0), (0.0, lo_band)] {
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#ffe680\" opacity=\"0.6\"/>\n",
            x.map(x.lo),
            y.map(y1),
            x.map(x.hi) - x.map(x.lo),
            (y.map(y0) - y.map(y1)).abs()
        ));
    }
    out.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#ff9999\" opacity=\"0.6\"/>\n",
        x.map(0.0),
        y.map(1.0),
        x.map(th.too_few as f64) - x.map(0.0),
        y.map(0.0) - y.map(1.0)
    ));
    if (th.too_many as f64) < x.hi {
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#ff9999\" opacity=\"0.6\"/>\n",
            x.map(th.too_many as f64),
            y.map(1.0),
            x.map(x.hi) - x.map(th.too_many as f64),
            y.map(0.0) - y.map(1.0)
        ));
    }
    axes(&mut out, "stratum size", "control proportion");
    for p in points {
        let fill = match p.zone {
            Zone::Ok => "#2266cc",
            Zone::Yellow => "#cc9900",
            Zone::Red => "#cc2222",
        };
        out.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{fill}\"/>\n",
            x.map(p.total as f64),
            y.map(p.control_proportion)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn render_histogram(h: &HistogramData) -> String {
    let n_bins = h.treated_counts.len();
    let max_count = h
        .treated_counts
        .iter()
        .chain(&h.control_counts)
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = Scale {
        lo: h.bin_edges[0],
        hi: h.bin_edges[n_bins],
        px_lo: MARGIN,
        px_hi: SVG_W - MARGIN,
    };
    let y = Scale {
        lo: 0.0,
        hi: max_count,
        px_lo: SVG_H - MARGIN,
        px_hi: MARGIN,
    };
    let mut out = svg_header(&format!("Propensity scores in stratum {}", h.stratum));
    axes(&mut out, "propensity score", "count");
    for b in 0..n_bins {
        let x0 = x.map(h.bin_edges[b]);
        let x1 = x.map(h.bin_edges[b + 1]);
        let half = (x1 - x0) / 2.0;
        for (offset, count, fill) in [
            (0.0, h.treated_counts[b], "#cc5500"),
            (half, h.control_counts[b], "#2266cc"),
        ] {
            if count > 0 {
                out.push_str(&format!(
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{fill}\" opacity=\"0.8\"/>\n",
                    x0 + offset,
                    y.map(count as f64),
                    half.max(1.0),
                    y.map(0.0) - y.map(count as f64)
                ));
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

fn render_fisher_mill(points: &[FisherMillPoint]) -> String {
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x_lo = x_lo.min(p.prognosis);
        x_hi = x_hi.max(p.prognosis);
        y_lo = y_lo.min(p.propensity);
        y_hi = y_hi.max(p.propensity);
    }
    if points.is_empty() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    let x = Scale {
        lo: x_lo,
        hi: x_hi,
        px_lo: MARGIN,
        px_hi: SVG_W - MARGIN,
    };
    let y = Scale {
        lo: y_lo,
        hi: y_hi,
        px_lo: SVG_H - MARGIN,
        px_hi: MARGIN,
    };
    let mut out = svg_header("Propensity vs. prognosis");
    axes(&mut out, "prognostic score", "propensity score");
    for p in points {
        let (fill, r) = match p.group {
            Group::Treated => ("#cc5500", 3.5),
            Group::Control => ("#2266cc", 2.5),
        };
        out.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{r}\" fill=\"{fill}\" opacity=\"0.75\"/>\n",
            x.map(p.prognosis),
            y.map(p.propensity)
        ));
    }
    out.push_str("</svg>\n");
    out
}
