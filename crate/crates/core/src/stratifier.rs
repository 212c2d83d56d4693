//! Stratified analysis sets.
//!
//! Automatic stratification bins the analysis set by prognostic-score
//! quantiles, fitting the prognostic model on a pilot set of controls (or
//! accepting externally computed scores). Manual stratification crosses
//! discrete covariates. Both produce a strata table and an issue table.

use std::collections::BTreeMap;

use crate::dataset::{Column, ColumnData, ColumnKind, DataFrame, Formula};
use crate::error::{Error, Result, StrataWarning};
use crate::glm::{self, FittedGlm};
use crate::numfmt::fmt_sig5;
use crate::sampler::split_pilot_set;

/// Flag thresholds for the issue table and the size-ratio zones.
///
/// A stratum is flagged imbalanced when one arm has `ratio` or more
/// observations per observation of the other arm, too small below
/// `too_few` rows, and too large above `too_many` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssueThresholds {
    pub too_few: usize,
    pub too_many: usize,
    pub ratio: usize,
}

impl Default for IssueThresholds {
    fn default() -> Self {
        IssueThresholds {
            too_few: 75,
            too_many: 5000,
            ratio: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IssueFlags {
    pub too_few: bool,
    pub too_many: bool,
    pub not_enough_treated: bool,
    pub not_enough_control: bool,
}

impl IssueFlags {
    pub fn any(&self) -> bool {
        self.too_few || self.too_many || self.not_enough_treated || self.not_enough_control
    }

    /// Render as the issue-table text: flags joined by `"; "`, `"none"` when clear.
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        if self.too_few {
            parts.push("Too few samples");
        }
        if self.too_many {
            parts.push("Too many samples");
        }
        if self.not_enough_treated {
            parts.push("Not enough treated samples");
        }
        if self.not_enough_control {
            parts.push("Not enough control samples");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("; ")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssueTableRow {
    pub stratum: u32,
    pub treat: usize,
    pub control: usize,
    pub total: usize,
    pub control_proportion: f64,
    pub issues: IssueFlags,
}

/// Definition of one stratum: a quantile interval (auto) or a covariate
/// value combination (manual).
#[derive(Debug, Clone, PartialEq)]
pub enum StratumBin {
    Quantile { lo: f64, hi: f64, closed: bool },
    Combination(Vec<(String, String)>),
}

impl StratumBin {
    pub fn render(&self) -> String {
        match self {
            StratumBin::Quantile { lo, hi, closed } => {
                let close = if *closed { "]" } else { ")" };
                format!("[{},{}{}", fmt_sig5(*lo), fmt_sig5(*hi), close)
            }
            StratumBin::Combination(pairs) => pairs
                .iter()
                .map(|(t, v)| format!("{t}={v}"))
                .collect::<Vec<_>>()
                .join(", "),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrataTableRow {
    pub stratum: u32,
    pub bin: StratumBin,
    pub size: usize,
}

/// Echo of the call that produced a stratification, for audit trails.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub function: String,
    pub params: Vec<(String, String)>,
}

impl CallRecord {
    pub fn render(&self) -> String {
        let args: Vec<String> = self
            .params
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect();
        format!("{}({})", self.function, args.join(", "))
    }
}

#[derive(Debug, Clone)]
pub struct AutoStrata {
    /// Analysis set with the integer `stratum` column appended last.
    pub analysis_set: DataFrame,
    pub pilot_set: Option<DataFrame>,
    pub prognostic_model: Option<FittedGlm>,
    /// Prognostic score per analysis row.
    pub prognostic_scores: Vec<f64>,
    pub strata_table: Vec<StrataTableRow>,
    pub issue_table: Vec<IssueTableRow>,
    pub call_record: CallRecord,
    pub treat: String,
    pub warnings: Vec<StrataWarning>,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ManualStrata {
    pub analysis_set: DataFrame,
    pub strata_table: Vec<StrataTableRow>,
    pub issue_table: Vec<IssueTableRow>,
    pub call_record: CallRecord,
    pub treat: String,
}

/// Common view over automatic and manual stratifications.
pub trait Stratified {
    fn analysis_set(&self) -> &DataFrame;
    fn strata_table(&self) -> &[StrataTableRow];
    fn issue_table(&self) -> &[IssueTableRow];
    fn prognostic_scores(&self) -> Option<&[f64]>;
    fn treat_column(&self) -> &str;
}

impl Stratified for AutoStrata {
    fn analysis_set(&self) -> &DataFrame {
        &self.analysis_set
    }
    fn strata_table(&self) -> &[StrataTableRow] {
        &self.strata_table
    }
    fn issue_table(&self) -> &[IssueTableRow] {
        &self.issue_table
    }
    fn prognostic_scores(&self) -> Option<&[f64]> {
        Some(&self.prognostic_scores)
    }
    fn treat_column(&self) -> &str {
        &self.treat
    }
}

impl Stratified for ManualStrata {
    fn analysis_set(&self) -> &DataFrame {
        &self.analysis_set
    }
    fn strata_table(&self) -> &[StrataTableRow] {
        &self.strata_table
    }
    fn issue_table(&self) -> &[IssueTableRow] {
        &self.issue_table
    }
    fn prognostic_scores(&self) -> Option<&[f64]> {
        None
    }
    fn treat_column(&self) -> &str {
        &self.treat
    }
}

/// Read the 1-based stratum assignment column from an analysis set.
pub fn stratum_assignments(df: &DataFrame) -> Result<Vec<u32>> {
    if !df.has_column("stratum") {
        return Err(Error::NoStratumColumn);
    }
    let values = df.numeric_values("stratum")?;
    values
        .iter()
        .map(|&v| {
            let r = v.round();
            if r >= 1.0 && (v - r).abs() < 1e-9 && r <= u32::MAX as f64 {
                Ok(r as u32)
            } else {
                Err(Error::TypeMismatch {
                    column: "stratum".to_string(),
                    row: 0,
                    detail: format!("stratum value {v} is not a positive integer"),
                })
            }
        })
        .collect()
}

/// 1-based bin assignment per score plus the display interval of each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBins {
    pub assignments: Vec<u32>,
    pub intervals: Vec<(f64, f64)>,
}

/// Quantile binning of scores into `n_strata` ordered bins.
///
/// Boundaries are the empirical quantiles at i/n_strata (linear
/// interpolation between order statistics). Assignment is rank-based —
/// the row of rank r lands in bin `floor(r * n_strata / n)` — with tied
/// scores always collapsed into the lowest bin any of them would occupy,
/// so equal scores share a stratum. With all-distinct scores the bin sizes
/// are `floor(n/n_strata)` or `ceil(n/n_strata)`. Ties can leave
/// higher-numbered bins empty; callers compact them.
pub fn quantile_bin(scores: &[f64], n_strata: usize) -> Result<QuantileBins> {
    assert!(n_strata >= 1, "n_strata must be at least 1");
    let n = scores.len();
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(bad));
    }
    if n < n_strata {
        return Err(Error::TooManyStrata {
            rows: n,
            strata: n_strata,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut assignments = vec![0u32; n];
    let mut prev_score = f64::NAN;
    let mut prev_stratum = 1u32;
    for (rank, &idx) in order.iter().enumerate() {
        let stratum = if scores[idx] == prev_score {
            prev_stratum
        } else {
            (rank * n_strata / n) as u32 + 1
        };
        assignments[idx] = stratum;
        prev_score = scores[idx];
        prev_stratum = stratum;
    }

    // Interval boundaries for display: q_0 = min, q_k = max, interior
    // breaks by type-7 interpolation.
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let quantile = |p: f64| -> f64 {
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        if lo + 1 < n {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        } else {
            sorted[lo]
        }
    };
    let mut breaks = Vec::with_capacity(n_strata + 1);
    breaks.push(sorted[0]);
    for j in 1..n_strata {
        breaks.push(quantile(j as f64 / n_strata as f64));
    }
    breaks.push(sorted[n - 1]);
    let intervals: Vec<(f64, f64)> = (0..n_strata).map(|j| (breaks[j], breaks[j + 1])).collect();

    Ok(QuantileBins {
        assignments,
        intervals,
    })
}

/// Per-stratum counts and imbalance flags.
pub fn issue_table(df: &DataFrame, treat: &str) -> Result<Vec<IssueTableRow>> {
    issue_table_with(df, treat, &IssueThresholds::default())
}

pub fn issue_table_with(
    df: &DataFrame,
    treat: &str,
    thresholds: &IssueThresholds,
) -> Result<Vec<IssueTableRow>> {
    let strata = stratum_assignments(df)?;
    let treat_col = df.binary_values(treat)?;
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (s, &t) in strata.iter().zip(treat_col) {
        let e = counts.entry(*s).or_insert((0, 0));
        if t == 1 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(stratum, (t, c))| issue_row(stratum, t, c, thresholds))
        .collect())
}

/// Flag computation for one stratum's counts.
pub fn issue_row(stratum: u32, treat: usize, control: usize, th: &IssueThresholds) -> IssueTableRow {
    let total = treat + control;
    IssueTableRow {
        stratum,
        treat,
        control,
        total,
        control_proportion: control as f64 / total as f64,
        issues: IssueFlags {
            too_few: total < th.too_few,
            too_many: total > th.too_many,
            not_enough_treated: control >= th.ratio * treat,
            not_enough_control: treat >= th.ratio * control,
        },
    }
}

/// Prognostic-score input for automatic stratification: a model formula
/// fitted on the pilot set, or a ready-made score vector for the analysis
/// set (fit elsewhere, e.g. by a penalized model).
#[derive(Debug, Clone)]
pub enum Prognosis {
    Formula(Formula),
    Scores(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct AutoStratifyConfig {
    pub treat: String,
    /// Target stratum size; the number of strata is `ceil(n_analysis / size)`.
    pub size: usize,
    pub pilot_fraction: f64,
    /// Outcome column name; required when `Prognosis::Scores` is used.
    pub outcome: Option<String>,
    pub seed: u64,
    pub thresholds: IssueThresholds,
}

impl AutoStratifyConfig {
    pub fn new(treat: impl Into<String>) -> Self {
        AutoStratifyConfig {
            treat: treat.into(),
            size: 2500,
            pilot_fraction: 0.1,
            outcome: None,
            seed: 0,
            thresholds: IssueThresholds::default(),
        }
    }
}

/// Automatic stratification.
///
/// With a formula, the pilot set is split from the controls (or taken from
/// `pilot_sample` verbatim, in which case `df` is already the analysis
/// set), the prognostic model is fitted on the pilot controls — logistic
/// for a binary outcome, linear for a numeric one — and its predictions on
/// the analysis set are quantile-binned. With a score vector, binning
/// applies directly and no model is fitted.
pub fn auto_stratify(
    df: &DataFrame,
    prognosis: Prognosis,
    pilot_sample: Option<&DataFrame>,
    cfg: &AutoStratifyConfig,
) -> Result<AutoStrata> {
    df.binary_values(&cfg.treat)?;
    let mut messages = Vec::new();
    let mut warnings = Vec::new();
    let mut params: Vec<(String, String)> = vec![("treat".to_string(), format!("\"{}\"", cfg.treat))];

    let (analysis, pilot, model, scores) = match &prognosis {
        Prognosis::Formula(formula) => {
            params.push(("prognosis".to_string(), formula.to_text()));
            let (analysis, pilot) = match pilot_sample {
                Some(p) => {
                    messages.push("Using user-specified set for prognostic score modeling.".to_string());
                    (df.clone(), p.clone())
                }
                None => {
                    let split = split_pilot_set(df, &cfg.treat, cfg.pilot_fraction, &[], cfg.seed)?;
                    messages.extend(split.messages);
                    (split.analysis_set, split.pilot_set)
                }
            };

            // The prognostic score is the expected outcome under control, so
            // the model sees pilot controls only.
            let treat_col = pilot.binary_values(&cfg.treat)?;
            let control_rows: Vec<usize> =
                (0..pilot.n_rows()).filter(|&i| treat_col[i] == 0).collect();
            let pilot_controls = pilot.subset(&control_rows);

            let outcome_name = formula.lhs().ok_or_else(|| {
                Error::SyntaxError("prognosis formula needs an outcome term".to_string())
            })?;
            let model = match pilot_controls.column(outcome_name)?.kind() {
                ColumnKind::Binary => {
                    messages.push(format!(
                        "Fitting prognostic model via logistic regression: {formula}"
                    ));
                    glm::fit_logistic(
                        &pilot_controls,
                        formula,
                        glm::DEFAULT_TOL,
                        glm::DEFAULT_MAX_ITER,
                    )?
                }
                ColumnKind::Numeric => {
                    messages.push(format!(
                        "Fitting prognostic model via linear regression: {formula}"
                    ));
                    glm::fit_ols(&pilot_controls, formula)?
                }
                ColumnKind::Categorical => {
                    return Err(Error::TypeMismatch {
                        column: outcome_name.to_string(),
                        row: 0,
                        detail: "prognostic outcome must be binary or numeric".to_string(),
                    })
                }
            };
            if !model.converged {
                warnings.push(StrataWarning::PrognosticNotConverged {
                    iterations: model.iterations,
                });
            }
            let scores = glm::predict(&model, &analysis)?;
            (analysis, Some(pilot), Some(model), scores)
        }
        Prognosis::Scores(scores) => {
            params.push(("prognosis".to_string(), "<scores>".to_string()));
            let outcome = cfg.outcome.as_deref().ok_or_else(|| {
                Error::SyntaxError(
                    "auto_stratify with a score vector requires the outcome column name"
                        .to_string(),
                )
            })?;
            df.column(outcome)?;
            if scores.len() != df.n_rows() {
                return Err(Error::ScoreLengthMismatch {
                    expected: df.n_rows(),
                    found: scores.len(),
                });
            }
            (df.clone(), pilot_sample.cloned(), None, scores.clone())
        }
    };

    if let Some(outcome) = &cfg.outcome {
        params.push(("outcome".to_string(), format!("\"{outcome}\"")));
    }
    params.push(("size".to_string(), cfg.size.to_string()));
    params.push(("pilot_fraction".to_string(), cfg.pilot_fraction.to_string()));
    params.push(("seed".to_string(), cfg.seed.to_string()));

    let n_analysis = analysis.n_rows();
    if n_analysis == 0 {
        return Err(Error::TooManyStrata { rows: 0, strata: 1 });
    }
    let requested = if cfg.size >= n_analysis {
        warnings.push(StrataWarning::SizeTooLarge {
            size: cfg.size,
            rows: n_analysis,
        });
        1
    } else {
        n_analysis.div_ceil(cfg.size)
    };

    let bins = quantile_bin(&scores, requested)?;
    let (assignments, strata_table, degenerate) =
        compact_strata(&bins.assignments, &bins.intervals, requested);
    if degenerate {
        warnings.push(StrataWarning::DegenerateScores {
            requested,
            effective: strata_table.len(),
        });
    }

    let analysis_set = analysis.with_column(Column::numeric(
        "stratum",
        assignments.iter().map(|&s| s as f64).collect(),
    ))?;
    let issue = issue_table_with(&analysis_set, &cfg.treat, &cfg.thresholds)?;

    Ok(AutoStrata {
        analysis_set,
        pilot_set: pilot,
        prognostic_model: model,
        prognostic_scores: scores,
        strata_table,
        issue_table: issue,
        call_record: CallRecord {
            function: "auto_stratify".to_string(),
            params,
        },
        treat: cfg.treat.clone(),
        warnings,
        messages,
    })
}

/// Renumber strata densely after tie collapse, building the strata table.
fn compact_strata(
    raw: &[u32],
    intervals: &[(f64, f64)],
    requested: usize,
) -> (Vec<u32>, Vec<StrataTableRow>, bool) {
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &s in raw {
        *sizes.entry(s).or_insert(0) += 1;
    }
    let occupied: Vec<u32> = sizes.keys().copied().collect();
    let degenerate = occupied.len() < requested;
    let remap: BTreeMap<u32, u32> = occupied
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new as u32 + 1))
        .collect();

    let assignments: Vec<u32> = raw.iter().map(|s| remap[s]).collect();
    let table: Vec<StrataTableRow> = occupied
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            let (lo, hi) = intervals[(old - 1) as usize];
            StrataTableRow {
                stratum: new as u32 + 1,
                bin: StratumBin::Quantile {
                    lo,
                    hi,
                    closed: new + 1 == occupied.len(),
                },
                size: sizes[&old],
            }
        })
        .collect();
    (assignments, table, degenerate)
}

/// Manual stratification on discrete covariates.
///
/// The formula's left side names the (binary) treatment; the right-hand
/// terms must be binary or categorical. Strata are the distinct observed
/// value combinations, numbered in sorted key order, and every input row
/// is kept — there is no pilot set.
pub fn manual_stratify(df: &DataFrame, strata_formula: &Formula) -> Result<ManualStrata> {
    manual_stratify_with(df, strata_formula, &IssueThresholds::default())
}

pub fn manual_stratify_with(
    df: &DataFrame,
    strata_formula: &Formula,
    thresholds: &IssueThresholds,
) -> Result<ManualStrata> {
    let treat = strata_formula
        .lhs()
        .ok_or_else(|| Error::SyntaxError("strata formula needs the treatment on the left".to_string()))?;
    df.binary_values(treat)?;

    let terms = strata_formula.rhs_terms();
    let mut cols: Vec<&ColumnData> = Vec::with_capacity(terms.len());
    for term in terms {
        let col = df.column(term)?;
        if col.kind() == ColumnKind::Numeric {
            return Err(Error::ContinuousStratifyingCovariate(term.clone()));
        }
        cols.push(&col.data);
    }

    // Sortable key per row: binary values and categorical level codes.
    let keys: Vec<Vec<u32>> = (0..df.n_rows())
        .map(|i| {
            cols.iter()
                .map(|d| match d {
                    ColumnData::Binary(v) => v[i] as u32,
                    ColumnData::Categorical { codes, .. } => codes[i],
                    ColumnData::Numeric(_) => unreachable!("checked above"),
                })
                .collect()
        })
        .collect();

    let mut numbering: BTreeMap<&Vec<u32>, u32> = BTreeMap::new();
    for k in &keys {
        numbering.entry(k).or_insert(0);
    }
    for (idx, (_, v)) in numbering.iter_mut().enumerate() {
        *v = idx as u32 + 1;
    }

    let assignments: Vec<u32> = keys.iter().map(|k| numbering[k]).collect();
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &s in &assignments {
        *sizes.entry(s).or_insert(0) += 1;
    }

    let render_value = |d: &ColumnData, code: u32| -> String {
        match d {
            ColumnData::Binary(_) => code.to_string(),
            ColumnData::Categorical { levels, .. } => levels[code as usize].clone(),
            ColumnData::Numeric(_) => unreachable!(),
        }
    };
    let strata_table: Vec<StrataTableRow> = numbering
        .iter()
        .map(|(key, &stratum)| {
            let pairs = terms
                .iter()
                .zip(key.iter().zip(&cols))
                .map(|(t, (&code, d))| (t.clone(), render_value(d, code)))
                .collect();
            StrataTableRow {
                stratum,
                bin: StratumBin::Combination(pairs),
                size: sizes[&stratum],
            }
        })
        .collect();

    let analysis_set = df.with_column(Column::numeric(
        "stratum",
        assignments.iter().map(|&s| s as f64).collect(),
    ))?;
    let issue = issue_table_with(&analysis_set, treat, thresholds)?;

    Ok(ManualStrata {
        analysis_set,
        strata_table,
        issue_table: issue,
        call_record: CallRecord {
            function: "manual_stratify".to_string(),
            params: vec![("strata_formula".to_string(), strata_formula.to_text())],
        },
        treat: treat.to_string(),
    })
}

// --- table export and summaries --------------------------------------------

pub fn strata_table_csv(rows: &[StrataTableRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stratum", "quantile_bin", "size"]).unwrap();
    for r in rows {
        w.write_record([r.stratum.to_string(), r.bin.render(), r.size.to_string()])
            .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn issue_table_csv(rows: &[IssueTableRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Stratum",
        "Treat",
        "Control",
        "Total",
        "Control_Proportion",
        "Potential_Issues",
    ])
    .unwrap();
    for r in rows {
        w.write_record([
            r.stratum.to_string(),
            r.treat.to_string(),
            r.control.to_string(),
            r.total.to_string(),
            crate::numfmt::fmt_float(r.control_proportion),
            r.issues.render(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn size_summary(table: &[StrataTableRow]) -> (usize, usize) {
    let min = table.iter().map(|r| r.size).min().unwrap_or(0);
    let max = table.iter().map(|r| r.size).max().unwrap_or(0);
    (min, max)
}

impl AutoStrata {
    /// Human-readable block in the style of the interactive print output.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Function call:\n");
        out.push_str(&self.call_record.render());
        out.push_str("\n\n");
        out.push_str(&format!(
            "Analysis set dimensions: {} X {}\n\n",
            self.analysis_set.n_rows(),
            self.analysis_set.n_cols()
        ));
        if let Some(p) = &self.pilot_set {
            out.push_str(&format!(
                "Pilot set dimensions: {} X {}\n\n",
                p.n_rows(),
                p.n_cols()
            ));
        }
        if let Some(m) = &self.prognostic_model {
            out.push_str(&format!("Prognostic Score Formula:\n{}\n\n", m.formula));
        }
        let (min, max) = size_summary(&self.strata_table);
        out.push_str(&format!("Number of strata: {}\n\n", self.strata_table.len()));
        out.push_str(&format!("\tMin size: {min} \tMax size: {max}\n"));
        out
    }
}

impl ManualStrata {
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Function call:\n");
        out.push_str(&self.call_record.render());
        out.push_str("\n\n");
        out.push_str(&format!(
            "Analysis set dimensions: {} X {}\n\n",
            self.analysis_set.n_rows(),
            self.analysis_set.n_cols()
        ));
        let (min, max) = size_summary(&self.strata_table);
        out.push_str(&format!("Number of strata: {}\n\n", self.strata_table.len()));
        out.push_str(&format!("\tMin size: {min} \tMax size: {max}\n"));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{make_sample_data, SimConfig};
    use proptest::prelude::*;

    #[test]
    fn median_split_of_one_to_ten() {
        let scores: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let bins = quantile_bin(&scores, 2).unwrap();
        let low = bins.assignments.iter().filter(|&&s| s == 1).count();
        let high = bins.assignments.iter().filter(|&&s| s == 2).count();
        assert_eq!((low, high), (5, 5));
        // Boundary at the 0.5 quantile of 1..10 = 5.5.
        assert!((bins.intervals[0].1 - 5.5).abs() < 1e-12);
        assert!((bins.intervals[1].0 - 5.5).abs() < 1e-12);
    }

    #[test]
    fn equal_sizes_for_distinct_scores() {
        // 9234 distinct scores in 19 strata: every stratum holds 486.
        let scores: Vec<f64> = (0..9234).map(|i| (i as f64) * 0.3 + 1.0).collect();
        let bins = quantile_bin(&scores, 19).unwrap();
        let mut sizes = BTreeMap::new();
        for s in bins.assignments {
            *sizes.entry(s).or_insert(0usize) += 1;
        }
        assert_eq!(sizes.len(), 19);
        assert!(sizes.values().all(|&c| c == 486));
    }

    #[test]
    fn near_equal_sizes_when_not_divisible() {
        let scores: Vec<f64> = (0..9364).map(|i| (i as f64).sin() + i as f64).collect();
        let bins = quantile_bin(&scores, 19).unwrap();
        let mut sizes = BTreeMap::new();
        for s in bins.assignments {
            *sizes.entry(s).or_insert(0usize) += 1;
        }
        let min = sizes.values().min().unwrap();
        let max = sizes.values().max().unwrap();
        assert!(*min >= 492 && *max <= 494, "sizes {min}..{max}");
    }

    #[test]
    fn too_many_strata_rejected() {
        let err = quantile_bin(&[1.0, 2.0], 3).unwrap_err();
        assert!(matches!(err, Error::TooManyStrata { .. }));
    }

    /// O(n^2) counting oracle: rank by strictly-smaller count, bin by rank.
    /// Tied scores share the count, hence the stratum, automatically.
    fn rank_and_bin_oracle(scores: &[f64], k: usize) -> Vec<u32> {
        let n = scores.len();
        scores
            .iter()
            .map(|&s| {
                let rank = scores.iter().filter(|&&o| o < s).count();
                (rank * k / n) as u32 + 1
            })
            .collect()
    }

    #[test]
    fn assignments_match_counting_oracle_with_ties() {
        let mut scores = Vec::new();
        let mut state = 987654321u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            // Coarse grid forces plenty of ties.
            scores.push(((state >> 33) % 17) as f64 / 4.0);
        }
        let bins = quantile_bin(&scores, 4).unwrap();
        assert_eq!(bins.assignments, rank_and_bin_oracle(&scores, 4));
    }

    proptest! {
        #[test]
        fn binning_is_monotone_and_tie_safe(
            scores in proptest::collection::vec(-50.0f64..50.0, 5..120),
            k in 1usize..8,
        ) {
            prop_assume!(scores.len() >= k);
            let bins = quantile_bin(&scores, k).unwrap();
            let assign = bins.assignments;
            prop_assert_eq!(&assign, &rank_and_bin_oracle(&scores, k));
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] <= scores[j] {
                        prop_assert!(assign[i] <= assign[j]);
                    }
                    if scores[i] == scores[j] {
                        prop_assert_eq!(assign[i], assign[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn issue_flags_match_reference_rows() {
        let th = IssueThresholds::default();
        // Imbalanced large stratum.
        let r = issue_row(19, 85, 401, &th);
        assert_eq!(r.issues.render(), "Not enough treated samples");
        assert_eq!(r.total, 486);
        // Small and imbalanced.
        let r = issue_row(3, 1, 17, &th);
        assert_eq!(r.issues.render(), "Too few samples; Not enough treated samples");
        // 80 rows is not "too few": pins the threshold below 80.
        let r = issue_row(4, 13, 67, &th);
        assert_eq!(r.issues.render(), "Not enough treated samples");
        // Balanced stratum.
        let r = issue_row(1, 167, 319, &th);
        assert_eq!(r.issues.render(), "none");
        // Control-starved side renders the mirrored flag.
        let r = issue_row(7, 60, 15, &th);
        assert_eq!(r.issues.render(), "Not enough control samples");
    }

    fn sim_strata(n: usize, seed: u64, size: usize) -> AutoStrata {
        let df = make_sample_data(&SimConfig { n, seed }).unwrap();
        auto_stratify(
            &df,
            Prognosis::Formula(Formula::parse("outcome ~ X1 + X2").unwrap()),
            None,
            &AutoStratifyConfig {
                size,
                seed,
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap()
    }

    #[test]
    fn simulated_workflow_produces_nineteen_strata() {
        let strata = sim_strata(10_000, 21, 500);
        // Pilot draw varies binomially; with fraction 0.1 the analysis set
        // stays in the low 9000s and ceil(n/500) = 19.
        assert_eq!(strata.strata_table.len(), 19);
        assert!(strata.pilot_set.as_ref().unwrap().n_rows() > 500);
        let analysis_rows = strata.analysis_set.n_rows();
        assert_eq!(
            analysis_rows + strata.pilot_set.as_ref().unwrap().n_rows(),
            10_000
        );
        // Stratum column appended last.
        assert_eq!(strata.analysis_set.columns().last().unwrap().name, "stratum");
        assert_eq!(strata.analysis_set.n_cols(), 8);
        // Table sizes agree with direct counting.
        let sizes: usize = strata.strata_table.iter().map(|r| r.size).sum();
        assert_eq!(sizes, analysis_rows);
        let assignments = stratum_assignments(&strata.analysis_set).unwrap();
        for row in &strata.strata_table {
            let count = assignments.iter().filter(|&&s| s == row.stratum).count();
            assert_eq!(count, row.size, "stratum {}", row.stratum);
        }
        for row in &strata.issue_table {
            let count = assignments.iter().filter(|&&s| s == row.stratum).count();
            assert_eq!(count, row.total);
        }
    }

    #[test]
    fn stratum_is_monotone_in_score() {
        let strata = sim_strata(3000, 4, 300);
        let assignments = stratum_assignments(&strata.analysis_set).unwrap();
        let scores = &strata.prognostic_scores;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        for w in order.windows(2) {
            assert!(assignments[w[0]] <= assignments[w[1]]);
            if scores[w[0]] == scores[w[1]] {
                assert_eq!(assignments[w[0]], assignments[w[1]]);
            }
        }
        // Scores come from the stored prognostic model.
        let again = glm::predict(
            strata.prognostic_model.as_ref().unwrap(),
            &strata.analysis_set,
        )
        .unwrap();
        assert_eq!(&again, scores);
    }

    #[test]
    fn user_pilot_sample_is_used_verbatim() {
        let df = make_sample_data(&SimConfig { n: 4000, seed: 10 }).unwrap();
        let split = split_pilot_set(&df, "treat", 0.15, &[], 5).unwrap();
        let strata = auto_stratify(
            &split.analysis_set,
            Prognosis::Formula(Formula::parse("outcome ~ X1 + X2").unwrap()),
            Some(&split.pilot_set),
            &AutoStratifyConfig {
                size: 400,
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap();
        assert_eq!(
            strata.pilot_set.as_ref().unwrap().row_ids(),
            split.pilot_set.row_ids()
        );
        assert_eq!(strata.analysis_set.n_rows(), split.analysis_set.n_rows());
        assert!(strata
            .messages
            .iter()
            .any(|m| m.contains("user-specified")));
    }

    #[test]
    fn rare_level_missing_from_pilot_fails_prediction() {
        // A category that never reaches the pilot set cannot be scored on
        // the analysis set; the fit succeeds but prediction propagates
        // UnseenLevel. Balancing the split on that covariate avoids this.
        let n = 300;
        let race: Vec<u32> = (0..n).map(|i| if i == 7 { 2 } else { (i % 2) as u32 }).collect();
        let outcome: Vec<u8> = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
        let treat: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
        let levels = vec!["white".to_string(), "black".to_string(), "native_american".to_string()];
        let df = DataFrame::new(vec![
            Column::categorical("race", levels.clone(), race.clone()),
            Column::binary("outcome", outcome.clone()),
            Column::binary("treat", treat.clone()),
        ])
        .unwrap();
        // Pilot: controls that are not the rare-category row 7.
        let pilot_rows: Vec<usize> = (0..n).filter(|&i| treat[i] == 0 && i != 7 && i < 60).collect();
        let pilot = df.subset(&pilot_rows);
        let err = auto_stratify(
            &df,
            Prognosis::Formula(Formula::parse("outcome ~ race").unwrap()),
            Some(&pilot),
            &AutoStratifyConfig {
                size: 50,
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap_err();
        match err {
            Error::UnseenLevel { term, value } => {
                assert_eq!((term.as_str(), value.as_str()), ("race", "native_american"));
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn user_pilot_with_treated_rows_fits_on_its_controls() {
        let df = make_sample_data(&SimConfig { n: 1200, seed: 14 }).unwrap();
        // A sloppy user pilot containing treated rows: the fit must use
        // its controls only, and succeed.
        let pilot_rows: Vec<usize> = (0..300).collect();
        let pilot = df.subset(&pilot_rows);
        assert!(pilot.binary_values("treat").unwrap().contains(&1));
        let strata = auto_stratify(
            &df,
            Prognosis::Formula(Formula::parse("outcome ~ X1 + X2").unwrap()),
            Some(&pilot),
            &AutoStratifyConfig {
                size: 200,
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap();
        assert_eq!(strata.pilot_set.as_ref().unwrap().n_rows(), 300);
        assert!(strata.prognostic_model.is_some());
    }

    #[test]
    fn score_vector_mode_skips_fitting() {
        let df = make_sample_data(&SimConfig { n: 600, seed: 2 }).unwrap();
        let scores: Vec<f64> = (0..600).map(|i| (i as f64) / 600.0).collect();
        let strata = auto_stratify(
            &df,
            Prognosis::Scores(scores.clone()),
            None,
            &AutoStratifyConfig {
                size: 100,
                outcome: Some("outcome".to_string()),
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap();
        assert!(strata.prognostic_model.is_none());
        assert!(strata.pilot_set.is_none());
        assert_eq!(strata.prognostic_scores, scores);
        assert_eq!(strata.strata_table.len(), 6);
    }

    #[test]
    fn score_vector_requires_outcome_and_matching_length() {
        let df = make_sample_data(&SimConfig { n: 100, seed: 2 }).unwrap();
        let err = auto_stratify(
            &df,
            Prognosis::Scores(vec![0.5; 100]),
            None,
            &AutoStratifyConfig::new("treat"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SyntaxError(_)));
        let err = auto_stratify(
            &df,
            Prognosis::Scores(vec![0.5; 99]),
            None,
            &AutoStratifyConfig {
                outcome: Some("outcome".to_string()),
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::ScoreLengthMismatch { .. }));
    }

    #[test]
    fn constant_scores_collapse_to_one_stratum() {
        let df = make_sample_data(&SimConfig { n: 400, seed: 3 }).unwrap();
        let strata = auto_stratify(
            &df,
            Prognosis::Scores(vec![0.25; 400]),
            None,
            &AutoStratifyConfig {
                size: 100,
                outcome: Some("outcome".to_string()),
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap();
        assert_eq!(strata.strata_table.len(), 1);
        assert_eq!(strata.strata_table[0].size, 400);
        assert!(strata
            .warnings
            .iter()
            .any(|w| matches!(w, StrataWarning::DegenerateScores { .. })));
        match strata.strata_table[0].bin {
            StratumBin::Quantile { closed, .. } => assert!(closed),
            _ => panic!("expected quantile bin"),
        }
    }

    #[test]
    fn oversized_stratum_request_warns() {
        let df = make_sample_data(&SimConfig { n: 200, seed: 3 }).unwrap();
        let strata = auto_stratify(
            &df,
            Prognosis::Formula(Formula::parse("outcome ~ X1 + X2").unwrap()),
            None,
            &AutoStratifyConfig {
                size: 100_000,
                ..AutoStratifyConfig::new("treat")
            },
        )
        .unwrap();
        assert_eq!(strata.strata_table.len(), 1);
        assert!(strata
            .warnings
            .iter()
            .any(|w| matches!(w, StrataWarning::SizeTooLarge { .. })));
    }

    #[test]
    fn manual_stratify_two_cells() {
        let df = make_sample_data(&SimConfig { n: 500, seed: 6 }).unwrap();
        let manual = manual_stratify(&df, &Formula::parse("treat ~ B1").unwrap()).unwrap();
        assert_eq!(manual.strata_table.len(), 2);
        let total: usize = manual.strata_table.iter().map(|r| r.size).sum();
        assert_eq!(total, 500);
        // Sorted key order: B1=0 is stratum 1.
        assert_eq!(manual.strata_table[0].bin.render(), "B1=0");
        assert_eq!(manual.strata_table[1].bin.render(), "B1=1");
        // All rows kept, no pilot involved.
        assert_eq!(manual.analysis_set.n_rows(), 500);
    }

    #[test]
    fn manual_stratify_race_sex_layout() {
        // Mutually exclusive indicator columns crossed with sex: sorted
        // combination keys put the all-zero cell first.
        let female: Vec<u8> = vec![0, 0, 0, 1, 1, 1, 0, 1];
        let race_a: Vec<u8> = vec![0, 1, 0, 0, 1, 0, 0, 0];
        let race_b: Vec<u8> = vec![0, 0, 1, 0, 0, 1, 0, 0];
        let treat: Vec<u8> = vec![1, 0, 1, 0, 1, 0, 0, 1];
        let df = DataFrame::new(vec![
            Column::binary("treat", treat),
            Column::binary("Female", female),
            Column::binary("RaceA", race_a),
            Column::binary("RaceB", race_b),
        ])
        .unwrap();
        let manual =
            manual_stratify(&df, &Formula::parse("treat ~ Female + RaceA + RaceB").unwrap())
                .unwrap();
        assert_eq!(manual.strata_table.len(), 6);
        assert_eq!(
            manual.strata_table[0].bin.render(),
            "Female=0, RaceA=0, RaceB=0"
        );
        assert_eq!(
            manual.strata_table[1].bin.render(),
            "Female=0, RaceA=0, RaceB=1"
        );
        assert_eq!(
            manual.strata_table[2].bin.render(),
            "Female=0, RaceA=1, RaceB=0"
        );
    }

    #[test]
    fn manual_stratify_sixteen_race_sex_cells() {
        // Seven mutually exclusive race indicators (all-zero = reference
        // group) crossed with sex: 16 observed combinations, every row in
        // exactly one stratum.
        let n = 3200;
        let mut cols: Vec<Vec<u8>> = (0..8).map(|_| Vec::with_capacity(n)).collect();
        let mut treat = Vec::with_capacity(n);
        let mut state = 5u64;
        let mut rnd = move |m: u64| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) % m
        };
        for i in 0..n {
            let race = if i < 16 { (i / 2) as u64 } else { rnd(8) };
            let female = if i < 16 { (i % 2) as u8 } else { rnd(2) as u8 };
            cols[0].push(female);
            for r in 0..7 {
                cols[r + 1].push(u8::from(race == r as u64 + 1));
            }
            treat.push(rnd(4).min(1) as u8);
        }
        let names = [
            "Female", "RaceAsian", "RaceUnknown", "RaceOther", "RaceBlack",
            "RacePacificIslander", "RaceNativeAmerican", "all_latinos",
        ];
        let mut columns = vec![Column::binary("treat", treat)];
        for (name, values) in names.iter().zip(cols) {
            columns.push(Column::binary(*name, values));
        }
        let df = DataFrame::new(columns).unwrap();
        let formula = Formula::parse(
            "treat ~ Female + RaceAsian + RaceUnknown + RaceOther + RaceBlack + RacePacificIslander + RaceNativeAmerican + all_latinos",
        )
        .unwrap();
        let manual = manual_stratify(&df, &formula).unwrap();
        assert_eq!(manual.strata_table.len(), 16);
        assert_eq!(manual.issue_table.len(), 16);
        let total: usize = manual.strata_table.iter().map(|r| r.size).sum();
        assert_eq!(total, n);
        // Reference-group males sort first.
        assert_eq!(
            manual.strata_table[0].bin.render(),
            "Female=0, RaceAsian=0, RaceUnknown=0, RaceOther=0, RaceBlack=0, RacePacificIslander=0, RaceNativeAmerican=0, all_latinos=0"
        );
    }

    #[test]
    fn manual_stratify_rejects_continuous_covariates() {
        let df = make_sample_data(&SimConfig { n: 100, seed: 1 }).unwrap();
        let err = manual_stratify(&df, &Formula::parse("treat ~ X1").unwrap()).unwrap_err();
        assert!(matches!(err, Error::ContinuousStratifyingCovariate(_)));
        let err = manual_stratify(&df, &Formula::parse("X1 ~ B1").unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonBinaryTreatment(_)));
    }

    #[test]
    fn manual_strata_partition_rows() {
        let df = make_sample_data(&SimConfig { n: 900, seed: 13 }).unwrap();
        let manual =
            manual_stratify(&df, &Formula::parse("treat ~ B1 + B2 + C1").unwrap()).unwrap();
        let assignments = stratum_assignments(&manual.analysis_set).unwrap();
        assert_eq!(assignments.len(), 900);
        let distinct: std::collections::BTreeSet<u32> = assignments.iter().copied().collect();
        assert_eq!(distinct.len(), manual.strata_table.len());
        // Every row in exactly one stratum, sizes agree.
        for row in &manual.strata_table {
            let count = assignments.iter().filter(|&&s| s == row.stratum).count();
            assert_eq!(count, row.size);
        }
    }

    #[test]
    fn tables_render_to_csv() {
        let strata = sim_strata(2000, 8, 250);
        let csv_text = strata_table_csv(&strata.strata_table);
        assert!(csv_text.starts_with("stratum,quantile_bin,size\n"));
        assert!(csv_text.contains("[0."));
        let issue_text = issue_table_csv(&strata.issue_table);
        assert!(issue_text.starts_with(
            "Stratum,Treat,Control,Total,Control_Proportion,Potential_Issues\n"
        ));
    }

    #[test]
    fn missing_stratum_column_is_reported() {
        let df = make_sample_data(&SimConfig { n: 50, seed: 1 }).unwrap();
        assert!(matches!(
            issue_table(&df, "treat"),
            Err(Error::NoStratumColumn)
        ));
    }
}
