//! Within-stratum optimal 1:k propensity matching.
//!
//! The propensity model is fitted over the whole analysis set (with stratum
//! fixed effects by default), then each stratum is matched on the logit
//! scale by exact min-cost flow. Strata are independent subproblems: a
//! stratum's matching never depends on rows outside it, so they may be
//! solved in parallel and merged by stratum index.

mod flow;

use std::collections::BTreeMap;

use crate::dataset::{Column, ColumnData, DataFrame, Formula};
use crate::error::{Error, MatchWarning, Result};
use crate::glm::{self, FittedGlm};
use crate::stratifier::{stratum_assignments, Stratified};

use flow::MinCostFlow;

/// Propensity input: a formula fitted on the analysis set, a previously
/// fitted model, or a ready-made score vector.
#[derive(Debug, Clone)]
pub enum PropensityInput {
    Formula(Formula),
    Model(FittedGlm),
    Scores(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Per analysis row: the matched-set label (shared by one treated unit
    /// and its controls) or `None` when unmatched.
    pub assignment: Vec<Option<String>>,
    /// Requested ratio.
    pub k: usize,
    /// Count of sets by shape `(treated, controls)`; unmatched controls
    /// appear as `(0, 1)` and unmatched treated as `(1, 0)`.
    pub set_structure: BTreeMap<(u32, u32), usize>,
    /// Equivalent number of matched pairs.
    pub effective_pairs: f64,
    pub propensity_scores: Vec<f64>,
    pub warnings: Vec<MatchWarning>,
    pub messages: Vec<String>,
}

/// Scores clamped away from {0, 1} before the logit, so saturated
/// propensities keep a finite distance.
pub const SCORE_CLAMP: f64 = 1e-12;

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Resolve a propensity input to one score per analysis row.
///
/// Formula mode fits a logistic model on the analysis set; with
/// `stratum_effects` the stratum label enters as a dummy-coded fixed
/// effect, mirroring a `+ strata(stratum)` term.
pub fn fit_propensity(
    strata: &dyn Stratified,
    input: &PropensityInput,
    stratum_effects: bool,
) -> Result<Vec<f64>> {
    let analysis = strata.analysis_set();
    match input {
        PropensityInput::Scores(scores) => {
            if scores.len() != analysis.n_rows() {
                return Err(Error::ScoreLengthMismatch {
                    expected: analysis.n_rows(),
                    found: scores.len(),
                });
            }
            Ok(scores.clone())
        }
        PropensityInput::Model(model) => glm::predict(model, analysis),
        PropensityInput::Formula(formula) => {
            let model = fit_propensity_model(strata, formula, stratum_effects)?;
            glm::predict(&model.0, &model.1)
        }
    }
}

/// Fit the propensity model itself (and the frame it was encoded against).
fn fit_propensity_model(
    strata: &dyn Stratified,
    formula: &Formula,
    stratum_effects: bool,
) -> Result<(FittedGlm, DataFrame)> {
    let analysis = strata.analysis_set();
    let treat = strata.treat_column();
    match formula.lhs() {
        Some(lhs) if lhs == treat => {}
        _ => {
            return Err(Error::SyntaxError(format!(
                "propensity formula must model the treatment column '{treat}'"
            )))
        }
    }
    if !stratum_effects {
        let model = glm::fit_logistic(analysis, formula, glm::DEFAULT_TOL, glm::DEFAULT_MAX_ITER)?;
        return Ok((model, analysis.clone()));
    }

    // Swap the integer stratum column for a categorical copy so it
    // dummy-codes; levels ascend numerically.
    let assignments = stratum_assignments(analysis)?;
    let mut distinct: Vec<u32> = {
        let set: std::collections::BTreeSet<u32> = assignments.iter().copied().collect();
        set.into_iter().collect()
    };
    distinct.sort_unstable();
    let levels: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
    let codes: Vec<u32> = assignments
        .iter()
        .map(|s| distinct.binary_search(s).unwrap() as u32)
        .collect();

    let columns: Vec<Column> = analysis
        .columns()
        .iter()
        .map(|c| {
            if c.name == "stratum" {
                Column {
                    name: c.name.clone(),
                    data: ColumnData::Categorical {
                        levels: levels.clone(),
                        codes: codes.clone(),
                    },
                }
            } else {
                c.clone()
            }
        })
        .collect();
    let frame = DataFrame::with_row_ids(columns, analysis.row_ids().to_vec())?;
    let augmented = formula.with_term("stratum")?;
    let model = glm::fit_logistic(&frame, &augmented, glm::DEFAULT_TOL, glm::DEFAULT_MAX_ITER)?;
    Ok((model, frame))
}

/// Exact optimal assignment of `k` distinct controls to every treated unit,
/// minimizing the total |logit - logit| distance. Returns, per treated
/// unit, the sorted indices of its matched controls, plus the total cost.
pub fn optimal_k_match(
    treated_scores: &[f64],
    control_scores: &[f64],
    k: usize,
) -> Result<(Vec<Vec<usize>>, f64)> {
    assert!(k >= 1, "k must be at least 1");
    if control_scores.len() < k * treated_scores.len() {
        return Err(Error::Infeasible {
            treated: treated_scores.len(),
            controls: control_scores.len(),
            k,
        });
    }
    let (pairs, cost, flow) = solve_assignment(treated_scores, control_scores, k);
    debug_assert_eq!(flow as usize, k * treated_scores.len());
    Ok((pairs, cost))
}

/// Min-cost assignment with capacity `per_treated` on each treated unit,
/// pushing as much flow as the bipartite graph allows.
fn solve_assignment(
    treated: &[f64],
    controls: &[f64],
    per_treated: usize,
) -> (Vec<Vec<usize>>, f64, i64) {
    let nt = treated.len();
    let nc = controls.len();
    if nt == 0 || nc == 0 {
        return (vec![Vec::new(); nt], 0.0, 0);
    }
    let source = 0;
    let sink = nt + nc + 1;
    let mut g = MinCostFlow::new(nt + nc + 2);
    for (i, _) in treated.iter().enumerate() {
        g.add_edge(source, 1 + i, per_treated as i64, 0.0);
    }
    let mut pair_edges = vec![vec![0usize; nc]; nt];
    let t_logits: Vec<f64> = treated.iter().map(|&p| logit(p)).collect();
    let c_logits: Vec<f64> = controls.iter().map(|&p| logit(p)).collect();
    for i in 0..nt {
        for j in 0..nc {
            pair_edges[i][j] = g.add_edge(1 + i, 1 + nt + j, 1, (t_logits[i] - c_logits[j]).abs());
        }
    }
    for j in 0..nc {
        g.add_edge(1 + nt + j, sink, 1, 0.0);
    }
    let (flow, cost) = g.solve(source, sink);
    let assignments: Vec<Vec<usize>> = (0..nt)
        .map(|i| {
            (0..nc)
                .filter(|&j| g.edge_flow(pair_edges[i][j]) > 0)
                .collect()
        })
        .collect();
    (assignments, cost, flow)
}

/// Effective sample size of a matched-set structure: each `1:c` set counts
/// as `2/(1/t + 1/c)` equivalent pairs; unmatched shapes contribute nothing.
pub fn effective_sample_size(structure: &BTreeMap<(u32, u32), usize>) -> f64 {
    structure
        .iter()
        .filter(|(&(t, c), _)| t >= 1 && c >= 1)
        .map(|(&(t, c), &count)| count as f64 * 2.0 / (1.0 / t as f64 + 1.0 / c as f64))
        .sum()
}

/// 1:k propensity matching within every stratum, with per-stratum ratio
/// degradation when controls run short.
pub fn strata_match(
    strata: &dyn Stratified,
    propensity: &PropensityInput,
    k: usize,
) -> Result<MatchResult> {
    strata_match_with(strata, propensity, k, true, 1)
}

/// As [`strata_match`], controlling stratum fixed effects in the propensity
/// model and the number of worker threads for the per-stratum solves.
pub fn strata_match_with(
    strata: &dyn Stratified,
    propensity: &PropensityInput,
    k: usize,
    stratum_effects: bool,
    threads: usize,
) -> Result<MatchResult> {
    if k == 0 {
        return Err(Error::SyntaxError("match ratio k must be at least 1".to_string()));
    }
    let analysis = strata.analysis_set();
    let assignments = stratum_assignments(analysis)?;
    let treat = analysis.binary_values(strata.treat_column())?;

    let mut messages = Vec::new();
    if let PropensityInput::Formula(f) = propensity {
        let suffix = if stratum_effects { " + strata(stratum)" } else { "" };
        messages.push(format!("Fitting propensity model: {f}{suffix}"));
    }
    let scores = fit_propensity(strata, propensity, stratum_effects)?;

    // Rows per stratum, in frame order.
    let mut by_stratum: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (pos, (&s, &t)) in assignments.iter().zip(treat).enumerate() {
        let entry = by_stratum.entry(s).or_default();
        if t == 1 {
            entry.0.push(pos);
        } else {
            entry.1.push(pos);
        }
    }

    struct StratumSolution {
        stratum: u32,
        treated_pos: Vec<usize>,
        matched_controls: Vec<Vec<usize>>, // control positions per treated
        warning: Option<MatchWarning>,
    }

    let solve_stratum = |(&stratum, (treated_pos, control_pos)): (&u32, &(Vec<usize>, Vec<usize>))| {
        let t_n = treated_pos.len();
        let c_n = control_pos.len();
        if t_n == 0 {
            return StratumSolution {
                stratum,
                treated_pos: Vec::new(),
                matched_controls: Vec::new(),
                warning: None,
            };
        }
        let t_scores: Vec<f64> = treated_pos.iter().map(|&p| scores[p]).collect();
        let c_scores: Vec<f64> = control_pos.iter().map(|&p| scores[p]).collect();
        let k_s = if c_n == 0 { 0 } else { k.min(c_n / t_n) };
        let (raw, warning) = if k_s >= 1 {
            let warning = (k_s < k).then_some(MatchWarning::DegradedRatio {
                stratum,
                requested: k,
                used: k_s,
            });
            (solve_assignment(&t_scores, &c_scores, k_s).0, warning)
        } else {
            let warning = Some(MatchWarning::InsufficientControls {
                stratum,
                treated: t_n,
                controls: c_n,
            });
            (solve_assignment(&t_scores, &c_scores, 1).0, warning)
        };
        let matched_controls: Vec<Vec<usize>> = raw
            .into_iter()
            .map(|cs| cs.into_iter().map(|j| control_pos[j]).collect())
            .collect();
        StratumSolution {
            stratum,
            treated_pos: treated_pos.clone(),
            matched_controls,
            warning,
        }
    };

    type StratumRows = (Vec<usize>, Vec<usize>);
    let entries: Vec<(&u32, &StratumRows)> = by_stratum.iter().collect();
    let mut solutions: Vec<StratumSolution> = if threads <= 1 || entries.len() <= 1 {
        entries.into_iter().map(solve_stratum).collect()
    } else {
        let workers = threads.min(entries.len());
        let chunk = entries.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = entries
                .chunks(chunk)
                .map(|slice| scope.spawn(|| slice.iter().map(|e| solve_stratum(*e)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("stratum worker panicked"))
                .collect()
        })
    };
    solutions.sort_by_key(|s| s.stratum);

    let mut assignment: Vec<Option<String>> = vec![None; analysis.n_rows()];
    let mut set_structure: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    for sol in &solutions {
        let mut set_idx = 0u32;
        for (t_pos, controls) in sol.treated_pos.iter().zip(&sol.matched_controls) {
            if controls.is_empty() {
                *set_structure.entry((1, 0)).or_insert(0) += 1;
                continue;
            }
            set_idx += 1;
            let label = format!("{}.{}", sol.stratum, set_idx);
            assignment[*t_pos] = Some(label.clone());
            for &c_pos in controls {
                assignment[c_pos] = Some(label.clone());
            }
            *set_structure.entry((1, controls.len() as u32)).or_insert(0) += 1;
        }
        if let Some(w) = &sol.warning {
            warnings.push(w.clone());
        }
    }
    let unmatched_controls = treat
        .iter()
        .zip(&assignment)
        .filter(|(&t, a)| t == 0 && a.is_none())
        .count();
    if unmatched_controls > 0 {
        set_structure.insert((0, 1), unmatched_controls);
    }

    let effective_pairs = effective_sample_size(&set_structure);
    Ok(MatchResult {
        assignment,
        k,
        set_structure,
        effective_pairs,
        propensity_scores: scores,
        warnings,
        messages,
    })
}

/// Match output table: one row per analysis row with its stratum, arm,
/// propensity score, and set label (empty when unmatched).
pub fn match_csv(result: &MatchResult, strata: &dyn Stratified) -> Result<String> {
    let analysis = strata.analysis_set();
    let assignments = stratum_assignments(analysis)?;
    let treat = analysis.binary_values(strata.treat_column())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_id", "stratum", "treat", "propensity_score", "set_label"])
        .unwrap();
    for (pos, &row_id) in analysis.row_ids().iter().enumerate() {
        w.write_record([
            row_id.to_string(),
            assignments[pos].to_string(),
            treat[pos].to_string(),
            crate::numfmt::fmt_float(result.propensity_scores[pos]),
            result.assignment[pos].clone().unwrap_or_default(),
        ])
        .unwrap();
    }
    Ok(String::from_utf8(w.into_inner().unwrap()).unwrap())
}

impl MatchResult {
    /// Matched-set summary in the interactive print style.
    pub fn summary_text(&self) -> String {
        let mut shapes: Vec<((u32, u32), usize)> = Vec::new();
        let mut matched: Vec<((u32, u32), usize)> = self
            .set_structure
            .iter()
            .filter(|(&(t, c), _)| t >= 1 && c >= 1)
            .map(|(&s, &n)| (s, n))
            .collect();
        matched.sort_by_key(|&((_, c), _)| c);
        shapes.extend(matched);
        if let Some(&n) = self.set_structure.get(&(1, 0)) {
            shapes.push(((1, 0), n));
        }
        if let Some(&n) = self.set_structure.get(&(0, 1)) {
            shapes.push(((0, 1), n));
        }

        let mut header = String::new();
        let mut counts = String::new();
        for ((t, c), n) in &shapes {
            let label = format!("{t}:{c}");
            let num = n.to_string();
            let w = label.len().max(num.len());
            header.push_str(&format!(" {label:>w$} "));
            counts.push_str(&format!(" {num:>w$} "));
        }
        let ess = crate::numfmt::fmt_sig5(self.effective_pairs);
        format!(
            "Structure of matched sets:\n{header}\n{counts}\nEffective Sample Size:  {ess} \n(equivalent number of matched pairs).\n"
        )
    }

    /// Deterministic JSON summary: set structure, effective pairs, warnings.
    pub fn summary_json(&self) -> String {
        let structure: BTreeMap<String, usize> = self
            .set_structure
            .iter()
            .map(|(&(t, c), &n)| (format!("{t}:{c}"), n))
            .collect();
        let warnings: Vec<String> = self.warnings.iter().map(|w| w.to_string()).collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "set_structure": structure,
            "effective_pairs": self.effective_pairs,
            "warnings": warnings,
        }))
        .expect("summary serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Formula;
    use crate::simgen::{make_sample_data, SimConfig};
    use crate::stratifier::{auto_stratify, AutoStratifyConfig, Prognosis};

    fn structure(pairs: &[((u32, u32), usize)]) -> BTreeMap<(u32, u32), usize> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn ess_of_pairs_is_the_pair_count() {
        assert_eq!(effective_sample_size(&structure(&[((1, 1), 2339)])), 2339.0);
    }

    #[test]
    fn ess_of_one_to_two_sets() {
        let ess = effective_sample_size(&structure(&[((1, 2), 2226)]));
        assert!((ess - 2968.0).abs() < 1e-9, "{ess}");
    }

    #[test]
    fn ess_ignores_unmatched_and_sums_shapes() {
        let ess = effective_sample_size(&structure(&[
            ((1, 1), 10),
            ((1, 3), 4),
            ((0, 1), 99),
            ((1, 0), 7),
        ]));
        assert!((ess - (10.0 + 4.0 * 1.5)).abs() < 1e-12);
        assert_eq!(effective_sample_size(&structure(&[])), 0.0);
    }

    #[test]
    fn ess_is_monotone_in_added_sets() {
        let mut state = 7u64;
        let mut rnd = move |m: u64| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) % m
        };
        let mut s: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        let mut prev = 0.0;
        for _ in 0..200 {
            let shape = (1u32, 1 + rnd(6) as u32);
            *s.entry(shape).or_insert(0) += 1;
            let ess = effective_sample_size(&s);
            assert!(ess > prev, "adding a set must increase ESS");
            prev = ess;
        }
    }

    #[test]
    fn forced_single_pair() {
        let (pairs, cost) = optimal_k_match(&[0.5], &[0.5], 1).unwrap();
        assert_eq!(pairs, vec![vec![0]]);
        assert!(cost.abs() < 1e-12);
    }

    #[test]
    fn obvious_pairs_by_inspection() {
        let (pairs, _) = optimal_k_match(&[0.2, 0.8], &[0.21, 0.79, 0.5], 1).unwrap();
        assert_eq!(pairs, vec![vec![0], vec![1]]);
    }

    #[test]
    fn infeasible_ratio_errors() {
        let err = optimal_k_match(&[0.4, 0.6], &[0.5, 0.5, 0.5], 2).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    /// Exhaustive minimum over all ways to hand k distinct controls to each
    /// treated unit, via bitmask dynamic programming over control subsets.
    fn brute_force_cost(treated: &[f64], controls: &[f64], k: usize) -> f64 {
        let nt = treated.len();
        let nc = controls.len();
        let dist: Vec<Vec<f64>> = treated
            .iter()
            .map(|&t| controls.iter().map(|&c| (logit(t) - logit(c)).abs()).collect())
            .collect();
        let full = 1usize << nc;
        let mut dp = vec![f64::INFINITY; full];
        dp[0] = 0.0;
        for i in 0..nt {
            let mut next = vec![f64::INFINITY; full];
            for (mask, &base) in dp.iter().enumerate() {
                if !base.is_finite() || mask.count_ones() as usize != i * k {
                    continue;
                }
                // Choose k controls outside `mask` for treated i.
                let free: Vec<usize> = (0..nc).filter(|j| mask & (1 << j) == 0).collect();
                let mut pick = vec![0usize; k];
                choose(&free, 0, &mut pick, 0, &mut |chosen| {
                    let add: f64 = chosen.iter().map(|&j| dist[i][j]).sum();
                    let new_mask = chosen.iter().fold(mask, |m, &j| m | (1 << j));
                    if base + add < next[new_mask] {
                        next[new_mask] = base + add;
                    }
                });
            }
            dp = next;
        }
        dp.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn choose(
        pool: &[usize],
        start: usize,
        pick: &mut Vec<usize>,
        depth: usize,
        f: &mut impl FnMut(&[usize]),
    ) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for idx in start..pool.len() {
            pick[depth] = pool[idx];
            choose(pool, idx + 1, pick, depth + 1, f);
        }
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        let mut state = 42u64;
        let mut rnd = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / (1u64 << 53) as f64
        };
        for trial in 0..40 {
            let k = 1 + trial % 2;
            let nt = 1 + trial % 4;
            let nc = (k * nt).max(1) + trial % 3;
            let treated: Vec<f64> = (0..nt).map(|_| 0.05 + 0.9 * rnd()).collect();
            let controls: Vec<f64> = (0..nc).map(|_| 0.05 + 0.9 * rnd()).collect();
            let (pairs, cost) = optimal_k_match(&treated, &controls, k).unwrap();
            let oracle = brute_force_cost(&treated, &controls, k);
            assert!(
                (cost - oracle).abs() < 1e-9,
                "trial {trial}: flow {cost} vs brute force {oracle}"
            );
            for p in &pairs {
                assert_eq!(p.len(), k);
            }
            let mut used: Vec<usize> = pairs.iter().flatten().copied().collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used.len(), k * nt, "controls reused");
        }
    }

    fn sim_strata(n: usize, seed: u64, size: usize) -> crate::stratifier::AutoStrata {
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
    fn vector_mode_is_identity() {
        let strata = sim_strata(800, 1, 200);
        let n = strata.analysis_set.n_rows();
        let scores: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0) / (n as f64 + 2.0)).collect();
        let got = fit_propensity(&strata, &PropensityInput::Scores(scores.clone()), true).unwrap();
        assert_eq!(got, scores);
        let err =
            fit_propensity(&strata, &PropensityInput::Scores(vec![0.5; 3]), true).unwrap_err();
        assert!(matches!(err, Error::ScoreLengthMismatch { .. }));
    }

    #[test]
    fn stratum_effects_add_dummy_columns() {
        let strata = sim_strata(1500, 2, 150);
        let n_strata = strata.strata_table.len();
        let formula = Formula::parse("treat ~ X1 + X2 + B1 + B2").unwrap();
        let (plain, _) = super::fit_propensity_model(&strata, &formula, false).unwrap();
        let (with_fx, _) = super::fit_propensity_model(&strata, &formula, true).unwrap();
        assert_eq!(
            with_fx.coefficients.len(),
            plain.coefficients.len() + (n_strata - 1)
        );
    }

    #[test]
    fn formula_mode_equals_handmade_fit() {
        let strata = sim_strata(1200, 3, 200);
        let formula = Formula::parse("treat ~ X1 + X2 + B1 + B2").unwrap();
        let via_input =
            fit_propensity(&strata, &PropensityInput::Formula(formula.clone()), false).unwrap();
        let handmade = {
            let model = glm::fit_logistic(
                &strata.analysis_set,
                &formula,
                glm::DEFAULT_TOL,
                glm::DEFAULT_MAX_ITER,
            )
            .unwrap();
            glm::predict(&model, &strata.analysis_set).unwrap()
        };
        assert_eq!(via_input, handmade);
    }

    #[test]
    fn one_to_one_matching_covers_every_treated_unit() {
        let strata = sim_strata(3000, 5, 300);
        let formula = Formula::parse("treat ~ X1 + X2 + B1 + B2").unwrap();
        let result = strata_match(&strata, &PropensityInput::Formula(formula), 1).unwrap();
        let treat = strata.analysis_set.binary_values("treat").unwrap();
        let n_treated = treat.iter().filter(|&&t| t == 1).count();
        let n_controls = treat.len() - n_treated;
        assert_eq!(result.set_structure[&(1, 1)], n_treated);
        assert_eq!(result.set_structure[&(0, 1)], n_controls - n_treated);
        assert!((result.effective_pairs - n_treated as f64).abs() < 1e-12);
        assert!(result.warnings.is_empty());

        // Matched rows share their stratum with their set.
        let assignments = stratum_assignments(&strata.analysis_set).unwrap();
        let mut set_stratum: std::collections::HashMap<&str, u32> =
            std::collections::HashMap::new();
        for (pos, label) in result.assignment.iter().enumerate() {
            if let Some(l) = label {
                let s = assignments[pos];
                let prev = set_stratum.insert(l.as_str(), s);
                if let Some(p) = prev {
                    assert_eq!(p, s, "set {l} spans strata");
                }
            }
        }

        // Each set label: exactly one treated member, at most k controls.
        let mut members: std::collections::HashMap<&str, (usize, usize)> =
            std::collections::HashMap::new();
        for (pos, label) in result.assignment.iter().enumerate() {
            if let Some(l) = label {
                let e = members.entry(l.as_str()).or_insert((0, 0));
                if treat[pos] == 1 {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        for (label, &(t, c)) in &members {
            assert_eq!(t, 1, "set {label}");
            assert_eq!(c, 1, "set {label}");
        }
    }

    #[test]
    fn degraded_ratio_warns_and_matches_at_lower_k() {
        // 3 treated, 4 controls in one stratum: k=2 degrades to 1:1.
        let df = DataFrame::new(vec![
            Column::binary("treat", vec![1, 1, 1, 0, 0, 0, 0]),
            Column::numeric("x", vec![0.3, 0.5, 0.7, 0.31, 0.49, 0.72, 0.9]),
            Column::numeric("stratum", vec![1.0; 7]),
        ])
        .unwrap();
        let strata = FakeStrata {
            df: df.clone(),
            treat: "treat".to_string(),
        };
        let scores = df.numeric_values("x").unwrap();
        let result =
            strata_match_with(&strata, &PropensityInput::Scores(scores), 2, true, 1).unwrap();
        assert_eq!(result.set_structure[&(1, 1)], 3);
        assert!(matches!(
            result.warnings.as_slice(),
            [MatchWarning::DegradedRatio { stratum: 1, requested: 2, used: 1 }]
        ));
    }

    #[test]
    fn control_starved_stratum_partially_matches() {
        // 3 treated, 1 control: one 1:1 set, two unmatched treated.
        let df = DataFrame::new(vec![
            Column::binary("treat", vec![1, 1, 1, 0]),
            Column::numeric("x", vec![0.3, 0.5, 0.7, 0.52]),
            Column::numeric("stratum", vec![1.0; 4]),
        ])
        .unwrap();
        let strata = FakeStrata {
            df: df.clone(),
            treat: "treat".to_string(),
        };
        let scores = df.numeric_values("x").unwrap();
        let result =
            strata_match_with(&strata, &PropensityInput::Scores(scores), 1, true, 1).unwrap();
        assert_eq!(result.set_structure[&(1, 1)], 1);
        assert_eq!(result.set_structure[&(1, 0)], 2);
        assert!(!result.set_structure.contains_key(&(0, 1)));
        // The optimal single pair is treated 0.5 with control 0.52.
        assert!(result.assignment[1].is_some());
        assert!(result.assignment[3].is_some());
        assert!(matches!(
            result.warnings.as_slice(),
            [MatchWarning::InsufficientControls { stratum: 1, treated: 3, controls: 1 }]
        ));
    }

    #[test]
    fn zero_treated_stratum_contributes_nothing() {
        let df = DataFrame::new(vec![
            Column::binary("treat", vec![0, 0, 1, 0]),
            Column::numeric("x", vec![0.4, 0.6, 0.5, 0.55]),
            Column::numeric("stratum", vec![1.0, 1.0, 2.0, 2.0]),
        ])
        .unwrap();
        let strata = FakeStrata {
            df: df.clone(),
            treat: "treat".to_string(),
        };
        let scores = df.numeric_values("x").unwrap();
        let result = strata_match_with(&strata, &PropensityInput::Scores(scores), 1, true, 1)
            .unwrap();
        assert!(result.warnings.is_empty());
        assert_eq!(result.set_structure[&(1, 1)], 1);
        assert_eq!(result.set_structure[&(0, 1)], 2);
    }

    #[test]
    fn parallel_solves_match_serial() {
        let strata = sim_strata(2500, 7, 250);
        let formula = Formula::parse("treat ~ X1 + X2 + B1 + B2").unwrap();
        let serial =
            strata_match_with(&strata, &PropensityInput::Formula(formula.clone()), 2, true, 1)
                .unwrap();
        let parallel =
            strata_match_with(&strata, &PropensityInput::Formula(formula), 2, true, 4).unwrap();
        assert_eq!(serial.assignment, parallel.assignment);
        assert_eq!(serial.set_structure, parallel.set_structure);
        assert_eq!(serial.warnings, parallel.warnings);

        // With roughly 3 controls per treated unit, k=2 yields 1:2 sets in
        // controls-rich strata and 1:1 only where the ratio degraded.
        for &(t, c) in serial.set_structure.keys() {
            assert!(
                (t == 1 && (1..=2).contains(&c)) || (t, c) == (0, 1),
                "unexpected shape {t}:{c}"
            );
        }
        assert!(serial.set_structure.contains_key(&(1, 2)));
        let degraded: std::collections::BTreeSet<u32> = serial
            .warnings
            .iter()
            .filter(|w| matches!(w, MatchWarning::DegradedRatio { .. }))
            .map(|w| w.stratum())
            .collect();
        let ones = serial.set_structure.get(&(1, 1)).copied().unwrap_or(0);
        assert!(
            ones == 0 || !degraded.is_empty(),
            "1:1 sets under k=2 must come with a DegradedRatio warning"
        );
    }

    #[test]
    fn repeat_runs_are_identical() {
        let strata = sim_strata(1000, 9, 200);
        let formula = Formula::parse("treat ~ X1 + X2").unwrap();
        let a = strata_match(&strata, &PropensityInput::Formula(formula.clone()), 1).unwrap();
        let b = strata_match(&strata, &PropensityInput::Formula(formula), 1).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.propensity_scores, b.propensity_scores);
    }

    #[test]
    fn missing_stratum_column_is_reported() {
        let df = make_sample_data(&SimConfig { n: 60, seed: 1 }).unwrap();
        let strata = FakeStrata {
            df,
            treat: "treat".to_string(),
        };
        let err = strata_match(&strata, &PropensityInput::Scores(vec![0.5; 60]), 1).unwrap_err();
        assert!(matches!(err, Error::NoStratumColumn));
    }

    #[test]
    fn summary_text_mirrors_print_style() {
        let result = MatchResult {
            assignment: vec![],
            k: 1,
            set_structure: structure(&[((1, 1), 2339), ((0, 1), 4556)]),
            effective_pairs: 2339.0,
            propensity_scores: vec![],
            warnings: vec![],
            messages: vec![],
        };
        let text = result.summary_text();
        assert!(text.contains("Structure of matched sets:"));
        assert!(text.contains("1:1"));
        assert!(text.contains("2339"));
        assert!(text.contains("0:1"));
        assert!(text.contains("4556"));
        assert!(text.contains("Effective Sample Size:  2339"));
    }

    struct FakeStrata {
        df: DataFrame,
        treat: String,
    }

    impl Stratified for FakeStrata {
        fn analysis_set(&self) -> &DataFrame {
            &self.df
        }
        fn strata_table(&self) -> &[crate::stratifier::StrataTableRow] {
            &[]
        }
        fn issue_table(&self) -> &[crate::stratifier::IssueTableRow] {
            &[]
        }
        fn prognostic_scores(&self) -> Option<&[f64]> {
            None
        }
        fn treat_column(&self) -> &str {
            &self.treat
        }
    }
}
