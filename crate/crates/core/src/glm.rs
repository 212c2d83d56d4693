//! Minimal generalized linear models: ordinary least squares and logistic
//! regression via iteratively reweighted least squares.
//!
//! Both fits always include an intercept. Coefficients are estimated by QR
//! on the (weighted) design matrix rather than by normal equations. A fit
//! records the categorical levels it saw, so prediction on a frame holding
//! an unseen level fails with `UnseenLevel` instead of silently encoding a
//! zero row.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    design_matrix_with_catalog, observed_levels, ColumnKind, DataFrame, Formula, LevelCatalog,
};
use crate::error::{Error, Result};
use crate::linalg::qr_least_squares;
#[cfg(test)]
use crate::linalg::Matrix;

/// IRLS stopping tolerance on the max absolute coefficient update.
pub const DEFAULT_TOL: f64 = 1e-8;
/// IRLS iteration cap.
pub const DEFAULT_MAX_ITER: usize = 25;

/// Linear predictors beyond this magnitude mean fitted probabilities have
/// saturated to working precision; combined with still-diverging
/// coefficients this flags separation.
const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Linear => write!(f, "linear"),
            Family::Logistic => write!(f, "logistic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedGlm {
    pub family: Family,
    pub formula: Formula,
    pub coefficients: Vec<f64>,
    pub coefficient_labels: Vec<String>,
    pub level_catalog: LevelCatalog,
    pub iterations: usize,
    pub converged: bool,
    pub deviance: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn response(df: &DataFrame, formula: &Formula) -> Result<(String, Vec<f64>)> {
    let lhs = formula
        .lhs()
        .ok_or_else(|| Error::SyntaxError("formula has no outcome term".to_string()))?;
    Ok((lhs.to_string(), df.numeric_values(lhs)?))
}

/// Ordinary least squares of `formula.lhs` on the right-hand terms.
pub fn fit_ols(df: &DataFrame, formula: &Formula) -> Result<FittedGlm> {
    let (lhs, y) = response(df, formula)?;
    if df.column(&lhs)?.kind() != ColumnKind::Numeric {
        return Err(Error::TypeMismatch {
            column: lhs,
            row: 0,
            detail: "linear fits need a numeric outcome".to_string(),
        });
    }
    let catalog = observed_levels(df, formula.rhs_terms())?;
    let design = design_matrix_with_catalog(df, formula.rhs_terms(), true, &catalog)?;
    let (n, p) = (design.values.rows(), design.values.cols());
    if n <= p {
        return Err(Error::TooFewRows { rows: n, params: p });
    }
    let beta = qr_least_squares(&design.values, &y, &design.column_labels)?;
    let fitted = design.values.matvec(&beta);
    let deviance: f64 = y
        .iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    Ok(FittedGlm {
        family: Family::Linear,
        formula: formula.clone(),
        coefficients: beta,
        coefficient_labels: design.column_labels,
        level_catalog: catalog,
        iterations: 1,
        converged: true,
        deviance,
    })
}

/// Logistic regression by IRLS from zero-initialized coefficients.
///
/// Stops when the largest coefficient update falls below `tol`. Hitting
/// `max_iter` is not fatal: the result carries `converged = false`.
/// Separation — saturated fitted probabilities with still-growing
/// coefficients — is a hard error.
pub fn fit_logistic(
    df: &DataFrame,
    formula: &Formula,
    tol: f64,
    max_iter: usize,
) -> Result<FittedGlm> {
    let (lhs, y) = response(df, formula)?;
    if df.column(&lhs)?.kind() != ColumnKind::Binary {
        return Err(Error::TypeMismatch {
            column: lhs,
            row: 0,
            detail: "logistic fits need a binary outcome".to_string(),
        });
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::SingleClassOutcome(lhs));
    }

    let catalog = observed_levels(df, formula.rhs_terms())?;
    let design = design_matrix_with_catalog(df, formula.rhs_terms(), true, &catalog)?;
    let x = &design.values;
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::TooFewRows { rows: n, params: p });
    }

    let mut beta = vec![0.0_f64; p];
    let mut dev_prev = f64::INFINITY;
    let mut beta_norm_prev = 0.0_f64;
    let mut converged = false;
    let mut iterations = max_iter;

    for iter in 1..=max_iter {
        let eta = x.matvec(&beta);
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();

        // Working response and weights; weights floored away from zero so
        // saturated observations cannot blow up the weighted solve.
        let mut sqrt_w = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let w = (mu[i] * (1.0 - mu[i])).max(1e-10);
            sqrt_w.push(w.sqrt());
            z.push(eta[i] + (y[i] - mu[i]) / w);
        }
        let xw = x.scale_rows(&sqrt_w);
        let zw: Vec<f64> = z.iter().zip(&sqrt_w).map(|(zi, wi)| zi * wi).collect();
        let beta_new = qr_least_squares(&xw, &zw, &design.column_labels)?;

        let delta = beta_new
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);

        let eta_new = x.matvec(&beta_new);
        let dev = binomial_deviance(&y, &eta_new);
        let beta_norm = beta_new.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        let eta_max = eta_new.iter().fold(0.0_f64, |m, e| m.max(e.abs()));

        beta = beta_new;
        if delta < tol {
            converged = true;
            iterations = iter;
            break;
        }
        if eta_max > SEPARATION_ETA && beta_norm > beta_norm_prev && dev < dev_prev {
            return Err(Error::SeparationDetected(iter));
        }
        dev_prev = dev;
        beta_norm_prev = beta_norm;
    }

    let eta = x.matvec(&beta);
    let deviance = binomial_deviance(&y, &eta);
    Ok(FittedGlm {
        family: Family::Logistic,
        formula: formula.clone(),
        coefficients: beta,
        coefficient_labels: design.column_labels,
        level_catalog: catalog,
        iterations,
        converged,
        deviance,
    })
}

fn binomial_deviance(y: &[f64], eta: &[f64]) -> f64 {
    // -2 log L with log(mu) expressed through log1p(exp(.)) for stability.
    let mut dev = 0.0;
    for (&yi, &e) in y.iter().zip(eta) {
        // log(1 + exp(e)) computed without overflow.
        let log1pe = if e > 0.0 {
            e + (-e).exp().ln_1p()
        } else {
            e.exp().ln_1p()
        };
        dev += -2.0 * (yi * e - log1pe);
    }
    dev
}

/// Predicted response: `X beta` for linear fits, `sigmoid(X beta)` for
/// logistic fits.
pub fn predict(model: &FittedGlm, df: &DataFrame) -> Result<Vec<f64>> {
    let design =
        design_matrix_with_catalog(df, model.formula.rhs_terms(), true, &model.level_catalog)?;
    let eta = design.values.matvec(&model.coefficients);
    Ok(match model.family {
        Family::Linear => eta,
        Family::Logistic => eta.into_iter().map(sigmoid).collect(),
    })
}

/// Linear predictor `X beta` regardless of family.
pub fn linear_predictor(model: &FittedGlm, df: &DataFrame) -> Result<Vec<f64>> {
    let design =
        design_matrix_with_catalog(df, model.formula.rhs_terms(), true, &model.level_catalog)?;
    Ok(design.values.matvec(&model.coefficients))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Response,
    Pearson,
    Deviance,
}

/// Residuals of `model` evaluated on `df` (which must include the outcome).
pub fn residuals(model: &FittedGlm, df: &DataFrame, kind: ResidualKind) -> Result<Vec<f64>> {
    let (_, y) = response(df, &model.formula)?;
    let mu = predict(model, df)?;
    let out = y
        .iter()
        .zip(&mu)
        .map(|(&yi, &mi)| match (model.family, kind) {
            (Family::Linear, _) => yi - mi,
            (Family::Logistic, ResidualKind::Response) => yi - mi,
            (Family::Logistic, ResidualKind::Pearson) => {
                (yi - mi) / (mi * (1.0 - mi)).max(1e-300).sqrt()
            }
            (Family::Logistic, ResidualKind::Deviance) => {
                let unit = if yi == 1.0 {
                    -2.0 * mi.max(1e-300).ln()
                } else {
                    -2.0 * (1.0 - mi).max(1e-300).ln()
                };
                (yi - mi).signum() * unit.sqrt()
            }
        })
        .collect();
    Ok(out)
}

// --- JSON form ------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GlmJson {
    family: Family,
    formula: String,
    coefficients: Vec<CoefJson>,
    level_catalog: Vec<CatalogJson>,
    iterations: usize,
    converged: bool,
    deviance: f64,
}

#[derive(Serialize, Deserialize)]
struct CoefJson {
    label: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct CatalogJson {
    term: String,
    levels: Vec<String>,
}

impl FittedGlm {
    pub fn to_json(&self) -> Result<String> {
        let j = GlmJson {
            family: self.family,
            formula: self.formula.to_text(),
            coefficients: self
                .coefficient_labels
                .iter()
                .zip(&self.coefficients)
                .map(|(l, &v)| CoefJson {
                    label: l.clone(),
                    value: v,
                })
                .collect(),
            level_catalog: self
                .level_catalog
                .entries()
                .iter()
                .map(|(t, ls)| CatalogJson {
                    term: t.clone(),
                    levels: ls.clone(),
                })
                .collect(),
            iterations: self.iterations,
            converged: self.converged,
            deviance: self.deviance,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<FittedGlm> {
        let j: GlmJson = serde_json::from_str(text)?;
        let formula = Formula::parse(&j.formula)?;
        let (labels, coefficients): (Vec<String>, Vec<f64>) = j
            .coefficients
            .into_iter()
            .map(|c| (c.label, c.value))
            .unzip();
        Ok(FittedGlm {
            family: j.family,
            formula,
            coefficients,
            coefficient_labels: labels,
            level_catalog: LevelCatalog::new(
                j.level_catalog
                    .into_iter()
                    .map(|c| (c.term, c.levels))
                    .collect(),
            ),
            iterations: j.iterations,
            converged: j.converged,
            deviance: j.deviance,
        })
    }
}

#[cfg(test)]
fn design_for(model: &FittedGlm, df: &DataFrame) -> Result<Matrix> {
    Ok(
        design_matrix_with_catalog(df, model.formula.rhs_terms(), true, &model.level_catalog)?
            .values,
    )
}
