//! Pilot/analysis partitioning by control subsampling.
//!
//! Each control row enters the pilot set independently with probability
//! `pilot_fraction`; treated rows always stay in the analysis set. When
//! grouping covariates are given, every cross-classification cell draws
//! from its own ChaCha8 stream keyed by `(seed, cell key)`, so the split
//! inside one cell is unaffected by rows elsewhere. Selection is Bernoulli
//! per row, not exact-count: pilot sizes vary binomially around
//! `fraction x #controls`.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dataset::{ColumnData, ColumnKind, DataFrame};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PilotSplit {
    pub pilot_set: DataFrame,
    pub analysis_set: DataFrame,
    pub fraction: f64,
    pub balance_covariates: Vec<String>,
    pub seed: u64,
    /// Log lines describing the split, mirroring the interactive workflow.
    pub messages: Vec<String>,
}

/// Stable 64-bit FNV-1a, used to key per-cell RNG streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn cell_rng(seed: u64, cell_key: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(cell_key.as_bytes()).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Partition `df` into a control-only pilot set and the remaining analysis set.
pub fn split_pilot_set(
    df: &DataFrame,
    treat: &str,
    pilot_fraction: f64,
    group_by_covariates: &[String],
    seed: u64,
) -> Result<PilotSplit> {
    if !(pilot_fraction > 0.0 && pilot_fraction < 1.0) {
        return Err(Error::BadFraction(pilot_fraction));
    }
    let treat_col = df.binary_values(treat)?.to_vec();

    // Grouping covariates must be discrete.
    for cov in group_by_covariates {
        let col = df.column(cov)?;
        if col.kind() == ColumnKind::Numeric {
            return Err(Error::ContinuousGroupingCovariate(cov.clone()));
        }
    }

    // Cell key per row: the rendered values of the grouping covariates.
    let cell_keys: Vec<String> = if group_by_covariates.is_empty() {
        vec![String::new(); df.n_rows()]
    } else {
        let cols: Vec<&ColumnData> = group_by_covariates
            .iter()
            .map(|c| Ok(&df.column(c)?.data))
            .collect::<Result<_>>()?;
        (0..df.n_rows())
            .map(|i| {
                let parts: Vec<String> = cols
                    .iter()
                    .map(|d| match d {
                        ColumnData::Binary(v) => v[i].to_string(),
                        ColumnData::Categorical { levels, codes } => {
                            levels[codes[i] as usize].clone()
                        }
                        ColumnData::Numeric(_) => unreachable!("checked above"),
                    })
                    .collect();
                parts.join("\x1f")
            })
            .collect()
    };

    let mut rngs: HashMap<&str, ChaCha8Rng> = HashMap::new();
    let mut pilot_rows = Vec::new();
    let mut analysis_rows = Vec::new();
    for i in 0..df.n_rows() {
        if treat_col[i] == 1 {
            analysis_rows.push(i);
            continue;
        }
        let rng = rngs
            .entry(cell_keys[i].as_str())
            .or_insert_with(|| cell_rng(seed, &cell_keys[i]));
        if uniform(rng) < pilot_fraction {
            pilot_rows.push(i);
        } else {
            analysis_rows.push(i);
        }
    }

    let mut messages = vec![format!(
        "Constructing a pilot set by subsampling {}",
        crate::numfmt::fmt_percent(pilot_fraction)
    )];
    if !group_by_covariates.is_empty() {
        messages.push(format!(
            "Subsampling while balancing on:\n{}",
            group_by_covariates.join(" ")
        ));
    }

    Ok(PilotSplit {
        pilot_set: df.subset(&pilot_rows),
        analysis_set: df.subset(&analysis_rows),
        fraction: pilot_fraction,
        balance_covariates: group_by_covariates.to_vec(),
        seed,
        messages,
    })
}
