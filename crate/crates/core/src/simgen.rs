//! Deterministic synthetic data for demos and end-to-end tests.
//!
//! The generating process is fixed and documented here so runs are
//! reproducible across platforms:
//!
//! - `X1`, `X2` ~ iid standard normal
//! - `B1`, `B2` ~ Bernoulli(0.5)
//! - `C1` uniform over the levels `a`, `b`, `c`
//! - `treat` ~ Bernoulli(sigmoid(-1.55 + 0.4 X1 + 0.3 X2 + 0.2 B1))
//! - `outcome` ~ Bernoulli(sigmoid(-1.1 X1 + 0.1 X2 + 0.3 B2 + 0.25 treat))
//!
//! Draws come from a ChaCha8 stream keyed by the seed. Per row, in order:
//! one Box-Muller pair for (X1, X2) (two uniforms), then one uniform each
//! for B1, B2, C1, treat, outcome. Uniforms are the top 53 bits of a u64.
//! With these constants the treated fraction concentrates near 0.2 and a
//! control-only logistic fit of outcome on (X1, X2) puts the X1 coefficient
//! near -1.1.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dataset::{Column, DataFrame};
use crate::error::{Error, Result};
use crate::glm::sigmoid;

pub const TREAT_INTERCEPT: f64 = -1.55;
pub const TREAT_X1: f64 = 0.4;
pub const TREAT_X2: f64 = 0.3;
pub const TREAT_B1: f64 = 0.2;

pub const OUTCOME_X1: f64 = -1.1;
pub const OUTCOME_X2: f64 = 0.1;
pub const OUTCOME_B2: f64 = 0.3;
pub const OUTCOME_TREAT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
}

/// Uniform on [0, 1) from the top 53 bits.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on (0, 1], safe under `ln`.
fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Generate the simulated frame with columns
/// `X1, X2, B1, B2, C1, treat, outcome` in that order.
pub fn make_sample_data(cfg: &SimConfig) -> Result<DataFrame> {
    if cfg.n == 0 {
        return Err(Error::SyntaxError("sample size must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;

    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut b1 = Vec::with_capacity(n);
    let mut b2 = Vec::with_capacity(n);
    let mut c1 = Vec::with_capacity(n);
    let mut treat = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);

    for _ in 0..n {
        let u1 = uniform_open(&mut rng);
        let u2 = uniform(&mut rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        let z1 = r * theta.cos();
        let z2 = r * theta.sin();
        x1.push(z1);
        x2.push(z2);

        let v_b1 = u8::from(uniform(&mut rng) < 0.5);
        let v_b2 = u8::from(uniform(&mut rng) < 0.5);
        b1.push(v_b1);
        b2.push(v_b2);

        let u_c = uniform(&mut rng);
        c1.push(if u_c < 1.0 / 3.0 {
            0u32
        } else if u_c < 2.0 / 3.0 {
            1
        } else {
            2
        });

        let p_treat = sigmoid(
            TREAT_INTERCEPT + TREAT_X1 * z1 + TREAT_X2 * z2 + TREAT_B1 * f64::from(v_b1),
        );
        let v_treat = u8::from(uniform(&mut rng) < p_treat);
        treat.push(v_treat);

        let p_out = sigmoid(
            OUTCOME_X1 * z1
                + OUTCOME_X2 * z2
                + OUTCOME_B2 * f64::from(v_b2)
                + OUTCOME_TREAT * f64::from(v_treat),
        );
        outcome.push(u8::from(uniform(&mut rng) < p_out));
    }

    DataFrame::new(vec![
        Column::numeric("X1", x1),
        Column::numeric("X2", x2),
        Column::binary("B1", b1),
        Column::binary("B2", b2),
        Column::categorical("C1", vec!["a".into(), "b".into(), "c".into()], c1),
        Column::binary("treat", treat),
        Column::binary("outcome", outcome),
    ])
}
