//! Checks of the extrapolation weights `alpha_k = (-4)^k / (-3)^d`.
//!
//! The identity checks run in exact rational arithmetic. The synthetic
//! expansion check applies the `2^d`-grid extrapolation to a model error
//! expansion with closed-form coefficients, so the cancellation of every
//! term carrying a bare `h_j^2` can be observed without any PDE solve.

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combine::{extrapolation_weights, ho_plan, least_squares_slope};
use crate::error::{Error, Result};
use crate::grid::mesh_width;
use crate::rational::{self, Rational};

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Normalization,
    CancellationSystem,
    LemmaCancel,
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Identity::Normalization => "normalization",
            Identity::CancellationSystem => "cancellation_system",
            Identity::LemmaCancel => "lemma_cancel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub d: usize,
    pub identity: Identity,
    /// Largest exact defect over all sub-checks.
    pub max_abs_defect: Rational,
    /// Largest floating-point defect, for checks that also run in `f64`.
    pub float_defect: Option<f64>,
    pub pass: bool,
}

/// `sum_k alpha_k C(d, k) - 1`.
pub fn check_normalization(d: usize) -> IdentityReport {
    check_normalization_with(d, &extrapolation_weights(d))
}

pub fn check_normalization_with(d: usize, weights: &[Rational]) -> IdentityReport {
    let sum: Rational = weights
        .iter()
        .enumerate()
        .map(|(k, a)| a * rational::binomial_q(d as u64, k as u64))
        .sum();
    let defect = (sum - rational::int(1)).abs();
    IdentityReport {
        d,
        identity: Identity::Normalization,
        pass: defect.is_zero(),
        max_abs_defect: defect,
        float_defect: None,
    }
}

/// For every `m = 1..d`:
/// `sum_k alpha_k sum_l 4^{-l} C(m, l) C(d - m, k - l) = 0`,
/// i.e. the coefficient of every product of `m` squared mesh widths vanishes.
pub fn check_cancellation_system(d: usize) -> IdentityReport {
    check_cancellation_system_with(d, &extrapolation_weights(d))
}

pub fn check_cancellation_system_with(d: usize, weights: &[Rational]) -> IdentityReport {
    let quarter = rational::ratio(1, 4);
    let mut worst = Rational::zero();
    for m in 1..=d {
        let mut total = Rational::zero();
        for (k, a) in weights.iter().enumerate() {
            let lo = (m + k).saturating_sub(d);
            let hi = m.min(k);
            let mut inner = Rational::zero();
            for l in lo..=hi {
                inner += rational::pow(&quarter, l as i32)
                    * rational::binomial_q(m as u64, l as u64)
                    * rational::binomial_q((d - m) as u64, (k - l) as u64);
            }
            total += a * inner;
        }
        let total = total.abs();
        if total > worst {
            worst = total;
        }
    }
    IdentityReport {
        d,
        identity: Identity::CancellationSystem,
        pass: worst.is_zero(),
        max_abs_defect: worst,
        float_defect: None,
    }
}

/// `sum_{i in {0,1}^d} alpha_{|i|} 4^{-i_1} beta(i_2, ..., i_d)` for random
/// tables `beta`, both with small rationals (must vanish exactly) and with
/// `f64` entries in `[-1, 1]` (must stay below `1e-12 * 2^d`).
pub fn check_lemma_cancel(d: usize, trials: usize, seed: u64) -> IdentityReport {
    check_lemma_cancel_with(d, trials, seed, &extrapolation_weights(d))
}

pub fn check_lemma_cancel_with(
    d: usize,
    trials: usize,
    seed: u64,
    weights: &[Rational],
) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let table_len = 1usize << (d - 1);
    let quarter = rational::ratio(1, 4);
    let weights_f: Vec<f64> = weights.iter().map(rational::to_f64).collect();
    let mut worst = Rational::zero();
    let mut worst_f = 0.0f64;
    for _ in 0..trials {
        let beta: Vec<Rational> = (0..table_len)
            .map(|_| rational::ratio(rng.gen_range(-1000..=1000), rng.gen_range(1..=1000)))
            .collect();
        let beta_f: Vec<f64> = (0..table_len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mut exact = Rational::zero();
        let mut float = 0.0;
        for i in 0usize..(1 << d) {
            let k = i.count_ones() as usize;
            let first = i & 1;
            let rest = i >> 1;
            let term = &weights[k] * &beta[rest];
            if first == 1 {
                exact += term * &quarter;
                float += weights_f[k] * 0.25 * beta_f[rest];
            } else {
                exact += term;
                float += weights_f[k] * beta_f[rest];
            }
        }
        let exact = exact.abs();
        if exact > worst {
            worst = exact;
        }
        worst_f = worst_f.max(float.abs());
    }
    let tol = 1e-12 * (1u64 << d) as f64;
    IdentityReport {
        d,
        identity: Identity::LemmaCancel,
        pass: worst.is_zero() && worst_f <= tol,
        max_abs_defect: worst,
        float_defect: Some(worst_f),
    }
}

/// Runs all three identities for `d = 1..=d_max`. `weights_for` supplies
/// the weights per dimension, so callers can inject perturbed weights.
pub fn run_identity_checks<W>(d_max: usize, trials: usize, seed: u64, weights_for: W) -> Vec<IdentityReport>
where
    W: Fn(usize) -> Vec<Rational>,
{
    let mut out = Vec::with_capacity(3 * d_max);
    for d in 1..=d_max {
        let w = weights_for(d);
        out.push(check_normalization_with(d, &w));
        out.push(check_cancellation_system_with(d, &w));
        out.push(check_lemma_cancel_with(d, trials, seed, &w));
    }
    out
}

pub type BaseFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `(x, mesh widths of the other directions) -> beta_j`.
pub type BetaFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// `(x, mesh widths of the directions in the subset) -> gamma_S`.
pub type GammaFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Model error expansion
/// `U(x; h) = u(x) - sum_j beta_j h_j^2 - sum_S gamma_S prod_{j in S} h_j^4`.
#[derive(Clone)]
pub struct SyntheticExpansion {
    dim: usize,
    base: BaseFn,
    beta: Vec<BetaFn>,
    gamma: Vec<(Vec<usize>, GammaFn)>,
    gamma_bound: f64,
}

impl fmt::Debug for SyntheticExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SyntheticExpansion")
            .field("dim", &self.dim)
            .field("gamma_subsets", &self.gamma.iter().map(|(s, _)| s).collect::<Vec<_>>())
            .field("gamma_bound", &self.gamma_bound)
            .finish()
    }
}

impl SyntheticExpansion {
    /// An expansion with no error terms: `U = u`.
    pub fn new(dim: usize, base: BaseFn) -> Self {
        SyntheticExpansion {
            dim,
            base,
            beta: (0..dim).map(|_| Arc::new(|_: &[f64], _: &[f64]| 0.0) as BetaFn).collect(),
            gamma: Vec::new(),
            gamma_bound: 0.0,
        }
    }

    pub fn with_beta(mut self, j: usize, beta: BetaFn) -> Self {
        self.beta[j] = beta;
        self
    }

    /// Adds `gamma_S` for the 0-based direction set `subset`; `bound` must
    /// dominate `|gamma_S|` everywhere.
    pub fn with_gamma(mut self, subset: Vec<usize>, gamma: GammaFn, bound: f64) -> Self {
        assert!(!subset.is_empty() && subset.iter().all(|&j| j < self.dim));
        self.gamma.push((subset, gamma));
        self.gamma_bound = self.gamma_bound.max(bound);
        self
    }

    /// Random smooth instance: trigonometric base, `beta_j` mixing constants,
    /// the other mesh widths and `x`, and one positive `gamma_S` per nonempty
    /// subset.
    pub fn random<R: Rng>(dim: usize, rng: &mut R) -> Self {
        let freq: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..3.0)).collect();
        let base: BaseFn = Arc::new(move |x: &[f64]| {
            x.iter().zip(&freq).map(|(t, w)| (w * t).sin()).sum::<f64>()
        });
        let mut se = SyntheticExpansion::new(dim, base);
        for j in 0..dim {
            let (a, b, c): (f64, f64, f64) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            se = se.with_beta(
                j,
                Arc::new(move |x: &[f64], h: &[f64]| {
                    let s2: f64 = h.iter().map(|v| v * v).sum();
                    let s1: f64 = h.iter().sum();
                    a + b * s2 + c * (x[0] + s1).cos()
                }),
            );
        }
        for mask in 1usize..(1 << dim) {
            let subset: Vec<usize> = (0..dim).filter(|&j| (mask >> j) & 1 == 1).collect();
            let c: f64 = rng.gen_range(0.5..1.0);
            se = se.with_gamma(
                subset,
                Arc::new(move |x: &[f64], h: &[f64]| c * (1.0 + 0.5 * (x[0] + h.iter().sum::<f64>()).sin())),
                1.5 * c,
            );
        }
        se
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper bound `K` on every `|gamma_S|`.
    pub fn gamma_bound(&self) -> f64 {
        self.gamma_bound
    }

    pub fn exact(&self, x: &[f64]) -> f64 {
        (self.base)(x)
    }

    pub fn model_value(&self, x: &[f64], h: &[f64]) -> f64 {
        let mut v = (self.base)(x);
        for (j, beta) in self.beta.iter().enumerate() {
            let others: Vec<f64> = (0..self.dim).filter(|&k| k != j).map(|k| h[k]).collect();
            v -= beta(x, &others) * h[j] * h[j];
        }
        for (subset, gamma) in &self.gamma {
            let hs: Vec<f64> = subset.iter().map(|&j| h[j]).collect();
            let prod: f64 = hs.iter().map(|v| v.powi(4)).product();
            v -= gamma(x, &hs) * prod;
        }
        v
    }

    /// `sum_S prod_{j in S} h_j^4` over the subsets carrying a `gamma_S`.
    pub fn quartic_mass(&self, h: &[f64]) -> f64 {
        self.gamma
            .iter()
            .map(|(s, _)| s.iter().map(|&j| h[j].powi(4)).product::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticRow {
    pub n: u32,
    pub h: f64,
    /// `u(x) - U~(x; h)`
    pub residual: f64,
    /// `(5/3)^d K sum_S prod h_j^4`
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticReport {
    pub rows: Vec<SyntheticRow>,
    /// Least-squares slope of `log2 |residual|` against `n`; `None` when
    /// some residual is exactly zero.
    pub slope: Option<f64>,
}

impl SyntheticReport {
    pub fn within_bound(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.residual.abs() <= r.bound * (1.0 + 1e-10))
    }
}

/// Applies the `2^d`-grid extrapolation to the model values at isotropic
/// base widths `h = 2^{-n}` for each `n` in `levels`.
pub fn synthetic_expansion_check(
    se: &SyntheticExpansion,
    x: &[f64],
    levels: RangeInclusive<u32>,
) -> Result<SyntheticReport> {
    let d = se.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if levels.clone().count() < 3 {
        return Err(Error::InvalidArgument(
            "synthetic expansion check needs at least three levels".into(),
        ));
    }
    let alpha: Vec<f64> = extrapolation_weights(d).iter().map(rational::to_f64).collect();
    let factor = (5.0f64 / 3.0).powi(d as i32) * se.gamma_bound();
    let mut rows = Vec::new();
    for n in levels {
        let h0 = mesh_width(n);
        let mut extrapolated = 0.0;
        for mask in 0usize..(1 << d) {
            let h: Vec<f64> = (0..d)
                .map(|j| if (mask >> j) & 1 == 1 { 0.5 * h0 } else { h0 })
                .collect();
            extrapolated += alpha[mask.count_ones() as usize] * se.model_value(x, &h);
        }
        let residual = se.exact(x) - extrapolated;
        rows.push(SyntheticRow {
            n,
            h: h0,
            residual,
            bound: factor * se.quartic_mass(&vec![h0; d]),
        });
    }
    let slope = if rows.iter().all(|r| r.residual != 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.residual.abs().log2()).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    Ok(SyntheticReport { rows, slope })
}

/// Checks that the per-`|l|_1` accumulated masses of the higher-order plan
/// add up to the plan's total coefficient (exactly one) and span
/// `|l|_1 = n ..= n + 2d - 1`.
pub fn check_hosg_vs_bl_export(d: usize, n: u32) -> bool {
    let plan = ho_plan(d, n);
    let masses = plan.level_masses();
    let total: Rational = masses.values().sum();
    let span_ok = masses.keys().next() == Some(&n)
        && masses.keys().next_back() == Some(&(n + 2 * d as u32 - 1));
    total == plan.coefficient_sum() && total == rational::int(1) && span_ok
}
