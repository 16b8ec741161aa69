use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LevelIndex;
use crate::rational::{self, Rational};

/// A finite signed combination `sum_l c_l u_l` of grid solutions with exact
/// rational weights. Zero weights are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationPlan {
    dim: usize,
    n: u32,
    label: String,
    terms: BTreeMap<LevelIndex, Rational>,
    /// How many contributions landed on each level before merging,
    /// including levels whose merged weight cancelled to zero.
    contributions: BTreeMap<LevelIndex, u32>,
}

impl CombinationPlan {
    /// Builds a plan from `(level, coefficient)` pairs, summing duplicates.
    pub fn from_terms<I>(dim: usize, n: u32, label: impl Into<String>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (LevelIndex, Rational)>,
    {
        let mut acc = Accumulator::new(dim);
        for (l, c) in terms {
            acc.add(l, c)?;
        }
        Ok(acc.finish(n, label))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending lexicographic level order.
    pub fn terms(&self) -> impl Iterator<Item = (&LevelIndex, &Rational)> {
        self.terms.iter()
    }

    pub fn levels(&self) -> impl Iterator<Item = &LevelIndex> {
        self.terms.keys()
    }

    pub fn coefficient(&self, level: &LevelIndex) -> Option<&Rational> {
        self.terms.get(level)
    }

    pub fn contains(&self, level: &LevelIndex) -> bool {
        self.terms.contains_key(level)
    }

    pub fn coefficient_sum(&self) -> Rational {
        // plans have few distinct weights, so sum each once times its count
        let mut counts: HashMap<&Rational, u64> = HashMap::new();
        for c in self.terms.values() {
            *counts.entry(c).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .fold(Rational::zero(), |acc, (c, k)| acc + c * Rational::from_integer(k.into()))
    }

    /// Node count summed over the distinct levels of the plan.
    pub fn unique_nodes(&self) -> u128 {
        self.terms.keys().map(LevelIndex::node_count).sum()
    }

    /// Node count summed over every contribution before duplicate levels
    /// were merged (equal to [`Self::unique_nodes`] for plans built without
    /// overlaps).
    pub fn total_nodes(&self) -> u128 {
        self.contributions
            .iter()
            .map(|(l, &m)| m as u128 * l.node_count())
            .sum()
    }

    pub fn max_level_sum(&self) -> Option<u32> {
        self.terms.keys().map(LevelIndex::sum).max()
    }

    pub fn min_level_sum(&self) -> Option<u32> {
        self.terms.keys().map(LevelIndex::sum).min()
    }

    /// Accumulated coefficient per `|l|_1`.
    pub fn level_masses(&self) -> BTreeMap<u32, Rational> {
        let mut out: BTreeMap<u32, Rational> = BTreeMap::new();
        for (l, c) in &self.terms {
            *out.entry(l.sum()).or_insert_with(Rational::zero) += c;
        }
        out
    }

    /// Same coefficients on levels `l + shift` in every direction.
    pub fn shifted(&self, shift: u32) -> CombinationPlan {
        if shift == 0 {
            return self.clone();
        }
        CombinationPlan {
            dim: self.dim,
            n: self.n,
            label: format!("{}+shift{}", self.label, shift),
            terms: self
                .terms
                .iter()
                .map(|(l, c)| (l.shifted(shift), c.clone()))
                .collect(),
            contributions: self
                .contributions
                .iter()
                .map(|(l, &m)| (l.shifted(shift), m))
                .collect(),
        }
    }

    pub fn to_dump(&self) -> PlanDump {
        PlanDump {
            d: self.dim,
            n: self.n,
            label: self.label.clone(),
            terms: self
                .terms
                .iter()
                .map(|(l, c)| TermDump {
                    levels: l.levels().to_vec(),
                    coeff: rational::to_fraction_string(c),
                })
                .collect(),
            coefficient_sum: Some(rational::to_fraction_string(&self.coefficient_sum())),
            level_masses: None,
        }
    }

    pub fn from_dump(dump: &PlanDump) -> Result<Self> {
        let terms = dump
            .terms
            .iter()
            .map(|t| {
                if t.levels.len() != dump.d {
                    return Err(Error::DimensionMismatch {
                        expected: dump.d,
                        got: t.levels.len(),
                    });
                }
                Ok((LevelIndex::new(t.levels.clone()), rational::parse_fraction(&t.coeff)?))
            })
            .collect::<Result<Vec<_>>>()?;
        CombinationPlan::from_terms(dump.d, dump.n, dump.label.clone(), terms)
    }
}

/// Collects contributions, merging equal levels and dropping exact zeros.
pub(crate) struct Accumulator {
    dim: usize,
    terms: BTreeMap<LevelIndex, Rational>,
    contributions: BTreeMap<LevelIndex, u32>,
}

impl Accumulator {
    pub(crate) fn new(dim: usize) -> Self {
        Accumulator {
            dim,
            terms: BTreeMap::new(),
            contributions: BTreeMap::new(),
        }
    }

    pub(crate) fn add(&mut self, level: LevelIndex, coeff: Rational) -> Result<()> {
        if level.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: level.dim(),
            });
        }
        *self.contributions.entry(level.clone()).or_insert(0) += 1;
        match self.terms.entry(level) {
            Entry::Vacant(v) => {
                v.insert(coeff);
            }
            Entry::Occupied(mut o) => *o.get_mut() += coeff,
        }
        Ok(())
    }

    pub(crate) fn finish(mut self, n: u32, label: impl Into<String>) -> CombinationPlan {
        self.terms.retain(|_, c| !c.is_zero());
        CombinationPlan {
            dim: self.dim,
            n,
            label: label.into(),
            terms: self.terms,
            contributions: self.contributions,
        }
    }
}

/// JSON dump of a plan; coefficients as exact `p/q` strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDump {
    pub d: usize,
    pub n: u32,
    pub label: String,
    pub terms: Vec<TermDump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient_sum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_masses: Option<BTreeMap<u32, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDump {
    pub levels: Vec<u32>,
    pub coeff: String,
}

/// All `l` in `N_0^d` with `|l|_1 = total`, lexicographic order.
pub fn levels_with_sum(dim: usize, total: u32) -> Vec<LevelIndex> {
    fn rec(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<LevelIndex>) {
        if prefix.len() + 1 == dim {
            prefix.push(remaining);
            out.push(LevelIndex::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for v in 0..=remaining {
            prefix.push(v);
            rec(dim, remaining - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, total, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Classical combination weights `a_i = (-1)^{d-1-i} C(d-1, i)`, `i = 0..d-1`.
pub fn combination_weights(dim: usize) -> Vec<Rational> {
    let d = dim as u64;
    (0..d)
        .map(|i| {
            let c = rational::binomial_q(d - 1, i);
            if (d - 1 - i).is_multiple_of(2) {
                c
            } else {
                -c
            }
        })
        .collect()
}

/// Standard combination technique on the Smolyak set `|l|_1 <= n`:
/// `u_n = sum_{i=0}^{d-1} a_i sum_{|l|_1 = n + i} u_l`.
pub fn standard_plan(dim: usize, n: u32) -> CombinationPlan {
    assert!(dim >= 1);
    let a = combination_weights(dim);
    let mut acc = Accumulator::new(dim);
    for (i, ai) in a.iter().enumerate() {
        for l in levels_with_sum(dim, n + i as u32) {
            acc.add(l, ai.clone()).expect("dimension matches");
        }
    }
    acc.finish(n, format!("standard(d={dim},n={n})"))
}

/// Multivariate extrapolation weights `alpha_k = (-4)^k / (-3)^d`, `k = 0..d`.
pub fn extrapolation_weights(dim: usize) -> Vec<Rational> {
    let denom = rational::pow(&rational::int(-3), dim as i32);
    (0..=dim)
        .map(|k| rational::pow(&rational::int(-4), k as i32) / &denom)
        .collect()
}

/// The `2^d` grids obtained by bisecting `level` in every subset of
/// directions, weighted by `alpha_{|S|}`.
///
/// Levels with zero components are accepted here; they are only rejected
/// when a grid actually has to be solved.
pub fn extrapolation_plan(level: &LevelIndex) -> CombinationPlan {
    let d = level.dim();
    let alpha = extrapolation_weights(d);
    let mut acc = Accumulator::new(d);
    for mask in 0..(1usize << d) {
        acc.add(level.refine_mask(mask), alpha[mask.count_ones() as usize].clone())
            .expect("dimension matches");
    }
    acc.finish(level.sum(), format!("extrapolation{level}"))
}

/// Higher-order combination: the standard plan with every grid replaced by
/// its extrapolation, coefficients accumulated per level.
pub fn ho_plan(dim: usize, n: u32) -> CombinationPlan {
    let base = standard_plan(dim, n);
    let alpha = extrapolation_weights(dim);
    let mut acc = Accumulator::new(dim);
    for (l, a) in base.terms() {
        for mask in 0..(1usize << dim) {
            let c = a * &alpha[mask.count_ones() as usize];
            acc.add(l.refine_mask(mask), c).expect("dimension matches");
        }
    }
    acc.finish(n, format!("ho(d={dim},n={n})"))
}

/// Isotropic Richardson extrapolation `(4 u_{n+1} - u_n) / 3`.
pub fn richardson_plan(dim: usize, n: u32) -> CombinationPlan {
    CombinationPlan::from_terms(
        dim,
        n,
        format!("richardson(d={dim},n={n})"),
        [
            (LevelIndex::isotropic(dim, n), rational::ratio(-1, 3)),
            (LevelIndex::isotropic(dim, n + 1), rational::ratio(4, 3)),
        ],
    )
    .expect("dimension matches")
}

/// Two-dimensional splitting extrapolation
/// `4/3 u^{(1)} + 4/3 u^{(2)} - 5/3 u_h` around base level `level`.
pub fn splitting_plan(level: &LevelIndex) -> Result<CombinationPlan> {
    if level.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "splitting extrapolation is two-dimensional, got d = {}",
            level.dim()
        )));
    }
    CombinationPlan::from_terms(
        2,
        level.sum(),
        format!("splitting{level}"),
        [
            (level.clone(), rational::ratio(-5, 3)),
            (level.refine_mask(0b01), rational::ratio(4, 3)),
            (level.refine_mask(0b10), rational::ratio(4, 3)),
        ],
    )
}

/// Single-grid plan with weight one.
pub fn full_grid_plan(level: LevelIndex) -> CombinationPlan {
    let dim = level.dim();
    let n = level.min_level();
    CombinationPlan::from_terms(dim, n, format!("full{level}"), [(level, Rational::one())])
        .expect("dimension matches")
}

/// `(dof_unique, dof_total)` of a plan.
pub fn plan_dof(plan: &CombinationPlan) -> (u128, u128) {
    (plan.unique_nodes(), plan.total_nodes())
}
