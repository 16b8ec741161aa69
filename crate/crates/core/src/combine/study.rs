use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::combine::evaluate::{evaluate_plan, GridCache};
use crate::combine::plan::{
    full_grid_plan, ho_plan, richardson_plan, splitting_plan, standard_plan, CombinationPlan,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{LevelIndex, Point};
use crate::pde::ProblemSpec;

pub const DEFAULT_NODE_BUDGET: u128 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Isotropic full grid.
    #[serde(rename = "FG")]
    FullGrid,
    /// Richardson-extrapolated full grid.
    #[serde(rename = "HOFG")]
    HigherOrderFullGrid,
    /// Standard combination technique.
    #[serde(rename = "SG")]
    SparseGrid,
    /// Extrapolate on every grid, then combine.
    #[serde(rename = "HOSG")]
    HigherOrderSparseGrid,
    /// Three-grid splitting extrapolation, two dimensions only.
    #[serde(rename = "SPLIT2D")]
    Splitting2d,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FullGrid,
        Method::HigherOrderFullGrid,
        Method::SparseGrid,
        Method::HigherOrderSparseGrid,
        Method::Splitting2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FullGrid => "FG",
            Method::HigherOrderFullGrid => "HOFG",
            Method::SparseGrid => "SG",
            Method::HigherOrderSparseGrid => "HOSG",
            Method::Splitting2d => "SPLIT2D",
        }
    }

    /// Whether the method is built on the Smolyak index set, where the
    /// level shift applies.
    pub fn is_sparse(self) -> bool {
        matches!(self, Method::SparseGrid | Method::HigherOrderSparseGrid)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// The plan a method evaluates at level `n`.
///
/// Sparse methods have their Smolyak levels offset by `level_shift` in every
/// direction; full-grid methods use isotropic level `n` directly.
pub fn method_plan(method: Method, dim: usize, n: u32, level_shift: u32) -> Result<CombinationPlan> {
    if !method.is_sparse() && n == 0 {
        return Err(Error::InvalidArgument(format!(
            "{method} needs n >= 1 so every grid has an interior node"
        )));
    }
    Ok(match method {
        Method::FullGrid => full_grid_plan(LevelIndex::isotropic(dim, n)),
        Method::HigherOrderFullGrid => richardson_plan(dim, n),
        Method::SparseGrid => standard_plan(dim, n).shifted(level_shift),
        Method::HigherOrderSparseGrid => ho_plan(dim, n).shifted(level_shift),
        Method::Splitting2d => splitting_plan(&LevelIndex::isotropic(dim, n))?,
    })
}

#[derive(Debug, Clone)]
pub struct StudySettings {
    pub method: Method,
    pub dim: usize,
    pub n_min: u32,
    pub n_max: u32,
    pub point: Point,
    /// Extra points for the surplus. When non-empty the surplus is the max
    /// of the level-to-level change over `point` and these.
    pub probe_points: Vec<Point>,
    pub level_shift: u32,
    pub node_budget: u128,
    pub exec: Exec,
}

impl StudySettings {
    pub fn new(method: Method, dim: usize, n_min: u32, n_max: u32) -> Self {
        StudySettings {
            method,
            dim,
            n_min,
            n_max,
            point: Point::reference(dim),
            probe_points: Vec::new(),
            level_shift: 1,
            node_budget: DEFAULT_NODE_BUDGET,
            exec: Exec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "n_min = {} exceeds n_max = {}",
                self.n_min, self.n_max
            )));
        }
        if self.point.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.point.dim(),
            });
        }
        if let Some(q) = self.probe_points.iter().find(|q| q.dim() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        if self.node_budget == 0 {
            return Err(Error::InvalidArgument("node budget must be positive".into()));
        }
        if self.method == Method::Splitting2d && self.dim != 2 {
            return Err(Error::InvalidArgument(format!(
                "SPLIT2D is two-dimensional, got d = {}",
                self.dim
            )));
        }
        Ok(())
    }

    fn checked_plan(&self, n: u32) -> Result<CombinationPlan> {
        let plan = method_plan(self.method, self.dim, n, self.level_shift)?;
        let projected = plan.unique_nodes();
        if projected > self.node_budget {
            return Err(Error::BudgetExceeded {
                n,
                projected,
                budget: self.node_budget,
            });
        }
        Ok(plan)
    }
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub method: Method,
    pub d: usize,
    pub n: u32,
    pub dof_unique: u128,
    pub dof_total: u128,
    pub value: f64,
    /// `|value_{n+1} - value_n|`; absent on the last level.
    pub surplus: Option<f64>,
    pub runtime_s: f64,
}

/// Records produced before a study stopped, and the reason it stopped early.
#[derive(Debug)]
pub struct StudyOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub error: Option<Error>,
}

/// Runs the study level by level, checking the node budget of each level
/// before solving it. On failure the records completed so far are kept.
pub fn run_study(p: &ProblemSpec, settings: &StudySettings) -> StudyOutcome {
    let mut records: Vec<ConvergenceRecord> = Vec::new();
    if let Err(e) = settings.validate() {
        return StudyOutcome {
            records,
            error: Some(e),
        };
    }
    if p.dim() != settings.dim {
        return StudyOutcome {
            records,
            error: Some(Error::DimensionMismatch {
                expected: settings.dim,
                got: p.dim(),
            }),
        };
    }
    let cache = GridCache::new();
    let mut prev_probes: Vec<f64> = Vec::new();
    for n in settings.n_min..=settings.n_max {
        let step = settings.checked_plan(n).and_then(|plan| {
            cache.retain(|l| plan.contains(l));
            let start = Instant::now();
            let r = evaluate_plan(p, &plan, &settings.point, &cache, settings.exec)?;
            let probes = settings
                .probe_points
                .iter()
                .map(|q| evaluate_plan(p, &plan, q, &cache, settings.exec).map(|e| e.value))
                .collect::<Result<Vec<f64>>>()?;
            let rec = ConvergenceRecord {
                method: settings.method,
                d: settings.dim,
                n,
                dof_unique: r.dof_unique,
                dof_total: r.dof_total,
                value: r.value,
                surplus: None,
                runtime_s: start.elapsed().as_secs_f64(),
            };
            Ok((rec, probes))
        });
        match step {
            Ok((rec, probes)) => {
                if let Some(prev) = records.last_mut() {
                    let probe_max = prev_probes
                        .iter()
                        .zip(&probes)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    prev.surplus = Some((rec.value - prev.value).abs().max(probe_max));
                }
                records.push(rec);
                prev_probes = probes;
            }
            Err(e) => {
                return StudyOutcome {
                    records,
                    error: Some(e),
                }
            }
        }
    }
    StudyOutcome {
        records,
        error: None,
    }
}

/// Surplus study over `n_min..=n_max`. The node budget is checked for every
/// level before the first solve.
pub fn hierarchical_surplus_study(
    p: &ProblemSpec,
    settings: &StudySettings,
) -> Result<Vec<ConvergenceRecord>> {
    settings.validate()?;
    for n in settings.n_min..=settings.n_max {
        settings.checked_plan(n)?;
    }
    let outcome = run_study(p, settings);
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(outcome.records),
    }
}

/// `(4 u_{n+1}(x) - u_n(x)) / 3` on isotropic full grids.
pub fn richardson_full(p: &ProblemSpec, n: u32, x: &Point) -> Result<f64> {
    let plan = method_plan(Method::HigherOrderFullGrid, p.dim(), n, 0)?;
    Ok(evaluate_plan(p, &plan, x, &GridCache::new(), Exec::default())?.value)
}

/// `4/3 u^{(1)} + 4/3 u^{(2)} - 5/3 u_h` at `x`, two dimensions only.
pub fn splitting_extrapolation_2d(p: &ProblemSpec, level: &LevelIndex, x: &Point) -> Result<f64> {
    let plan = splitting_plan(level)?;
    Ok(evaluate_plan(p, &plan, x, &GridCache::new(), Exec::default())?.value)
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of `log2(surplus)` against `n` over the records that
/// carry a surplus. The observed order is its negative.
pub fn surplus_slope(records: &[ConvergenceRecord]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| r.surplus.map(|s| (r.n as f64, s.log2())))
        .unzip();
    (xs.len() >= 2).then(|| least_squares_slope(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::builtin_sine_problem;

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("hosg".parse::<Method>().unwrap(), Method::HigherOrderSparseGrid);
        assert!("XYZ".parse::<Method>().is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 4.0 * x).collect();
        assert!((least_squares_slope(&xs, &ys) + 4.0).abs() < 1e-14);
    }

    #[test]
    fn single_level_study_has_no_surplus() {
        let p = builtin_sine_problem(1);
        let s = StudySettings::new(Method::FullGrid, 1, 5, 5);
        let recs = hierarchical_surplus_study(&p, &s).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].surplus.is_none());
    }

    #[test]
    fn one_dimensional_surplus_ratios() {
        let p = builtin_sine_problem(1);
        let fg = hierarchical_surplus_study(&p, &StudySettings::new(Method::FullGrid, 1, 4, 9)).unwrap();
        let r = fg[3].surplus.unwrap() / fg[4].surplus.unwrap();
        assert!((r - 4.0).abs() < 0.05, "FG ratio {r}");
        let ho = hierarchical_surplus_study(&p, &StudySettings::new(Method::HigherOrderFullGrid, 1, 3, 8))
            .unwrap();
        let r = ho[3].surplus.unwrap() / ho[4].surplus.unwrap();
        assert!((r - 16.0).abs() < 0.5, "HOFG ratio {r}");
    }

    #[test]
    fn budget_is_checked_before_solving() {
        let p = builtin_sine_problem(2);
        let mut s = StudySettings::new(Method::FullGrid, 2, 3, 12);
        s.node_budget = 100_000;
        let err = hierarchical_surplus_study(&p, &s).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { n: 9, .. }), "{err:?}");

        let out = run_study(&p, &s);
        assert_eq!(out.records.len(), 6);
        assert!(out.records.last().unwrap().surplus.is_none());
        assert!(matches!(out.error, Some(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn probe_points_only_raise_the_surplus() {
        let p = builtin_sine_problem(2);
        let plain = StudySettings::new(Method::SparseGrid, 2, 3, 5);
        let mut probed = plain.clone();
        probed.probe_points = vec![Point::new(vec![0.7, 0.1]).unwrap(), Point::new(vec![0.4, 0.9]).unwrap()];
        let a = hierarchical_surplus_study(&p, &plain).unwrap();
        let b = hierarchical_surplus_study(&p, &probed).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
            if let (Some(sx), Some(sy)) = (x.surplus, y.surplus) {
                assert!(sy >= sx);
            }
        }
    }

    #[test]
    fn bad_settings_are_rejected() {
        let p = builtin_sine_problem(3);
        let s = StudySettings::new(Method::Splitting2d, 3, 2, 4);
        assert!(hierarchical_surplus_study(&p, &s).is_err());
        let s = StudySettings::new(Method::FullGrid, 3, 5, 4);
        assert!(hierarchical_surplus_study(&p, &s).is_err());
        let s = StudySettings::new(Method::FullGrid, 3, 0, 1);
        assert!(hierarchical_surplus_study(&p, &s).is_err());
    }

    #[test]
    fn richardson_of_linear_data_is_unchanged() {
        // Zero data: both grids give the same value, so extrapolation returns it.
        let p = ProblemSpec::new("zero2", 2, |_| 0.0);
        let x = Point::new(vec![0.3, 0.8]).unwrap();
        assert_eq!(richardson_full(&p, 3, &x).unwrap(), 0.0);
        assert_eq!(
            splitting_extrapolation_2d(&p, &LevelIndex::new(vec![3, 3]), &x).unwrap(),
            0.0
        );
        let p3 = builtin_sine_problem(3);
        assert!(splitting_extrapolation_2d(&p3, &LevelIndex::new(vec![3, 3, 3]), &Point::reference(3)).is_err());
    }

    #[test]
    fn richardson_beats_plain_full_grid() {
        let p = builtin_sine_problem(2);
        let x = Point::reference(2);
        let exact = p.exact(x.coords()).unwrap();
        let plain = crate::pde::solve_and_eval(&p, &LevelIndex::isotropic(2, 5), &x).unwrap();
        let rich = richardson_full(&p, 5, &x).unwrap();
        assert!((rich - exact).abs() < (plain - exact).abs());
    }
}
