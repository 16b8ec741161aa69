use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use crate::combine::plan::CombinationPlan;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{GridFunction, LevelIndex, Point};
use crate::pde::{solve_poisson_with, ProblemSpec, SolverOptions};
use crate::rational;

type Slot = Arc<OnceLock<Result<Arc<GridFunction>>>>;

/// Solved grids keyed by problem name and level.
///
/// Concurrent callers asking for the same key share one solve: the first
/// caller runs it, the others block on the slot and reuse the result.
#[derive(Debug)]
pub struct GridCache {
    enabled: bool,
    slots: Mutex<HashMap<(String, LevelIndex), Slot>>,
    solves: AtomicUsize,
}

impl Default for GridCache {
    fn default() -> Self {
        GridCache::new()
    }
}

impl GridCache {
    pub fn new() -> Self {
        GridCache {
            enabled: true,
            slots: Mutex::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        }
    }

    /// A cache that stores nothing; every request solves afresh.
    pub fn disabled() -> Self {
        GridCache {
            enabled: false,
            ..GridCache::new()
        }
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of solves performed through this cache so far.
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Drops every entry whose level fails `keep`.
    pub fn retain<F: Fn(&LevelIndex) -> bool>(&self, keep: F) {
        self.slots.lock().unwrap().retain(|(_, l), _| keep(l));
    }

    pub fn clear(&self) {
        self.slots.lock().unwrap().clear();
    }

    /// Returns the solution on `level`, solving it if needed. The flag is
    /// true when this call performed the solve.
    ///
    /// Grids with a zero level in some direction have no interior unknowns;
    /// with homogeneous Dirichlet data their solution is identically zero.
    pub fn get_or_solve(
        &self,
        p: &ProblemSpec,
        level: &LevelIndex,
        opts: SolverOptions,
    ) -> (Result<Arc<GridFunction>>, bool) {
        let solve = || -> Result<Arc<GridFunction>> {
            if level.dim() == p.dim() && level.min_level() == 0 {
                return Ok(Arc::new(GridFunction::zeros(level.clone())));
            }
            self.solves.fetch_add(1, Ordering::Relaxed);
            solve_poisson_with(p, level, opts)
                .map(|(g, _)| Arc::new(g))
                .map_err(|e| match e {
                    e @ Error::AtLevel { .. } => e,
                    e => e.at_level(level),
                })
        };
        if !self.enabled {
            let before = self.solves();
            let r = solve();
            return (r, self.solves() > before);
        }
        let slot = {
            let mut slots = self.slots.lock().unwrap();
            slots
                .entry((p.name().to_string(), level.clone()))
                .or_default()
                .clone()
        };
        let mut ran = false;
        let result = slot.get_or_init(|| {
            ran = true;
            solve()
        });
        let solved_now = ran && level.min_level() > 0;
        (result.clone(), solved_now)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub value: f64,
    /// Node count over every contribution to the plan, duplicates included.
    pub dof_total: u128,
    /// Node count over the distinct levels of the plan.
    pub dof_unique: u128,
    /// Grids solved by this call (cache hits and zero grids excluded).
    pub grids_solved: usize,
    pub seconds: f64,
}

/// Weighted sum of the interpolated grid solutions named by `plan` at `x`.
///
/// Distinct levels are solved concurrently under `exec`; the weighted sum
/// is then formed sequentially in ascending level order, so the value does
/// not depend on scheduling or on cache state.
pub fn evaluate_plan(
    p: &ProblemSpec,
    plan: &CombinationPlan,
    x: &Point,
    cache: &GridCache,
    exec: Exec,
) -> Result<EvaluationResult> {
    let start = Instant::now();
    let opts = SolverOptions {
        exec,
        ..Default::default()
    };
    let levels: Vec<&LevelIndex> = plan.levels().collect();
    let solved = exec.map(&levels, |l| {
        let (g, fresh) = cache.get_or_solve(p, l, opts);
        g.and_then(|g| Ok((g.eval(x)?, fresh)))
    });
    let mut pointwise = Vec::with_capacity(solved.len());
    let mut grids_solved = 0;
    for r in solved {
        let (v, fresh) = r?;
        grids_solved += fresh as usize;
        pointwise.push(v);
    }
    let value = weighted_sum(plan, &pointwise);
    Ok(EvaluationResult {
        value,
        dof_total: plan.total_nodes(),
        dof_unique: plan.unique_nodes(),
        grids_solved,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Like [`evaluate_plan`] but with grid functions supplied by `source`
/// (for example samples of a known solution) instead of solves.
pub fn evaluate_plan_with<F>(plan: &CombinationPlan, x: &Point, source: F) -> Result<f64>
where
    F: Fn(&LevelIndex) -> Result<GridFunction>,
{
    let pointwise = plan
        .levels()
        .map(|l| source(l).and_then(|g| g.eval(x)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(weighted_sum(plan, &pointwise))
}

fn weighted_sum(plan: &CombinationPlan, pointwise: &[f64]) -> f64 {
    plan.terms()
        .zip(pointwise)
        .map(|((_, c), v)| rational::to_f64(c) * v)
        .fold(0.0, |acc, t| acc + t)
}
