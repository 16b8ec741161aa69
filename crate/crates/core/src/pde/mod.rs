//! Second-order central differences for the Poisson problem
//! `sum_k d^2 u / dx_k^2 = f` on the unit cube with `u = 0` on the boundary.
//!
//! The discrete operator is the Kronecker sum of 1D second-difference
//! matrices. Its Dirichlet eigenvectors are discrete sine modes, so the
//! primary solver transforms the right-hand side direction by direction,
//! divides by the summed eigenvalues and transforms back. A conjugate
//! gradient solver is kept as a fallback for operators without that
//! structure.

mod cg;
pub mod dst;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{GridFunction, LevelIndex, Point};

pub use cg::{conjugate_gradient, CgOutcome};
use dst::SineTransform;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A Poisson problem with homogeneous Dirichlet data.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    dim: usize,
    rhs: ScalarField,
    exact: Option<ScalarField>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new<F>(name: impl Into<String>, dim: usize, rhs: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(dim >= 1, "problem dimension must be positive");
        ProblemSpec {
            name: name.into(),
            dim,
            rhs: Arc::new(rhs),
            exact: None,
        }
    }

    pub fn with_exact<F>(mut self, exact: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rhs(&self, x: &[f64]) -> f64 {
        (self.rhs)(x)
    }

    pub fn exact(&self, x: &[f64]) -> Option<f64> {
        self.exact.as_ref().map(|u| u(x))
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact_fn(&self) -> Option<ScalarField> {
        self.exact.clone()
    }
}

/// `f(x) = d pi^2 prod sin(pi x_i)` with exact solution `u(x) = -prod sin(pi x_i)`.
pub fn builtin_sine_problem(dim: usize) -> ProblemSpec {
    let sines = |x: &[f64]| x.iter().map(|&t| (PI * t).sin()).product::<f64>();
    let scale = dim as f64 * PI * PI;
    ProblemSpec::new(format!("sine{dim}"), dim, move |x| scale * sines(x)).with_exact(move |x| -sines(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub level: LevelIndex,
    /// Max-norm of `A_h u_h - f_h` over interior nodes.
    pub residual_inf: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    #[default]
    FastDiagonalization,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub exec: Exec,
}

pub fn solve_poisson(p: &ProblemSpec, level: &LevelIndex) -> Result<(GridFunction, SolverReport)> {
    solve_poisson_with(p, level, SolverOptions::default())
}

pub fn solve_poisson_with(
    p: &ProblemSpec,
    level: &LevelIndex,
    opts: SolverOptions,
) -> Result<(GridFunction, SolverReport)> {
    check_solvable(p, level)?;
    let start = Instant::now();
    let rhs = interior_rhs(p, level);
    let interior = match opts.kind {
        SolverKind::FastDiagonalization => fast_solve(level, rhs.clone(), opts.exec),
        SolverKind::ConjugateGradient => {
            let inv_h2 = inverse_squares(level);
            let dims = level.interior_per_dim();
            let n = rhs.len();
            // CG on the positive definite -A
            let neg_rhs: Vec<f64> = rhs.iter().map(|v| -v).collect();
            let outcome = conjugate_gradient(
                |u, out| {
                    apply_interior(&dims, &inv_h2, u, out);
                    out.iter_mut().for_each(|v| *v = -*v);
                },
                &neg_rhs,
                1e-12,
                10 * n,
            );
            if !outcome.converged {
                return Err(Error::NotConverged {
                    iterations: outcome.iterations,
                    residual: outcome.relative_residual,
                }
                .at_level(level));
            }
            outcome.solution
        }
    };
    let solve_seconds = start.elapsed().as_secs_f64();
    let residual_inf = interior_residual(level, &interior, &rhs);
    let grid = embed_interior(level, &interior);
    Ok((
        grid,
        SolverReport {
            level: level.clone(),
            residual_inf,
            solve_seconds,
        },
    ))
}

fn check_solvable(p: &ProblemSpec, level: &LevelIndex) -> Result<()> {
    if p.dim() != level.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: level.dim(),
        });
    }
    if level.min_level() == 0 {
        return Err(Error::DegenerateGrid(level.clone()));
    }
    Ok(())
}

fn inverse_squares(level: &LevelIndex) -> Vec<f64> {
    level.levels().iter().map(|&l| (4.0f64).powi(l as i32)).collect()
}

/// Right-hand side restricted to interior nodes, lexicographic order.
pub fn interior_rhs(p: &ProblemSpec, level: &LevelIndex) -> Vec<f64> {
    let m = level.interior_per_dim();
    let h = level.mesh_widths();
    let total = level.interior_count() as usize;
    let mut idx = vec![1usize; m.len()];
    let mut x: Vec<f64> = h.clone();
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        if i > 0 {
            for k in (0..m.len()).rev() {
                idx[k] += 1;
                if idx[k] <= m[k] {
                    x[k] = idx[k] as f64 * h[k];
                    break;
                }
                idx[k] = 1;
                x[k] = h[k];
            }
        }
        out.push(p.rhs(&x));
    }
    out
}

/// Zero boundary, interior filled from `interior` (lexicographic).
pub fn embed_interior(level: &LevelIndex, interior: &[f64]) -> GridFunction {
    let full = level.points_per_dim();
    let inner = level.interior_per_dim();
    let mut values = vec![0.0; level.node_count() as usize];
    let d = full.len();
    let mut idx = vec![0usize; d];
    for &v in interior {
        let mut flat = 0;
        for k in 0..d {
            flat = flat * full[k] + idx[k] + 1;
        }
        values[flat] = v;
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < inner[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    GridFunction::from_values(level.clone(), values).expect("length matches level")
}

/// Fast diagonalization on interior values; consumes the right-hand side.
fn fast_solve(level: &LevelIndex, mut data: Vec<f64>, exec: Exec) -> Vec<f64> {
    let dims = level.interior_per_dim();
    let transforms: Vec<SineTransform> = dims.iter().map(|&m| SineTransform::new(m)).collect();

    transform_all(&mut data, &dims, &transforms, exec);

    // eigenvalues of the 1D second difference: -4 sin^2(k pi h / 2) / h^2
    let eig: Vec<Vec<f64>> = dims
        .iter()
        .map(|&m| {
            let h = 1.0 / (m + 1) as f64;
            (1..=m)
                .map(|k| {
                    let s = (0.5 * PI * k as f64 * h).sin();
                    -4.0 * s * s / (h * h)
                })
                .collect()
        })
        .collect();
    let scale: f64 = dims.iter().map(|&m| 2.0 / (m + 1) as f64).product();
    let last = dims[dims.len() - 1];
    let d = dims.len();
    // Outer directions vary slowest; walk them with a counter per row.
    let rows = data.len() / last;
    let mut idx = vec![0usize; d.saturating_sub(1)];
    for row in 0..rows {
        let base: f64 = idx.iter().enumerate().map(|(k, &j)| eig[k][j]).sum();
        let chunk = &mut data[row * last..(row + 1) * last];
        for (v, &e) in chunk.iter_mut().zip(&eig[d - 1]) {
            *v *= scale / (base + e);
        }
        for k in (0..d.saturating_sub(1)).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }

    transform_all(&mut data, &dims, &transforms, exec);
    data
}

/// Applies the sine transform along every direction of an interior array.
fn transform_all(data: &mut [f64], dims: &[usize], transforms: &[SineTransform], exec: Exec) {
    for (axis, t) in transforms.iter().enumerate() {
        let m = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let block = m * inner;
        exec.for_each_chunk_mut(
            data,
            block,
            || (t.scratch(), vec![0.0; m]),
            |(scratch, line), chunk| {
                for i in 0..inner {
                    for j in 0..m {
                        line[j] = chunk[j * inner + i];
                    }
                    t.apply(line, scratch);
                    for j in 0..m {
                        chunk[j * inner + i] = line[j];
                    }
                }
            },
        );
    }
}

/// `A_h u` on interior-only storage, treating values outside as zero.
pub fn apply_interior(dims: &[usize], inv_h2: &[f64], u: &[f64], out: &mut [f64]) {
    let d = dims.len();
    let mut strides = vec![1usize; d];
    for k in (0..d - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let diag: f64 = -2.0 * inv_h2.iter().sum::<f64>();
    let mut idx = vec![0usize; d];
    for (flat, o) in out.iter_mut().enumerate() {
        let mut acc = diag * u[flat];
        for k in 0..d {
            let mut nb = 0.0;
            if idx[k] > 0 {
                nb += u[flat - strides[k]];
            }
            if idx[k] + 1 < dims[k] {
                nb += u[flat + strides[k]];
            }
            acc += inv_h2[k] * nb;
        }
        *o = acc;
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn interior_residual(level: &LevelIndex, u: &[f64], rhs: &[f64]) -> f64 {
    let mut au = vec![0.0; u.len()];
    apply_interior(&level.interior_per_dim(), &inverse_squares(level), u, &mut au);
    au.iter()
        .zip(rhs)
        .map(|(a, f)| (a - f).abs())
        .fold(0.0, f64::max)
}

/// The `2d + 1`-point Laplacian stencil applied on interior nodes, using the
/// boundary values stored in `g`. Boundary entries of the result are zero.
pub fn apply_operator(g: &GridFunction) -> Result<GridFunction> {
    let level = g.level();
    if level.min_level() == 0 {
        return Err(Error::DegenerateGrid(level.clone()));
    }
    let dims = level.points_per_dim();
    let d = dims.len();
    let inv_h2 = inverse_squares(level);
    let mut strides = vec![1usize; d];
    for k in (0..d - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let v = g.values();
    let mut out = vec![0.0; v.len()];
    let mut idx = vec![0usize; d];
    for (flat, o) in out.iter_mut().enumerate() {
        if idx.iter().zip(&dims).all(|(&j, &n)| j > 0 && j + 1 < n) {
            *o = (0..d)
                .map(|k| {
                    let s = strides[k];
                    (v[flat + s] - 2.0 * v[flat] + v[flat - s]) * inv_h2[k]
                })
                .sum();
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    GridFunction::from_values(level.clone(), out)
}

/// Solves on `level` and interpolates the result at `x`.
pub fn solve_and_eval(p: &ProblemSpec, level: &LevelIndex, x: &Point) -> Result<f64> {
    let (g, _) = solve_poisson(p, level)?;
    g.eval(x)
}
