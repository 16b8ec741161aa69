//! Direct solve of the assembled interior finite-difference system, used as
//! an oracle for the transform-based solver.
//!
//! The matrix is `-A_h`, symmetric positive definite. Unknowns are ordered
//! with the direction carrying the most interior nodes outermost, which keeps
//! the band to the product of the remaining extents; Cholesky of a banded
//! matrix fills only inside the band, so this is an exact dense factorization.

#![allow(dead_code, clippy::needless_range_loop)]

use sparsecombine::LevelIndex;

pub struct Assembled {
    pub n: usize,
    pub band: usize,
    /// `lower[i * (band + 1) + (i - j)]` holds entry `(i, j)` for `i - band <= j <= i`.
    pub lower: Vec<f64>,
}

fn interior_layout(level: &LevelIndex) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let m: Vec<usize> = level.levels().iter().map(|&l| (1usize << l) - 1).collect();
    let mut perm: Vec<usize> = (0..m.len()).collect();
    perm.sort_by(|&a, &b| m[b].cmp(&m[a]).then(a.cmp(&b)));
    // stride of original direction k in the permuted ordering
    let mut stride = vec![0usize; m.len()];
    let mut s = 1;
    for &k in perm.iter().rev() {
        stride[k] = s;
        s *= m[k];
    }
    (m, perm, stride)
}

pub fn assemble(level: &LevelIndex) -> Assembled {
    let (m, perm, stride) = interior_layout(level);
    let n: usize = m.iter().product();
    let band = stride[perm[0]];
    let inv_h2: Vec<f64> = level.levels().iter().map(|&l| 4f64.powi(l as i32)).collect();
    let mut lower = vec![0.0; n * (band + 1)];
    let mut idx = vec![0usize; m.len()];
    for _ in 0..n {
        let row: usize = idx.iter().zip(&stride).map(|(i, s)| i * s).sum();
        lower[row * (band + 1)] = inv_h2.iter().map(|c| 2.0 * c).sum();
        for k in 0..m.len() {
            if idx[k] > 0 {
                lower[row * (band + 1) + stride[k]] = -inv_h2[k];
            }
        }
        for &k in perm.iter().rev() {
            idx[k] += 1;
            if idx[k] < m[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Assembled { n, band, lower }
}

pub fn cholesky(a: &mut Assembled) {
    let (n, b) = (a.n, a.band);
    let w = b + 1;
    for i in 0..n {
        for j in i.saturating_sub(b)..=i {
            let mut sum = a.lower[i * w + (i - j)];
            for k in i.saturating_sub(b).max(j.saturating_sub(b))..j {
                sum -= a.lower[i * w + (i - k)] * a.lower[j * w + (j - k)];
            }
            if i == j {
                assert!(sum > 0.0, "matrix not positive definite at row {i}");
                a.lower[i * w] = sum.sqrt();
            } else {
                a.lower[i * w + (i - j)] = sum / a.lower[j * w];
            }
        }
    }
}

fn cholesky_solve(a: &Assembled, rhs: &mut [f64]) {
    let (n, b) = (a.n, a.band);
    let w = b + 1;
    for i in 0..n {
        let mut s = rhs[i];
        for j in i.saturating_sub(b)..i {
            s -= a.lower[i * w + (i - j)] * rhs[j];
        }
        rhs[i] = s / a.lower[i * w];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..(i + b + 1).min(n) {
            s -= a.lower[j * w + (j - i)] * rhs[j];
        }
        rhs[i] = s / a.lower[i * w];
    }
}

/// Solves `sum_k D_k^2 u = f` with zero boundary values and returns the full
/// grid (boundary included) in lexicographic order, last index fastest.
pub fn dense_solve(level: &LevelIndex, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let (m, _, stride) = interior_layout(level);
    let mut a = assemble(level);
    let h = level.mesh_widths();
    let d = m.len();
    let n = a.n;

    let mut rhs = vec![0.0; n];
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    for _ in 0..n {
        for k in 0..d {
            x[k] = (idx[k] + 1) as f64 * h[k];
        }
        let row: usize = idx.iter().zip(&stride).map(|(i, s)| i * s).sum();
        rhs[row] = -f(&x);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < m[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    cholesky(&mut a);
    cholesky_solve(&a, &mut rhs);

    let pts: Vec<usize> = m.iter().map(|v| v + 2).collect();
    let mut full = vec![0.0; pts.iter().product()];
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        let row: usize = idx.iter().zip(&stride).map(|(i, s)| i * s).sum();
        let mut flat = 0;
        for k in 0..d {
            flat = flat * pts[k] + idx[k] + 1;
        }
        full[flat] = rhs[row];
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < m[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    full
}

/// Random level vectors with `d <= 3`, every `l_j >= 1` and at most
/// `max_nodes` nodes. At least one level per call has a direction long
/// enough to take the FFT path of the sine transform.
pub fn random_levels<R: rand::Rng>(rng: &mut R, count: usize, max_nodes: u128) -> Vec<LevelIndex> {
    let mut out: Vec<LevelIndex> = Vec::with_capacity(count);
    while out.len() < count {
        let d = rng.gen_range(1..=3);
        let cap = if out.is_empty() { 12 } else { 10 };
        let mut levels: Vec<u32> = (0..d).map(|_| rng.gen_range(1..=cap)).collect();
        if out.is_empty() {
            levels[0] = 8;
        }
        let l = LevelIndex::new(levels);
        if l.node_count() <= max_nodes && !out.contains(&l) {
            out.push(l);
        }
    }
    out
}
