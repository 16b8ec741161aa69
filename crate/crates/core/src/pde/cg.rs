/// Result of a conjugate gradient run.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Unpreconditioned conjugate gradients for a symmetric positive definite
/// operator given as `apply(x, out)`, starting from zero.
pub fn conjugate_gradient<A>(apply: A, rhs: &[f64], rel_tol: f64, max_iter: usize) -> CgOutcome
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let norm_b = dot(rhs, rhs).sqrt();
    if norm_b == 0.0 {
        return CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= rel_tol * norm_b {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    let relative_residual = rr.sqrt() / norm_b;
    CgOutcome {
        solution: x,
        iterations,
        relative_residual,
        converged: relative_residual <= rel_tol,
    }
}
