/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b - A x‖ / ‖b‖`, recomputed from the true residual.
    pub relative_residual: f64,
    pub converged: bool,
    /// Recurrence residual norms, one per iteration.
    pub residual_history: Vec<f64>,
}

/// Conjugate gradients for `A x = b` with `A` self-adjoint and positive
/// definite under `dot`, from a zero start vector. `observe` sees every
/// iterate.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    dot: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    tol: f64,
    max_iters: usize,
    mut observe: impl FnMut(&[f64]),
) -> CgOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            residual_history: Vec::new(),
        };
    }
    let target = tol * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        if iterations >= max_iters {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        iterations += 1;
        observe(&x);
        let rr_new = dot(&r, &r);
        history.push(rr_new.sqrt());
        if rr_new.sqrt() <= target {
            // Guard against drift of the recurrence residual.
            let ax = apply(&x);
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let true_rr = dot(&r, &r);
            if true_rr.sqrt() <= target {
                rr = true_rr;
                break;
            }
            p.clone_from(&r);
            rr = true_rr;
            continue;
        }
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    let relative_residual = rr.sqrt() / b_norm;
    CgOutcome {
        solution: x,
        iterations,
        relative_residual,
        converged: relative_residual <= tol,
        residual_history: history,
    }
}
