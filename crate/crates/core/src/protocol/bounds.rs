//! Closed-form error recursions, evaluated as run diagnostics.

/// Right-hand sides of the unrolled l1 / l2 error recursion after round `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimate {
    pub l1_bound: f64,
    pub l2_bound: f64,
    /// `a_n >= 1`: the recursion does not contract and the bound says nothing.
    pub vacuous: bool,
}

/// `l1 = (1 - a^{t+1}) / (1 - a) * 48 s / kappa * g + a^{t+1} e0`
/// `l2 = (1 - a^{t+1}) / (1 - a) * 12 sqrt(s) / kappa * g + a^t b e0`
pub fn bound_rhs(t: u32, a_n: f64, b_n: f64, s: f64, kappa: f64, grad_inf: f64, err0_l1: f64) -> BoundEstimate {
    if a_n >= 1.0 {
        return BoundEstimate { l1_bound: f64::INFINITY, l2_bound: f64::INFINITY, vacuous: true };
    }
    let a_t = a_n.powi(t as i32);
    let a_t1 = a_t * a_n;
    let geometric = (1.0 - a_t1) / (1.0 - a_n);
    BoundEstimate {
        l1_bound: geometric * 48.0 * s / kappa * grad_inf + a_t1 * err0_l1,
        l2_bound: geometric * 12.0 * s.sqrt() / kappa * grad_inf + a_t * b_n * err0_l1,
        vacuous: false,
    }
}

/// Contraction factor `a_n` and l2 factor `b_n` for sparsity `s`, restricted
/// curvature `kappa`, smoothness `l`, and `max |x| = max_abs_x`.
pub fn contraction_factors(s: f64, kappa: f64, l: f64, max_abs_x: f64, n: usize, p: usize, delta: f64) -> (f64, f64) {
    let root = ((2.0 * p as f64 / delta).ln() / n as f64).sqrt();
    let x2 = max_abs_x * max_abs_x;
    (96.0 * s * l / kappa * x2 * root, 24.0 * (s * l).sqrt() / kappa * x2 * root)
}
