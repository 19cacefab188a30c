/// Additive floor in the adaptive Heaviside parameter.
pub const BETA_FLOOR: f64 = 1e-6;

/// Smoothed Heaviside step `H_β(y)`.
///
/// Piecewise cubic on `[-β, β]`; continuously differentiable, with a jump
/// in the second derivative at `±β`.
#[inline]
pub fn smoothed_heaviside(y: f64, beta: f64) -> f64 {
    if y < -beta {
        0.0
    } else if y > beta {
        1.0
    } else {
        let t = y / beta;
        (t - t * t * t / 3.0) * 0.75 + 0.5
    }
}

/// `(H, ∂H/∂y, ∂H/∂β)`.
#[inline]
pub fn smoothed_heaviside_derivs(y: f64, beta: f64) -> (f64, f64, f64) {
    if y < -beta {
        (0.0, 0.0, 0.0)
    } else if y > beta {
        (1.0, 0.0, 0.0)
    } else {
        let t = y / beta;
        let h = (t - t * t * t / 3.0) * 0.75 + 0.5;
        let dy = 0.75 * (1.0 - t * t) / beta;
        let db = 0.75 * (-t + t * t * t) / beta;
        (h, dy, db)
    }
}

/// `β(x) = δ‖∇ψ(x)‖ + 1e-6`.
#[inline]
pub fn adaptive_beta(gradient: [f64; 2], delta: f64) -> f64 {
    delta * gradient[0].hypot(gradient[1]) + BETA_FLOOR
}
