//! Closed-form solution of the Bernoulli problem on an annulus.
//!
//! For `ω = B(0, R)` and flux `γ < 0` the free boundary is the circle of
//! radius `C(R, γ)`, the root of `C ln C − C ln R = −1/γ`, and the potential
//! is `u = Cγ ln|x| − Cγ ln R + 1`.

use crate::error::{Error, Result};

const MAX_EXPANSIONS: usize = 200;

/// The annulus configuration `(R, γ, C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusSolution {
    pub inner_radius: f64,
    pub gamma: f64,
    pub outer_radius: f64,
}

impl AnnulusSolution {
    pub fn new(inner_radius: f64, gamma: f64) -> Result<Self> {
        let outer_radius = bernoulli_radius(inner_radius, gamma)?;
        Ok(Self {
            inner_radius,
            gamma,
            outer_radius,
        })
    }

    /// Potential at `x`; errors at the origin.
    pub fn potential(&self, x: [f64; 2]) -> Result<f64> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        let c = self.outer_radius;
        Ok(c * self.gamma * (r / self.inner_radius).ln() + 1.0)
    }

    /// `du/dr` at radius `r`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        self.outer_radius * self.gamma / r
    }

    /// Residual of the defining equation at the stored outer radius.
    pub fn residual(&self) -> f64 {
        radius_equation(self.outer_radius, self.inner_radius, self.gamma)
    }
}

fn radius_equation(c: f64, r: f64, gamma: f64) -> f64 {
    c * (c / r).ln() + 1.0 / gamma
}

/// Outer radius `C(R, γ)` of the annulus solution.
///
/// Bracketing bisection: the left side of the equation is increasing for
/// `C > R`, so the bracket starts just above `R` and grows geometrically.
pub fn bernoulli_radius(inner_radius: f64, gamma: f64) -> Result<f64> {
    let fail = |reason| Error::RootFinder {
        inner_radius,
        gamma,
        reason,
    };
    if !(inner_radius > 0.0 && inner_radius.is_finite()) {
        return Err(fail("R must be positive and finite"));
    }
    if !(gamma < 0.0) {
        return Err(fail("gamma must be negative"));
    }
    let f = |c: f64| radius_equation(c, inner_radius, gamma);

    let mut lo = inner_radius * (1.0 + 1e-9);
    let mut hi;
    if f(lo) >= 0.0 {
        // |1/γ| is below the first bracket point; the root sits in (R, lo].
        hi = lo;
        lo = inner_radius;
    } else {
        hi = inner_radius * std::f64::consts::E;
        let mut expansions = 0;
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(fail("bracket expansion limit reached"));
            }
        }
    }

    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    if !(c > inner_radius) || f(c).abs() > 1e-12 {
        return Err(fail("bisection did not reach the residual tolerance"));
    }
    Ok(c)
}

/// `f(R, γ)(x)`; errors at the origin.
pub fn annulus_potential(x: [f64; 2], inner_radius: f64, gamma: f64) -> Result<f64> {
    AnnulusSolution::new(inner_radius, gamma)?.potential(x)
}

/// `R − |x|`: positive inside `B(0, R)`.
pub fn circle_levelset(x: [f64; 2], radius: f64) -> f64 {
    radius - x[0].hypot(x[1])
}
