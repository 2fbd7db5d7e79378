//! Composite trapezoidal quadrature with Richardson extrapolation.
//!
//! Integrals are evaluated on a uniform grid that is doubled until two
//! successive Richardson-extrapolated estimates agree. Agreement is measured
//! relative to the L1 norm of the integrand, so integrals that cancel to
//! (nearly) zero still have a meaningful convergence test.

use num_complex::Complex64;

use crate::error::{CrlbError, Result};

/// Grid and tolerance settings for [`Quadrature::integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Number of intervals of the coarsest grid.
    pub base_intervals: usize,
    /// Maximum number of grid doublings after the first two.
    pub max_refinements: usize,
    /// Relative disagreement tolerance between successive extrapolations.
    pub rel_tol: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            base_intervals: 1 << 14,
            max_refinements: 6,
            rel_tol: 1e-8,
        }
    }
}

impl Quadrature {
    pub fn with_base_intervals(mut self, n: usize) -> Self {
        self.base_intervals = n.max(2);
        self
    }

    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    /// Plain composite trapezoid on `n` intervals, no refinement.
    pub fn trapezoid<const N: usize, F>(f: F, a: f64, b: f64, n: usize) -> [Complex64; N]
    where
        F: Fn(f64) -> [Complex64; N],
    {
        let mut out = [Complex64::new(0.0, 0.0); N];
        if !(b > a) || n == 0 {
            return out;
        }
        let h = (b - a) / n as f64;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let v = f(a + h * i as f64);
            for (o, vi) in out.iter_mut().zip(v.iter()) {
                *o += vi * w;
            }
        }
        for o in out.iter_mut() {
            *o *= h;
        }
        out
    }

    /// Integrate a vector of `N` integrands over `[a, b]` simultaneously.
    ///
    /// Every component must converge; the returned values are the finest
    /// Richardson-extrapolated estimates.
    pub fn integrate<const N: usize, F>(&self, f: F, a: f64, b: f64) -> Result<[Complex64; N]>
    where
        F: Fn(f64) -> [Complex64; N],
    {
        let zero = Complex64::new(0.0, 0.0);
        if !(b > a) {
            return Ok([zero; N]);
        }
        let mut n = self.base_intervals.max(2);
        let mut h = (b - a) / n as f64;

        // Running trapezoid sums of f and |f| (endpoint-weighted).
        let mut sum = [zero; N];
        let mut abs_sum = [0.0f64; N];
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let v = f(a + h * i as f64);
            for c in 0..N {
                sum[c] += v[c] * w;
                abs_sum[c] += v[c].norm() * w;
            }
        }

        let mut trap_prev = sum.map(|s| s * h);
        let mut rich_prev: Option<[Complex64; N]> = None;
        let mut worst = f64::INFINITY;

        for level in 0..(self.max_refinements + 2) {
            // Add midpoints.
            let mut mid = [zero; N];
            let mut mid_abs = [0.0f64; N];
            for i in 0..n {
                let v = f(a + h * (i as f64 + 0.5));
                for c in 0..N {
                    mid[c] += v[c];
                    mid_abs[c] += v[c].norm();
                }
            }
            for c in 0..N {
                sum[c] += mid[c];
                abs_sum[c] += mid_abs[c];
            }
            n *= 2;
            h *= 0.5;
            let trap = sum.map(|s| s * h);
            let mut rich = [zero; N];
            for c in 0..N {
                rich[c] = (trap[c] * 4.0 - trap_prev[c]) / 3.0;
            }

            if let Some(prev) = rich_prev {
                worst = 0.0;
                for c in 0..N {
                    let scale = (abs_sum[c] * h).max(rich[c].norm());
                    let diff = (rich[c] - prev[c]).norm();
                    let rel = if scale > 0.0 { diff / scale } else { 0.0 };
                    worst = worst.max(rel);
                }
                if worst <= self.rel_tol {
                    return Ok(rich);
                }
            }
            let _ = level;
            rich_prev = Some(rich);
            trap_prev = trap;
        }

        Err(CrlbError::QuadratureNonconvergence {
            a,
            b,
            rel_diff: worst,
            tol: self.rel_tol,
        })
    }

    /// Convenience wrapper for a single complex integrand.
    pub fn integrate_one<F>(&self, f: F, a: f64, b: f64) -> Result<Complex64>
    where
        F: Fn(f64) -> Complex64,
    {
        self.integrate(|t| [f(t)], a, b).map(|v| v[0])
    }
}
