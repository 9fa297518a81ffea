//! Independent reference computations for acceptance testing: exact 1-D
//! stationary laws via the speed-measure formula, moment identities for the
//! shot-noise OU, and the direct-sum empirical oracle.
//!
//! By policy this module shares no code with `schemes` or `empirical`, so
//! agreement between a simulation and an oracle is evidence rather than
//! tautology.

use std::io::Write;
use std::sync::Arc;

use crate::quad::adaptive_simpson;
use crate::{Error, Result};

/// A reference law: a gridded density, a set of moments, or a closed-form CDF.
#[derive(Clone)]
pub enum ReferenceLaw {
    Density1d {
        grid: Vec<f64>,
        values: Vec<f64>,
        /// CDF at the grid nodes (trapezoid-cumulative, normalized to 1).
        cum: Vec<f64>,
    },
    /// (monomial degree, moment value).
    MomentSet(Vec<(u32, f64)>),
    Cdf(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ReferenceLaw {
    /// CDF evaluator; gridded densities interpolate their cumulative
    /// linearly and clamp outside the grid.
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            ReferenceLaw::Cdf(f) => f(t),
            ReferenceLaw::Density1d { grid, cum, .. } => {
                if t <= grid[0] {
                    return 0.0;
                }
                if t >= *grid.last().unwrap() {
                    return 1.0;
                }
                let h = grid[1] - grid[0];
                let pos = (t - grid[0]) / h;
                let i = (pos as usize).min(grid.len() - 2);
                let frac = pos - i as f64;
                cum[i] + frac * (cum[i + 1] - cum[i])
            }
            ReferenceLaw::MomentSet(_) => f64::NAN,
        }
    }

    pub fn moment(&self, degree: u32) -> Option<f64> {
        match self {
            ReferenceLaw::MomentSet(ms) => ms.iter().find(|(d, _)| *d == degree).map(|(_, v)| *v),
            _ => None,
        }
    }

    /// Export a gridded density as CSV rows `x,density`.
    pub fn write_density_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let ReferenceLaw::Density1d { grid, values, .. } = self else {
            return Err(Error::input("only gridded densities export as CSV"));
        };
        writeln!(w, "x,density")?;
        for (x, v) in grid.iter().zip(values) {
            writeln!(w, "{x:.17e},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Relative tolerance of the speed-measure quadratures.
const QUAD_TOL: f64 = 1e-12;

/// Stationary density of a 1-D diffusion dX = b dt + sigma dW by the
/// classical speed-measure formula
/// `m(x) ~ sigma(x)^{-2} exp(int_{x0}^x 2 b / sigma^2)`,
/// normalized over the (uniform) grid hull. The anchor x0 is the grid
/// midpoint; normalization removes the arbitrary constant.
pub fn stationary_density_1d<B, S>(b: B, sigma: S, grid: &[f64]) -> Result<ReferenceLaw>
where
    B: Fn(f64) -> f64,
    S: Fn(f64) -> f64,
{
    if grid.len() < 3 {
        return Err(Error::input("grid needs at least 3 points"));
    }
    let h = grid[1] - grid[0];
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs() {
            return Err(Error::input("grid must be uniformly spaced"));
        }
    }
    for &x in grid {
        if !(sigma(x) > 0.0) {
            return Err(Error::input(format!(
                "sigma must be positive on the grid (x = {x})"
            )));
        }
    }
    let mid = grid.len() / 2;
    let integrand = |x: f64| 2.0 * b(x) / (sigma(x) * sigma(x));
    // cumulative exponent outward from the anchor
    let mut exponent = vec![0.0; grid.len()];
    for i in (mid + 1)..grid.len() {
        exponent[i] =
            exponent[i - 1] + adaptive_simpson(&integrand, grid[i - 1], grid[i], QUAD_TOL);
    }
    for i in (0..mid).rev() {
        exponent[i] =
            exponent[i + 1] - adaptive_simpson(&integrand, grid[i], grid[i + 1], QUAD_TOL);
    }
    let mut log_m: Vec<f64> = grid
        .iter()
        .zip(&exponent)
        .map(|(x, e)| e - 2.0 * sigma(*x).ln())
        .collect();
    let top = log_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_m.iter_mut().for_each(|v| *v -= top);
    let values: Vec<f64> = log_m.iter().map(|v| v.exp()).collect();

    // composite Simpson normalization (trapezoid closes an even panel count)
    let mass = composite_simpson(&values, h);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::input("no invariant probability detected on grid"));
    }
    let boundary = values[0].max(*values.last().unwrap());
    let peak = values.iter().copied().fold(0.0_f64, f64::max);
    if boundary > 1e-4 * peak {
        return Err(Error::input("no invariant probability detected on grid"));
    }
    let values: Vec<f64> = values.iter().map(|v| v / mass).collect();
    let mut cum = vec![0.0; values.len()];
    for i in 1..values.len() {
        cum[i] = cum[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
    }
    let total = *cum.last().unwrap();
    cum.iter_mut().for_each(|v| *v /= total);
    Ok(ReferenceLaw::Density1d {
        grid: grid.to_vec(),
        values,
        cum,
    })
}

fn composite_simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let mut s = 0.0;
    let panels = (n - 1) / 2;
    for k in 0..panels {
        let i = 2 * k;
        s += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
    }
    if (n - 1) % 2 == 1 {
        s += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    s
}

/// Stationary first and second moments of the shot-noise OU
/// dX = -theta X dt + jump dN (constant censoring), from the invariance
/// identity nu(Af) = 0 applied to f(x) = x and f(x) = x^2:
/// `mu1 = rate m1 / theta`, `mu2 = (2 rate m1 mu1 + rate m2) / (2 theta)`.
pub fn levy_ou_moments(theta: f64, rate: f64, jump_m1: f64, jump_m2: f64) -> Result<ReferenceLaw> {
    if !(theta > 0.0) {
        return Err(Error::input("theta must be positive"));
    }
    if rate < 0.0 {
        return Err(Error::input("rate must be nonnegative"));
    }
    let mu1 = rate * jump_m1 / theta;
    let mu2 = (2.0 * rate * jump_m1 * mu1 + rate * jump_m2) / (2.0 * theta);
    Ok(ReferenceLaw::MomentSet(vec![(1, mu1), (2, mu2)]))
}

/// Direct weighted sum `sum_k eta_k f(x_k) / sum_k eta_k`: the oracle
/// against the streaming recursion.
pub fn batch_empirical<F: Fn(&[f64]) -> f64>(
    states: &[Vec<f64>],
    weights: &[f64],
    f: F,
) -> Result<f64> {
    if states.len() != weights.len() {
        return Err(Error::input("states and weights must have equal length"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, w) in states.iter().zip(weights) {
        num += w * f(x);
        den += w;
    }
    Ok(num / den)
}

/// Standard normal CDF via `libm::erfc`; the complementary form keeps full
/// precision in the left tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Gamma(shape = k integer, scale) CDF by the closed-form Erlang series
/// `1 - e^{-x/scale} sum_{j<k} (x/scale)^j / j!`; covers the CIR reference.
pub fn erlang_cdf(shape: u32, scale: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let t = x / scale;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..shape {
            term *= t / j as f64;
            sum += term;
        }
        1.0 - (-t).exp() * sum
    }
}
