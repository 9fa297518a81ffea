//! One-dimensional quadrature: adaptive Simpson and Gauss–Legendre.

/// Adaptive Simpson integration with a relative tolerance.
///
/// Recursion depth is capped at 60; interval halving below that depth means
/// the integrand is pathological at this scale and the current estimate is
/// returned.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let scale = whole.abs().max(1e-300);
    if depth == 0 || delta.abs() <= 15.0 * rel_tol * scale {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, rel_tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, rel_tol, depth - 1)
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
///
/// Roots of P_n found by Newton iteration from the Chebyshev initial guess;
/// standard construction, accurate to machine precision for the sizes used
/// here (n <= 4096).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate f over a finite interval with a fixed Gauss–Legendre rule.
pub fn gl_integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    nodes: &[f64],
    weights: &[f64],
) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        s += w * f(mid + half * x);
    }
    half * s
}

/// Integrate f over (a, +inf) by the rational substitution z = a + t/(1-t).
pub fn gl_integrate_halfline<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    nodes: &[f64],
    weights: &[f64],
) -> f64 {
    let g = |t: f64| {
        let u = 1.0 - t;
        f(a + t / u) / (u * u)
    };
    gl_integrate(g, 0.0, 1.0, nodes, weights)
}
