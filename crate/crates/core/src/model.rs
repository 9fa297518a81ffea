//! Coefficient data for Brownian diffusions and censored-jump diffusions,
//! plus the Lyapunov / test-function apparatus shared by the schemes and the
//! hypothesis checkers.
//!
//! All model types are immutable after construction and safe to share across
//! threads; coefficient callables must be re-entrant.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::linalg;
use crate::quad;
use crate::{Error, Result};

pub mod catalog;

/// R^d -> R^d field, written into a caller buffer.
pub type VecField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// R^d -> R^{d x d} field (row-major).
pub type MatField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// R^d -> R scalar field.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Drift, diffusion matrix and Milstein correction tensor over R^d.
///
/// The correction field evaluates the contracted tensor
/// `H_{i,j}(x) = sum_l d_{x_l} sigma_i(x) sigma_{l,j}(x)` (a d-vector per
/// pair (i,j), with sigma_i the i-th column of sigma), which is exactly what
/// the Milstein step and the hypothesis checkers consume.
#[derive(Clone)]
pub struct DiffusionModel {
    pub dim: usize,
    drift: VecField,
    diffusion: MatField,
    correction: CorrectionField,
    pub commutative_noise: bool,
}

#[derive(Clone)]
pub enum CorrectionField {
    /// H supplied in closed form: buffer layout `[(i*d + j)*d + m]`.
    ClosedForm(Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
    /// Central-difference fallback built from the diffusion field,
    /// step 1e-5 * (1 + |x|), O(h^2) error. Intended for testing.
    FiniteDifference,
    /// sigma constant: H vanishes identically.
    Zero,
}

impl DiffusionModel {
    pub fn new(
        dim: usize,
        drift: VecField,
        diffusion: MatField,
        correction: CorrectionField,
        commutative_noise: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        Ok(Self {
            dim,
            drift,
            diffusion,
            correction,
            commutative_noise,
        })
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
    }

    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out);
    }

    pub fn has_correction(&self) -> bool {
        !matches!(self.correction, CorrectionField::Zero)
    }

    /// Evaluate the full correction tensor into `out` (length d^3,
    /// layout `[(i*d + j)*d + m]`).
    pub fn correction_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(out.len(), d * d * d);
        match &self.correction {
            CorrectionField::Zero => out.fill(0.0),
            CorrectionField::ClosedForm(h) => h(x, out),
            CorrectionField::FiniteDifference => {
                let h = 1e-5 * (1.0 + linalg::norm(x));
                let mut xp = x.to_vec();
                let mut sig_p = vec![0.0; d * d];
                let mut sig_m = vec![0.0; d * d];
                let mut sig = vec![0.0; d * d];
                // dsig[l][m*d + i] = d sigma_{m,i} / d x_l
                let mut dsig = vec![vec![0.0; d * d]; d];
                (self.diffusion)(x, &mut sig);
                for l in 0..d {
                    xp[l] = x[l] + h;
                    (self.diffusion)(&xp, &mut sig_p);
                    xp[l] = x[l] - h;
                    (self.diffusion)(&xp, &mut sig_m);
                    xp[l] = x[l];
                    for k in 0..d * d {
                        dsig[l][k] = (sig_p[k] - sig_m[k]) / (2.0 * h);
                    }
                }
                for i in 0..d {
                    for j in 0..d {
                        for m in 0..d {
                            let mut s = 0.0;
                            for l in 0..d {
                                s += dsig[l][m * d + i] * sig[l * d + j];
                            }
                            out[(i * d + j) * d + m] = s;
                        }
                    }
                }
            }
        }
    }
}

/// Regime deciding whether small jumps are centered and whether the drift
/// carries the compensator term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    Raw,
    Compensated,
}

/// How mark-space integrals `int_{F_gamma} g(z) pi(dz)` are evaluated.
#[derive(Clone)]
pub enum MarkIntegrator {
    /// Finite support: exact weighted sums over the atoms.
    Atoms(Vec<(f64, Vec<f64>)>),
    /// 1-D mark density; deterministic Gauss–Legendre on the (possibly
    /// half-infinite) truncated support `gamma -> (lo, hi)`.
    Density1d {
        weight: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: Arc<dyn Fn(f64) -> (f64, Option<f64>) + Send + Sync>,
    },
    /// Only a sampler is available; integrals fall back to Monte Carlo.
    SamplerOnly,
}

/// Sampler of a normalized mark law; `gamma` selects the truncation F_gamma
/// (ignored by finite measures, where F_gamma = F).
pub type MarkSampler = Arc<dyn Fn(f64, &mut dyn RngCore, &mut [f64]) + Send + Sync>;

/// The jump measure pi, either finite or sigma-finite through a truncation
/// family.
#[derive(Clone)]
pub enum MarkMeasure {
    Finite {
        total_mass: f64,
        sampler: MarkSampler,
        integrator: MarkIntegrator,
    },
    SigmaFinite {
        /// gamma -> pi(F_gamma); must be non-increasing in gamma and finite
        /// for gamma > 0.
        mass: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        sampler: MarkSampler,
        integrator: MarkIntegrator,
    },
}

impl MarkMeasure {
    pub fn is_finite(&self) -> bool {
        matches!(self, MarkMeasure::Finite { .. })
    }

    /// pi(F_gamma). For finite measures F_gamma = F for every gamma.
    pub fn mass(&self, gamma: f64) -> f64 {
        match self {
            MarkMeasure::Finite { total_mass, .. } => *total_mass,
            MarkMeasure::SigmaFinite { mass, .. } => mass(gamma),
        }
    }

    pub fn sample_into(&self, gamma: f64, rng: &mut dyn RngCore, out: &mut [f64]) {
        match self {
            MarkMeasure::Finite { sampler, .. } => sampler(gamma, rng, out),
            MarkMeasure::SigmaFinite { sampler, .. } => sampler(gamma, rng, out),
        }
    }

    fn integrator(&self) -> &MarkIntegrator {
        match self {
            MarkMeasure::Finite { integrator, .. } => integrator,
            MarkMeasure::SigmaFinite { integrator, .. } => integrator,
        }
    }
}

type TauClosedForm = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

/// Jump coefficient c(z, x), censoring intensity zeta(z, x) and the jump
/// measure pi with its truncation family.
#[derive(Clone)]
pub struct JumpModel {
    pub dim: usize,
    pub mark_dim: usize,
    jump_coeff: Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>,
    censor: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    pub zeta_max: f64,
    pub measure: MarkMeasure,
    pub regime_q: f64,
    compensator: Option<VecField>,
    tau_closed_form: Option<TauClosedForm>,
}

/// Number of Monte Carlo samples used when a measure offers only a sampler.
pub const MC_INTEGRAL_SAMPLES: usize = 10_000;
/// Node count of the deterministic rule for 1-D mark densities.
pub const GL_MARK_NODES: usize = 1024;

impl JumpModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        mark_dim: usize,
        jump_coeff: Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>,
        censor: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
        zeta_max: f64,
        measure: MarkMeasure,
        regime_q: f64,
    ) -> Result<Self> {
        if dim == 0 || mark_dim == 0 {
            return Err(Error::input("dimensions must be positive"));
        }
        if !(zeta_max > 0.0) || !zeta_max.is_finite() {
            return Err(Error::input("zeta_max must be a positive finite bound"));
        }
        if !(regime_q > 0.0) {
            return Err(Error::input("regime q must be positive"));
        }
        Ok(Self {
            dim,
            mark_dim,
            jump_coeff,
            censor,
            zeta_max,
            measure,
            regime_q,
            compensator: None,
            tau_closed_form: None,
        })
    }

    pub fn with_compensator(mut self, compensator: VecField) -> Self {
        self.compensator = Some(compensator);
        self
    }

    pub fn with_tau_closed_form(mut self, tau: TauClosedForm) -> Self {
        self.tau_closed_form = Some(tau);
        self
    }

    pub fn jump_coeff_into(&self, z: &[f64], x: &[f64], out: &mut [f64]) {
        (self.jump_coeff)(z, x, out);
    }

    pub fn censor(&self, z: &[f64], x: &[f64]) -> f64 {
        (self.censor)(z, x)
    }

    /// The compensation regime implied by q and the finiteness of pi:
    /// raw for q <= 1/2, compensated for q in (1/2, 1], and for q > 1
    /// compensated exactly when pi(F) is infinite.
    pub fn compensation(&self) -> Compensation {
        let q = self.regime_q;
        if q <= 0.5 {
            Compensation::Raw
        } else if q <= 1.0 {
            Compensation::Compensated
        } else if self.measure.is_finite() {
            Compensation::Raw
        } else {
            Compensation::Compensated
        }
    }

    /// Integrate a scalar mark functional over F_gamma against pi with the
    /// default Monte Carlo budget.
    pub fn integrate_marks<G: FnMut(&[f64]) -> f64>(
        &self,
        gamma: f64,
        g: G,
    ) -> Result<(f64, Option<f64>)> {
        self.integrate_marks_with(gamma, MC_INTEGRAL_SAMPLES, g)
    }

    /// Integrate a scalar mark functional over F_gamma against pi.
    ///
    /// Atomic and 1-D-density measures are integrated deterministically;
    /// sampler-only measures fall back to Monte Carlo with `mc_samples`
    /// draws, and the standard error of that estimate is returned.
    pub fn integrate_marks_with<G: FnMut(&[f64]) -> f64>(
        &self,
        gamma: f64,
        mc_samples: usize,
        mut g: G,
    ) -> Result<(f64, Option<f64>)> {
        match self.measure.integrator() {
            MarkIntegrator::Atoms(atoms) => {
                let v = atoms.iter().map(|(m, z)| m * g(z)).sum();
                Ok((v, None))
            }
            MarkIntegrator::Density1d { weight, support } => {
                let (lo, hi) = support(gamma);
                let (nodes, weights) = quad::gauss_legendre(GL_MARK_NODES);
                let eval = |z: f64| weight(z) * g(&[z]);
                let v = match hi {
                    Some(hi) => quad::gl_integrate(eval, lo, hi, &nodes, &weights),
                    None => quad::gl_integrate_halfline(eval, lo, &nodes, &weights),
                };
                if !v.is_finite() || v.abs() > 1e300 {
                    return Err(Error::Divergent {
                        what: "mark integral".into(),
                        partial: v,
                    });
                }
                Ok((v, None))
            }
            MarkIntegrator::SamplerOnly => {
                let mass = self.measure.mass(gamma);
                if !mass.is_finite() {
                    return Err(Error::Unsupported(
                        "sigma-finite measure with no truncation budget and no closed form".into(),
                    ));
                }
                let mut rng = ChaCha12Rng::seed_from_u64(0x6d61726b_u64);
                let mut z = vec![0.0; self.mark_dim];
                let mut sum = 0.0;
                let mut sum2 = 0.0;
                let n = mc_samples.max(1);
                for _ in 0..n {
                    self.measure.sample_into(gamma, &mut rng, &mut z);
                    let v = g(&z);
                    sum += v;
                    sum2 += v * v;
                }
                let mean = sum / n as f64;
                let var = (sum2 / n as f64 - mean * mean).max(0.0);
                let se = mass * (var / n as f64).sqrt();
                Ok((mass * mean, Some(se)))
            }
        }
    }

    /// Compensator `int_{F_gamma} c(z, x) zeta(z, x) pi(dz)` written into `out`.
    ///
    /// `gamma = 0` selects the full mark space F; in that case a closed-form
    /// compensator supplied with the model is used directly.
    pub fn compensator_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let full = gamma == 0.0 || self.measure.is_finite();
        if full {
            if let Some(comp) = &self.compensator {
                comp(x, out);
                return Ok(());
            }
        }
        let mut c = vec![0.0; self.dim];
        for i in 0..self.dim {
            let (v, _) = self.integrate_marks(gamma, |z| {
                (self.jump_coeff)(z, x, &mut c);
                c[i] * (self.censor)(z, x)
            })?;
            out[i] = v;
        }
        Ok(())
    }

    /// Censored jump moment `tau_{p,gamma}(x) = int_{F_gamma} |c|^{2p} zeta dpi`.
    ///
    /// `gamma = 0` integrates over all of F.
    pub fn tau_p(&self, p: f64, gamma: f64, x: &[f64]) -> Result<f64> {
        if let Some(tau) = &self.tau_closed_form {
            return Ok(tau(p, gamma, x));
        }
        let mut c = vec![0.0; self.dim];
        let (v, _) = self.integrate_marks(gamma, |z| {
            (self.jump_coeff)(z, x, &mut c);
            linalg::norm2(&c).powf(p) * (self.censor)(z, x)
        })?;
        Ok(v)
    }
}

/// Test/mean-reversion function shape psi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psi {
    /// psi(y) = y^p
    Polynomial { p: f64 },
    /// psi(y) = exp(lambda * y^p), p <= 1/2
    Exponential { lambda: f64, p: f64 },
}

impl Psi {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Psi::Polynomial { p } => y.powf(*p),
            Psi::Exponential { lambda, p } => (lambda * y.powf(*p)).exp(),
        }
    }

    /// psi''(y) / psi'(y), the only combination the checkers need.
    pub fn ratio_second_first(&self, y: f64) -> Result<f64> {
        match self {
            Psi::Polynomial { p } => {
                if *p == 0.0 {
                    return Err(Error::input("psi'(y) = 0 for the constant psi (p = 0)"));
                }
                Ok((p - 1.0) / y)
            }
            Psi::Exponential { lambda, p } => {
                if *lambda == 0.0 || *p == 0.0 {
                    return Err(Error::input("psi'(y) = 0 for degenerate exponential psi"));
                }
                Ok((p - 1.0) / y + lambda * p * y.powf(p - 1.0))
            }
        }
    }
}

/// Lyapunov function with its derivative fields and the constants the
/// hypothesis checkers consume.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub dim: usize,
    v: ScalarField,
    grad_v: VecField,
    hess_v: MatField,
    /// v_* > 0, the global lower bound of V.
    pub v_star: f64,
    /// |grad V|^2 <= C_V V (essentially quadratic V).
    pub c_v: f64,
    /// sup-norm of the Hessian of V.
    pub hess_sup: f64,
    /// Lipschitz constant of sqrt(V).
    pub sqrt_v_lip: f64,
    pub psi: Psi,
    /// phi(y) = y^a with a in (0, 1].
    pub phi_exponent: f64,
}

impl LyapunovSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        v: ScalarField,
        grad_v: VecField,
        hess_v: MatField,
        v_star: f64,
        c_v: f64,
        hess_sup: f64,
        sqrt_v_lip: f64,
        psi: Psi,
        phi_exponent: f64,
    ) -> Result<Self> {
        if !(v_star > 0.0) {
            return Err(Error::input("v_star must be positive"));
        }
        if !(phi_exponent > 0.0 && phi_exponent <= 1.0) {
            return Err(Error::input("phi exponent a must lie in (0, 1]"));
        }
        if let Psi::Exponential { p, .. } = psi {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::input("exponential psi requires p in [0, 1/2]"));
            }
        }
        Ok(Self {
            dim,
            v,
            grad_v,
            hess_v,
            v_star,
            c_v,
            hess_sup,
            sqrt_v_lip,
            psi,
            phi_exponent,
        })
    }

    pub fn with_psi(mut self, psi: Psi) -> Result<Self> {
        if let Psi::Exponential { p, .. } = psi {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::input("exponential psi requires p in [0, 1/2]"));
            }
        }
        self.psi = psi;
        Ok(self)
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        (self.v)(x)
    }

    pub fn grad_v_into(&self, x: &[f64], out: &mut [f64]) {
        (self.grad_v)(x, out);
    }

    pub fn hess_v_into(&self, x: &[f64], out: &mut [f64]) {
        (self.hess_v)(x, out);
    }

    pub fn phi(&self, y: f64) -> f64 {
        y.powf(self.phi_exponent)
    }
}

/// Growth class of a registered test functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthClass {
    /// Vanishes outside the closed ball of the given radius.
    CompactSupport {
        radius: f64,
    },
    Polynomial {
        degree: f64,
    },
    Exponential {
        lambda: f64,
        p: f64,
    },
}

/// A scalar observable registered with the empirical accumulator.
#[derive(Clone)]
pub struct TestFunctional {
    pub label: String,
    eval: ScalarField,
    pub growth: GrowthClass,
}

impl TestFunctional {
    pub fn new(label: impl Into<String>, eval: ScalarField, growth: GrowthClass) -> Self {
        Self {
            label: label.into(),
            eval,
            growth,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// The constant functional 1 (normalization witness).
    pub fn constant_one() -> Self {
        Self::new(
            "1",
            Arc::new(|_: &[f64]| 1.0),
            GrowthClass::Polynomial { degree: 0.0 },
        )
    }

    /// x -> x_coord^degree.
    pub fn monomial(coord: usize, degree: u32) -> Self {
        Self::new(
            format!("x{coord}^{degree}"),
            Arc::new(move |x: &[f64]| x[coord].powi(degree as i32)),
            GrowthClass::Polynomial {
                degree: degree as f64,
            },
        )
    }
}

/// A C^2 test function with closed-form gradient and Hessian, as required to
/// apply infinitesimal generators pointwise.
#[derive(Clone)]
pub struct SmoothFunctional {
    pub label: String,
    pub eval: ScalarField,
    pub grad: VecField,
    pub hess: MatField,
    pub growth: GrowthClass,
}

impl SmoothFunctional {
    /// Classic C-infinity bump exp(-1/(1 - |x-c|^2/r^2)) on the open ball of
    /// radius r around `center`, 0 outside, rescaled so the peak value is 1.
    pub fn bump(center: &[f64], radius: f64) -> Self {
        let c: Vec<f64> = center.to_vec();
        let c2 = c.clone();
        let c3 = c.clone();
        let r2 = radius * radius;
        // t = |x-c|^2 / r^2, f = e * exp(-1/(1-t)) for t < 1
        let t_of = move |x: &[f64], c: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..x.len() {
                let d = x[i] - c[i];
                s += d * d;
            }
            s / r2
        };
        let t1 = t_of;
        let t2 = t_of;
        let t3 = t_of;
        let eval: ScalarField = Arc::new(move |x: &[f64]| {
            let t = t1(x, &c);
            if t >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - t)).exp()
            }
        });
        let grad: VecField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let t = t2(x, &c2);
            if t >= 1.0 {
                out.fill(0.0);
                return;
            }
            let f = (1.0 - 1.0 / (1.0 - t)).exp();
            let g1 = -1.0 / ((1.0 - t) * (1.0 - t));
            for i in 0..x.len() {
                out[i] = f * g1 * 2.0 * (x[i] - c2[i]) / r2;
            }
        });
        let hess: MatField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let d = x.len();
            let t = t3(x, &c3);
            if t >= 1.0 {
                out.fill(0.0);
                return;
            }
            let f = (1.0 - 1.0 / (1.0 - t)).exp();
            let u = 1.0 - t;
            let g1 = -1.0 / (u * u);
            let g2 = -2.0 / (u * u * u);
            for i in 0..d {
                for j in 0..d {
                    let vi = 2.0 * (x[i] - c3[i]) / r2;
                    let vj = 2.0 * (x[j] - c3[j]) / r2;
                    let mut h = f * (g1 * g1 + g2) * vi * vj;
                    if i == j {
                        h += f * g1 * 2.0 / r2;
                    }
                    out[i * d + j] = h;
                }
            }
        });
        let center_norm = linalg::norm(center);
        Self {
            label: format!("bump(c={:?},r={})", center, radius),
            eval,
            grad,
            hess,
            growth: GrowthClass::CompactSupport {
                radius: center_norm + radius,
            },
        }
    }

    /// x -> x_coord^degree with exact derivatives.
    pub fn monomial(dim: usize, coord: usize, degree: u32) -> Self {
        let p = degree as i32;
        let eval: ScalarField = Arc::new(move |x: &[f64]| x[coord].powi(p));
        let grad: VecField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            if p >= 1 {
                out[coord] = p as f64 * x[coord].powi(p - 1);
            }
        });
        let hess: MatField = Arc::new(move |x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            if p >= 2 {
                out[coord * dim + coord] = (p * (p - 1)) as f64 * x[coord].powi(p - 2);
            }
        });
        Self {
            label: format!("x{coord}^{degree}"),
            eval,
            grad,
            hess,
            growth: GrowthClass::Polynomial {
                degree: degree as f64,
            },
        }
    }

    pub fn as_test_functional(&self) -> TestFunctional {
        TestFunctional::new(self.label.clone(), self.eval.clone(), self.growth)
    }
}

/// Apply the Brownian-diffusion generator
/// `A f(x) = <b(x), grad f(x)> + 1/2 Tr[sigma sigma^*(x) D^2 f(x)]`.
pub fn diffusion_generator_apply(
    model: &DiffusionModel,
    f: &SmoothFunctional,
    x: &[f64],
) -> Result<f64> {
    let d = model.dim;
    if x.len() != d {
        return Err(Error::input(format!(
            "point dimension {} does not match model dimension {d}",
            x.len()
        )));
    }
    let mut b = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut hess = vec![0.0; d * d];
    let mut ssa = vec![0.0; d * d];
    model.drift_into(x, &mut b);
    (f.grad)(x, &mut grad);
    model.diffusion_into(x, &mut sigma);
    (f.hess)(x, &mut hess);
    linalg::a_at(&sigma, d, &mut ssa);
    let mut second = 0.0;
    for i in 0..d {
        for j in 0..d {
            second += ssa[i * d + j] * hess[i * d + j];
        }
    }
    Ok(linalg::dot(&b, &grad) + 0.5 * second)
}

/// Apply the censored-jump generator
/// `A f(x) = <b(x), grad f(x)> + int_F (f(x + c(z,x)) - f(x)) zeta(z,x) pi(dz)`.
///
/// The jump integral is exact for atomic or 1-D-density measures; otherwise
/// it is an unbiased Monte Carlo estimate whose standard error is returned.
pub fn jump_generator_apply(
    jm: &JumpModel,
    drift: &VecField,
    f: &SmoothFunctional,
    x: &[f64],
    quad_nodes: usize,
) -> Result<(f64, Option<f64>)> {
    let d = jm.dim;
    if x.len() != d {
        return Err(Error::input(format!(
            "point dimension {} does not match model dimension {d}",
            x.len()
        )));
    }
    if quad_nodes == 0 {
        return Err(Error::input("quad_nodes must be positive"));
    }
    let mut b = vec![0.0; d];
    let mut grad = vec![0.0; d];
    drift(x, &mut b);
    (f.grad)(x, &mut grad);
    let fx = (f.eval)(x);
    let mut shifted = vec![0.0; d];
    let mut c = vec![0.0; d];
    let (jump_term, se) = jm.integrate_marks_with(0.0, quad_nodes, |z| {
        jm.jump_coeff_into(z, x, &mut c);
        for i in 0..d {
            shifted[i] = x[i] + c[i];
        }
        ((f.eval)(&shifted) - fx) * jm.censor(z, x)
    })?;
    Ok((linalg::dot(&b, &grad) + jump_term, se))
}

/// Findings of a sampled-grid model validation. Findings are reported, never
/// thrown.
#[derive(Debug, Clone)]
pub struct ModelReport {
    pub finite_everywhere: bool,
    pub nonfinite_at: Option<Vec<f64>>,
    /// max_{i,j,x} |H_{i,j}(x) - H_{j,i}(x)| when the commutative flag is set
    /// (always evaluated for d = 1, where it is identically 0).
    pub commutativity_residual: Option<f64>,
    /// max over sampled (z, x) of zeta(z, x) / zeta_max.
    pub censor_max_ratio: Option<f64>,
    pub notes: Vec<String>,
}

impl ModelReport {
    pub fn passed(&self) -> bool {
        self.finite_everywhere
            && self.commutativity_residual.is_none_or(|r| r < 1e-8)
            && self.censor_max_ratio.is_none_or(|r| r <= 1.0 + 1e-12)
    }
}

/// Check finiteness of all diffusion coefficients on the grid, and the
/// commutativity residual when the model is flagged commutative.
pub fn validate_diffusion(model: &DiffusionModel, grid: &[Vec<f64>]) -> ModelReport {
    let d = model.dim;
    let mut report = ModelReport {
        finite_everywhere: true,
        nonfinite_at: None,
        commutativity_residual: None,
        censor_max_ratio: None,
        notes: Vec::new(),
    };
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut h = vec![0.0; d * d * d];
    let check_comm = model.commutative_noise || d == 1;
    let mut residual: f64 = 0.0;
    for x in grid {
        model.drift_into(x, &mut b);
        model.diffusion_into(x, &mut sigma);
        model.correction_into(x, &mut h);
        let finite = b
            .iter()
            .chain(sigma.iter())
            .chain(h.iter())
            .all(|v| v.is_finite());
        if !finite && report.finite_everywhere {
            report.finite_everywhere = false;
            report.nonfinite_at = Some(x.clone());
        }
        if check_comm {
            for i in 0..d {
                for j in (i + 1)..d {
                    for m in 0..d {
                        let diff = (h[(i * d + j) * d + m] - h[(j * d + i) * d + m]).abs();
                        residual = residual.max(diff);
                    }
                }
            }
        }
    }
    if check_comm {
        report.commutativity_residual = Some(residual);
        if residual >= 1e-8 {
            report
                .notes
                .push(format!("commutativity residual {residual:e} exceeds 1e-8"));
        }
    }
    report
}

/// Check finiteness of jump coefficients and the censoring bound on the grid,
/// with marks drawn deterministically from the model's own sampler.
pub fn validate_jump(model: &JumpModel, grid: &[Vec<f64>]) -> ModelReport {
    let d = model.dim;
    let mut report = ModelReport {
        finite_everywhere: true,
        nonfinite_at: None,
        commutativity_residual: None,
        censor_max_ratio: None,
        notes: Vec::new(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(0x76616c69_u64);
    let mut marks: Vec<Vec<f64>> = Vec::new();
    if let MarkIntegrator::Atoms(atoms) = model.measure.integrator() {
        marks.extend(atoms.iter().map(|(_, z)| z.clone()));
    }
    for _ in 0..128 {
        let mut z = vec![0.0; model.mark_dim];
        model.measure.sample_into(1e-3, &mut rng, &mut z);
        marks.push(z);
    }
    let mut c = vec![0.0; d];
    let mut max_ratio: f64 = 0.0;
    for x in grid {
        for z in &marks {
            model.jump_coeff_into(z, x, &mut c);
            let zeta = model.censor(z, x);
            if !zeta.is_finite() || c.iter().any(|v| !v.is_finite()) {
                if report.finite_everywhere {
                    report.finite_everywhere = false;
                    report.nonfinite_at = Some(x.clone());
                }
                continue;
            }
            max_ratio = max_ratio.max(zeta / model.zeta_max);
        }
    }
    report.censor_max_ratio = Some(max_ratio);
    if max_ratio > 1.0 + 1e-12 {
        report.notes.push(format!(
            "censor exceeds declared zeta_max by factor {max_ratio}"
        ));
    }
    report
}

/// Log-radial verification grid: the origin plus `dirs` unit directions at
/// each radius. Directions are deterministic (fixed-seed normal draws).
pub fn log_radial_grid(
    dim: usize,
    radii: &[f64],
    dirs: usize,
    include_origin: bool,
) -> Vec<Vec<f64>> {
    let mut points = Vec::new();
    if include_origin {
        points.push(vec![0.0; dim]);
    }
    let directions: Vec<Vec<f64>> = if dim == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(0x67726964_u64);
        let mut dirs_v = Vec::with_capacity(dirs);
        for _ in 0..dirs {
            let mut u: Vec<f64> = (0..dim)
                .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
                .collect();
            let n = linalg::norm(&u).max(1e-12);
            u.iter_mut().for_each(|v| *v /= n);
            dirs_v.push(u);
        }
        dirs_v
    };
    for r in radii {
        for u in &directions {
            points.push(u.iter().map(|v| v * r).collect());
        }
    }
    points
}

/// The default grid used by hypothesis checkers: origin plus radii
/// 1, 10, 100, 1000 with 64 directions each.
pub fn standard_grid(dim: usize) -> Vec<Vec<f64>> {
    log_radial_grid(dim, &[1.0, 10.0, 100.0, 1000.0], 64, true)
}

/// Max-ratio Hoelder constant estimator over deterministic random pairs:
/// sup |f(y) - f(x)| / |y - x|^alpha on pairs drawn in the ball of the given
/// radius. A fallback for constants the user does not supply.
pub fn holder_estimate<F: Fn(&[f64]) -> f64>(
    f: F,
    dim: usize,
    alpha: f64,
    radius: f64,
    pairs: usize,
) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(0x686f6c64_u64);
    let mut best: f64 = 0.0;
    let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| {
                let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                g * radius / (dim as f64).sqrt()
            })
            .collect()
    };
    for _ in 0..pairs {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let dist = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist < 1e-12 {
            continue;
        }
        let ratio = (f(&y) - f(&x)).abs() / dist.powf(alpha);
        best = best.max(ratio);
    }
    best
}

/// Parameter map for catalog construction (string key -> value).
pub type Params = BTreeMap<String, f64>;
