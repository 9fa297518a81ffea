//! Built-in models used by the CLI and the acceptance runs.
//!
//! Every entry ships with the essentially quadratic Lyapunov function
//! V(x) = 1 + |x|^2 (v_* = 1, C_V = 4, ||D^2 V|| = 2, [sqrt V]_1 = 1),
//! which satisfies the recursive-control hypotheses for all catalog
//! dynamics at suitable (alpha, beta).

use std::sync::Arc;

use super::{
    CorrectionField, DiffusionModel, JumpModel, LyapunovSpec, MarkIntegrator, MarkMeasure, Params,
    Psi, VecField,
};
use crate::{Error, Result};

/// A catalog model: either a Brownian diffusion or a censored-jump diffusion
/// with its drift.
#[derive(Clone)]
pub enum Dynamics {
    Diffusion(DiffusionModel),
    Jump { model: JumpModel, drift: VecField },
}

#[derive(Clone)]
pub struct CatalogEntry {
    pub key: String,
    pub dynamics: Dynamics,
    pub lyapunov: LyapunovSpec,
}

impl CatalogEntry {
    pub fn dim(&self) -> usize {
        match &self.dynamics {
            Dynamics::Diffusion(m) => m.dim,
            Dynamics::Jump { model, .. } => model.dim,
        }
    }
}

fn param(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// V(x) = 1 + |x|^2 with closed-form derivatives.
pub fn quadratic_lyapunov(dim: usize, psi: Psi, phi_exponent: f64) -> LyapunovSpec {
    LyapunovSpec::new(
        dim,
        Arc::new(|x: &[f64]| 1.0 + x.iter().map(|v| v * v).sum::<f64>()),
        Arc::new(|x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = 2.0 * v;
            }
        }),
        Arc::new(move |_: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..dim {
                out[i * dim + i] = 2.0;
            }
        }),
        1.0, // v_*
        4.0, // C_V
        2.0, // ||D^2 V||_inf
        1.0, // [sqrt V]_1
        psi,
        phi_exponent,
    )
    .expect("quadratic Lyapunov constants are valid")
}

/// Ornstein–Uhlenbeck: b(x) = -theta x, sigma = sigma_0 I (constant).
pub fn ou(dim: usize, theta: f64, sigma: f64) -> Result<CatalogEntry> {
    let model = DiffusionModel::new(
        dim,
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -theta * v;
            }
        }),
        Arc::new(move |_: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..dim {
                out[i * dim + i] = sigma;
            }
        }),
        CorrectionField::Zero,
        true,
    )?;
    Ok(CatalogEntry {
        key: "ou".into(),
        dynamics: Dynamics::Diffusion(model),
        lyapunov: quadratic_lyapunov(dim, Psi::Polynomial { p: 2.0 }, 1.0),
    })
}

/// CIR-type square-root diffusion on the line: b(x) = a(m - x),
/// sigma(x) = sigma_0 sqrt(x_+). The diffusion vanishes below zero and the
/// drift is positive there, so excursions outside (0, inf) are transient.
pub fn cir(a: f64, m: f64, sigma0: f64) -> Result<CatalogEntry> {
    if a <= 0.0 || m <= 0.0 || sigma0 <= 0.0 {
        return Err(Error::input("cir parameters must be positive"));
    }
    let model = DiffusionModel::new(
        1,
        Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = a * (m - x[0])),
        Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = sigma0 * x[0].max(0.0).sqrt()),
        // H = sigma' sigma = sigma_0^2 / 2 on x > 0
        CorrectionField::ClosedForm(Arc::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = if x[0] > 0.0 {
                0.5 * sigma0 * sigma0
            } else {
                0.0
            };
        })),
        true,
    )?;
    Ok(CatalogEntry {
        key: "cir".into(),
        dynamics: Dynamics::Diffusion(model),
        lyapunov: quadratic_lyapunov(1, Psi::Polynomial { p: 2.0 }, 1.0),
    })
}

/// Double-well gradient diffusion: b(x) = x - x^3, constant sigma.
pub fn double_well(sigma: f64) -> Result<CatalogEntry> {
    let model = DiffusionModel::new(
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0] - x[0] * x[0] * x[0]),
        Arc::new(move |_: &[f64], out: &mut [f64]| out[0] = sigma),
        CorrectionField::Zero,
        true,
    )?;
    Ok(CatalogEntry {
        key: "double_well".into(),
        dynamics: Dynamics::Diffusion(model),
        lyapunov: quadratic_lyapunov(1, Psi::Polynomial { p: 2.0 }, 1.0),
    })
}

/// Weakly mean-reverting drift b(x) = -x V(x)^{a-1} with V = 1 + |x|^2 and
/// a in (0, 1); the drift grows sublinearly, so phi(y) = y^a is the natural
/// mean-reversion scale.
pub fn weak_ou(a_exp: f64, sigma: f64) -> Result<CatalogEntry> {
    if !(0.0 < a_exp && a_exp <= 1.0) {
        return Err(Error::input("weak_ou exponent a must lie in (0, 1]"));
    }
    let model = DiffusionModel::new(
        1,
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            let v = 1.0 + x[0] * x[0];
            out[0] = -x[0] * v.powf(a_exp - 1.0);
        }),
        Arc::new(move |_: &[f64], out: &mut [f64]| out[0] = sigma),
        CorrectionField::Zero,
        true,
    )?;
    Ok(CatalogEntry {
        key: "weak_ou".into(),
        dynamics: Dynamics::Diffusion(model),
        lyapunov: quadratic_lyapunov(1, Psi::Polynomial { p: 2.0 }, a_exp),
    })
}

/// Shot-noise OU: b(x) = -theta x, unit-size jumps at a point-mass mark with
/// pi(F) = rate and constant censoring zeta = 1.
pub fn shot_noise_ou(theta: f64, rate: f64, jump_size: f64, q: f64) -> Result<CatalogEntry> {
    if rate < 0.0 {
        return Err(Error::input("rate must be nonnegative"));
    }
    let measure = MarkMeasure::Finite {
        total_mass: rate,
        sampler: Arc::new(move |_gamma, _rng, out: &mut [f64]| out[0] = jump_size),
        integrator: MarkIntegrator::Atoms(vec![(rate, vec![jump_size])]),
    };
    let model = JumpModel::new(
        1,
        1,
        Arc::new(|z: &[f64], _x: &[f64], out: &mut [f64]| out[0] = z[0]),
        Arc::new(|_z: &[f64], _x: &[f64]| 1.0),
        1.0,
        measure,
        q,
    )?
    .with_compensator(Arc::new(move |_x: &[f64], out: &mut [f64]| {
        out[0] = rate * jump_size;
    }))
    .with_tau_closed_form(Arc::new(move |p, _gamma, _x| {
        rate * jump_size.abs().powf(2.0 * p)
    }));
    let drift: VecField = Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = -theta * x[0]);
    Ok(CatalogEntry {
        key: "shot_noise_ou".into(),
        dynamics: Dynamics::Jump { model, drift },
        lyapunov: quadratic_lyapunov(1, Psi::Polynomial { p: 2.0 }, 1.0),
    })
}

/// Compound-Poisson OU with Exp(1) mark sizes: c(z, x) = z, zeta = 1,
/// pi(dz) = rate * e^{-z} dz on (0, inf).
pub fn cpoisson_exp_ou(theta: f64, rate: f64, q: f64) -> Result<CatalogEntry> {
    if rate < 0.0 {
        return Err(Error::input("rate must be nonnegative"));
    }
    let measure = MarkMeasure::Finite {
        total_mass: rate,
        sampler: Arc::new(|_gamma, rng: &mut dyn rand::RngCore, out: &mut [f64]| {
            let u: f64 = rand::RngCore::next_u64(rng) as f64 / u64::MAX as f64;
            out[0] = -(1.0 - u).max(f64::MIN_POSITIVE).ln();
        }),
        integrator: MarkIntegrator::Density1d {
            weight: Arc::new(move |z: f64| rate * (-z).exp()),
            support: Arc::new(|_gamma| (0.0, None)),
        },
    };
    let model = JumpModel::new(
        1,
        1,
        Arc::new(|z: &[f64], _x: &[f64], out: &mut [f64]| out[0] = z[0]),
        Arc::new(|_z: &[f64], _x: &[f64]| 1.0),
        1.0,
        measure,
        q,
    )?
    .with_compensator(Arc::new(move |_x: &[f64], out: &mut [f64]| out[0] = rate));
    let drift: VecField = Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = -theta * x[0]);
    Ok(CatalogEntry {
        key: "cpoisson_exp_ou".into(),
        dynamics: Dynamics::Jump { model, drift },
        lyapunov: quadratic_lyapunov(1, Psi::Polynomial { p: 2.0 }, 1.0),
    })
}

/// Sigma-finite-style variant of the exponential-mark model with truncation
/// family F_gamma = (gamma, inf); exercises the truncated quadrature and
/// sampling paths (pi is in fact finite here, which makes oracles easy).
pub fn exp_tail_jump(theta: f64, rate: f64, q: f64) -> Result<CatalogEntry> {
    let measure = MarkMeasure::SigmaFinite {
        mass: Arc::new(move |gamma: f64| rate * (-gamma).exp()),
        sampler: Arc::new(|gamma, rng: &mut dyn rand::RngCore, out: &mut [f64]| {
            // memoryless: Z | Z > gamma  ~  gamma + Exp(1)
            let u: f64 = rand::RngCore::next_u64(rng) as f64 / u64::MAX as f64;
            out[0] = gamma - (1.0 - u).max(f64::MIN_POSITIVE).ln();
        }),
        integrator: MarkIntegrator::Density1d {
            weight: Arc::new(move |z: f64| rate * (-z).exp()),
            support: Arc::new(|gamma| (gamma, None)),
        },
    };
    let model = JumpModel::new(
        1,
        1,
        Arc::new(|z: &[f64], _x: &[f64], out: &mut [f64]| out[0] = z[0]),
        Arc::new(|_z: &[f64], _x: &[f64]| 1.0),
        1.0,
        measure,
        q,
    )?
    .with_compensator(Arc::new(move |_x: &[f64], out: &mut [f64]| out[0] = rate));
    let drift: VecField = Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = -theta * x[0]);
    Ok(CatalogEntry {
        key: "exp_tail_jump".into(),
        dynamics: Dynamics::Jump { model, drift },
        lyapunov: quadratic_lyapunov(1, Psi::Polynomial { p: 2.0 }, 1.0),
    })
}

/// Look up a catalog entry by string key with parameter overrides.
pub fn by_key(key: &str, params: &Params) -> Result<CatalogEntry> {
    match key {
        "ou" => ou(
            param(params, "dim", 1.0) as usize,
            param(params, "theta", 1.0),
            param(params, "sigma", std::f64::consts::SQRT_2),
        ),
        "cir" => cir(
            param(params, "a", 1.0),
            param(params, "m", 1.0),
            param(params, "sigma0", 1.0),
        ),
        "double_well" => double_well(param(params, "sigma", 1.0)),
        "weak_ou" => weak_ou(param(params, "a", 0.5), param(params, "sigma", 1.0)),
        "shot_noise_ou" => shot_noise_ou(
            param(params, "theta", 1.0),
            param(params, "rate", 1.0),
            param(params, "jump_size", 1.0),
            param(params, "q", 1.0),
        ),
        "cpoisson_exp_ou" => cpoisson_exp_ou(
            param(params, "theta", 1.0),
            param(params, "rate", 1.0),
            param(params, "q", 1.0),
        ),
        "exp_tail_jump" => exp_tail_jump(
            param(params, "theta", 1.0),
            param(params, "rate", 1.0),
            param(params, "q", 1.0),
        ),
        other => Err(Error::config(format!("unknown catalog model '{other}'"))),
    }
}

/// Keys accepted by [`by_key`].
pub const KEYS: &[&str] = &[
    "ou",
    "cir",
    "double_well",
    "weak_ou",
    "shot_noise_ou",
    "cpoisson_exp_ou",
    "exp_tail_jump",
];
