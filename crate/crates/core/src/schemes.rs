//! One-step transitions for the decreasing-step Euler, Milstein and
//! censored-jump Euler schemes, and the chain driver feeding weighted
//! empirical accumulators.
//!
//! Steppers are pure given (state, gamma, increment draws); independent
//! chains run concurrently on disjoint `stream_id`s, while a single chain is
//! strictly sequential.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::empirical::EmpiricalAccumulator;
use crate::kahan::KahanSum;
use crate::model::{Compensation, DiffusionModel, JumpModel, VecField};
use crate::schedules::Schedule;
use crate::{Error, Result};

/// Law of the normalized Brownian-increment substitutes U_n.
///
/// Both choices match the first two Gaussian moment tensors (mean zero,
/// identity covariance); Rademacher additionally has all moments finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementMode {
    Gaussian,
    Rademacher,
}

/// Strategy for the iterated-integral factors of the Milstein term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevyAreaMode {
    /// d = 1 closed form W = (U^2 - 1)/2.
    Exact1d,
    /// Commutative-noise closed form W^{ij} = (U^i U^j - delta_ij)/2.
    CommutativeClosedForm,
    /// Independent centered substitutes with the true second moment 1/2 off
    /// the diagonal (the diagonal keeps its exact closed form, which needs
    /// no Levy area).
    CenteredSubstitute,
}

/// Seeded, stream-addressed source of scheme increments. Identical
/// (seed, stream_id, mode) reproduce identical draw sequences bitwise.
pub struct IncrementGenerator {
    pub mode: IncrementMode,
    pub levy_area: LevyAreaMode,
    pub seed: u64,
    pub stream_id: u64,
    rng: ChaCha12Rng,
    draws: u64,
}

impl IncrementGenerator {
    pub fn new(seed: u64, stream_id: u64, mode: IncrementMode, levy_area: LevyAreaMode) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            mode,
            levy_area,
            seed,
            stream_id,
            rng,
            draws: 0,
        }
    }

    /// Number of logical draws consumed so far (the chain's rng cursor).
    pub fn draws(&self) -> u64 {
        self.draws
    }

    fn gaussian(&mut self) -> f64 {
        self.draws += 1;
        StandardNormal.sample(&mut self.rng)
    }

    fn rademacher(&mut self) -> f64 {
        self.draws += 1;
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Draw the normalized increment U into `out`.
    pub fn fill_u(&mut self, out: &mut [f64]) {
        match self.mode {
            IncrementMode::Gaussian => out.iter_mut().for_each(|v| *v = self.gaussian()),
            IncrementMode::Rademacher => out.iter_mut().for_each(|v| *v = self.rademacher()),
        }
    }

    /// Fill the iterated-integral factors W^{ij} (row-major d x d) for the
    /// drawn U, according to the configured mode.
    pub fn fill_w(&mut self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let d = u.len();
        debug_assert_eq!(out.len(), d * d);
        match self.levy_area {
            LevyAreaMode::Exact1d => {
                if d != 1 {
                    return Err(Error::config("Exact1d Levy-area mode requires d = 1"));
                }
                out[0] = 0.5 * (u[0] * u[0] - 1.0);
            }
            LevyAreaMode::CommutativeClosedForm => {
                for i in 0..d {
                    for j in 0..d {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        out[i * d + j] = 0.5 * (u[i] * u[j] - delta);
                    }
                }
            }
            LevyAreaMode::CenteredSubstitute => {
                let scale = 0.5_f64.sqrt();
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = if i == j {
                            0.5 * (u[i] * u[i] - 1.0)
                        } else {
                            scale * self.rademacher()
                        };
                    }
                }
            }
        }
        Ok(())
    }

    /// Poisson count with the intensity-overflow guard.
    pub fn poisson(&mut self, lambda: f64) -> Result<u64> {
        if lambda > 1e9 {
            return Err(Error::Resource(format!(
                "Poisson intensity {lambda:e} exceeds 1e9"
            )));
        }
        if lambda <= 0.0 {
            return Ok(0);
        }
        self.draws += 1;
        let pois = Poisson::new(lambda)
            .map_err(|e| Error::input(format!("invalid Poisson intensity {lambda}: {e}")))?;
        Ok(pois.sample(&mut self.rng) as u64)
    }

    pub fn uniform(&mut self, hi: f64) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>() * hi
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

/// Deterministic Euler transition `x + gamma b(x) + sqrt(gamma) sigma(x) u`.
pub fn euler_kernel(
    model: &DiffusionModel,
    x: &[f64],
    gamma: f64,
    u: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let d = model.dim;
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    model.drift_into(x, &mut b);
    model.diffusion_into(x, &mut sigma);
    let sqrt_gamma = gamma.sqrt();
    for i in 0..d {
        let mut noise = 0.0;
        for j in 0..d {
            noise += sigma[i * d + j] * u[j];
        }
        out[i] = x[i] + gamma * b[i] + sqrt_gamma * noise;
    }
    check_finite(out, x, gamma, 0)
}

/// Deterministic Milstein transition: Euler plus the correction term
/// `gamma * sum_{i,j} H_{ij}(x) W^{ij}`.
pub fn milstein_kernel(
    model: &DiffusionModel,
    x: &[f64],
    gamma: f64,
    u: &[f64],
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    euler_kernel(model, x, gamma, u, out)?;
    if !model.has_correction() {
        return Ok(());
    }
    let d = model.dim;
    let mut h = vec![0.0; d * d * d];
    model.correction_into(x, &mut h);
    for i in 0..d {
        for j in 0..d {
            let wij = w[i * d + j];
            if wij == 0.0 {
                continue;
            }
            for m in 0..d {
                out[m] += gamma * h[(i * d + j) * d + m] * wij;
            }
        }
    }
    check_finite(out, x, gamma, 0)
}

fn check_finite(out: &[f64], x: &[f64], gamma: f64, step: u64) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            context: "non-finite state after step".into(),
            state: x.to_vec(),
            gamma,
            step,
        })
    }
}

/// One Euler step with increments drawn from the generator.
pub fn euler_step(
    model: &DiffusionModel,
    x: &[f64],
    gamma: f64,
    inc: &mut IncrementGenerator,
) -> Result<Vec<f64>> {
    let mut u = vec![0.0; model.dim];
    let mut out = vec![0.0; model.dim];
    inc.fill_u(&mut u);
    euler_kernel(model, x, gamma, &u, &mut out)?;
    Ok(out)
}

/// One Milstein step with increments drawn from the generator.
pub fn milstein_step(
    model: &DiffusionModel,
    x: &[f64],
    gamma: f64,
    inc: &mut IncrementGenerator,
) -> Result<Vec<f64>> {
    validate_levy_mode(model, inc.levy_area)?;
    let d = model.dim;
    let mut u = vec![0.0; d];
    let mut w = vec![0.0; d * d];
    let mut out = vec![0.0; d];
    inc.fill_u(&mut u);
    inc.fill_w(&u, &mut w)?;
    milstein_kernel(model, x, gamma, &u, &w, &mut out)?;
    Ok(out)
}

fn validate_levy_mode(model: &DiffusionModel, mode: LevyAreaMode) -> Result<()> {
    match mode {
        LevyAreaMode::Exact1d if model.dim != 1 => {
            Err(Error::config("Exact1d Levy-area mode requires a 1-d model"))
        }
        LevyAreaMode::CommutativeClosedForm if !model.commutative_noise => Err(Error::config(
            "CommutativeClosedForm requires the commutative_noise flag",
        )),
        _ => Ok(()),
    }
}

/// A drawn candidate jump: mark, censoring threshold draw.
pub struct CandidateJump {
    pub mark: Vec<f64>,
    pub v: f64,
}

/// Deterministic censored-jump Euler transition for already-drawn candidate
/// jumps: `x + gamma b_q(x) + M` with the regime-dependent drift and
/// centering.
pub fn jump_euler_kernel(
    jm: &JumpModel,
    drift: &VecField,
    x: &[f64],
    gamma: f64,
    candidates: &[CandidateJump],
    out: &mut [f64],
) -> Result<()> {
    let d = jm.dim;
    let mut b = vec![0.0; d];
    drift(x, &mut b);
    let compensated = jm.compensation() == Compensation::Compensated;

    out.copy_from_slice(x);
    for i in 0..d {
        out[i] += gamma * b[i];
    }
    // raw jump sum J = sum_k c(Z_k, x) 1{V_k <= zeta(Z_k, x)}
    let mut c = vec![0.0; d];
    for cand in candidates {
        if cand.v <= jm.censor(&cand.mark, x) {
            jm.jump_coeff_into(&cand.mark, x, &mut c);
            for i in 0..d {
                out[i] += c[i];
            }
        }
    }
    if compensated {
        // drift correction kappa_q over the full mark space ...
        let mut kappa = vec![0.0; d];
        jm.compensator_into(0.0, x, &mut kappa)
            .map_err(|e| match e {
                Error::Unsupported(_) | Error::Divergent { .. } => Error::config(
                    "compensated regime requires the compensator in closed form or by quadrature",
                ),
                other => other,
            })?;
        // ... and martingale centering over the truncation F_gamma
        let mut center = vec![0.0; d];
        jm.compensator_into(gamma, x, &mut center)?;
        for i in 0..d {
            out[i] += gamma * (kappa[i] - center[i]);
        }
    }
    check_finite(out, x, gamma, 0)
}

/// One censored-jump Euler step: draws K ~ Poisson(gamma zeta_max pi(F_gamma)),
/// then K thinned candidate jumps.
pub fn jump_euler_step(
    jm: &JumpModel,
    drift: &VecField,
    x: &[f64],
    gamma: f64,
    inc: &mut IncrementGenerator,
) -> Result<Vec<f64>> {
    let lambda = gamma * jm.zeta_max * jm.measure.mass(gamma);
    let k = inc.poisson(lambda)?;
    let mut candidates = Vec::with_capacity(k as usize);
    for _ in 0..k {
        let mut mark = vec![0.0; jm.mark_dim];
        jm.measure.sample_into(gamma, inc.rng(), &mut mark);
        let v = inc.uniform(jm.zeta_max);
        candidates.push(CandidateJump { mark, v });
    }
    let mut out = vec![0.0; jm.dim];
    jump_euler_kernel(jm, drift, x, gamma, &candidates, &mut out)?;
    Ok(out)
}

/// A one-step transition with owned scratch, as consumed by the driver.
pub trait Stepper {
    fn dim(&self) -> usize;
    fn step(&mut self, x: &mut [f64], gamma: f64) -> Result<()>;
    /// Logical rng draws consumed so far.
    fn draws(&self) -> u64;
}

pub struct EulerStepper {
    model: DiffusionModel,
    inc: IncrementGenerator,
    u: Vec<f64>,
    next: Vec<f64>,
}

impl EulerStepper {
    pub fn new(model: DiffusionModel, inc: IncrementGenerator) -> Self {
        let d = model.dim;
        Self {
            model,
            inc,
            u: vec![0.0; d],
            next: vec![0.0; d],
        }
    }
}

impl Stepper for EulerStepper {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn step(&mut self, x: &mut [f64], gamma: f64) -> Result<()> {
        self.inc.fill_u(&mut self.u);
        euler_kernel(&self.model, x, gamma, &self.u, &mut self.next)?;
        x.copy_from_slice(&self.next);
        Ok(())
    }

    fn draws(&self) -> u64 {
        self.inc.draws()
    }
}

pub struct MilsteinStepper {
    model: DiffusionModel,
    inc: IncrementGenerator,
    u: Vec<f64>,
    w: Vec<f64>,
    next: Vec<f64>,
}

impl MilsteinStepper {
    pub fn new(model: DiffusionModel, inc: IncrementGenerator) -> Result<Self> {
        validate_levy_mode(&model, inc.levy_area)?;
        let d = model.dim;
        Ok(Self {
            model,
            inc,
            u: vec![0.0; d],
            w: vec![0.0; d * d],
            next: vec![0.0; d],
        })
    }
}

impl Stepper for MilsteinStepper {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn step(&mut self, x: &mut [f64], gamma: f64) -> Result<()> {
        self.inc.fill_u(&mut self.u);
        self.inc.fill_w(&self.u, &mut self.w)?;
        milstein_kernel(&self.model, x, gamma, &self.u, &self.w, &mut self.next)?;
        x.copy_from_slice(&self.next);
        Ok(())
    }

    fn draws(&self) -> u64 {
        self.inc.draws()
    }
}

pub struct JumpEulerStepper {
    jm: JumpModel,
    drift: VecField,
    inc: IncrementGenerator,
    next: Vec<f64>,
}

impl JumpEulerStepper {
    pub fn new(jm: JumpModel, drift: VecField, inc: IncrementGenerator) -> Result<Self> {
        let d = jm.dim;
        // fail fast if a compensated regime lacks any compensator route
        if jm.compensation() == Compensation::Compensated {
            let mut probe = vec![0.0; d];
            jm.compensator_into(0.0, &vec![0.0; d], &mut probe)
                .map_err(|_| {
                    Error::config(
                        "compensated regime requires the compensator in closed form or by quadrature",
                    )
                })?;
        }
        Ok(Self {
            jm,
            drift,
            inc,
            next: vec![0.0; d],
        })
    }
}

impl Stepper for JumpEulerStepper {
    fn dim(&self) -> usize {
        self.jm.dim
    }

    fn step(&mut self, x: &mut [f64], gamma: f64) -> Result<()> {
        let lambda = gamma * self.jm.zeta_max * self.jm.measure.mass(gamma);
        let k = self.inc.poisson(lambda)?;
        let mut candidates = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let mut mark = vec![0.0; self.jm.mark_dim];
            self.jm
                .measure
                .sample_into(gamma, self.inc.rng(), &mut mark);
            let v = self.inc.uniform(self.jm.zeta_max);
            candidates.push(CandidateJump { mark, v });
        }
        jump_euler_kernel(&self.jm, &self.drift, x, gamma, &candidates, &mut self.next)?;
        x.copy_from_slice(&self.next);
        Ok(())
    }

    fn draws(&self) -> u64 {
        self.inc.draws()
    }
}

/// Chain position after a driver run.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub n: u64,
    /// Elapsed scheme time Gamma_n.
    pub gamma_elapsed: f64,
    /// rng cursor of the attached increment generator.
    pub draws: u64,
}

/// Drive a chain for `n_steps`, feeding every sink with
/// (state at Gamma_{k-1}, weight eta_k) before advancing with step gamma_k —
/// the exact pairing of the weighted empirical measure.
///
/// A numeric fault aborts with the last valid state and the step index.
pub fn simulate_chain(
    stepper: &mut dyn Stepper,
    sched: &Schedule,
    x0: &[f64],
    n_steps: u64,
    sinks: &mut [&mut EmpiricalAccumulator],
) -> Result<ChainState> {
    if x0.len() != stepper.dim() {
        return Err(Error::input("initial point dimension mismatch"));
    }
    let mut x = x0.to_vec();
    let elapsed = simulate_chain_segment(stepper, sched, &mut x, 1, n_steps, sinks)?;
    Ok(ChainState {
        x,
        n: n_steps,
        gamma_elapsed: elapsed,
        draws: stepper.draws(),
    })
}

/// Advance a chain through step indices `first..=last` in place, so a run
/// can be split at inspection points without disturbing the schedule/weight
/// pairing. Returns the elapsed Gamma contribution of the segment.
pub fn simulate_chain_segment(
    stepper: &mut dyn Stepper,
    sched: &Schedule,
    x: &mut [f64],
    first: u64,
    last: u64,
    sinks: &mut [&mut EmpiricalAccumulator],
) -> Result<f64> {
    if first == 0 {
        return Err(Error::input("step indices start at 1"));
    }
    let mut elapsed = KahanSum::new();
    for k in first..=last {
        let eta = sched.eta(k)?;
        for sink in sinks.iter_mut() {
            sink.update(x, eta)?;
        }
        let gamma = sched.gamma(k)?;
        stepper.step(x, gamma).map_err(|e| match e {
            Error::Numeric {
                context,
                state,
                gamma,
                ..
            } => Error::Numeric {
                context,
                state,
                gamma,
                step: k,
            },
            other => other,
        })?;
        elapsed.add(gamma);
    }
    Ok(elapsed.value())
}
