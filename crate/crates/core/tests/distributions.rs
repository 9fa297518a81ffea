//! Statistical contracts of the increment generators and steppers, checked
//! at 4-sigma tolerances with fixed seeds, plus the order-statistics
//! Wasserstein oracle.

use std::sync::Arc;

use ergodic_core::empirical::EmpiricalAccumulator;
use ergodic_core::model::catalog::{self, Dynamics};
use ergodic_core::model::{CorrectionField, DiffusionModel, TestFunctional};
use ergodic_core::oracles::normal_cdf;
use ergodic_core::schedules::Schedule;
use ergodic_core::schemes::{
    euler_kernel, jump_euler_step, simulate_chain, EulerStepper, IncrementGenerator, IncrementMode,
    LevyAreaMode,
};

fn gen(seed: u64, mode: IncrementMode) -> IncrementGenerator {
    IncrementGenerator::new(seed, 0, mode, LevyAreaMode::Exact1d)
}

/// M_{N,2}(U): componentwise mean 0 and covariance identity within 4 sigma
/// over 1e6 draws, for both the Gaussian and Rademacher modes.
#[test]
fn increment_moment_matching() {
    let d = 2;
    let n = 1_000_000usize;
    for mode in [IncrementMode::Gaussian, IncrementMode::Rademacher] {
        let mut inc = gen(0xD151, mode);
        let mut u = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut cov = vec![0.0; d * d];
        for _ in 0..n {
            inc.fill_u(&mut u);
            for i in 0..d {
                mean[i] += u[i];
                for j in 0..d {
                    cov[i * d + j] += u[i] * u[j];
                }
            }
        }
        let nf = n as f64;
        // Var(U_i) = 1, so the mean's 4-sigma band is 4/sqrt(n)
        for i in 0..d {
            let m = mean[i] / nf;
            assert!(m.abs() <= 4.0 / nf.sqrt(), "{mode:?}: mean[{i}] = {m}");
        }
        // Var(U_i U_j) = 1 off-diagonal; Var(U_i^2) = 2 (Gaussian), 0 (Rademacher)
        for i in 0..d {
            for j in 0..d {
                let c = cov[i * d + j] / nf;
                let target = if i == j { 1.0 } else { 0.0 };
                let sigma = if i == j {
                    match mode {
                        IncrementMode::Gaussian => (2.0 / nf).sqrt(),
                        IncrementMode::Rademacher => 1e-15,
                    }
                } else {
                    (1.0 / nf).sqrt()
                };
                assert!(
                    (c - target).abs() <= 4.0 * sigma + 1e-12,
                    "{mode:?}: cov[{i}{j}] = {c}"
                );
            }
        }
    }
}

/// Exact1d iterated integral: E[W] = 0 and E[W^2] = 1/2 within 4 sigma over
/// 1e6 draws (Var(W) = 1/2 and Var(W^2) = ... for Gaussian U, consistent
/// with W = (U^2 - 1)/2).
#[test]
fn exact1d_iterated_integral_moments() {
    let n = 1_000_000usize;
    let mut inc = gen(0xD152, IncrementMode::Gaussian);
    let mut u = [0.0];
    let mut w = [0.0];
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for _ in 0..n {
        inc.fill_u(&mut u);
        inc.fill_w(&u, &mut w).unwrap();
        s1 += w[0];
        s2 += w[0] * w[0];
    }
    let nf = n as f64;
    let m1 = s1 / nf;
    let m2 = s2 / nf;
    // Var(W) = 1/2 -> 4 sigma band for the mean
    assert!(m1.abs() <= 4.0 * (0.5 / nf).sqrt(), "E[W] = {m1}");
    // W^2 = (U^2-1)^2/4 has variance (E[(U^2-1)^4] - 4)/16 = (60 - 12)/16 = 3
    assert!((m2 - 0.5).abs() <= 4.0 * (3.0 / nf).sqrt(), "E[W^2] = {m2}");
}

/// One-step weak order: for b(x) = -x, sigma = 1, E[X_gamma | x] = x(1 - gamma)
/// exactly; the Monte Carlo mean matches to 4 sigma.
#[test]
fn euler_one_step_conditional_mean() {
    let model = DiffusionModel::new(
        1,
        Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]),
        Arc::new(|_: &[f64], out: &mut [f64]| out[0] = 1.0),
        CorrectionField::Zero,
        true,
    )
    .unwrap();
    let x0 = 1.7;
    let gamma = 0.2;
    let n = 200_000usize;
    let mut inc = gen(0xD153, IncrementMode::Gaussian);
    let mut u = [0.0];
    let mut out = [0.0];
    let mut sum = 0.0;
    for _ in 0..n {
        inc.fill_u(&mut u);
        euler_kernel(&model, &[x0], gamma, &u, &mut out).unwrap();
        sum += out[0];
    }
    let mean = sum / n as f64;
    let expect = x0 * (1.0 - gamma);
    // Var(X_gamma) = gamma
    let se = (gamma / n as f64).sqrt();
    assert!((mean - expect).abs() <= 4.0 * se, "mean {mean} vs {expect}");
}

/// With constant zeta and finite pi the jump step's increment is a compound
/// Poisson sum; its first two moments match gamma zeta pi(F) E[c] and the
/// second-moment formula within 4 sigma of a direct compound-Poisson
/// sampler oracle.
#[test]
fn jump_step_reduces_to_compound_poisson() {
    use rand::{Rng, SeedableRng};
    // Exp(1) marks, rate 2, raw regime (q = 1/2), zero drift
    let entry = catalog::cpoisson_exp_ou(0.0, 2.0, 0.5).unwrap();
    let Dynamics::Jump { model, drift } = &entry.dynamics else {
        panic!()
    };
    let gamma = 0.3;
    let n = 200_000usize;
    let mut inc = gen(0xD154, IncrementMode::Gaussian);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let out = jump_euler_step(model, drift, &[0.0], gamma, &mut inc).unwrap();
        s1 += out[0];
        s2 += out[0] * out[0];
    }
    let nf = n as f64;
    let (m1, m2) = (s1 / nf, s2 / nf);

    // closed forms: E = gamma rate E[c] = 0.6; E[.^2] = Var + E^2 with
    // Var = gamma rate E[c^2] = 0.6 * 2 = 1.2
    let e1 = gamma * 2.0 * 1.0;
    let e2 = gamma * 2.0 * 2.0 + e1 * e1;

    // direct compound-Poisson oracle (independent sampler)
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xD155);
    let (mut o1, mut o2) = (0.0, 0.0);
    for _ in 0..n {
        // inverse-CDF Poisson(gamma * rate) by direct search
        let lambda = gamma * 2.0;
        let mut k = 0u32;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let target: f64 = rng.random();
        while target > cdf && k < 200 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        let mut sum = 0.0;
        for _ in 0..k {
            let u: f64 = rng.random();
            sum += -(1.0 - u).max(f64::MIN_POSITIVE).ln();
        }
        o1 += sum;
        o2 += sum * sum;
    }
    let (om1, om2) = (o1 / nf, o2 / nf);

    // 4-sigma bands from the oracle's own spread
    let var1 = gamma * 2.0 * 2.0; // Var of the increment
    let se1 = (var1 / nf).sqrt();
    assert!((m1 - e1).abs() <= 4.0 * se1, "first moment {m1} vs {e1}");
    assert!((om1 - e1).abs() <= 4.0 * se1, "oracle drifted: {om1}");
    // rough variance of X^2 via the oracle sample
    let var2 = (o2 / nf - om2 * om2).abs().max(1.0);
    let se2 = (var2 / nf).sqrt() * 3.0;
    assert!((m2 - e2).abs() <= 4.0 * se2, "second moment {m2} vs {e2}");
    assert!(
        (m2 - om2).abs() <= 8.0 * se2,
        "scheme vs oracle: {m2} vs {om2}"
    );
}

/// The accumulator's H_n agrees with the schedule's compensated H_sum within
/// 1e-12 relative after a driven run.
#[test]
fn weight_sum_matches_schedule() {
    let entry = catalog::ou(1, 1.0, 1.0).unwrap();
    let Dynamics::Diffusion(m) = entry.dynamics else {
        panic!()
    };
    let sched = Schedule::polynomial(0.5, 1.0 / 3.0, 0.7, 0.25).unwrap();
    let mut acc = EmpiricalAccumulator::new(1);
    acc.register(TestFunctional::constant_one());
    let mut stepper = EulerStepper::new(m, gen(0xD156, IncrementMode::Gaussian));
    let n = 50_000;
    simulate_chain(&mut stepper, &sched, &[0.0], n, &mut [&mut acc]).unwrap();
    let h_acc = acc.weight_sum();
    let h_sched = sched.h_sum(n).unwrap();
    assert!(
        (h_acc - h_sched).abs() <= 1e-12 * h_sched,
        "H_n {h_acc} vs schedule {h_sched}"
    );
    assert_eq!(acc.value("1"), Some(1.0));
}

/// The driver's elapsed Gamma_n agrees with the schedule's Gamma_sum.
#[test]
fn elapsed_time_matches_schedule() {
    let entry = catalog::ou(1, 1.0, 1.0).unwrap();
    let Dynamics::Diffusion(m) = entry.dynamics else {
        panic!()
    };
    let sched = Schedule::equal_polynomial(0.5, 1.0 / 3.0).unwrap();
    let mut stepper = EulerStepper::new(m, gen(0xD158, IncrementMode::Gaussian));
    let n = 50_000;
    let state = simulate_chain(&mut stepper, &sched, &[0.0], n, &mut []).unwrap();
    let g = sched.gamma_sum(n).unwrap();
    assert!((state.gamma_elapsed - g).abs() <= 1e-12 * g);
}

/// Wasserstein-1 of 1e4 Gaussian samples against the exact normal CDF agrees
/// with a direct order-statistics computation within 1e-6.
///
/// The oracle integrates |F_n - Phi| in closed form piece by piece: on each
/// order-statistic interval F_n is the constant i/n, the crossing point is
/// located by bisection, and int Phi dt = t Phi(t) + phi(t) is exact.
#[test]
fn wasserstein_matches_order_statistics_oracle() {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let n = 10_000usize;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xD157);
    let samples: Vec<f64> = (0..n)
        .map(|_| rand_distr::StandardNormal.sample(&mut rng))
        .collect();

    let mut acc = EmpiricalAccumulator::new(1);
    for s in &samples {
        acc.update(&[*s], 1.0).unwrap();
    }
    let (w_module, _) = acc.wasserstein1_1d(0, normal_cdf, 4_000_000).unwrap();

    // ---- oracle ----
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // antiderivative of Phi with limit 0 at -infinity
    let int_phi = |t: f64| t * normal_cdf(t) + phi(t);
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut w_oracle = 0.0;
    // left tail: F_n = 0 below the smallest sample
    w_oracle += int_phi(sorted[0]);
    // right tail: integral of (1 - Phi) above the largest sample
    w_oracle += phi(sorted[n - 1]) - sorted[n - 1] * (1.0 - normal_cdf(sorted[n - 1]));
    for i in 1..n {
        let (a, b) = (sorted[i - 1], sorted[i]);
        if a == b {
            continue;
        }
        let c = i as f64 / nf;
        // integral of |c - Phi| over [a, b]; Phi is increasing, so at most
        // one crossing, found by bisection
        let seg =
            |lo: f64, hi: f64, sign: f64| sign * (c * (hi - lo) - (int_phi(hi) - int_phi(lo)));
        if normal_cdf(b) <= c {
            w_oracle += seg(a, b, 1.0);
        } else if normal_cdf(a) >= c {
            w_oracle += seg(a, b, -1.0);
        } else {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_cdf(mid) < c {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            w_oracle += seg(a, t, 1.0) + seg(t, b, -1.0);
        }
    }

    let dev = (w_module - w_oracle).abs();
    assert!(
        dev < 1e-6,
        "module {w_module} vs oracle {w_oracle} (deviation {dev:e})"
    );
}
