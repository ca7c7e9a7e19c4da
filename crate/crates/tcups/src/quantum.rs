//! Photon–phonon Langevin dynamics for the two-pulse Stokes protocol.
//!
//! The coupled equations of motion are
//!
//! ```text
//! ȧ(t) = −i g b*(t)
//! ḃ(t) = −i g a*(t) − Γ b(t) + f(t)
//! ```
//!
//! with a rectangular pump coupling g of duration τ_pump and complex white
//! noise f of strength 2Γ, which holds the free-decay second moment ⟨|b|²⟩
//! at the vacuum norm 1. The integrator runs the two-pulse protocol — pump,
//! free decay for the pulse delay, pump again — and reports the occupations
//! of the two Stokes modes and their cross-correlation ⟨a₁*a₂⟩.
//!
//! Conventions: the phonon amplitude is initialized as a complex Gaussian
//! with ⟨|b(0)|²⟩ = N_B + 1, the seed of spontaneous scattering. The Stokes
//! amplitudes track only the scattered component (they start at 0); the free
//! vacuum part of a Stokes mode contributes nothing to the reported
//! occupations or correlations and would only add estimator noise, so it is
//! not sampled. In the weak, transient pump limit the averages reduce to
//!
//! ```text
//! n₁ = n₂ = g²τ_pump²(N_B + 1),    ⟨a₁*a₂⟩ = g²τ_pump²(N_B + 1)e^(−Γτ)
//! ```
//!
//! which [`perturbative_correlation`] returns in closed form; the stochastic
//! integrator must agree with it within its own standard error.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantumError {
    #[error("{quantity} must be strictly positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error("dt = {dt} ps is too coarse; need dt ≤ {limit} ps (= min(τ_pump, 1/Γ)/20)")]
    StepTooCoarse { dt: f64, limit: f64 },
    #[error("need at least 1 trajectory")]
    NoTrajectories,
    #[error("norm check requires coupling = 0, got {0}")]
    CouplingNotZero(f64),
}

/// Soft limits for the weak (gτ_pump) and transient (Γτ_pump) pump regime.
pub const REGIME_WARN_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeWarning {
    /// gτ_pump exceeds the weak-pump threshold
    NotWeak,
    /// Γτ_pump exceeds the transient threshold
    NotTransient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinParams {
    /// Pump-on Raman coupling g (ps⁻¹)
    pub coupling_ps_inv: f64,
    /// Pump pulse duration τ_pump (ps)
    pub pump_duration_ps: f64,
    /// Phonon amplitude dephasing rate Γ (ps⁻¹)
    pub gamma_ps_inv: f64,
    /// Euler–Maruyama step (ps)
    pub dt_ps: f64,
    pub trajectories: u64,
    pub seed: u64,
    /// Initial thermal phonon occupation N_B(0)
    pub thermal_occupation: f64,
}

impl Default for LangevinParams {
    fn default() -> Self {
        Self {
            coupling_ps_inv: 0.125,
            pump_duration_ps: 0.08,
            gamma_ps_inv: 1.0 / 6.8,
            dt_ps: 0.004,
            trajectories: 10_000,
            seed: 1,
            thermal_occupation: 0.0,
        }
    }
}

impl LangevinParams {
    /// Validate hard constraints and collect regime warnings.
    pub fn validate(&self) -> Result<Vec<RegimeWarning>, QuantumError> {
        if !(self.pump_duration_ps > 0.0) {
            return Err(QuantumError::NonPositive {
                quantity: "pump duration",
                value: self.pump_duration_ps,
            });
        }
        if self.coupling_ps_inv < 0.0 || !self.coupling_ps_inv.is_finite() {
            return Err(QuantumError::NonPositive {
                quantity: "coupling",
                value: self.coupling_ps_inv,
            });
        }
        if self.gamma_ps_inv < 0.0 || !self.gamma_ps_inv.is_finite() {
            return Err(QuantumError::NonPositive {
                quantity: "gamma",
                value: self.gamma_ps_inv,
            });
        }
        if self.thermal_occupation < 0.0 {
            return Err(QuantumError::NonPositive {
                quantity: "thermal occupation",
                value: self.thermal_occupation,
            });
        }
        if self.trajectories == 0 {
            return Err(QuantumError::NoTrajectories);
        }
        let limit = self.step_limit();
        if !(self.dt_ps > 0.0) || self.dt_ps > limit * (1.0 + 1e-12) {
            return Err(QuantumError::StepTooCoarse {
                dt: self.dt_ps,
                limit,
            });
        }
        let mut warnings = Vec::new();
        if self.coupling_ps_inv * self.pump_duration_ps > REGIME_WARN_THRESHOLD {
            warnings.push(RegimeWarning::NotWeak);
        }
        if self.gamma_ps_inv * self.pump_duration_ps > REGIME_WARN_THRESHOLD {
            warnings.push(RegimeWarning::NotTransient);
        }
        Ok(warnings)
    }

    /// Largest admissible step: min(τ_pump, 1/Γ)/20.
    pub fn step_limit(&self) -> f64 {
        let mut scale = self.pump_duration_ps;
        if self.gamma_ps_inv > 0.0 {
            scale = scale.min(1.0 / self.gamma_ps_inv);
        }
        scale / 20.0
    }
}

/// Trajectory-averaged result of the two-pulse protocol at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub delay_ps: f64,
    /// ⟨a₁*a₂⟩ estimate
    pub corr_re: f64,
    pub corr_im: f64,
    /// Mode occupations above the vacuum baseline
    pub n1: f64,
    pub n2: f64,
    /// Standard error of the correlation estimate (0 for closed forms)
    pub stderr: f64,
}

impl CorrelationResult {
    pub fn corr(&self) -> Complex64 {
        Complex64::new(self.corr_re, self.corr_im)
    }

    /// |⟨a₁*a₂⟩| ≤ √(n₁n₂) up to estimator noise.
    pub fn satisfies_cauchy_schwarz(&self) -> bool {
        self.corr().norm() <= (self.n1 * self.n2).sqrt() + 3.0 * self.stderr + 1e-15
    }
}

/// Closed-form weak/transient limit: n₁ = n₂ = g²τ_pump²(N_B+1) and
/// corr = n₁·e^(−Γ·delay).
pub fn perturbative_correlation(
    params: &LangevinParams,
    delay_ps: f64,
) -> Result<CorrelationResult, QuantumError> {
    params.validate()?;
    if delay_ps < 0.0 {
        return Err(QuantumError::NonPositive {
            quantity: "delay",
            value: delay_ps,
        });
    }
    let g_tau = params.coupling_ps_inv * params.pump_duration_ps;
    let n = g_tau * g_tau * (params.thermal_occupation + 1.0);
    let corr = n * (-params.gamma_ps_inv * delay_ps).exp();
    Ok(CorrelationResult {
        delay_ps,
        corr_re: corr,
        corr_im: 0.0,
        n1: n,
        n2: n,
        stderr: 0.0,
    })
}

/// Complex Gaussian with ⟨|w|²⟩ = 1.
fn complex_standard<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// Working state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    /// Active Stokes amplitude: the scattered component only (see the
    /// module docs on the vacuum convention).
    pub a: Complex64,
    /// Phonon amplitude; vacuum ensembles satisfy ⟨|b|²⟩ = N_B + 1.
    pub b: Complex64,
    pub t_ps: f64,
}

impl ModeState {
    fn vacuum<R: Rng + ?Sized>(thermal_occupation: f64, rng: &mut R) -> Self {
        Self {
            a: Complex64::default(),
            b: complex_standard(rng) * (thermal_occupation + 1.0).sqrt(),
            t_ps: 0.0,
        }
    }
}

struct Stepper {
    dt: f64,
    gamma: f64,
    noise_amp: f64,
}

impl Stepper {
    fn new(dt: f64, gamma: f64, include_noise: bool) -> Self {
        let noise_amp = if include_noise && gamma > 0.0 {
            (2.0 * gamma * dt).sqrt()
        } else {
            0.0
        };
        Self {
            dt,
            gamma,
            noise_amp,
        }
    }

    /// One Euler–Maruyama step of the coupled pump-on system.
    fn pump_step<R: Rng + ?Sized>(&self, g: f64, state: &mut ModeState, rng: &mut R) {
        let da = Complex64::new(0.0, -g) * state.b.conj() * self.dt;
        let db = Complex64::new(0.0, -g) * state.a.conj() * self.dt
            - state.b * (self.gamma * self.dt)
            + complex_standard(rng) * self.noise_amp;
        state.a += da;
        state.b += db;
        state.t_ps += self.dt;
    }

    /// One step of free phonon decay (pump off).
    fn decay_step<R: Rng + ?Sized>(&self, state: &mut ModeState, rng: &mut R) {
        state.b = state.b * (1.0 - self.gamma * self.dt) + complex_standard(rng) * self.noise_amp;
        state.t_ps += self.dt;
    }
}

/// Split an interval into steps no larger than `dt`, landing exactly on the
/// interval end.
fn steps_for(interval: f64, dt: f64) -> (usize, f64) {
    if interval <= 0.0 {
        return (0, dt);
    }
    let n = (interval / dt).ceil().max(1.0) as usize;
    (n, interval / n as f64)
}

/// Stochastic two-pulse protocol: pump for τ_pump, free decay for
/// `delay_ps`, pump again; returns trajectory-averaged occupations and the
/// inter-pulse correlation with its standard error.
pub fn integrate_langevin(
    params: &LangevinParams,
    delay_ps: f64,
) -> Result<CorrelationResult, QuantumError> {
    params.validate()?;
    if delay_ps < 0.0 {
        return Err(QuantumError::NonPositive {
            quantity: "delay",
            value: delay_ps,
        });
    }
    let g = params.coupling_ps_inv;
    let (pump_steps, pump_dt) = steps_for(params.pump_duration_ps, params.dt_ps);
    let (decay_steps, decay_dt) = steps_for(delay_ps, params.dt_ps);
    let pump = Stepper::new(pump_dt, params.gamma_ps_inv, true);
    let decay = Stepper::new(decay_dt, params.gamma_ps_inv, true);

    // One ChaCha stream per trajectory; slot-indexed so the reduction below
    // is independent of the parallel schedule.
    let samples: Vec<(Complex64, Complex64)> = (0..params.trajectories)
        .into_par_iter()
        .map(|traj| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(traj);
            let mut state = ModeState::vacuum(params.thermal_occupation, &mut rng);
            for _ in 0..pump_steps {
                pump.pump_step(g, &mut state, &mut rng);
            }
            let a1 = state.a;
            for _ in 0..decay_steps {
                decay.decay_step(&mut state, &mut rng);
            }
            // the second pulse scatters into a fresh Stokes mode
            state.a = Complex64::default();
            for _ in 0..pump_steps {
                pump.pump_step(g, &mut state, &mut rng);
            }
            (a1, state.a)
        })
        .collect();

    let n = params.trajectories as f64;
    let mut sum_z = Complex64::default();
    let mut sum_n1 = 0.0;
    let mut sum_n2 = 0.0;
    for (a1, a2) in &samples {
        sum_z += a1.conj() * a2;
        sum_n1 += a1.norm_sqr();
        sum_n2 += a2.norm_sqr();
    }
    let corr = sum_z / n;
    let (mut var_re, mut var_im) = (0.0, 0.0);
    for (a1, a2) in &samples {
        let z = a1.conj() * a2;
        var_re += (z.re - corr.re).powi(2);
        var_im += (z.im - corr.im).powi(2);
    }
    let stderr = if params.trajectories > 1 {
        ((var_re + var_im) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(CorrelationResult {
        delay_ps,
        corr_re: corr.re,
        corr_im: corr.im,
        n1: sum_n1 / n,
        n2: sum_n2 / n,
        stderr,
    })
}

/// Options for [`norm_preservation_check`].
#[derive(Debug, Clone, Copy)]
pub struct NormCheckOptions {
    /// Apply the Langevin noise term (strength 2Γ).
    pub include_noise: bool,
    /// Occupation above vacuum at t = 0; the mean square starts at
    /// 1 + this value.
    pub initial_occupation: f64,
}

impl Default for NormCheckOptions {
    fn default() -> Self {
        Self {
            include_noise: true,
            initial_occupation: 0.0,
        }
    }
}

/// One sampled point of the free-decay second moment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormCheckpoint {
    pub t_ps: f64,
    pub mean_sq: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormCheckReport {
    pub checkpoints: Vec<NormCheckpoint>,
    /// Least-squares slope of ⟨|b|²⟩ vs t over the horizon (per ps).
    pub drift_slope: f64,
    pub final_mean_sq: f64,
    pub final_stderr: f64,
}

/// Free phonon decay with the noise term on or off: verifies that the
/// stationary second moment sits at the vacuum norm 1 (noise on) or decays
/// as e^(−2Γt) (noise off). Requires coupling = 0.
pub fn norm_preservation_check(
    params: &LangevinParams,
    horizon_ps: f64,
    opts: &NormCheckOptions,
) -> Result<NormCheckReport, QuantumError> {
    if params.coupling_ps_inv != 0.0 {
        return Err(QuantumError::CouplingNotZero(params.coupling_ps_inv));
    }
    // the pump never fires here, so only 1/Γ constrains the step
    let probe = LangevinParams {
        coupling_ps_inv: 0.0,
        pump_duration_ps: if params.gamma_ps_inv > 0.0 {
            params.pump_duration_ps.max(1.0 / params.gamma_ps_inv)
        } else {
            params.pump_duration_ps.max(20.0 * params.dt_ps)
        },
        ..*params
    };
    probe.validate()?;
    if !(horizon_ps > 0.0) {
        return Err(QuantumError::NonPositive {
            quantity: "horizon",
            value: horizon_ps,
        });
    }
    const CHECKPOINTS: usize = 32;
    let (steps, dt) = steps_for(horizon_ps, params.dt_ps);
    let every = (steps / CHECKPOINTS).max(1);
    let stepper = Stepper::new(dt, params.gamma_ps_inv, opts.include_noise);

    // per-trajectory trace of |b|² at the checkpoints
    let traces: Vec<Vec<f64>> = (0..params.trajectories)
        .into_par_iter()
        .map(|traj| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(traj);
            let mut state = ModeState::vacuum(opts.initial_occupation, &mut rng);
            let mut trace = vec![state.b.norm_sqr()];
            for step in 1..=steps {
                stepper.decay_step(&mut state, &mut rng);
                if step % every == 0 || step == steps {
                    trace.push(state.b.norm_sqr());
                }
            }
            trace
        })
        .collect();

    let n = params.trajectories as f64;
    let n_points = traces[0].len();
    let mut checkpoints = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let step_idx = if k == 0 { 0 } else { (k * every).min(steps) };
        let t = step_idx as f64 * dt;
        let mean = traces.iter().map(|tr| tr[k]).sum::<f64>() / n;
        let var = traces.iter().map(|tr| (tr[k] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        checkpoints.push(NormCheckpoint {
            t_ps: t,
            mean_sq: mean,
            stderr: (var / n).sqrt(),
        });
    }

    // unweighted linear regression of mean_sq on t
    let mean_t = checkpoints.iter().map(|c| c.t_ps).sum::<f64>() / n_points as f64;
    let mean_y = checkpoints.iter().map(|c| c.mean_sq).sum::<f64>() / n_points as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for c in &checkpoints {
        sxx += (c.t_ps - mean_t).powi(2);
        sxy += (c.t_ps - mean_t) * (c.mean_sq - mean_y);
    }
    let last = checkpoints[n_points - 1];
    Ok(NormCheckReport {
        drift_slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        final_mean_sq: last.mean_sq,
        final_stderr: last.stderr,
        checkpoints,
    })
}
