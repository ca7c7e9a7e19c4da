//! Fluctuating-phase model of the Stokes pulse pair.
//!
//! A transform-limited Gaussian pulse and a delayed copy with relative phase
//! θ interfere in the spectral domain: I(ω) = 2|E₁(ω)|²(1 + cos(ωτ + θ)).
//! Shot to shot, phonon dephasing randomizes θ; averaging over shots damps
//! the fringes to 2|E₁(ω)|²(1 + e^(−Γ|τ|) cos ωτ). Sampling θ as δ·τ with δ
//! drawn from a Cauchy distribution of half-width Γ reproduces that average
//! exactly, since ⟨e^(iδτ)⟩ = e^(−Γ|τ|) is the Cauchy characteristic
//! function.

use num_complex::Complex64;
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Cauchy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::nm_to_thz;
use crate::spectrum::{SpectralAxis, Spectrum, SpectrumError};

/// Gaussian time–bandwidth product: Δν·Δt = 2 ln 2/π ≈ 0.441 for FWHM of
/// intensity in both domains.
pub const GAUSSIAN_TBP: f64 = 2.0 * std::f64::consts::LN_2 / std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("{quantity} must be strictly positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error(
        "grid too narrow: envelope at grid edge is {edge_fraction:.3e} of peak (limit 1e-3); \
         span {span_thz:.3} THz vs bandwidth {bandwidth_thz:.3} THz"
    )]
    GridTooNarrow {
        edge_fraction: f64,
        span_thz: f64,
        bandwidth_thz: f64,
    },
    #[error("ensemble needs at least 1 shot")]
    EmptyEnsemble,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// A pump or Stokes pulse pair: identical Gaussian envelopes, one delayed
/// and phase-shifted copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsePair {
    pub center_wavelength_nm: f64,
    pub duration_fwhm_fs: f64,
    pub delay_ps: f64,
    /// Relative phase θ of the second pulse (per shot).
    pub relative_phase_rad: f64,
}

impl PulsePair {
    pub fn validate(&self) -> Result<(), ClassicalError> {
        if !(self.center_wavelength_nm > 0.0) {
            return Err(ClassicalError::NonPositive {
                quantity: "center wavelength",
                value: self.center_wavelength_nm,
            });
        }
        if !(self.duration_fwhm_fs > 0.0) {
            return Err(ClassicalError::NonPositive {
                quantity: "pulse duration",
                value: self.duration_fwhm_fs,
            });
        }
        if self.delay_ps < 0.0 || !self.delay_ps.is_finite() {
            return Err(ClassicalError::NonPositive {
                quantity: "delay",
                value: self.delay_ps,
            });
        }
        if !self.relative_phase_rad.is_finite() {
            return Err(ClassicalError::NonPositive {
                quantity: "relative phase",
                value: self.relative_phase_rad,
            });
        }
        Ok(())
    }

    /// Transform-limited spectral intensity FWHM in THz.
    pub fn bandwidth_thz(&self) -> f64 {
        GAUSSIAN_TBP / (self.duration_fwhm_fs * 1e-3)
    }

    /// Center optical frequency in THz.
    pub fn center_thz(&self) -> f64 {
        nm_to_thz(self.center_wavelength_nm)
    }
}

/// How the per-shot relative phase is treated when averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// Sample a Cauchy-distributed frequency offset δ (HWHM Γ) per shot and
    /// set θ = δ·τ. Monte Carlo; converges to the closed form as shots → ∞.
    CauchyFrequency,
    /// Apply the ensemble-average fringe damping e^(−Γ|τ|) analytically.
    DirectExponential,
}

/// Shot ensemble description. The same (seed, shots, params) always yields
/// bit-identical averages: shot k draws from ChaCha stream k of `seed`, and
/// the accumulation runs in shot order regardless of how the draws were
/// scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotEnsemble {
    pub shots: u64,
    pub seed: u64,
    pub phase_model: PhaseModel,
}

impl ShotEnsemble {
    pub fn new(shots: u64, seed: u64, phase_model: PhaseModel) -> Result<Self, ClassicalError> {
        if shots == 0 {
            return Err(ClassicalError::EmptyEnsemble);
        }
        Ok(Self {
            shots,
            seed,
            phase_model,
        })
    }
}

/// Uniform optical-frequency grid of `points` samples centered on
/// `center_thz` spanning `span_thz`.
pub fn frequency_grid(center_thz: f64, span_thz: f64, points: usize) -> Vec<f64> {
    let start = center_thz - span_thz / 2.0;
    let step = span_thz / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Frequency grid sized for a pulse: `span_factor` × its bandwidth.
pub fn grid_for_pulse(pulse: &PulsePair, span_factor: f64, points: usize) -> Vec<f64> {
    frequency_grid(
        pulse.center_thz(),
        span_factor * pulse.bandwidth_thz(),
        points,
    )
}

fn envelope(pulse: &PulsePair, grid: &[f64]) -> Result<Vec<f64>, ClassicalError> {
    pulse.validate()?;
    let nu0 = pulse.center_thz();
    let bw = pulse.bandwidth_thz();
    let coeff = 4.0 * std::f64::consts::LN_2 / (bw * bw);
    let env: Vec<f64> = grid
        .iter()
        .map(|&nu| (-coeff * (nu - nu0) * (nu - nu0)).exp())
        .collect();
    let edge = env[0].max(env[env.len() - 1]);
    if edge > 1e-3 {
        return Err(ClassicalError::GridTooNarrow {
            edge_fraction: edge,
            span_thz: grid[grid.len() - 1] - grid[0],
            bandwidth_thz: bw,
        });
    }
    Ok(env)
}

/// Spectral intensity of a single transform-limited pulse: unit-peak
/// Gaussian of FWHM [`PulsePair::bandwidth_thz`] at the center frequency.
pub fn single_pulse_spectrum(pulse: &PulsePair, grid: &[f64]) -> Result<Spectrum, ClassicalError> {
    let env = envelope(pulse, grid)?;
    Ok(Spectrum::new(
        SpectralAxis::FrequencyThz,
        grid.to_vec(),
        env,
        1,
    )?)
}

/// Draw one relative phase θ for a given dephasing rate and delay.
///
/// `CauchyFrequency`: θ = δτ with δ ~ Cauchy(0, Γ). `DirectExponential`
/// never samples; it returns 0 (the damping is applied analytically in
/// [`averaged_spectrum`]).
pub fn sample_phase<R: rand::Rng + ?Sized>(
    model: PhaseModel,
    gamma_ps_inv: f64,
    delay_ps: f64,
    rng: &mut R,
) -> f64 {
    match model {
        PhaseModel::CauchyFrequency => {
            if gamma_ps_inv == 0.0 || delay_ps == 0.0 {
                return 0.0;
            }
            let cauchy = Cauchy::new(0.0, gamma_ps_inv).expect("gamma must be non-negative");
            let delta: f64 = cauchy.sample(rng);
            delta * delay_ps
        }
        PhaseModel::DirectExponential => 0.0,
    }
}

/// Spectral intensity of the pulse pair for one shot:
/// 2|E₁(ν)|²(1 + cos(2πντ + θ)).
pub fn pair_spectrum(pulse: &PulsePair, grid: &[f64]) -> Result<Spectrum, ClassicalError> {
    let phasor = Complex64::from_polar(1.0, pulse.relative_phase_rad);
    pair_spectrum_with_phasor(pulse, grid, phasor, 1)
}

fn pair_spectrum_with_phasor(
    pulse: &PulsePair,
    grid: &[f64],
    mean_phasor: Complex64,
    shots: u64,
) -> Result<Spectrum, ClassicalError> {
    let env = envelope(pulse, grid)?;
    let tau = pulse.delay_ps;
    let intensity: Vec<f64> = grid
        .iter()
        .zip(&env)
        .map(|(&nu, &e)| {
            let (s, c) = (std::f64::consts::TAU * nu * tau).sin_cos();
            // Re(e^{i2πντ}·⟨e^{iθ}⟩)
            let fringe = c * mean_phasor.re - s * mean_phasor.im;
            (2.0 * e * (1.0 + fringe)).max(0.0)
        })
        .collect();
    Ok(Spectrum::new(
        SpectralAxis::FrequencyThz,
        grid.to_vec(),
        intensity,
        shots,
    )?)
}

/// Shot-averaged phase factor ⟨e^(iθ)⟩ for the ensemble. Its modulus is the
/// source fringe visibility.
pub fn ensemble_mean_phasor(
    gamma_ps_inv: f64,
    delay_ps: f64,
    ensemble: &ShotEnsemble,
) -> Complex64 {
    match ensemble.phase_model {
        PhaseModel::DirectExponential => {
            Complex64::new((-gamma_ps_inv * delay_ps.abs()).exp(), 0.0)
        }
        PhaseModel::CauchyFrequency => {
            let n = ensemble.shots;
            // Draws land in a slot per shot index; the final sum runs in
            // index order, so the result does not depend on thread count.
            let phasors: Vec<Complex64> = (0..n)
                .into_par_iter()
                .map(|shot| {
                    let mut rng = ChaCha8Rng::seed_from_u64(ensemble.seed);
                    rng.set_stream(shot);
                    let theta = sample_phase(
                        PhaseModel::CauchyFrequency,
                        gamma_ps_inv,
                        delay_ps,
                        &mut rng,
                    );
                    Complex64::from_polar(1.0, theta)
                })
                .collect();
            phasors.iter().sum::<Complex64>() / n as f64
        }
    }
}

/// Shot-averaged pulse-pair spectrum.
///
/// With `DirectExponential` this is exactly
/// 2|E₁(ν)|²(1 + e^(−Γ|τ|) cos 2πντ); with `CauchyFrequency` it is the mean
/// of [`pair_spectrum`] over freshly sampled phases, which converges to the
/// same limit as shots → ∞.
pub fn averaged_spectrum(
    pulse: &PulsePair,
    gamma_ps_inv: f64,
    ensemble: &ShotEnsemble,
    grid: &[f64],
) -> Result<Spectrum, ClassicalError> {
    if gamma_ps_inv < 0.0 || !gamma_ps_inv.is_finite() {
        return Err(ClassicalError::NonPositive {
            quantity: "gamma",
            value: gamma_ps_inv,
        });
    }
    let phasor = ensemble_mean_phasor(gamma_ps_inv, pulse.delay_ps, ensemble);
    pair_spectrum_with_phasor(pulse, grid, phasor, ensemble.shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn pulse_788() -> PulsePair {
        PulsePair {
            center_wavelength_nm: 788.0,
            duration_fwhm_fs: 80.0,
            delay_ps: 0.0,
            relative_phase_rad: 0.0,
        }
    }

    fn fwhm_of(s: &Spectrum) -> f64 {
        let half = s.intensity().iter().cloned().fold(f64::MIN, f64::max) / 2.0;
        let above: Vec<usize> = s
            .intensity()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= half)
            .map(|(i, _)| i)
            .collect();
        s.pitch() * (above[above.len() - 1] - above[0]) as f64
    }

    #[test]
    fn single_pulse_bandwidth_is_transform_limited() {
        // 80 fs → 5.516 THz FWHM via the Gaussian time-bandwidth product
        let pulse = pulse_788();
        let grid = grid_for_pulse(&pulse, 8.0, 8192);
        let s = single_pulse_spectrum(&pulse, &grid).unwrap();
        assert_relative_eq!(fwhm_of(&s), 0.4412712003053032 / 0.080, max_relative = 2e-3);
        assert_relative_eq!(fwhm_of(&s), 5.5, max_relative = 0.01);
    }

    #[test]
    fn single_pulse_peak_is_unity_at_center() {
        let pulse = pulse_788();
        let grid = grid_for_pulse(&pulse, 8.0, 4097); // odd count puts ν₀ on-grid
        let s = single_pulse_spectrum(&pulse, &grid).unwrap();
        let peak = s.intensity().iter().cloned().fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cw_limit_collapses_to_single_bin() {
        let pulse = PulsePair {
            duration_fwhm_fs: 1e9,
            ..pulse_788()
        };
        let grid = frequency_grid(pulse.center_thz(), 1.0, 4097);
        let s = single_pulse_spectrum(&pulse, &grid).unwrap();
        let peak_idx = 2048;
        assert_abs_diff_eq!(s.intensity()[peak_idx], 1.0, epsilon = 1e-9);
        assert!(s.intensity()[peak_idx - 1] < 1e-12);
        assert!(s.intensity()[peak_idx + 1] < 1e-12);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let pulse = pulse_788();
        let grid = grid_for_pulse(&pulse, 2.0, 512);
        match single_pulse_spectrum(&pulse, &grid) {
            Err(ClassicalError::GridTooNarrow { edge_fraction, .. }) => {
                assert!(edge_fraction > 1e-3)
            }
            other => panic!("expected GridTooNarrow, got {other:?}"),
        }
    }

    #[test]
    fn zero_gamma_phase_is_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(
                sample_phase(PhaseModel::CauchyFrequency, 0.0, 1.0, &mut rng),
                0.0
            );
        }
    }

    #[test]
    fn cauchy_phase_mean_cosine_matches_characteristic_function() {
        // ⟨cos θ⟩ over 10⁶ draws at Γτ = 1 → e⁻¹ ± 0.002, and 0.5 at Γτ = ln 2
        for (gamma_tau, expected) in [(1.0, (-1.0f64).exp()), (std::f64::consts::LN_2, 0.5)] {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let n = 1_000_000;
            let mean: f64 = (0..n)
                .map(|_| sample_phase(PhaseModel::CauchyFrequency, gamma_tau, 1.0, &mut rng).cos())
                .sum::<f64>()
                / n as f64;
            assert_abs_diff_eq!(mean, expected, epsilon = 2e-3);
        }
    }

    #[test]
    fn pair_fringe_maxima_at_constructive_condition() {
        // θ = 0: maxima where ντ is an integer
        let tau = 0.5;
        let pulse = PulsePair {
            delay_ps: tau,
            ..pulse_788()
        };
        let grid = grid_for_pulse(&pulse, 8.0, 16384);
        let s = pair_spectrum(&pulse, &grid).unwrap();
        let env = single_pulse_spectrum(
            &PulsePair {
                delay_ps: 0.0,
                ..pulse
            },
            &grid,
        )
        .unwrap();
        for (i, &nu) in grid.iter().enumerate() {
            let phase = std::f64::consts::TAU * nu * tau;
            let expected = 2.0 * env.intensity()[i] * (1.0 + phase.cos());
            assert_abs_diff_eq!(s.intensity()[i], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_pi_shifts_fringes_half_period() {
        // θ = π negates the fringe term, i.e. shifts the pattern by half a
        // period: the two fringe factors sum to exactly 2 everywhere
        let tau = 0.5;
        let base = PulsePair {
            delay_ps: tau,
            ..pulse_788()
        };
        let flipped = PulsePair {
            relative_phase_rad: std::f64::consts::PI,
            ..base
        };
        let grid = grid_for_pulse(&base, 8.0, 16384);
        let a = pair_spectrum(&base, &grid).unwrap();
        let b = pair_spectrum(&flipped, &grid).unwrap();
        let env = single_pulse_spectrum(
            &PulsePair {
                delay_ps: 0.0,
                ..base
            },
            &grid,
        )
        .unwrap();
        for i in 0..grid.len() {
            if env.intensity()[i] > 1e-3 {
                let fa = a.intensity()[i] / (2.0 * env.intensity()[i]);
                let fb = b.intensity()[i] / (2.0 * env.intensity()[i]);
                assert_abs_diff_eq!(fa + fb, 2.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn direct_exponential_visibility_is_exact() {
        // Γτ = 1 → fringe visibility exactly e⁻¹
        let gamma = 0.5;
        let tau = 2.0;
        let pulse = PulsePair {
            delay_ps: tau,
            ..pulse_788()
        };
        let ens = ShotEnsemble::new(1, 0, PhaseModel::DirectExponential).unwrap();
        let grid = grid_for_pulse(&pulse, 8.0, 16384);
        let s = averaged_spectrum(&pulse, gamma, &ens, &grid).unwrap();
        let env = single_pulse_spectrum(
            &PulsePair {
                delay_ps: 0.0,
                ..pulse
            },
            &grid,
        )
        .unwrap();
        // envelope invariance: s / (2 env) = 1 + V cos(2πντ) with V = e^{-Γτ}
        let v = (-gamma * tau).exp();
        for (i, &nu) in grid.iter().enumerate() {
            if env.intensity()[i] > 1e-6 {
                let fringe = s.intensity()[i] / (2.0 * env.intensity()[i]);
                let expected = 1.0 + v * (std::f64::consts::TAU * nu * tau).cos();
                assert_abs_diff_eq!(fringe, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_delay_keeps_full_visibility() {
        let pulse = pulse_788();
        let ens = ShotEnsemble::new(500, 3, PhaseModel::CauchyFrequency).unwrap();
        let phasor = ensemble_mean_phasor(10.0, pulse.delay_ps, &ens);
        assert_abs_diff_eq!(phasor.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phasor.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn monte_carlo_matches_direct_exponential() {
        // Γτ = 1, 10⁴ shots → visibility 0.368 ± 0.01
        let gamma = 1.0;
        let tau = 1.0;
        let ens = ShotEnsemble::new(10_000, 7, PhaseModel::CauchyFrequency).unwrap();
        let phasor = ensemble_mean_phasor(gamma, tau, &ens);
        assert_abs_diff_eq!(phasor.norm(), (-1.0f64).exp(), epsilon = 0.01);
    }

    #[test]
    fn ensemble_average_is_deterministic_across_worker_counts() {
        let ens = ShotEnsemble::new(4096, 99, PhaseModel::CauchyFrequency).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| ensemble_mean_phasor(0.3, 1.7, &ens))
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_linf_error_shrinks_as_sqrt_n() {
        // L∞ distance to the closed form, within 3σ bands at N = 10² and 10⁴.
        // The deviation at every grid point is bounded by 2·|⟨e^{iθ}⟩_N − e^{-Γτ}|,
        // whose standard deviation is sqrt((1 − e^{-2Γτ})/N).
        let gamma = 1.0;
        let tau = 1.0;
        let pulse = PulsePair {
            delay_ps: tau,
            ..pulse_788()
        };
        let grid = grid_for_pulse(&pulse, 8.0, 4096);
        let exact = averaged_spectrum(
            &pulse,
            gamma,
            &ShotEnsemble::new(1, 0, PhaseModel::DirectExponential).unwrap(),
            &grid,
        )
        .unwrap();
        let linf_at = |n: u64, seed: u64| {
            let ens = ShotEnsemble::new(n, seed, PhaseModel::CauchyFrequency).unwrap();
            let mc = averaged_spectrum(&pulse, gamma, &ens, &grid).unwrap();
            mc.intensity()
                .iter()
                .zip(exact.intensity())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        };
        let sigma = |n: f64| ((1.0 - (-2.0f64 * gamma * tau).exp()) / n).sqrt();
        let err_100 = linf_at(100, 11);
        let err_10k = linf_at(10_000, 12);
        assert!(
            err_100 < 2.0 * 3.0 * sigma(100.0),
            "L∞@100 = {err_100}, 3σ band = {}",
            2.0 * 3.0 * sigma(100.0)
        );
        assert!(
            err_10k < 2.0 * 3.0 * sigma(10_000.0),
            "L∞@10⁴ = {err_10k}, 3σ band = {}",
            2.0 * 3.0 * sigma(10_000.0)
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            /// Every averaged spectrum stays non-negative and its fringe
            /// factor stays within 1 ± e^{-Γτ} of the envelope.
            #[test]
            fn averaged_spectra_non_negative_with_bounded_fringes(
                gamma in 0.0f64..2.0,
                tau in 0.3f64..4.0,
            ) {
                let pulse = PulsePair {
                    center_wavelength_nm: 880.4,
                    duration_fwhm_fs: 80.0,
                    delay_ps: tau,
                    relative_phase_rad: 0.0,
                };
                let grid = grid_for_pulse(&pulse, 8.0, 8192);
                let ens = ShotEnsemble::new(1, 0, PhaseModel::DirectExponential).unwrap();
                let s = averaged_spectrum(&pulse, gamma, &ens, &grid).unwrap();
                let env = single_pulse_spectrum(
                    &PulsePair { delay_ps: 0.0, ..pulse },
                    &grid,
                )
                .unwrap();
                let v = (-gamma * tau).exp();
                for (i, &y) in s.intensity().iter().enumerate() {
                    prop_assert!(y >= 0.0);
                    if env.intensity()[i] > 1e-6 {
                        let fringe = y / (2.0 * env.intensity()[i]);
                        prop_assert!(fringe >= 1.0 - v - 1e-9 && fringe <= 1.0 + v + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn visibility_non_increasing_in_delay() {
        let gamma = 0.5;
        let ens = ShotEnsemble::new(20_000, 21, PhaseModel::CauchyFrequency).unwrap();
        let mut last = f64::INFINITY;
        for tau in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let v = ensemble_mean_phasor(gamma, tau, &ens).norm();
            // allow estimator noise on top of monotone decay
            assert!(
                v <= last + 3.0 / (ens.shots as f64).sqrt(),
                "visibility rose from {last} to {v} at τ={tau}"
            );
            assert_abs_diff_eq!(v, (-gamma * tau).exp(), epsilon = 0.03);
            last = v;
        }
    }
}
