//! Physical constants, spectroscopic unit conversions, and closed-form
//! scalar relations.
//!
//! Constants are CODATA 2018 values (exact since the 2019 SI redefinition).
//! Everything here is a pure function; call freely from any thread.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum (m/s)
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;

/// Boltzmann constant (J/K)
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Planck constant (J·s)
pub const PLANCK: f64 = 6.62607015e-34;

/// Speed of light in nm/ps (handy for wavelength-domain fringe formulas)
pub const C_NM_PER_PS: f64 = SPEED_OF_LIGHT * 1e-3;

/// Speed of light in cm/ps (converts rates in ps⁻¹ to wavenumbers in cm⁻¹)
pub const C_CM_PER_PS: f64 = SPEED_OF_LIGHT * 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("{quantity} must be strictly positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error(
        "Raman shift {shift_cm_inv} cm⁻¹ is at or beyond the pump wavenumber {pump_cm_inv} cm⁻¹"
    )]
    ShiftBeyondPump { shift_cm_inv: f64, pump_cm_inv: f64 },
}

fn require_positive(quantity: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(PhysicsError::NonPositive { quantity, value })
    }
}

// ─── Unit conversions ───────────────────────────────────────────────

/// Spectral axis units handled by [`SpectralQuantity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralUnit {
    /// Wavelength in nm
    Nanometers,
    /// Wavenumber in cm⁻¹
    Wavenumber,
    /// Frequency in THz
    Terahertz,
    /// Period in ps (reciprocal of frequency)
    Picoseconds,
}

/// A positive spectral value with an attached unit.
///
/// Conversions route through THz and are exact inverse pairs: converting
/// there and back reproduces the input to better than 1e-12 relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralQuantity {
    pub value: f64,
    pub unit: SpectralUnit,
}

impl SpectralQuantity {
    pub fn new(value: f64, unit: SpectralUnit) -> Result<Self, PhysicsError> {
        require_positive("spectral value", value)?;
        Ok(Self { value, unit })
    }

    fn to_thz(self) -> f64 {
        match self.unit {
            SpectralUnit::Nanometers => C_NM_PER_PS / self.value,
            SpectralUnit::Wavenumber => C_CM_PER_PS * self.value,
            SpectralUnit::Terahertz => self.value,
            SpectralUnit::Picoseconds => 1.0 / self.value,
        }
    }

    pub fn to(self, unit: SpectralUnit) -> SpectralQuantity {
        let thz = self.to_thz();
        let value = match unit {
            SpectralUnit::Nanometers => C_NM_PER_PS / thz,
            SpectralUnit::Wavenumber => thz / C_CM_PER_PS,
            SpectralUnit::Terahertz => thz,
            SpectralUnit::Picoseconds => 1.0 / thz,
        };
        SpectralQuantity { value, unit }
    }
}

/// λ (nm) → ν̃ (cm⁻¹)
pub fn nm_to_wavenumber(nm: f64) -> f64 {
    1e7 / nm
}

/// ν̃ (cm⁻¹) → λ (nm)
pub fn wavenumber_to_nm(cm_inv: f64) -> f64 {
    1e7 / cm_inv
}

/// λ (nm) → ν (THz)
pub fn nm_to_thz(nm: f64) -> f64 {
    C_NM_PER_PS / nm
}

/// ν (THz) → λ (nm)
pub fn thz_to_nm(thz: f64) -> f64 {
    C_NM_PER_PS / thz
}

// ─── Material parameters ────────────────────────────────────────────

/// Raman-active material parameters. Defaults are bulk diamond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Stokes (Raman) shift in cm⁻¹
    pub raman_shift_cm_inv: f64,
    /// Amplitude dephasing rate Γ in ps⁻¹ (phonon population decays at 2Γ)
    pub gamma_ps_inv: f64,
    /// Steady-state Raman gain coefficient in cm/MW
    pub raman_gain_cm_per_mw: f64,
    /// Vibrational quantum in cm⁻¹ (equals the Raman shift for a one-phonon line)
    pub vibrational_energy_cm_inv: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            raman_shift_cm_inv: 1332.0,
            gamma_ps_inv: 1.0 / 6.8,
            raman_gain_cm_per_mw: 7.4e-3,
            vibrational_energy_cm_inv: 1332.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        require_positive("raman_shift_cm_inv", self.raman_shift_cm_inv)?;
        require_positive("gamma_ps_inv", self.gamma_ps_inv)?;
        require_positive("raman_gain_cm_per_mw", self.raman_gain_cm_per_mw)?;
        require_positive("vibrational_energy_cm_inv", self.vibrational_energy_cm_inv)?;
        Ok(())
    }

    /// Dephasing time 1/Γ in ps.
    pub fn dephasing_time_ps(&self) -> f64 {
        1.0 / self.gamma_ps_inv
    }
}

// ─── Scalar relations ───────────────────────────────────────────────

/// Stokes wavelength for a pump line red-shifted by the Raman shift:
/// λ_S = 1e7 / (1e7/λ_pump − shift).
pub fn stokes_wavelength(pump_nm: f64, shift_cm_inv: f64) -> Result<f64, PhysicsError> {
    require_positive("pump wavelength", pump_nm)?;
    if shift_cm_inv < 0.0 || !shift_cm_inv.is_finite() {
        return Err(PhysicsError::NonPositive {
            quantity: "raman shift",
            value: shift_cm_inv,
        });
    }
    let pump_cm_inv = nm_to_wavenumber(pump_nm);
    if shift_cm_inv >= pump_cm_inv {
        return Err(PhysicsError::ShiftBeyondPump {
            shift_cm_inv,
            pump_cm_inv,
        });
    }
    Ok(wavenumber_to_nm(pump_cm_inv - shift_cm_inv))
}

/// Wavelength-domain fringe spacing of two coherent pulses delayed by τ:
/// Δλ = λ²/(cτ).
pub fn fringe_spacing(center_nm: f64, delay_ps: f64) -> Result<f64, PhysicsError> {
    require_positive("center wavelength", center_nm)?;
    require_positive("delay", delay_ps)?;
    Ok(center_nm * center_nm / (C_NM_PER_PS * delay_ps))
}

/// Bose–Einstein occupation of a mode at `e_vib_cm_inv` and temperature T:
/// n̄ = [exp(E_vib/k_B T) − 1]⁻¹.
pub fn thermal_population(e_vib_cm_inv: f64, temperature_k: f64) -> Result<f64, PhysicsError> {
    require_positive("vibrational energy", e_vib_cm_inv)?;
    require_positive("temperature", temperature_k)?;
    // E = h·c·ν̃ with ν̃ in m⁻¹
    let energy_j = PLANCK * SPEED_OF_LIGHT * 100.0 * e_vib_cm_inv;
    let x = energy_j / (BOLTZMANN * temperature_k);
    Ok(1.0 / x.exp_m1())
}

/// FWHM spectral linewidth (cm⁻¹) of a mode whose amplitude dephases at Γ
/// (ps⁻¹): Δν = Γ/(π·c).
pub fn linewidth_from_rate(gamma_ps_inv: f64) -> Result<f64, PhysicsError> {
    require_positive("gamma", gamma_ps_inv)?;
    Ok(gamma_ps_inv / (std::f64::consts::PI * C_CM_PER_PS))
}

/// Inverse of [`linewidth_from_rate`]: Γ (ps⁻¹) from an FWHM linewidth (cm⁻¹).
pub fn rate_from_linewidth(fwhm_cm_inv: f64) -> Result<f64, PhysicsError> {
    require_positive("linewidth", fwhm_cm_inv)?;
    Ok(fwhm_cm_inv * std::f64::consts::PI * C_CM_PER_PS)
}

/// Phonon quality factor Q = ν/Γ with both expressed in cm⁻¹
/// (Γ_cm = Γ/c, i.e. π times the FWHM linewidth).
pub fn q_factor(nu_cm_inv: f64, gamma_ps_inv: f64) -> Result<f64, PhysicsError> {
    require_positive("mode frequency", nu_cm_inv)?;
    require_positive("gamma", gamma_ps_inv)?;
    let gamma_cm_inv = gamma_ps_inv / C_CM_PER_PS;
    Ok(nu_cm_inv / gamma_cm_inv)
}

/// Default photons-per-pJ calibration for [`stokes_yield`].
///
/// Fitted so that pulse energies of 1.1 pJ and 380 pJ map to roughly 0.004
/// and 1.3 collinear Stokes photons per pulse; the focusing geometry behind
/// those endpoints is not pinned down, so the constant is exposed rather
/// than derived. See [`stokes_yield_estimate`] for a from-first-principles
/// estimate.
pub const DEFAULT_YIELD_CAL_PHOTONS_PER_PJ: f64 = 0.0035;

/// Collinear Stokes photons per pulse in the spontaneous regime:
/// strictly linear in pulse energy, `yield = cal × energy`.
pub fn stokes_yield(pulse_energy_pj: f64, cal_photons_per_pj: f64) -> Result<f64, PhysicsError> {
    if pulse_energy_pj < 0.0 || !pulse_energy_pj.is_finite() {
        return Err(PhysicsError::NonPositive {
            quantity: "pulse energy",
            value: pulse_energy_pj,
        });
    }
    require_positive("yield calibration", cal_photons_per_pj)?;
    Ok(cal_photons_per_pj * pulse_energy_pj)
}

/// Physical estimate of the spontaneous Stokes yield from the Raman gain:
/// photons/pulse ≈ g·I_peak·L, with the peak intensity from the pulse energy,
/// FWHM duration, and focal spot area.
///
/// This is a documented order-of-magnitude helper; the pipeline's yields use
/// the explicit calibration constant instead.
pub fn stokes_yield_estimate(
    gain_cm_per_mw: f64,
    pulse_energy_pj: f64,
    duration_fs: f64,
    spot_radius_um: f64,
    interaction_length_mm: f64,
) -> Result<f64, PhysicsError> {
    require_positive("gain", gain_cm_per_mw)?;
    require_positive("duration", duration_fs)?;
    require_positive("spot radius", spot_radius_um)?;
    require_positive("interaction length", interaction_length_mm)?;
    if pulse_energy_pj < 0.0 {
        return Err(PhysicsError::NonPositive {
            quantity: "pulse energy",
            value: pulse_energy_pj,
        });
    }
    let peak_power_mw = pulse_energy_pj * 1e-12 / (duration_fs * 1e-15) / 1e6;
    let area_cm2 = std::f64::consts::PI * (spot_radius_um * 1e-4).powi(2);
    let intensity_mw_per_cm2 = peak_power_mw / area_cm2;
    Ok(gain_cm_per_mw * intensity_mw_per_cm2 * interaction_length_mm * 0.1)
}
