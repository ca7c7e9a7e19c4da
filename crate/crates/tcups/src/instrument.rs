//! Instrument degradation: spectrometer response convolution, CCD pixel
//! binning, detection efficiency, and Poisson photon counting.
//!
//! Both degradation stages have closed-form effects on fringe visibility
//! that the tests pin down: a Gaussian response of FWHM w multiplies the
//! visibility of fringes with period P by exp(−(π²/4ln2)(w/P)²), and
//! boxcar pixels of width w multiply it by |sinc(πw/P)|.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{CountsSpectrum, SpectralAxis, Spectrum, SpectrumError};

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("{quantity} out of range: {value}")]
    BadParameter { quantity: &'static str, value: f64 },
    #[error("response kernel (FWHM {fwhm_nm} nm) is wider than the grid span {span_nm} nm")]
    KernelWiderThanGrid { fwhm_nm: f64, span_nm: f64 },
    #[error(
        "response kernel under-resolved: FWHM {fwhm_nm} nm needs a grid pitch ≤ {max_pitch_nm} nm \
         (got {pitch_nm} nm)"
    )]
    KernelUnderResolved {
        fwhm_nm: f64,
        pitch_nm: f64,
        max_pitch_nm: f64,
    },
    #[error("pixel width {pixel_nm} nm must be ≥ 2× the grid pitch {pitch_nm} nm")]
    PixelTooFine { pixel_nm: f64, pitch_nm: f64 },
    #[error(
        "pixels undersample the fringes: pixel width {pixel_nm} nm exceeds half the fringe \
         period {period_nm} nm"
    )]
    FringesUnresolvable { pixel_nm: f64, period_nm: f64 },
    #[error("spectrum has the wrong axis for this operation")]
    WrongAxis,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Spectrometer grating selection. The ruled presets carry documented
/// default (resolution, pixel pitch) pairs for a 0.3 m imaging spectrometer
/// with a 16 µm-pixel camera; they are configuration defaults, not measured
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grating {
    Ruled150,
    Ruled1800,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Off,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentModel {
    pub grating: Grating,
    /// Gaussian instrument-response FWHM on the wavelength axis (nm); 0
    /// disables the convolution.
    pub resolution_fwhm_nm: f64,
    /// CCD pixel width on the wavelength axis (nm).
    pub pixel_width_nm: f64,
    /// Detection efficiency in (0, 1].
    pub efficiency: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl InstrumentModel {
    pub fn ruled_150() -> Self {
        Self {
            grating: Grating::Ruled150,
            resolution_fwhm_nm: 0.6,
            pixel_width_nm: 0.24,
            efficiency: 1.0,
            noise: NoiseModel::Off,
            seed: 0,
        }
    }

    pub fn ruled_1800() -> Self {
        Self {
            grating: Grating::Ruled1800,
            resolution_fwhm_nm: 0.06,
            pixel_width_nm: 0.02,
            efficiency: 1.0,
            noise: NoiseModel::Off,
            seed: 0,
        }
    }

    pub fn custom(resolution_fwhm_nm: f64, pixel_width_nm: f64) -> Self {
        Self {
            grating: Grating::Custom,
            resolution_fwhm_nm,
            pixel_width_nm,
            efficiency: 1.0,
            noise: NoiseModel::Off,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        if self.resolution_fwhm_nm < 0.0 || !self.resolution_fwhm_nm.is_finite() {
            return Err(InstrumentError::BadParameter {
                quantity: "resolution_fwhm_nm",
                value: self.resolution_fwhm_nm,
            });
        }
        if !(self.pixel_width_nm > 0.0) {
            return Err(InstrumentError::BadParameter {
                quantity: "pixel_width_nm",
                value: self.pixel_width_nm,
            });
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(InstrumentError::BadParameter {
                quantity: "efficiency",
                value: self.efficiency,
            });
        }
        Ok(())
    }
}

/// Analytic visibility factor of a Gaussian response of FWHM `w` on fringes
/// of period `p` (same units).
pub fn gaussian_visibility_factor(w: f64, p: f64) -> f64 {
    let c = std::f64::consts::PI.powi(2) / (4.0 * std::f64::consts::LN_2);
    (-c * (w / p) * (w / p)).exp()
}

/// Analytic visibility factor of boxcar pixels of width `w` on fringes of
/// period `p`: |sinc(πw/p)|.
pub fn sinc_visibility_factor(w: f64, p: f64) -> f64 {
    let x = std::f64::consts::PI * w / p;
    if x.abs() < 1e-12 {
        1.0
    } else {
        (x.sin() / x).abs()
    }
}

/// Convolve with a normalized Gaussian kernel of the model's response FWHM.
/// Total integrated intensity is conserved (the kernel sums to exactly 1;
/// spectra are expected to vanish at the grid edges). FWHM 0 is the
/// identity.
pub fn convolve_response(
    s: &Spectrum,
    model: &InstrumentModel,
) -> Result<Spectrum, InstrumentError> {
    model.validate()?;
    let fwhm = model.resolution_fwhm_nm;
    if fwhm == 0.0 {
        return Ok(s.clone());
    }
    if s.axis() != SpectralAxis::WavelengthNm {
        return Err(InstrumentError::WrongAxis);
    }
    let h = s.pitch();
    let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    // sampled-kernel accuracy needs σ ≳ 2 pitch
    if sigma < 2.0 * h {
        return Err(InstrumentError::KernelUnderResolved {
            fwhm_nm: fwhm,
            pitch_nm: h,
            max_pitch_nm: sigma / 2.0,
        });
    }
    let half = (8.0 * sigma / h).ceil() as usize;
    let n = s.len();
    if 2 * half + 1 > n {
        return Err(InstrumentError::KernelWiderThanGrid {
            fwhm_nm: fwhm,
            span_nm: h * (n - 1) as f64,
        });
    }
    let mut kernel = Vec::with_capacity(2 * half + 1);
    for j in -(half as i64)..=half as i64 {
        let x = j as f64 * h / sigma;
        kernel.push((-0.5 * x * x).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let v = s.intensity();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        for j in lo..=hi {
            acc += v[j] * kernel[half + i - j];
        }
        out[i] = acc;
    }
    Ok(s.with_intensity(out)?)
}

/// Integrate the spectrum over contiguous pixels of the model's width.
///
/// The integral is that of the piecewise-linear interpolant, so it is exact
/// for linear segments and second-order accurate otherwise. Pixels tile the
/// grid from its left edge; a trailing remainder narrower than one pixel is
/// dropped. When `fringe_period_nm` is given, the call fails if the pixels
/// cannot resolve fringes of that period (width > period/2).
pub fn pixel_bin(
    s: &Spectrum,
    model: &InstrumentModel,
    fringe_period_nm: Option<f64>,
) -> Result<CountsSpectrum, InstrumentError> {
    model.validate()?;
    if s.axis() != SpectralAxis::WavelengthNm {
        return Err(InstrumentError::WrongAxis);
    }
    let w = model.pixel_width_nm;
    let h = s.pitch();
    if w < 2.0 * h * (1.0 - 1e-12) {
        return Err(InstrumentError::PixelTooFine {
            pixel_nm: w,
            pitch_nm: h,
        });
    }
    if let Some(p) = fringe_period_nm {
        if w > p / 2.0 {
            return Err(InstrumentError::FringesUnresolvable {
                pixel_nm: w,
                period_nm: p,
            });
        }
    }
    let grid = s.grid();
    let v = s.intensity();
    let n = s.len();
    // cumulative trapezoid integral up to each grid point
    let mut cum = Vec::with_capacity(n);
    cum.push(0.0);
    for k in 1..n {
        cum.push(cum[k - 1] + 0.5 * h * (v[k - 1] + v[k]));
    }
    // antiderivative of the linear interpolant at an arbitrary position
    let integral_to = |t: f64| -> f64 {
        let pos = ((t - grid[0]) / h).clamp(0.0, (n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let u = pos - k as f64;
        cum[k] + h * (u * v[k] + 0.5 * u * u * (v[k + 1] - v[k]))
    };
    let span = grid[n - 1] - grid[0];
    let n_pixels = (span / w * (1.0 + 1e-9)).floor() as usize;
    let mut bins = Vec::with_capacity(n_pixels);
    let mut counts = Vec::with_capacity(n_pixels);
    for j in 0..n_pixels {
        let left = grid[0] + w * j as f64;
        let right = (left + w).min(grid[n - 1]);
        bins.push(left + w / 2.0);
        counts.push((integral_to(right) - integral_to(left)).max(0.0));
    }
    Ok(CountsSpectrum {
        bins,
        counts,
        exposure: s.shots,
    })
}

/// Scale the per-pulse pixel integrals by efficiency × exposure and, with
/// `NoiseModel::Poisson`, replace each pixel mean by an independent Poisson
/// draw (seeded from the model).
pub fn apply_counting(
    s: &CountsSpectrum,
    model: &InstrumentModel,
) -> Result<CountsSpectrum, InstrumentError> {
    model.validate()?;
    if s.exposure == 0 {
        return Err(InstrumentError::BadParameter {
            quantity: "exposure",
            value: 0.0,
        });
    }
    let scale = model.efficiency * s.exposure as f64;
    let means: Vec<f64> = s.counts.iter().map(|c| c * scale).collect();
    let counts = match model.noise {
        NoiseModel::Off => means,
        NoiseModel::Poisson => {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            means
                .iter()
                .map(|&m| {
                    if m <= 0.0 {
                        0.0
                    } else {
                        Poisson::new(m).expect("positive mean").sample(&mut rng)
                    }
                })
                .collect()
        }
    };
    Ok(CountsSpectrum {
        bins: s.bins.clone(),
        counts,
        exposure: s.exposure,
    })
}
