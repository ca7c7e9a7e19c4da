//! Sampled spectra: the currency passed between simulation, instrument, and
//! analysis, plus the pixel-binned counts format written to disk.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::C_NM_PER_PS;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("grid needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("grid must be strictly increasing and uniform (index {index})")]
    NonUniformGrid { index: usize },
    #[error("intensity must be non-negative and finite (index {index}, value {value})")]
    BadIntensity { index: usize, value: f64 },
    #[error("grid and intensity lengths differ: {grid} vs {intensity}")]
    LengthMismatch { grid: usize, intensity: usize },
    #[error("operation requires a {expected:?} axis, got {actual:?}")]
    WrongAxis {
        expected: SpectralAxis,
        actual: SpectralAxis,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which physical quantity the grid samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralAxis {
    /// Optical frequency in THz
    FrequencyThz,
    /// Wavelength in nm
    WavelengthNm,
    /// Wavenumber in cm⁻¹
    WavenumberCm,
}

/// A spectrum sampled on a strictly increasing, uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    axis: SpectralAxis,
    grid: Vec<f64>,
    intensity: Vec<f64>,
    /// Number of shots averaged into this spectrum (1 for a single shot).
    pub shots: u64,
}

/// Relative tolerance on grid-pitch uniformity.
const UNIFORM_TOL: f64 = 1e-9;

impl Spectrum {
    pub fn new(
        axis: SpectralAxis,
        grid: Vec<f64>,
        intensity: Vec<f64>,
        shots: u64,
    ) -> Result<Self, SpectrumError> {
        if grid.len() < 2 {
            return Err(SpectrumError::TooShort(grid.len()));
        }
        if grid.len() != intensity.len() {
            return Err(SpectrumError::LengthMismatch {
                grid: grid.len(),
                intensity: intensity.len(),
            });
        }
        let pitch = grid[1] - grid[0];
        if !(pitch > 0.0) {
            return Err(SpectrumError::NonUniformGrid { index: 1 });
        }
        for i in 1..grid.len() {
            let step = grid[i] - grid[i - 1];
            if !(step > 0.0) || (step - pitch).abs() > UNIFORM_TOL * pitch.abs() {
                return Err(SpectrumError::NonUniformGrid { index: i });
            }
        }
        for (i, &v) in intensity.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SpectrumError::BadIntensity { index: i, value: v });
            }
        }
        Ok(Self {
            axis,
            grid,
            intensity,
            shots,
        })
    }

    pub fn axis(&self) -> SpectralAxis {
        self.axis
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Grid spacing (uniform by construction).
    pub fn pitch(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    /// Total intensity integrated over the grid (trapezoid rule).
    pub fn integral(&self) -> f64 {
        let h = self.pitch();
        let n = self.intensity.len();
        let interior: f64 = self.intensity[1..n - 1].iter().sum();
        h * (interior + 0.5 * (self.intensity[0] + self.intensity[n - 1]))
    }

    /// Replace the intensity samples, keeping grid and metadata.
    pub fn with_intensity(&self, intensity: Vec<f64>) -> Result<Self, SpectrumError> {
        Self::new(self.axis, self.grid.clone(), intensity, self.shots)
    }

    /// Set the shot-count metadata.
    pub fn with_shots(mut self, shots: u64) -> Self {
        self.shots = shots;
        self
    }

    /// Resample a frequency-axis spectrum onto a uniform wavelength grid
    /// (same sample count, same span). With `jacobian` the intensity is
    /// multiplied by |dν/dλ| = c/λ²; fringe visibility does not depend on
    /// this choice, so it is off in the standard pipeline.
    pub fn to_wavelength_axis(&self, jacobian: bool) -> Result<Spectrum, SpectrumError> {
        if self.axis != SpectralAxis::FrequencyThz {
            return Err(SpectrumError::WrongAxis {
                expected: SpectralAxis::FrequencyThz,
                actual: self.axis,
            });
        }
        let n = self.grid.len();
        let lam_min = C_NM_PER_PS / self.grid[n - 1];
        let lam_max = C_NM_PER_PS / self.grid[0];
        let dlam = (lam_max - lam_min) / (n - 1) as f64;
        let nu0 = self.grid[0];
        let pitch = self.pitch();
        let mut grid = Vec::with_capacity(n);
        let mut intensity = Vec::with_capacity(n);
        for j in 0..n {
            let lam = lam_min + dlam * j as f64;
            let nu = C_NM_PER_PS / lam;
            // linear interpolation on the source frequency grid
            let pos = (nu - nu0) / pitch;
            let k = (pos.floor() as usize).min(n - 2);
            let frac = (pos - k as f64).clamp(0.0, 1.0);
            let mut v = self.intensity[k] * (1.0 - frac) + self.intensity[k + 1] * frac;
            if jacobian {
                v *= C_NM_PER_PS / (lam * lam);
            }
            grid.push(lam);
            intensity.push(v.max(0.0));
        }
        Spectrum::new(SpectralAxis::WavelengthNm, grid, intensity, self.shots)
    }
}

/// Pixel-binned detector output: wavelength bin centers and photon counts
/// (Poisson-drawn integers) or expected counts (noise off).
#[derive(Debug, Clone, PartialEq)]
pub struct CountsSpectrum {
    /// Pixel-center wavelengths (nm), strictly increasing, uniform pitch.
    pub bins: Vec<f64>,
    /// Counts per pixel; integral when Poisson noise was applied.
    pub counts: Vec<f64>,
    /// Number of pulses integrated into the exposure.
    pub exposure: u64,
}

impl CountsSpectrum {
    pub fn pixel_width(&self) -> f64 {
        (self.bins[self.bins.len() - 1] - self.bins[0]) / (self.bins.len() - 1) as f64
    }

    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Write as CSV: header `wavelength_nm,counts`, one row per pixel, LF
    /// line endings. Values use the shortest representation that round-trips
    /// to the same f64, so read → write is bit-exact.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SpectrumError> {
        out.write_all(b"wavelength_nm,counts\n")?;
        for (b, c) in self.bins.iter().zip(&self.counts) {
            writeln!(out, "{b},{c}")?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), SpectrumError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_csv(text: &str, exposure: u64) -> Result<Self, SpectrumError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "wavelength_nm,counts" => {}
            other => {
                return Err(SpectrumError::Csv(format!(
                    "expected header 'wavelength_nm,counts', got {other:?}"
                )))
            }
        }
        let mut bins = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| {
                SpectrumError::Csv(format!("row {}: missing comma in {line:?}", i + 2))
            })?;
            let wl: f64 = a
                .trim()
                .parse()
                .map_err(|e| SpectrumError::Csv(format!("row {}: {e}", i + 2)))?;
            let ct: f64 = b
                .trim()
                .parse()
                .map_err(|e| SpectrumError::Csv(format!("row {}: {e}", i + 2)))?;
            bins.push(wl);
            counts.push(ct);
        }
        if bins.len() < 2 {
            return Err(SpectrumError::TooShort(bins.len()));
        }
        Ok(Self {
            bins,
            counts,
            exposure,
        })
    }

    pub fn read_csv_file(path: &Path, exposure: u64) -> Result<Self, SpectrumError> {
        let text = fs::read_to_string(path)?;
        Self::read_csv(&text, exposure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_spectrum() -> Spectrum {
        let grid: Vec<f64> = (0..64).map(|i| 300.0 + 0.5 * i as f64).collect();
        let intensity: Vec<f64> = grid
            .iter()
            .map(|&nu| (-((nu - 316.0) / 4.0).powi(2)).exp())
            .collect();
        Spectrum::new(SpectralAxis::FrequencyThz, grid, intensity, 1).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Spectrum::new(SpectralAxis::FrequencyThz, vec![1.0], vec![1.0], 1).is_err());
        assert!(Spectrum::new(
            SpectralAxis::FrequencyThz,
            vec![1.0, 2.0, 2.5],
            vec![0.0; 3],
            1
        )
        .is_err());
        assert!(Spectrum::new(
            SpectralAxis::FrequencyThz,
            vec![1.0, 2.0, 3.0],
            vec![0.0, -1.0, 0.0],
            1
        )
        .is_err());
    }

    #[test]
    fn wavelength_conversion_preserves_peak_location() {
        let s = toy_spectrum();
        let w = s.to_wavelength_axis(false).unwrap();
        assert_eq!(w.axis(), SpectralAxis::WavelengthNm);
        let (imax, _) = w
            .intensity()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let lam_peak = w.grid()[imax];
        assert_relative_eq!(lam_peak, C_NM_PER_PS / 316.0, max_relative = 1e-3);
    }

    #[test]
    fn csv_roundtrip_bit_exact() {
        let cs = CountsSpectrum {
            bins: vec![880.0, 880.02, 880.04],
            counts: vec![101.0, 0.3333333333333333, 97.0],
            exposure: 10_000,
        };
        let mut buf = Vec::new();
        cs.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("wavelength_nm,counts\n"));
        assert!(!text.contains('\r'));
        let back = CountsSpectrum::read_csv(&text, 10_000).unwrap();
        assert_eq!(back, cs);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(CountsSpectrum::read_csv("nm,counts\n1,2\n", 1).is_err());
    }

    proptest! {
        /// CSV write → read is the identity on the stored f64 values.
        #[test]
        fn csv_roundtrip_prop(values in proptest::collection::vec(0.0f64..1e9, 2..40)) {
            let n = values.len();
            let cs = CountsSpectrum {
                bins: (0..n).map(|i| 800.0 + 0.02 * i as f64).collect(),
                counts: values,
                exposure: 1,
            };
            let mut buf = Vec::new();
            cs.write_csv(&mut buf).unwrap();
            let back = CountsSpectrum::read_csv(std::str::from_utf8(&buf).unwrap(), 1).unwrap();
            prop_assert_eq!(back, cs);
        }
    }
}
