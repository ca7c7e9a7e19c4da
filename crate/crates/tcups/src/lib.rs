//! Simulation and analysis toolkit for transient coherent ultrafast phonon
//! spectroscopy.
//!
//! A pair of time-delayed ultrafast pump pulses excites an optical phonon via
//! spontaneous Raman scattering; the resulting Stokes pulse pair produces
//! spectral interference fringes whose visibility decays as `exp(-Γ|τ|)` with
//! pulse delay τ. Measuring that decay yields the phonon dephasing time 1/Γ.
//!
//! The crate covers the full loop:
//!
//! * [`physics`] — constants, spectroscopic unit conversions, and the scalar
//!   relations (Stokes wavelength, fringe spacing, thermal occupation,
//!   lifetime/linewidth, Q factor, photon yield).
//! * [`classical`] — stochastic fluctuating-phase model of the Stokes pair
//!   spectrum and its shot-averaged fringe visibility.
//! * [`quantum`] — photon–phonon Langevin equations of motion, their
//!   perturbative solution, and a stochastic c-number integrator used as an
//!   independent cross-check.
//! * [`instrument`] — spectrometer response convolution, CCD pixel binning,
//!   detection efficiency, and Poisson photon counting.
//! * [`analysis`] — fringe visibility extraction, laser-visibility
//!   renormalization, exponential decay and Lorentzian lineshape fits.
//! * [`runner`] — reproducible end-to-end runs behind the `tcups` CLI
//!   (simulate / analyze / quantum-check / power-scan).

// validation guards use `!(x > 0)` so NaN is rejected along with the
// out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod classical;
pub mod config;
pub mod fit;
pub mod instrument;
pub mod physics;
pub mod plot;
pub mod quantum;
pub mod runner;
pub mod spectrum;

pub use spectrum::{CountsSpectrum, SpectralAxis, Spectrum};
