//! Periodic grids, fields, spectra and interpolation.

mod grid;
mod hermite;
mod sampler;
mod spectrum;

pub use grid::{pairwise_sum, simpson_integral, wrap, Grid, PeriodicField};
pub(crate) use grid::simpson_of;
pub(crate) use hermite::HermiteCell;
pub use hermite::HermiteField;
pub use sampler::{
    sample_bilinear, AnalyticSampler, BilinearSampler, FourierSampler, ScalarSampler,
    SharedSampler,
};
pub(crate) use spectrum::{bandwidth_of_spectra, dft_values, idft_values};
pub use spectrum::{
    dft, differentiate, effective_bandwidth, energy_spectrum, idft, spectral_derivative,
    spectral_resample, wavenumber, Spectrum,
};
