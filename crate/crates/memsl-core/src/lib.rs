//! Core library for quantum-enhanced super-resolution phase imaging with
//! band-limited optics.
//!
//! A 4-f imaging system with a finite pupil passes only a band of spatial
//! frequencies; the natural basis of such a channel is the prolate spheroidal
//! family, whose eigenvalues die off sharply past the Shannon number. This
//! crate builds that basis ([`pswf`]), models the imaging geometry
//! ([`geometry`]) and the probe light — entangled multi-mode squeezed,
//! independent squeezed, or coherent ([`light`]) — and provides both the
//! closed-form error/optimization layer ([`optimizer`]) and a seeded
//! Monte-Carlo measurement simulator with phase reconstruction
//! ([`montecarlo`]).
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration, and the
//! command-line interface live in the companion `memsl-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod err;
pub mod geometry;
pub mod light;
pub mod mathx;
pub mod montecarlo;
pub mod optimizer;
pub mod pswf;

pub use err::{CoreError, Result};
pub use geometry::{
    decompose_image, default_image_grid, derive_dimensionless, object_to_image,
    reconstruct_object_estimate, DomainTag, FieldSamples, ImagingSystem,
};
pub use light::{LossChannel, ProbeSource, Protocol, QuadratureStats};
pub use montecarlo::{
    check_small_phase, coefficient_point_mean, coefficient_point_variance,
    mean_image_quadrature, pointwise_variance, reconstruct, simulate_measurement,
    standard_test_object, MeanImage, PhaseObject, ReconstructionResult, SimMode, SimOptions,
    SimulatedMeasurement, SmallPhase,
};
pub use optimizer::{
    governing_even_order, optimize_lossless, optimize_lossy, optimize_lossy_alternate,
    prefactor, prefactor_exact_sum, resolution, select_q, sigma_explicit, sigma_lossless,
    OptimalConfig, PhotonBudget,
};
pub use pswf::{build_basis, sinc_kernel, NoiseKernelTable, Parity, SlepianBasis};
