//! Two-qubit quantum-correlation hierarchy.
//!
//! Entanglement (fully entangled fraction, concurrence, negativity), EPR
//! steering and Bell nonlocality are all evaluated from the 3×3 correlation
//! matrix `R = TᵀT` of two-qubit Stokes parameters, or from the density
//! matrix where a measure needs more than `R`.
//!
//! Besides the measures themselves the crate simulates the two-copy
//! collective measurement that yields `R` without full state tomography,
//! reconstructs a physical `R` from coincidence counts by maximum likelihood
//! and propagates counting noise to every measure by Monte Carlo.

pub mod collective;
pub mod fixtures;
pub mod inference;
pub mod matcore;
pub mod measures;
pub mod states;

pub use collective::{
    interpolate_r, r_from_collective, simulate_counts, white_noise_counts, CountRecord, InterferenceModel,
    Polarization, ProjectionSetting, Regime,
};
pub use inference::{
    estimate_interference_fraction, mle_reconstruct, monte_carlo_errors, ErrorBar, InferenceError, MleConfig, MonteCarloConfig,
    Parametrization, Reconstruction,
};
pub use matcore::{ComplexMatrix, Mat3, PauliBasis, SymMatrix3};
pub use measures::{CorrMatrixR, MeasureSet, MeasurementDirections, WernerRegion};
pub use states::{BlochDecomposition, DensityMatrix2Q, PureState2Q};
