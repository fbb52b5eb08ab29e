//! Spectral simulation and verification toolkit for the defocusing
//! Gross–Pitaevskii equation with additive trace-class noise,
//!
//! ```text
//! i ∂ₜu + Δu = (|u|² − 1) u + φ ξ,      |u| → 1 at infinity,
//! ```
//!
//! truncated to a periodic box and written as `u = 1 + v` so that the
//! boundary value becomes an algebraic offset.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: grid geometry, spectral transforms, the free Schrödinger
//!   group and the spatial / space-time norm kernels.
//! * [`noise`]: Hilbert–Schmidt noise operators, counter-based Wiener
//!   increments and exact sampling of the stochastic convolution.
//! * [`dynamics`]: the direct split-step solver, the Da Prato–Debussche
//!   solver for the remainder `v = u − 1 − Ψ`, the deterministic reference
//!   schemes, the Duhamel residual and the gauge map to cubic NLS.
//! * [`diagnostics`]: Ginzburg–Landau energy, the Itô energy ledger,
//!   Strichartz-family norms and the interval partition.
//! * [`harness`]: configuration, Monte Carlo ensembles, convergence studies
//!   and persistence.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod noise;

pub use error::{ConfigError, Error, Result};

pub use diagnostics::{
    energy, energy_bound_report, ito_ledger, ito_ledger_with, partition_intervals,
    strichartz_report, EnergyBoundReport, EnergyLedger, IntervalPartition, LedgerConvention,
    StrichartzReport,
};
pub use dynamics::{
    dpd_nonlinearity, duhamel_residual, gauge_transform, gp_nonlinearity,
    nonlinear_phase_substep, solve, solve_with_path, strang_step_direct, strang_step_dpd,
    Frame, InitialData, Scheme, SolverConfig, Trajectory,
};
pub use harness::{
    convergence_study, emit_csv, parse_config, run_ensemble, ConvergenceReport, EnsembleReport,
    RunConfig,
};
pub use lattice::{
    apply_schrodinger_group, lebesgue_norm, make_grid, sobolev_norm, spacetime_norm, x1_norm,
    Complex64, ComplexField, GridSpec, SpacetimeInterval,
};
pub use noise::{
    hs_norm, psi_moment_estimate, sample_wiener_increment, step_stochastic_convolution,
    MomentEstimate, NoiseKind, NoisePath, NoiseSpec, NoiseStream, PsiPath,
};
