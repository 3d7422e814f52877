//! Solver library for low-energy single-peak states of singularly perturbed
//! Klein-Gordon-Maxwell and Schrödinger-Maxwell systems on a flat 3-torus.
//!
//! The pipeline: solve the auxiliary electrostatic equation to reduce the
//! system to one functional of the matter field ([`psi`]), transplant the
//! ℝ³ ground state as a seed bump ([`ground_state`]), project onto the
//! Nehari manifold ([`energy`]), descend under the constraint ([`minimize`]),
//! and certify the peak structure of what converged ([`analysis`]).

pub mod analysis;
pub mod energy;
pub mod error;
pub mod grid;
pub mod ground_state;
pub mod minimize;
pub mod psi;
pub mod snapshot;
pub mod spectral;
pub mod synth;

pub use analysis::{
    barycenter, cluster_solutions, coefficient_of_variation, concentrated_mass, find_peaks,
    maxval_certificate, profile_residual, solution_record, SolutionRecord,
};
pub use energy::{
    energy, first_variation, gradient, nehari_residual, phi_seed, positive_part_mass,
    precondition_gradient, preconditioned_grad_norm, project_nehari, project_nehari_warm,
    NehariPoint,
};
pub use error::{CoreError, Result};
pub use grid::{
    h_eps_norm_sq, h_eps_norm_sq_with, lp_norm_eps, pairwise_sum, positive_power,
    wrap_coordinate, Field, Point, SystemKind, SystemParams, TorusGrid,
};
pub use ground_state::{
    bump_field, cutoff_chi, m_infinity, shoot_ground_state, shoot_ground_state_with,
    RadialProfile, ShootOptions,
};
pub use minimize::{
    minimize, minimize_batch, multi_start, seed_batch, shared_floor, translate_field, IterTrace,
    SolveOptions, SolveResult, SolveStatus,
};
pub use psi::{solve_psi, solve_psi_warm, solve_v, solve_v_warm, DEFAULT_PSI_TOL};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use spectral::{
    derivative, grad_sq_integral, helmholtz_inverse, laplacian, upsample, Spectrum,
};
pub use synth::{random_band_limited, random_smooth_positive};
