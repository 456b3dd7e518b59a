//! Numerical solver library for boundary-aware value functions and safe
//! feedback policies in continuous-state stochastic motion planning.
//!
//! The planning problem is a diffusion MDP: a continuous-state MDP whose
//! fixed-policy Bellman equation becomes a second-order PDE in the first two
//! transition moments. The PDE is solved with a Galerkin method over either
//! a pure structured mesh or a hybrid tensor-product basis that pairs
//! multilinear finite elements in the boundary-critical (position) dimensions
//! with Gaussian kernels over the remaining dimensions. Obstacle and goal
//! geometry enter as boundary conditions, so the computed value function
//! separates free space from unsafe space by construction.
//!
//! Modules:
//! - [`env`]: workspaces, obstacle occupancy, goal regions.
//! - [`mesh`]: structured meshes, Lagrange bases, quadrature ([`quad`]).
//! - [`kernel`]: Gaussian kernel sets and closed-form integral reductions.
//! - [`model`]: dynamics, transition moments, PDE coefficient fields.
//! - [`assembly`] / [`solve`]: Galerkin system assembly and direct solving.
//! - [`value`]: value-function evaluation, gradients, grid export.
//! - [`policy`]: policy iteration and propagation-failure detection.
//! - [`grid`]: tabular grid-MDP baseline.
//! - [`sim`]: rollouts, collision checking, the benchmark harness.

pub mod assembly;
pub mod env;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod mesh;
pub mod model;
pub mod policy;
pub mod quad;
pub mod sim;
pub mod solve;
pub mod value;

pub use assembly::{
    apply_boundary, assemble, assemble_pure_mesh, solve as solve_system, BoundaryMode,
    CoefficientProvider, HybridBasis, LinearSystem,
};
pub use env::{generate_random_environment, Aabb, EnvSpec, Environment, GoalRegion, PointClass};
pub use error::{Error, Result};
pub use grid::{grid_value_iteration, GridPolicy};
pub use kernel::KernelSet;
pub use mesh::{Axis, BasisEval, Mesh, NodeLabel};
pub use model::{
    wrap_angle, CoefficientField, DmdpModel, DynamicsKind, DynamicsModel, KernelAxisKind, Moments,
    RewardSpec,
};
pub use policy::{
    action_values, ascent_fraction, detect_unreachable, improve, policy_iteration,
    representative_states, Checkpoint, IterationOptions, IterationReport, Policy, StateMetric,
};
pub use quad::{quadrature, QuadKind, QuadratureRule};
pub use sim::{
    benchmark, density_estimate, derive_seed, rollout, segment_collides, BenchmarkConfig,
    BenchmarkResults, MethodSpec, MetricsRow, Outcome, PolicySource, StartHeading, Trajectory,
};
pub use value::{sample_value_grid, write_value_grid, ValueFunction};
