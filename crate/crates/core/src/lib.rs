//! Wasserstein barycenters on grids via Sobolev gradient ascent on the
//! semi-dual objective, with exact one-dimensional oracles and a Monte Carlo
//! rate harness.

pub mod ctransform;
pub mod density;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod oracles;
pub mod semidual;
pub mod sobolev;

pub use ctransform::{
    c_transform, legendre_conjugate, make_fab_potential, transport_map, FabSpec,
    PotentialClassParams,
};
pub use density::{estimate_density, EstimatorConfig, EstimatorMethod, Resolution};
pub use error::{Error, Result};
pub use experiments::{run, ExperimentOutput, ExperimentSpec, Mode, PropertyReport, RateResult};
pub use grid::{
    integrate, pushforward, sample, Grid, GridDensity, GridFunction, GridPotential, PointMap,
    SampleSet, SignedGridMeasure,
};
pub use semidual::{
    dual_gradient, dual_objective, f_mix, gradient_norm, reconstruct_barycenter, sga_solve,
    BarycenterProblem, PotentialSet, SgaConfig, SolveReport,
};
pub use sobolev::{hdot1_inner, hneg1_norm, neumann_inverse_laplacian, product_norm, NormMode, ProductTangent};
