//! slct-core: exact learning coefficients for singular network models.
//!
//! The crate computes the learning coefficient λ (the real log canonical
//! threshold of the average error function) together with its order θ for
//! three model families — multi-layer linear networks, three-layer ReLU
//! networks, and softmax-output networks with linear pre-activation — and
//! provides an independent Monte-Carlo estimator of λ/θ for any error
//! function so that every closed-form value can be cross-checked numerically.
//!
//! Width lists are output-first everywhere: `widths[0]` is the output
//! dimension and the last entry is the input dimension.

pub mod kfn;
pub mod lct;
pub mod linear;
mod lp;
pub mod oracle;
pub mod rank;
pub mod rational;
pub mod relu;
pub mod schema;
pub mod select;
pub mod softmax;

pub use kfn::{coeff_sos_linear, k_relu, k_softmax, KError, KEvaluator, MIN_QUADRATURE};
pub use lct::{combine_independent, Lct, LctError};
pub use linear::{
    lambda_architecture, lambda_linear, lambda_linear_with_bias, surplus_selection,
    LinearArchitecture, LinearError, LinearNetwork, SurplusSelection,
};
pub use oracle::{
    default_eps_grid, default_n_grid, estimate_lct_laplace, estimate_lct_volume, GeometricGrid,
    GridDiagnostic, LctEstimate, OracleError, OracleMethod, BOOTSTRAP_RESAMPLES, DEFAULT_RADIUS,
    DEFAULT_SAMPLES, MIN_POINT_MASS, MIN_USABLE_POINTS, POOR_FIT_R2, THETA_MIN_USABLE,
};
pub use rational::{Rational, RationalError};
pub use relu::{
    enumerate_regions, group_units, lambda_relu, remove_dead_units, ActivationRegion,
    GroupDecomposition, GroupOverrides, GroupStats, InputDomain, ReluAnalysis, ReluError,
    ReluNetwork, INTERIOR_SLACK, MAX_ENUMERATION_WIDTH,
};
pub use schema::{
    BoxFile, CandidatesFile, GroupsFile, LayerFile, NetworkFile, SchemaError, BOX_FORMAT,
    NET_FORMAT,
};
pub use select::{
    free_energy_penalty, rank_architectures, Candidate, CandidateFailure, RankedCandidate, Ranking,
    SelectError,
};
pub use softmax::{
    lambda_softmax_linear, lambda_softmax_linear_all_pivots, lambda_softmax_linear_with_pivot,
    softmax, softmax_difference_reduction, softmax_difference_reduction_with_pivot,
    DifferenceReduction, DifferencingMap, ReducedPair, SoftmaxError, SoftmaxModel,
};
