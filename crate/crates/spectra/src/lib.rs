//! Randomized estimation of spectral sums for implicitly accessed matrices.
//!
//! The core pipeline approximates the singular-value histogram of a sparse or
//! operator-defined matrix by applying soft spectral windows through ridge
//! regression, estimating each bucket's mass stochastically, and postprocessing
//! the histogram into Schatten norms, Orlicz-style sums, Ky Fan norms, and
//! spectral entropy. Supporting layers: deflation-based preconditioning,
//! variance-reduced and conjugate-gradient ridge solvers, Hutchinson trace
//! estimation, dense oracles for verification, and fine-grained complexity
//! reductions connecting these sums to triangle detection.

pub mod deflate;
pub mod error;
pub mod histogram;
pub mod linops;
pub mod numeric;
pub mod oracle;
pub mod reductions;
pub mod rng;
pub mod solvers;
pub mod sums;
pub mod trace;
pub mod window;

pub use error::{Error, Result};
pub use histogram::{
    approximate_histogram, approximate_histogram_with_diagnostics, exact_bucket_counts,
    window_count, BucketEngine, HistogramConfig, HistogramDiagnostics, HistogramResult,
};
pub use linops::{
    load_matrix_market, row_distribution, spectral_norm_estimate, DenseMatrix, LinOp,
    PlantedMatrix, RowDistribution, ScaledGram, SparseMatrix,
};
pub use reductions::{
    determinant_triangle_detect, incidence_and_leverage, oracle_spectral_sum, sdd_to_laplacian,
    shifted_adjacency, trace_inverse_via_effres, triangle_count_exact, triangle_detect, FKind,
    Graph, ReductionSpec, TriangleVerdict,
};
pub use sums::{
    build_power_polynomial, entropy_from_tsallis, kyfan, orlicz_sum, power_taylor,
    schatten_histogram, schatten_poly, sum_from_histogram, svd_entropy, EntropyConfig,
    EntropyMode, PolyOptions, PowerPolynomial, SumEstimate, SumOptions, SumSpec,
};
