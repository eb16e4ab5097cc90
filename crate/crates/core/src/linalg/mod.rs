//! Numerical kernels: projections, probes, distances and correlation.

mod logreg;
mod projection;
mod stats;

pub use logreg::{argmax_rows, fit_logreg, softmax_loss_grad, Convergence, FitConfig, ProbeModel};
pub use projection::{fit_lda, fit_pca, project, Projection, ProjectionKind};
pub use stats::{
    cosine_distance, cosine_similarity, pearson, silhouette_mean, silhouette_samples,
    DistanceMetric,
};
