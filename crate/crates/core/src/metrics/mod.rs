//! Layerwise analyses: probing, ABX, clustering and RSA, each with a
//! bootstrap confidence interval.

mod abx;
mod bootstrap;
mod probe;
mod result;
mod rsa;

pub use abx::{abx_score, run_abx};
pub use bootstrap::{bootstrap_ci, bootstrap_percentile, BootstrapConfig};
pub use probe::{run_cluster, run_probe, ClusterConfig};
pub use result::{Analysis, AnalysisContext, ContrastScore, LayerwiseResult, ResultMetadata};
pub use rsa::{build_rsa_set, rsa_pairs, run_rsa, RsaSet};
