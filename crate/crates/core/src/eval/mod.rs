//! Downstream evaluation: ward-linkage clustering, clustering metrics,
//! linear probes, feature-block correlation, integrated-gradients
//! attribution, and the PCA baseline.

mod hac;
mod ig;
mod metrics;
mod pca;
mod pcc;
mod probe;

pub use hac::{hac_ward, ClusteringResult};
pub use ig::{integrated_gradients, uniform_spans, AttributionReport, BlockSpan};
pub use metrics::{
    cluster_accuracy, clustering_report, majority_predictions, nmi, weighted_f1, ClassF1,
    MetricsReport,
};
pub use pca::{fit_pca, Pca};
pub use pcc::{pcc_disentanglement, PccReport};
pub use probe::{fit_probe_head, linear_probe, probe_features, LabelKind, ProbeConfig, ProbeHead, ProbeMode};
