//! Skeleton-based evaluation: edge categories, omission adjustment, the
//! edge-accuracy report and SegEM-style split/merger counts.

mod edges;
mod segem;
mod skeleton;

pub use edges::{
    adjust_omitted, classify_edges, edge_accuracy, evaluate, ClassifiedEdge, EdgeCategory, EdgeClassification,
    EvaluationReport,
};
pub use segem::{segem_counts, SegemCounts};
pub use skeleton::{load_skeletons, parse_skeletons, render_skeletons, save_skeletons, Skeleton, SkeletonNode};
