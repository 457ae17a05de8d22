//! Top-K inference, Precision@K, evaluation reports and the bag-of-words baseline.

mod baseline;
mod metrics;
mod report;

pub use baseline::{item_document, train_baseline, BaselineMode, BaselineModel, TOP_QUERIES};
pub use metrics::{precision_at_k, predict_topk};
pub use report::{evaluate, subset_precision, EvalReport, EvalSplit, ReportMeta, SubsetReport, TagScorer};
