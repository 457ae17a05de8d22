//! Dataset files, preprocessing and train/validation/test splits.

mod dataset;
mod filter;
mod splits;
mod task;

pub use dataset::{
    load_dataset, Entity, RawDataset, ITEMS_FILE, ITEM_TAG_FILE, QUERIES_FILE, QUERY_ITEM_FILE, TAGS_FILE,
};
pub use filter::{preprocess_filter, FilterThresholds};
pub use splits::{make_splits, mask_completion_tags, Role, SplitAssignment, SplitCounts, HELD_OUT_PER_ITEM};
pub use task::TaggingTask;
