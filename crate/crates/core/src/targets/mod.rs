//! Controlled preference targets and attribute-selection diagnostics.

mod correlation;
mod tree;

pub use correlation::{phi_coefficient, rank_attributes_by_target_correlation};
pub use tree::{
    attach_tree_labels, label_dataset_with_tree, DecisionTree, DEFAULT_TREE, DEFAULT_TREE_ATTRIBUTES,
};
