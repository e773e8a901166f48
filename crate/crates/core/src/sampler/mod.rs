//! Training views: overlapping crops, ADF-validated temporal
//! neighborhoods with non-neighbor windows, and weak/strong augmentations.
//!
//! Everything here is a pure function of its inputs and an explicit
//! seeded generator.

pub mod adf;
pub mod augment;
pub mod crop;
pub mod neighborhood;

pub use adf::{adf_test, default_max_lag, mackinnon_p_value, schwert_max_lag, AdfResult};
pub use augment::{
    sample_strong_plan, strong_augment, strong_augment_with, weak_augment, weak_augment_parts,
    AugmentConfig, StrongPlan,
};
pub use crop::{crop_pair, max_crop_len, CropSpec};
pub use neighborhood::{
    exclusion_radius, find_neighborhood, neighborhood_window, sample_non_neighbor,
    window_is_stationary, AnchorChoice, NeighborhoodConfig, NeighborhoodSpec,
};
