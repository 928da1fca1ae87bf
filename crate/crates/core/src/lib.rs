//! Approximate probability distributions over image segments and full
//! segmentations, built from statistical image models.
//!
//! Starting from a grid partition of a range image into small regions, the
//! crate maintains covers of segment and segmentation sample spaces whose
//! events carry exact probability mass, refines them best-first with
//! evidence-driven membership probabilities, and enumerates the most probable
//! segments or segmentations with a sound termination guarantee. A
//! brute-force oracle validates the incremental machinery exhaustively on
//! small instances.

pub mod error;
pub mod evidence;
pub mod math;
pub mod membership;
pub mod oracle;
pub mod region_graph;
pub mod scene_io;
pub mod segment_space;
pub mod segmentation_space;

pub use error::{Error, Result};
pub use evidence::{
    lambda1, membership_probability, membership_split, parse_model_config, EvidenceModel,
    MembershipSplit, ModelConfig, PlanarGaussianModel, PriorMode, PriorSpec,
    DEFAULT_PRIOR_SCALE,
};
pub use membership::{
    EvaluationMode, EvidenceMembership, MembershipOracle, UniformMembership,
};
pub use oracle::{
    enumerate_segmentations, enumerate_segments, exact_masses, exact_prior_masses,
    prior_comparison, ExactDistribution, ExactMode, PriorComparison,
};
pub use region_graph::{ImageGrid, Region, RegionGraph, RegionId, RegionSet};
pub use scene_io::{
    generate_scene, read_range_image, write_label_map, write_range_image, write_render,
    LabelMap, SceneSpec,
};
pub use segment_space::{
    entropy, top_n_segments, RankedDistribution, SegmentSearch, TCover, TEvent,
};
pub use segmentation_space::{
    s_event_probability, top_n_segmentations, Partition, SCover, SEvent, SegmentationSearch,
};
