//! Semi-automatic construction of per-label training sets from noisily tagged
//! image collections.
//!
//! Candidate images for a label are segmented into regions, the regions are
//! hashed into bins, and the biggest bins are clustered twice: affinity
//! propagation on region features, then k-means on the parent images' global
//! features. A reviewer (or a ground-truth oracle) marks background bins and
//! relevant clusters; approved clusters become positive examples. The
//! [`annotate`] module measures how much a k-NN annotator gains from them.

pub mod annotate;
pub mod approval;
pub mod cluster;
pub mod collage;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod lsh;
pub mod pipeline;
pub mod segment;
pub mod store;
pub mod synth;
pub mod trainset;

mod table;

pub use annotate::{average_precision, AnnotatorConfig, Arm, KnnIndex};
pub use approval::{ApprovalItem, Decision, Session, SessionDir};
pub use cluster::{Cluster, RefineConfig};
pub use config::Config;
pub use corpus::{Corpus, ImageRecord, Split};
pub use error::{Error, Result};
pub use features::{FeatureConfig, GlobalFeature, RegionFeature};
pub use lsh::{Bin, BinKey, Hasher, HasherConfig};
pub use segment::{Region, SegmenterConfig};
pub use store::FeatureStore;
pub use synth::SyntheticConfig;
pub use trainset::TrainingSet;
