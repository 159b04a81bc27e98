//! Data files, configuration and result persistence.

pub mod config;
pub mod drm_lists;
pub mod embeddings;
pub mod records;

pub use config::ExperimentConfig;
pub use drm_lists::load_drm_lists;
pub use embeddings::{load_embeddings, save_embeddings, LoadedEmbeddings};
pub use records::{ResultRecord, Table};
