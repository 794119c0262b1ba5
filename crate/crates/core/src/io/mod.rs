//! Data ingestion, synthetic series, configuration and frontier export.

mod config;
mod csvio;
mod dataset;
mod frontier;
mod synth;

pub use config::{
    config_hash, dump_config, parse_config, parse_config_str, Config, ConfigError, DataConfig, ExprConfig,
    MlConfig, OperatorConfig, PdeConfig, SearchConfig,
};
pub use csvio::{load_csv, write_csv};
pub use dataset::{mean, std_dev, DataError, Dataset, GRID_TOLERANCE};
pub use frontier::{emit_plot_data, export_frontier, import_frontier, FrontierRecord, PlotRow};
pub use synth::{default_components, synth_multiscale, Component};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("row {row}, column {column}: {message}")]
    Format { row: usize, column: usize, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("plot data needs exactly 2 objectives, got {0}")]
    Dimension(usize),
    #[error("frontier is empty")]
    EmptyFrontier,
    #[error("frequency {frequency} is not below the Nyquist limit {limit}")]
    Nyquist { frequency: f64, limit: f64 },
}
