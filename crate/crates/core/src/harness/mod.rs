//! Experiment configuration, the transfer grid runner, results tables and
//! SVG plots.

mod config;
mod plot;
mod runner;
mod table;

pub use config::*;
pub use plot::{curve_svg, heatmap_svg, scene_svg, Frame, Layer};
pub use runner::{
    plot_dir, plot_run, run_landscape, run_train, run_transfer, Experiment, Manifest, Scene, SceneStage,
    SourceOutcome, TransferSummary, TOOL_VERSION,
};
pub use table::{over_budget, parse_run_row, read_run_reports, ResultsTable, TableRow};
