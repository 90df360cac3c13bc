//! Grid runs, performance summaries and analyses of what drives error.

mod cells;
mod explain;
mod grid;
mod summary;
mod varcomp;

/// Version stamped into every manifest and JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

pub use cells::{read_json, run_cells, write_atomic, write_json, CellCache, CellKey};
pub use explain::{
    block_r2, explain_performance, log_abs_error, write_r2_table_csv, ExplainRow, LOG_FLOOR,
    MIN_CELLS,
};
pub use grid::{
    cell_seed, covariate_seed, estimate_cell, pehe, read_estimates_csv, read_timings_into,
    read_truths_csv, run_cell, run_grid, simulate, write_estimates_csv, write_timings_csv,
    write_truths_csv, CellOutput, Context, EstimateRow, GridConfig, GridManifest, GridOutput,
    Scoring, Setting, TruthRow,
};
pub use summary::{render_report, summarize, write_summary_csv, EvalSummary, MethodSummary};
pub use varcomp::{decompose, variance_components, Components, Observation, VarianceComponents};
