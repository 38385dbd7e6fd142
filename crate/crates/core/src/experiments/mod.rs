//! Scenarios, the offline phase, closed-loop campaigns and their outputs.

mod campaign;
mod offline;
mod output;
mod scenario;

pub use campaign::{
    run_campaign, run_campaign_with, simulate_run, Campaign, Execution, MeanSd, RunInputs,
    RunResult, StepRecord, Summary, TRANSIENT_STEPS,
};
pub use offline::{collect, model_from_record, run_offline, IngredientsReport, OfflineArtifacts, DATA_STREAM};
pub use output::{
    histograms, write_campaign, write_diagnostics, write_histograms, write_ingredients, write_json,
    write_metrics, read_metrics, HistogramBin, MetricsReport,
};
pub use scenario::{
    DataSpec, Excitation, HistogramSpec, InitialState, PlantSpec, RepresentationKind, Scenario,
    TerminalLevel, Variant, PRESETS,
};
