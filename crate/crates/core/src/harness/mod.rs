//! Training, evaluation, ablation and reporting on the synthetic benchmark.

pub mod ablate;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod train;

pub use ablate::{
    parse_report_csv, report_csv, report_markdown, report_records, routing_csv, run_ablation, run_cell,
    run_sweep, sweep_csv, sweep_usage_csv, ReportRecord, RunSummary, SweepRow, VariantRun,
};
pub use config::{DataConfig, ModelConfig, OptimizerConfig, RunConfig, SweepConfig, Variant};
pub use data::{BenchData, TaskSampler, TaskSplit};
pub use eval::{evaluate, EvalReport, Generated, RoutingUsage, TaskMetrics};
pub use gradcheck::{grad_check_model, micro_batch, micro_config};
pub use model::{encode_dataset, EncodedExample, ModelSpec, WeeModel};
pub use train::{
    load_model, save_model, train, train_and_evaluate, train_log_csv, FreezeAudit, LogRow,
    RunResult, TrainOutcome,
};

use crate::decoder::{pretrain_decoder, Decoder};
use crate::error::{Result, WeeError};

/// The frozen decoder named by the config, or a freshly pretrained one.
pub fn obtain_decoder(cfg: &RunConfig) -> Result<Decoder> {
    let decoder = match &cfg.decoder_checkpoint {
        Some(path) => Decoder::load(path)?,
        None => pretrain_decoder(&cfg.decoder, &cfg.pretrain)?.0,
    };
    if decoder.config != cfg.decoder {
        return Err(WeeError::Config("decoder checkpoint does not match the decoder config".into()));
    }
    Ok(decoder)
}
