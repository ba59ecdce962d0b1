use serde::{Deserialize, Serialize};

use super::em::{
    init_uniform, m1_em_iteration, m2_em_iteration, m3_em_iteration, m4_em_iteration, transfer_to_m2, transfer_to_m3,
    transfer_to_m4,
};
use super::{IbmError, ModelConfig, ModelParams, Stage, TrainSchedule, WordClasses};
use crate::corpus::Bitext;

/// Likelihood after one EM iteration: exact for M1/M2, neighborhood
/// pseudo-likelihood for M3/M4. Always measured under the input parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub stage: Stage,
    pub iteration: usize,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub telemetry: Vec<IterationRecord>,
}

fn promote(bitext: &Bitext, params: &ModelParams) -> Result<ModelParams, IbmError> {
    match params.stage {
        Stage::M1 => transfer_to_m2(bitext, params),
        Stage::M2 => transfer_to_m3(bitext, params),
        Stage::M3 => transfer_to_m4(bitext, params),
        Stage::M4 => unreachable!("no stage above M4"),
    }
}

/// Runs the schedule stage by stage, transferring parameters upward between
/// stages. Stages the schedule skips are entered from their uniform or
/// transferred initialization without iterations (a warning is logged).
/// `on_iteration` sees every telemetry record as it is produced.
pub fn train(
    bitext: &Bitext,
    schedule: &TrainSchedule,
    config: &ModelConfig,
    classes: Option<WordClasses>,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome, IbmError> {
    let mut params = init_uniform(bitext, config)?;
    if let Some(classes) = classes {
        params.classes = classes;
    }
    let mut telemetry = Vec::new();
    let mut trained = false;
    for &(stage, iterations) in schedule.steps() {
        while params.stage < stage {
            if !trained {
                log::warn!(
                    "entering {} without training {}: tables start from their initial values",
                    stage,
                    params.stage
                );
            }
            params = promote(bitext, &params)?;
            trained = false;
        }
        for iteration in 1..=iterations {
            let (next, log_likelihood) = match stage {
                Stage::M1 => m1_em_iteration(bitext, &params)?,
                Stage::M2 => m2_em_iteration(bitext, &params)?,
                Stage::M3 => m3_em_iteration(bitext, &params, &config.hillclimb)?,
                Stage::M4 => m4_em_iteration(bitext, &params, &config.hillclimb)?,
            };
            params = next;
            let record = IterationRecord { stage, iteration, log_likelihood };
            on_iteration(&record);
            telemetry.push(record);
        }
        trained = true;
    }
    Ok(TrainOutcome { params, telemetry })
}
