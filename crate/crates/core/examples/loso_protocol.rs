//! Leave-one-subject-out cross-validation of a small model on synthetic
//! data, with per-fold metrics and the aggregate.

use cogload::eval::{generate_synthetic, make_loso_splits, run_protocol, ProtocolConfig, SynthSpec};
use cogload::model::ModelConfig;
use cogload::train::TrainConfig;

fn main() -> cogload::Result<()> {
    let set = generate_synthetic(&SynthSpec {
        participants: 4,
        windows_per_participant: 20,
        steps: 60,
        ..SynthSpec::default()
    })?;
    let splits = make_loso_splits(&set.participants())?;
    let model = ModelConfig {
        d_model: 16,
        d_state: 8,
        layers_per_direction: 1,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        lr: 0.003,
        batch_size: 16,
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let report = run_protocol::<f32>(&set.windows, &splits, &ProtocolConfig::default(), &train, &model, None)?;
    for f in &report.folds {
        println!(
            "fold {} test {:?}: accuracy {:.3}, AUC {:?}, threshold {:.3}, flip {}, best epoch {}",
            f.fold_id,
            f.test_participants,
            f.metrics.accuracy,
            f.metrics.auc,
            f.training.threshold,
            f.training.flip,
            f.training.best_epoch
        );
    }
    println!(
        "aggregate: {}",
        serde_json::to_string_pretty(&report.aggregate).map_err(cogload::Error::from)?
    );
    Ok(())
}
