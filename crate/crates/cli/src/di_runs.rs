//! Distributed-inference stages: model training and the loss sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skywatch::di::{
    datasets, evaluate, plot_rows, sweep_eval, train_models, DeskNet, DiPlotRow, SweepRow,
};
use skywatch::nn::Checkpoint;
use skywatch::par::Execution;
use skywatch::{Error, Result};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanAccuracy {
    pub model_tag: String,
    pub accuracy: f64,
}

pub type TaggedModel = (String, DeskNet);

pub fn model_path(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("desknet_{tag}.ckpt"))
}

/// Trains the conventional and fine-tuned models and scores each on the
/// clean test set.
pub fn train(
    cfg: &ExperimentConfig,
    exec: Execution,
) -> Result<(Vec<TaggedModel>, Vec<CleanAccuracy>)> {
    let (train, test) = datasets(&cfg.di, cfg.seed);
    let models = train_models(&cfg.di, &train, cfg.seed, exec)?;
    let clean = models
        .iter()
        .map(|(tag, net)| {
            Ok(CleanAccuracy {
                model_tag: tag.clone(),
                accuracy: evaluate(net, &test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((models, clean))
}

pub fn save_models(dir: &Path, models: &[(String, DeskNet)]) -> Result<()> {
    for (tag, net) in models {
        net.checkpoint().save(&model_path(dir, tag))?;
    }
    Ok(())
}

/// Loads the conventional model and one model per configured dropout rate.
pub fn load_models(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<(String, DeskNet)>> {
    let tags = std::iter::once(skywatch::di::model_tag(None)).chain(
        cfg.di
            .dropout_rates
            .iter()
            .map(|&r| skywatch::di::model_tag(Some(r))),
    );
    tags.map(|tag| {
        let path = model_path(dir, &tag);
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} not found; run `di-train` first",
                path.display()
            )));
        }
        let net = DeskNet::from_checkpoint(&Checkpoint::load(&path)?)?;
        if net.config != cfg.di.net {
            return Err(Error::Config(format!(
                "{} was trained with a different network config",
                path.display()
            )));
        }
        Ok((tag, net))
    })
    .collect()
}

pub fn sweep(
    cfg: &ExperimentConfig,
    models: &[(String, DeskNet)],
    exec: Execution,
) -> Result<(Vec<SweepRow>, Vec<DiPlotRow>)> {
    let (_, test) = datasets(&cfg.di, cfg.seed);
    let rows = sweep_eval(models, &cfg.di, &test, cfg.seed, exec)?;
    let plot = plot_rows(&rows, &cfg.di);
    Ok((rows, plot))
}
