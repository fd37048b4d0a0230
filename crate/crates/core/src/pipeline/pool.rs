use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{BurstClassifier, ClassifierConfig, DEFAULT_MC_PASSES, Forecaster, ModelSpec, TrainConfig};
use crate::preprocess::{
    BurstDetector, DEFAULT_THRESHOLD, ImputeScope, NonBurstSeries, NormScheme, Normalizer, split_burst,
};
use crate::rng;
use crate::selection::{CalibrationMap, argmin, calibration_samples, fit_calibration};
use crate::series::{DmSeries, off_diagonal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub models: Vec<ModelSpec>,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub threshold: f64,
    pub passes: usize,
    /// Fit the calibration map; otherwise every model gets the identity.
    pub calibrate: bool,
    /// Clip bursts out of the value models' training data.
    pub clip: bool,
    pub seed: u64,
}

impl PoolConfig {
    pub fn new(models: Vec<ModelSpec>, train: TrainConfig, seed: u64) -> Self {
        Self {
            models,
            train,
            classifier: ClassifierConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            passes: DEFAULT_MC_PASSES,
            calibrate: true,
            clip: true,
            seed,
        }
    }
}

/// Everything the online loop needs, fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPool {
    pub models: Vec<Forecaster>,
    pub classifier: BurstClassifier,
    pub calibration: CalibrationMap,
    pub window: usize,
    pub threshold: f64,
    pub clip: bool,
    /// Deterministic-forecast MAE of each member on the validation slice (Mbps).
    #[serde(with = "crate::serde_float::vec")]
    pub validation_mae: Vec<f64>,
    /// Pairs left without any training value under some normalizer.
    pub empty_pairs: Vec<usize>,
}

impl TrainedPool {
    /// Member with the lowest validation MAE; ties go to the earlier one.
    pub fn best_member(&self) -> usize {
        argmin(&self.validation_mae).unwrap_or(0)
    }
}

fn validation_mae(model: &Forecaster, inputs: &DmSeries, targets: &DmSeries, ends: &[usize]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for &end in ends {
        let pred = model.predict(&inputs.window_at(end, model.window)?)?;
        for od in off_diagonal(inputs.nodes()) {
            if let Some(y) = targets.get(end + 1, od) {
                sum += (pred.values()[od] - y).abs();
                n += 1;
            }
        }
    }
    Ok(if n == 0 { f64::NAN } else { sum / n as f64 })
}

/// Train the pool, the burst classifier and the calibration map.
pub fn train_pool(train: &DmSeries, cfg: &PoolConfig) -> Result<TrainedPool> {
    if cfg.models.is_empty() {
        return Err(Error::EmptyPool);
    }
    cfg.train.validate()?;
    let w = cfg.train.window;
    let detector = BurstDetector::new(cfg.threshold)?;
    let split = split_burst(train, w, &detector)?;
    let data = if cfg.clip { split.non_burst.clone() } else { NonBurstSeries::unclipped(train) };

    let mut normalizers: Vec<(NormScheme, Normalizer)> = Vec::new();
    let mut empty_pairs = Vec::new();
    let mut models = Vec::with_capacity(cfg.models.len());
    for (i, spec) in cfg.models.iter().enumerate() {
        let normalizer = match normalizers.iter().find(|(s, _)| *s == spec.norm) {
            Some((_, n)) => n.clone(),
            None => {
                let (n, empty) = Normalizer::fit(data.series(), spec.norm)?;
                for od in empty {
                    if !empty_pairs.contains(&od) {
                        empty_pairs.push(od);
                    }
                }
                normalizers.push((spec.norm, n.clone()));
                n
            }
        };
        let seed = rng::derive(cfg.seed, "model", i as u64);
        models.push(Forecaster::train(spec, &data, &normalizer, &cfg.train, seed)?);
    }
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|o| o.model_id == m.model_id) {
            return Err(Error::Config(alloc::format!("duplicate model id {}", m.model_id)));
        }
    }
    empty_pairs.sort_unstable();

    let classifier = BurstClassifier::train(
        &split.bursts,
        &cfg.train,
        &cfg.classifier,
        rng::derive(cfg.seed, "classifier", 0),
    )?;

    let inputs = data.zero_impute(ImputeScope::MissingOnly);
    let ends = cfg.train.validation_ends(train.len());
    let validation_mae =
        models.iter().map(|m| validation_mae(m, &inputs, data.series(), &ends)).collect::<Result<Vec<_>>>()?;
    let calibration = if cfg.calibrate {
        let mut per_model = Vec::with_capacity(models.len());
        for m in &models {
            per_model.push((m.model_id.clone(), calibration_samples(m, &inputs, data.series(), &ends, cfg.passes)?));
        }
        fit_calibration(&per_model)?
    } else {
        CalibrationMap::identity(models.iter().map(|m| m.model_id.as_str()))
    };

    Ok(TrainedPool {
        models,
        classifier,
        calibration,
        window: w,
        threshold: cfg.threshold,
        clip: cfg.clip,
        validation_mae,
        empty_pairs,
    })
}
