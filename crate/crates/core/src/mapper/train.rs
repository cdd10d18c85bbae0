use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward_prepared, cross_entropy, forward_prepared, predict_from_logits, prepare_frame, MapperModel};
use crate::bev::{BevGrid, CameraPose};
use crate::geo::DepthPanorama;
use crate::metrics::{remap_void, void_aware_matrix, MetricReport, VoidMode};
use crate::nn::{AdamW, AdamWConfig, Parameterized};
use crate::raster::RgbImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    /// Seeds the per-epoch scene shuffle.
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1,
            seed: 0,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        let ok = self.batch_size > 0
            && o.learning_rate.is_finite()
            && o.learning_rate >= 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.epsilon > 0.0
            && o.weight_decay.is_finite()
            && o.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingScene {
    pub image: RgbImage,
    pub depth: DepthPanorama,
    pub pose: CameraPose,
    pub gt: BevGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-scene loss of each epoch, measured before each update.
    pub loss_curve: Vec<f64>,
    pub steps: u64,
}

/// Full-batch-per-scene AdamW training; bit-deterministic for a fixed
/// configuration.
pub fn train(model: &mut MapperModel, scenes: &[TrainingScene], config: &TrainConfig) -> Result<TrainReport> {
    if scenes.is_empty() {
        return Err(Error::invalid("training needs at least one scene"));
    }
    config.validate()?;
    let frames = scenes
        .iter()
        .map(|s| {
            if s.gt.spec != model.config.spec {
                return Err(Error::invalid("ground-truth grid spec differs from the model spec"));
            }
            prepare_frame(&s.image, &s.depth, &s.pose, &model.config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut opt = AdamW::new(config.optimizer, model.params.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut total: Option<Vec<f64>> = None;
            for &i in batch {
                let (logits, cache) = forward_prepared(&frames[i], &model.params, &model.config)?;
                let (loss, mut d) = cross_entropy(&logits, &frames[i].mask.mask, &scenes[i].gt.labels)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss on scene {i}")));
                }
                epoch_loss += loss;
                let scale = 1.0 / batch.len() as f64;
                d.iter_mut().for_each(|v| *v *= scale);
                let g = backward_prepared(&frames[i], &model.params, &cache, &d)?.flatten();
                match &mut total {
                    Some(t) => t.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => total = Some(g),
                }
            }
            let mut grads = model.params.zeros_like();
            grads.assign_flat(&total.expect("non-empty batch"))?;
            opt.step(&mut model.params, &grads)?;
        }
        loss_curve.push(epoch_loss / scenes.len() as f64);
    }
    Ok(TrainReport {
        loss_curve,
        steps: opt.steps_taken(),
    })
}

/// Scores predictions against each scene's ground truth.
pub fn evaluate_scenes(model: &MapperModel, scenes: &[TrainingScene], void_mode: VoidMode) -> Result<MetricReport> {
    let k = model.config.num_classes;
    let void = model.config.spec.void_label;
    let mut cm = void_aware_matrix(k, void, void_mode)?;
    for s in scenes {
        let frame = prepare_frame(&s.image, &s.depth, &s.pose, &model.config)?;
        let (logits, _) = forward_prepared(&frame, &model.params, &model.config)?;
        let pred = predict_from_logits(&logits, &frame.mask);
        cm.accumulate_slices(
            &remap_void(&pred.labels, k, void, void_mode),
            &remap_void(&s.gt.labels, k, void, void_mode),
        )?;
    }
    cm.summarize()
}
