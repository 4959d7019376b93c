//! Training procedures: regular cross-entropy training, verifiably
//! robust mixed training (regular loss plus worst-case robust loss over
//! property regions, alternated at the mini-batch level), adversarial
//! retraining, and evaluation metrics.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::bounded_gradient_attack;
use crate::featurespace::{FeatError, FeatureVector, Vocabulary};
use crate::mlp::{
    self, adam_step, features_to_array, forward_batch, loss_ce, AdamState, Gradients, MlpError,
    MlpModel, TrainConfig, CLASS_MALICIOUS,
};
use crate::properties::{regions_for, IntervalRegion, PropertySpec};
use crate::verify::{robust_forward, vra, BoundMethod};

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("property {0} yields no regions for any malicious training sample")]
    NoRegions(String),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error(transparent)]
    Features(#[from] FeatError),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn class_index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Label {
        if i == CLASS_MALICIOUS {
            Label::Malicious
        } else {
            Label::Benign
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub features: FeatureVector,
    pub label: Label,
}

/// Labeled feature vectors with a train/test split.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.train
            .first()
            .or(self.test.first())
            .map(|s| s.features.len())
            .unwrap_or(0)
    }

    pub fn malicious_train(&self) -> Vec<usize> {
        self.train
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == Label::Malicious)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn malicious_test(&self) -> Vec<&Sample> {
        self.test
            .iter()
            .filter(|s| s.label == Label::Malicious)
            .collect()
    }
}

fn batch_matrix(samples: &[Sample], idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    let dim = samples[idx[0]].features.len();
    let mut x = Array2::zeros((idx.len(), dim));
    let mut ys = Vec::with_capacity(idx.len());
    for (row, i) in idx.iter().enumerate() {
        for j in samples[*i].features.iter_ones() {
            x[(row, j)] = 1.0;
        }
        ys.push(samples[*i].label.class_index());
    }
    (x, ys)
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Mean cross-entropy loss and gradients on one batch.
fn regular_batch(model: &MlpModel, samples: &[Sample], idx: &[usize]) -> Result<(Gradients, f64)> {
    let (x, ys) = batch_matrix(samples, idx);
    let pass = forward_batch(model, &x.view())?;
    let mut loss = 0.0;
    let mut dlogits = pass.probs.clone();
    for (row, y) in ys.iter().enumerate() {
        loss += loss_ce(&pass.probs.row(row), *y);
        dlogits[(row, *y)] -= 1.0;
    }
    let scale = 1.0 / idx.len() as f64;
    dlogits.mapv_inplace(|v| v * scale);
    let (grads, _) = mlp::backward_batch_from(model, &x.view(), &pass, &dlogits);
    Ok((grads, loss * scale))
}

/// Worst-region robust loss and gradients for one malicious sample: the
/// maximum cross-entropy over the sample's regions, differentiated
/// through that region's frozen-plan worst-case pass.
fn robust_sample(
    model: &MlpModel,
    regions: &[IntervalRegion],
    method: BoundMethod,
) -> Result<(Gradients, f64)> {
    let mut best: Option<(f64, crate::verify::RobustPass)> = None;
    for region in regions {
        let pass = robust_forward(model, region, CLASS_MALICIOUS, method)?;
        let probs = softmax1(pass.logits());
        let loss = loss_ce(&probs.view(), CLASS_MALICIOUS);
        let better = match &best {
            None => true,
            Some((l, _)) => loss > *l,
        };
        if better {
            best = Some((loss, pass));
        }
    }
    let (loss, pass) = best.expect("caller guarantees non-empty regions");
    let probs = softmax1(pass.logits());
    let mut dlogits = probs;
    dlogits[CLASS_MALICIOUS] -= 1.0;
    let grads = pass.backward(model, &dlogits);
    Ok((grads, loss))
}

fn softmax1(z: &Array1<f64>) -> Array1<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Mean robust loss and gradients over a batch of malicious samples,
/// evaluated in parallel and reduced in index order for determinism.
fn robust_batch(
    model: &MlpModel,
    regions_per_sample: &[&Vec<IntervalRegion>],
    method: BoundMethod,
) -> Result<(Gradients, f64)> {
    let per_sample: Vec<Result<(Gradients, f64)>> = regions_per_sample
        .par_iter()
        .map(|regions| robust_sample(model, regions, method))
        .collect();
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for r in per_sample {
        let (g, l) = r?;
        grads.add_assign(&g);
        loss += l;
    }
    let scale = 1.0 / regions_per_sample.len() as f64;
    Ok((grads.scaled(scale), loss * scale))
}

/// Per-epoch loss trace, exposed for convergence checks.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

/// Regular training: minimize empirical cross-entropy with Adam.
pub fn train_regular(dataset: &Dataset, cfg: &TrainConfig) -> Result<MlpModel> {
    Ok(train_regular_traced(dataset, cfg)?.0)
}

pub fn train_regular_traced(dataset: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![dataset.dim()];
    dims.extend(&cfg.hidden);
    dims.push(2);
    let mut model = MlpModel::new_random(&dims, &mut rng);
    let mut state = AdamState::new(&model);
    let mut log = TrainLog::default();
    for _epoch in 0..cfg.epochs {
        let order = shuffled(dataset.train.len(), &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let (grads, loss) = regular_batch(&model, &dataset.train, chunk)?;
            adam_step(&mut model, &grads, &mut state, cfg);
            epoch_loss += loss;
            batches += 1;
        }
        log.epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }
    Ok((model, log))
}

enum BatchItem {
    Regular(Vec<usize>),
    Robust { spec: usize, samples: Vec<usize> },
}

/// Verifiably robust mixed training. Every epoch runs one regular stream
/// over the full training set and, per property, one robust stream over
/// the malicious samples; the streams' mini-batches are interleaved in
/// random order, each contributing a unit-weight update, so the combined
/// objective is the sum of the regular and robust losses.
pub fn train_robust(
    dataset: &Dataset,
    vocab: &Vocabulary,
    specs: &[PropertySpec],
    cfg: &TrainConfig,
    method: BoundMethod,
) -> Result<MlpModel> {
    Ok(train_robust_traced(dataset, vocab, specs, cfg, method)?.0)
}

pub fn train_robust_traced(
    dataset: &Dataset,
    vocab: &Vocabulary,
    specs: &[PropertySpec],
    cfg: &TrainConfig,
    method: BoundMethod,
) -> Result<(MlpModel, TrainLog)> {
    let malicious = dataset.malicious_train();
    // region cache: regions are model-independent
    let mut region_cache: Vec<Vec<Vec<IntervalRegion>>> = Vec::with_capacity(specs.len());
    for spec in specs {
        let per_sample: Vec<Vec<IntervalRegion>> = malicious
            .iter()
            .map(|i| regions_for(&dataset.train[*i].features, vocab, spec))
            .collect::<std::result::Result<_, _>>()?;
        if per_sample.iter().all(Vec::is_empty) {
            return Err(TrainError::NoRegions(spec.label()));
        }
        region_cache.push(per_sample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![dataset.dim()];
    dims.extend(&cfg.hidden);
    dims.push(2);
    let mut model = MlpModel::new_random(&dims, &mut rng);
    let mut state = AdamState::new(&model);
    let mut log = TrainLog::default();
    for _epoch in 0..cfg.epochs {
        let mut batches: Vec<BatchItem> = Vec::new();
        for chunk in shuffled(dataset.train.len(), &mut rng).chunks(cfg.batch_size.max(1)) {
            batches.push(BatchItem::Regular(chunk.to_vec()));
        }
        for (si, _) in specs.iter().enumerate() {
            // malicious-subset order (indices into the malicious list)
            for chunk in shuffled(malicious.len(), &mut rng).chunks(cfg.batch_size.max(1)) {
                let samples: Vec<usize> = chunk
                    .iter()
                    .copied()
                    .filter(|mi| !region_cache[si][*mi].is_empty())
                    .collect();
                if !samples.is_empty() {
                    batches.push(BatchItem::Robust { spec: si, samples });
                }
            }
        }
        // randomly mix the streams at the mini-batch level
        let order = shuffled(batches.len(), &mut rng);
        let mut epoch_loss = 0.0;
        for bi in &order {
            let (grads, loss) = match &batches[*bi] {
                BatchItem::Regular(idx) => regular_batch(&model, &dataset.train, idx)?,
                BatchItem::Robust { spec, samples } => {
                    let regions: Vec<&Vec<IntervalRegion>> =
                        samples.iter().map(|mi| &region_cache[*spec][*mi]).collect();
                    robust_batch(&model, &regions, method)?
                }
            };
            adam_step(&mut model, &grads, &mut state, cfg);
            epoch_loss += loss;
        }
        log.epoch_losses.push(epoch_loss / order.len().max(1) as f64);
    }
    Ok((model, log))
}

/// Adversarial retraining outcome with augmentation bookkeeping.
pub struct AdvRetrainOutcome {
    pub model: MlpModel,
    /// Property-consistent variants generated up front (before dedup).
    pub static_variants: usize,
    /// Variants remaining after removing duplicates of base samples.
    pub static_after_dedup: usize,
    /// Evasive vectors found by the bounded gradient attack per epoch.
    pub attack_found: usize,
}

/// Adversarial retraining: augment with full-subtree variants at each
/// property's distance (region corners), plus bounded-gradient-attack
/// evasions found against the current model each epoch, then train
/// regularly on the union.
pub fn adv_retrain(
    dataset: &Dataset,
    vocab: &Vocabulary,
    specs: &[PropertySpec],
    cfg: &TrainConfig,
    attack_subsample: usize,
) -> Result<AdvRetrainOutcome> {
    let malicious = dataset.malicious_train();
    let mut static_variants = 0usize;
    let mut augmented: Vec<Sample> = Vec::new();
    for spec in specs {
        for mi in &malicious {
            let sample = &dataset.train[*mi];
            for region in regions_for(&sample.features, vocab, spec)? {
                // the region corner that applies the full operation
                let v = match spec.kind {
                    crate::properties::PropertyKind::SubtreeDeletion => region.lower,
                    crate::properties::PropertyKind::SubtreeInsertion => region.upper,
                };
                static_variants += 1;
                augmented.push(Sample {
                    id: format!("{}+{}", sample.id, spec.label()),
                    features: v,
                    label: Label::Malicious,
                });
            }
        }
    }
    // identity variants (and duplicates) add nothing; drop them
    let mut seen: std::collections::BTreeSet<Vec<usize>> = dataset
        .train
        .iter()
        .map(|s| s.features.iter_ones().collect())
        .collect();
    augmented.retain(|s| seen.insert(s.features.iter_ones().collect()));
    let static_after_dedup = augmented.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![dataset.dim()];
    dims.extend(&cfg.hidden);
    dims.push(2);
    let mut model = MlpModel::new_random(&dims, &mut rng);
    let mut state = AdamState::new(&model);
    let mut attack_found = 0usize;
    let mut working: Vec<Sample> = dataset.train.iter().cloned().chain(augmented).collect();
    for _epoch in 0..cfg.epochs {
        // hunt for evasions of the current model and fold them in
        let mut pool = if attack_subsample == 0 {
            Vec::new()
        } else {
            let mut pool = malicious.clone();
            for i in (1..pool.len()).rev() {
                let j = rng.random_range(0..=i);
                pool.swap(i, j);
            }
            pool
        };
        pool.truncate(attack_subsample.min(pool.len()));
        for mi in pool {
            let x = &dataset.train[mi].features;
            for spec in specs {
                let result = bounded_gradient_attack(&model, x, vocab, spec)
                    .map_err(|e| TrainError::Model(mlp_err(e)))?;
                if result.success {
                    let v = result.evasive_features.expect("successful attack");
                    if seen.insert(v.iter_ones().collect()) {
                        attack_found += 1;
                        working.push(Sample {
                            id: format!("{}~adv", dataset.train[mi].id),
                            features: v,
                            label: Label::Malicious,
                        });
                    }
                }
            }
        }
        let order = shuffled(working.len(), &mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let (grads, _) = regular_batch(&model, &working, chunk)?;
            adam_step(&mut model, &grads, &mut state, cfg);
        }
    }
    Ok(AdvRetrainOutcome {
        model,
        static_variants,
        static_after_dedup,
        attack_found,
    })
}

fn mlp_err(e: crate::attacks::AttackError) -> MlpError {
    match e {
        crate::attacks::AttackError::Model(m) => m,
        other => MlpError::CorruptModelFile(other.to_string()),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropertyMetrics {
    pub property: String,
    pub vra: f64,
    pub era: f64,
}

/// Test-split metrics plus per-property VRA and bounded-gradient ERA.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub false_positive_rate: f64,
    pub precision: f64,
    pub recall: f64,
    pub per_property: Vec<PropertyMetrics>,
}

pub fn evaluate(
    model: &MlpModel,
    dataset: &Dataset,
    vocab: &Vocabulary,
    specs: &[PropertySpec],
    method: BoundMethod,
) -> Result<Metrics> {
    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for s in &dataset.test {
        let pred = model.predict(&features_to_array(&s.features).view())?;
        match (s.label, pred == CLASS_MALICIOUS) {
            (Label::Malicious, true) => tp += 1,
            (Label::Malicious, false) => fn_ += 1,
            (Label::Benign, true) => fp += 1,
            (Label::Benign, false) => tn += 1,
        }
    }
    let total = dataset.test.len().max(1);
    let benign_total = (fp + tn).max(1);
    let accuracy = (tp + tn) as f64 / total as f64;
    let false_positive_rate = fp as f64 / benign_total as f64;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let malicious: Vec<FeatureVector> = dataset
        .malicious_test()
        .iter()
        .map(|s| s.features.clone())
        .collect();
    let mut per_property = Vec::with_capacity(specs.len());
    for spec in specs {
        let vra_value = vra(model, &malicious, vocab, spec, method)?;
        let era = era_bounded(model, &malicious, vocab, spec)?;
        per_property.push(PropertyMetrics {
            property: spec
                .preset_name(vocab.n_subtrees())
                .map(str::to_string)
                .unwrap_or_else(|| spec.label()),
            vra: vra_value,
            era,
        });
    }
    Ok(Metrics {
        accuracy,
        false_positive_rate,
        precision,
        recall,
        per_property,
    })
}

/// Estimated robust accuracy under the bounded gradient attack: the
/// fraction of malicious samples classified malicious that the attack
/// fails to evade.
pub fn era_bounded(
    model: &MlpModel,
    malicious: &[FeatureVector],
    vocab: &Vocabulary,
    spec: &PropertySpec,
) -> Result<f64> {
    if malicious.is_empty() {
        return Ok(0.0);
    }
    let robust: Vec<bool> = malicious
        .par_iter()
        .map(|x| {
            let correct = model
                .predict_features(x)
                .map(|p| p == CLASS_MALICIOUS)
                .unwrap_or(false);
            if !correct {
                return false;
            }
            match bounded_gradient_attack(model, x, vocab, spec) {
                Ok(result) => !result.success,
                Err(_) => false,
            }
        })
        .collect();
    Ok(robust.iter().filter(|v| **v).count() as f64 / malicious.len() as f64)
}
