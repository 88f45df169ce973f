//! Binary waveform classifier.
//!
//! A small 1-D convolutional network over the 1024-bin spectrum feature:
//! four convolution stages (each kernel-7 convolution, rectifier, and 2:1
//! max-pool) followed by one fully connected stage producing two scores
//! turned into probabilities by a softmax. Training is plain minibatch
//! gradient descent with momentum on the cross-entropy loss; everything is
//! seeded and reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::real::Real;

use super::spectrum::{SignalLabel, SpectrumFeature, SPECTRUM_BINS};
use super::ClassifyError;

/// Convolution channel widths per stage.
pub const CHANNELS: [usize; 5] = [1, 8, 16, 32, 64];
/// Convolution kernel length (same padding).
pub const KERNEL: usize = 7;
/// Confidence floor below which a classification is flagged.
pub const LOW_CONFIDENCE: f64 = 0.6;

/// One same-padded 1-D convolution layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `[out_ch][in_ch][kernel]`, flattened.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs][inputs]`, flattened.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Seed, schedule and outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub init_seed: u64,
    pub epochs: usize,
    pub dataset_hash: u64,
    pub trained: bool,
    pub final_train_accuracy: f64,
    pub final_validation_accuracy: f64,
}

/// The waveform classifier: four conv stages plus one fully connected stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel<T> {
    pub convs: Vec<Conv1d<T>>,
    pub fc: Dense<T>,
    pub metadata: TrainingMetadata,
}

/// Output of a classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification<T> {
    pub label: SignalLabel,
    pub probability: T,
    /// Set when the winning probability is below the confidence floor.
    pub low_confidence: bool,
}

/// Training schedule.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub learning_rate: T,
    pub momentum: T,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: T,
    /// Global gradient-norm ceiling per batch; 0 disables clipping.
    pub clip_norm: T,
    /// Parallel batch gradients; faster but forfeits bitwise determinism
    /// (floating-point reduction order varies with scheduling).
    pub parallel: bool,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 12,
            learning_rate: T::of(0.01),
            momentum: T::of(0.9),
            batch_size: 32,
            shuffle_seed: 0x5eed,
            lr_decay: T::of(0.9),
            clip_norm: T::of(5.0),
            parallel: false,
        }
    }
}

/// Per-epoch loss and accuracy trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
}

impl<T: Real> ClassifierModel<T> {
    /// Fresh model with uniform fan-in-scaled random weights.
    pub fn new(init_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut convs = Vec::new();
        for stage in 0..CHANNELS.len() - 1 {
            let (in_ch, out_ch) = (CHANNELS[stage], CHANNELS[stage + 1]);
            let fan_in = in_ch * KERNEL;
            let bound = T::of(1.0 / (fan_in as f64).sqrt());
            convs.push(Conv1d {
                in_ch,
                out_ch,
                kernel: KERNEL,
                weights: (0..out_ch * in_ch * KERNEL)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
                bias: vec![T::zero(); out_ch],
            });
        }
        let flat = flattened_size();
        let bound = T::of(1.0 / (flat as f64).sqrt());
        let fc = Dense {
            inputs: flat,
            outputs: 2,
            weights: (0..2 * flat).map(|_| rng.random_range(-bound..bound)).collect(),
            bias: vec![T::zero(); 2],
        };
        Self {
            convs,
            fc,
            metadata: TrainingMetadata {
                init_seed,
                epochs: 0,
                dataset_hash: 0,
                trained: false,
                final_train_accuracy: 0.0,
                final_validation_accuracy: 0.0,
            },
        }
    }

    /// Class probabilities for a 1024-bin spectrum.
    pub fn probabilities(&self, bins: &[T]) -> [T; 2] {
        softmax(self.logits(bins))
    }

    /// Raw two-class scores.
    pub fn logits(&self, bins: &[T]) -> [T; 2] {
        let (logits, _) = forward(self, bins, false);
        logits
    }

    /// Classifies a feature. Ties break toward `Radar` (prefer a false alarm
    /// over a missed emitter); sub-threshold confidence is flagged.
    pub fn classify(
        &self,
        feature: &SpectrumFeature<T>,
    ) -> Result<Classification<T>, ClassifyError> {
        if !self.metadata.trained {
            return Err(ClassifyError::UntrainedModel);
        }
        if feature.bins.len() != SPECTRUM_BINS {
            return Err(ClassifyError::BadFeatureLength {
                got: feature.bins.len(),
            });
        }
        let probs = self.probabilities(&feature.bins);
        let label = if probs[0] >= probs[1] {
            SignalLabel::Radar
        } else {
            SignalLabel::WiGig
        };
        let probability = probs[0].max(probs[1]);
        Ok(Classification {
            label,
            probability,
            low_confidence: probability < T::of(LOW_CONFIDENCE),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.weights.len() + c.bias.len())
            .sum::<usize>()
            + self.fc.weights.len()
            + self.fc.bias.len()
    }

    /// All parameters as one flat vector (convs in order: weights then bias,
    /// then the dense stage).
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for c in &self.convs {
            out.extend_from_slice(&c.weights);
            out.extend_from_slice(&c.bias);
        }
        out.extend_from_slice(&self.fc.weights);
        out.extend_from_slice(&self.fc.bias);
        out
    }

    pub fn set_params(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut offset = 0;
        for c in &mut self.convs {
            let (wlen, blen) = (c.weights.len(), c.bias.len());
            c.weights.copy_from_slice(&params[offset..offset + wlen]);
            offset += wlen;
            c.bias.copy_from_slice(&params[offset..offset + blen]);
            offset += blen;
        }
        let wlen = self.fc.weights.len();
        self.fc.weights.copy_from_slice(&params[offset..offset + wlen]);
        offset += wlen;
        self.fc.bias.copy_from_slice(&params[offset..]);
    }
}

/// Flattened activation size feeding the dense stage.
pub fn flattened_size() -> usize {
    let mut len = SPECTRUM_BINS;
    for _ in 0..CHANNELS.len() - 1 {
        len /= 2;
    }
    len * CHANNELS[CHANNELS.len() - 1]
}

fn softmax<T: Real>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Forward-pass cache for backprop.
struct ForwardCache<T> {
    /// Input of each conv stage, `[ch][len]`.
    stage_inputs: Vec<Vec<T>>,
    stage_input_lens: Vec<usize>,
    /// Pre-rectifier conv outputs.
    pre_relu: Vec<Vec<T>>,
    /// Flat argmax index (into the rectified map) per pooled element.
    pool_argmax: Vec<Vec<usize>>,
    /// Input of the dense stage.
    flat: Vec<T>,
}

fn forward<T: Real>(model: &ClassifierModel<T>, bins: &[T], keep: bool) -> ([T; 2], Option<ForwardCache<T>>) {
    debug_assert_eq!(bins.len(), SPECTRUM_BINS);
    let mut cache = keep.then(|| ForwardCache {
        stage_inputs: Vec::new(),
        stage_input_lens: Vec::new(),
        pre_relu: Vec::new(),
        pool_argmax: Vec::new(),
        flat: Vec::new(),
    });

    let mut activation: Vec<T> = bins.to_vec(); // [ch][len], starts 1 x 1024
    let mut len = SPECTRUM_BINS;
    for conv in &model.convs {
        if let Some(c) = cache.as_mut() {
            c.stage_inputs.push(activation.clone());
            c.stage_input_lens.push(len);
        }
        let conv_out = convolve(conv, &activation, len);
        if let Some(c) = cache.as_mut() {
            c.pre_relu.push(conv_out.clone());
        }
        // Rectify + 2:1 max-pool in one pass.
        let pooled_len = len / 2;
        let mut pooled = vec![T::zero(); conv.out_ch * pooled_len];
        let mut argmax = keep.then(|| vec![0usize; conv.out_ch * pooled_len]);
        for ch in 0..conv.out_ch {
            let row = &conv_out[ch * len..(ch + 1) * len];
            for i in 0..pooled_len {
                let a = row[2 * i].max(T::zero());
                let b = row[2 * i + 1].max(T::zero());
                let (v, idx) = if a >= b { (a, 2 * i) } else { (b, 2 * i + 1) };
                pooled[ch * pooled_len + i] = v;
                if let Some(arg) = argmax.as_mut() {
                    arg[ch * pooled_len + i] = ch * len + idx;
                }
            }
        }
        if let (Some(c), Some(arg)) = (cache.as_mut(), argmax) {
            c.pool_argmax.push(arg);
        }
        activation = pooled;
        len = pooled_len;
    }

    if let Some(c) = cache.as_mut() {
        c.flat = activation.clone();
    }
    let mut logits = [T::zero(); 2];
    for (o, logit) in logits.iter_mut().enumerate() {
        let row = &model.fc.weights[o * model.fc.inputs..(o + 1) * model.fc.inputs];
        let mut acc = model.fc.bias[o];
        for (w, x) in row.iter().zip(&activation) {
            acc += *w * *x;
        }
        *logit = acc;
    }
    (logits, cache)
}

fn convolve<T: Real>(conv: &Conv1d<T>, input: &[T], len: usize) -> Vec<T> {
    let pad = conv.kernel / 2;
    let mut out = vec![T::zero(); conv.out_ch * len];
    for oc in 0..conv.out_ch {
        let out_row = &mut out[oc * len..(oc + 1) * len];
        out_row.iter_mut().for_each(|v| *v = conv.bias[oc]);
        for ic in 0..conv.in_ch {
            let in_row = &input[ic * len..(ic + 1) * len];
            let w = &conv.weights[(oc * conv.in_ch + ic) * conv.kernel..][..conv.kernel];
            for (j, &wj) in w.iter().enumerate() {
                if wj == T::zero() {
                    continue;
                }
                // out[i] += w[j] * in[i + j - pad]
                let shift = j as isize - pad as isize;
                let (start, end) = if shift < 0 {
                    ((-shift) as usize, len)
                } else {
                    (0, len - shift as usize)
                };
                for i in start..end {
                    out_row[i] += wj * in_row[(i as isize + shift) as usize];
                }
            }
        }
    }
    out
}

/// Cross-entropy loss and parameter gradients over a batch.
///
/// Returns `(mean loss, mean gradient, correct count)` with the gradient in
/// the same flat order as [`ClassifierModel::params`].
pub fn loss_and_gradients<T: Real>(
    model: &ClassifierModel<T>,
    batch: &[(&[T], SignalLabel)],
) -> (T, Vec<T>, usize) {
    let mut total_loss = T::zero();
    let mut grads = vec![T::zero(); model.parameter_count()];
    let mut correct = 0usize;
    for (bins, label) in batch {
        let (loss, sample_grads, hit) = sample_loss_and_gradients(model, bins, *label);
        total_loss += loss;
        for (g, s) in grads.iter_mut().zip(&sample_grads) {
            *g += *s;
        }
        correct += usize::from(hit);
    }
    let scale = T::of(batch.len() as f64).recip();
    total_loss *= scale;
    grads.iter_mut().for_each(|g| *g *= scale);
    (total_loss, grads, correct)
}

/// Parallel variant of [`loss_and_gradients`]; reduction order is
/// scheduler-dependent, so results are not bitwise reproducible.
pub fn loss_and_gradients_parallel<T: Real>(
    model: &ClassifierModel<T>,
    batch: &[(&[T], SignalLabel)],
) -> (T, Vec<T>, usize) {
    let (total_loss, grads, correct) = batch
        .par_iter()
        .map(|(bins, label)| {
            let (loss, grads, hit) = sample_loss_and_gradients(model, bins, *label);
            (loss, grads, usize::from(hit))
        })
        .reduce(
            || (T::zero(), vec![T::zero(); model.parameter_count()], 0usize),
            |mut a, b| {
                a.0 += b.0;
                for (x, y) in a.1.iter_mut().zip(&b.1) {
                    *x += *y;
                }
                a.2 += b.2;
                a
            },
        );
    let scale = T::of(batch.len() as f64).recip();
    let mut grads = grads;
    grads.iter_mut().for_each(|g| *g *= scale);
    (total_loss * scale, grads, correct)
}

fn sample_loss_and_gradients<T: Real>(
    model: &ClassifierModel<T>,
    bins: &[T],
    label: SignalLabel,
) -> (T, Vec<T>, bool) {
    let (logits, cache) = forward(model, bins, true);
    let cache = cache.expect("cache requested");
    let probs = softmax(logits);
    let target = label.as_byte() as usize;
    let tiny = T::of(1e-300);
    let loss = -(probs[target] + tiny).ln();
    let predicted = if probs[0] >= probs[1] { 0 } else { 1 };

    // d loss / d logits = p - onehot
    let mut dlogits = [probs[0], probs[1]];
    dlogits[target] -= T::one();

    let mut grads = vec![T::zero(); model.parameter_count()];
    let conv_param_len: usize = model
        .convs
        .iter()
        .map(|c| c.weights.len() + c.bias.len())
        .sum();

    // Dense stage gradients.
    let flat = &cache.flat;
    let mut offset = conv_param_len;
    for o in 0..2 {
        let row = &mut grads[offset + o * model.fc.inputs..offset + (o + 1) * model.fc.inputs];
        for (g, x) in row.iter_mut().zip(flat) {
            *g = dlogits[o] * *x;
        }
    }
    offset += model.fc.weights.len();
    grads[offset] = dlogits[0];
    grads[offset + 1] = dlogits[1];

    // Gradient w.r.t. the dense input.
    let mut dflat = vec![T::zero(); model.fc.inputs];
    for o in 0..2 {
        let row = &model.fc.weights[o * model.fc.inputs..(o + 1) * model.fc.inputs];
        for (dx, w) in dflat.iter_mut().zip(row) {
            *dx += dlogits[o] * *w;
        }
    }

    // Walk the conv stages backwards.
    let mut dpooled = dflat;
    let mut grad_offset = conv_param_len;
    for (stage, conv) in model.convs.iter().enumerate().rev() {
        grad_offset -= conv.weights.len() + conv.bias.len();
        let len = cache.stage_input_lens[stage];
        let pooled_len = len / 2;
        let argmax = &cache.pool_argmax[stage];
        let pre_relu = &cache.pre_relu[stage];

        // Un-pool and un-rectify into the conv-output gradient.
        let mut dconv = vec![T::zero(); conv.out_ch * len];
        for ch in 0..conv.out_ch {
            for i in 0..pooled_len {
                let flat_idx = ch * pooled_len + i;
                let src = argmax[flat_idx];
                if pre_relu[src] > T::zero() {
                    dconv[src] += dpooled[flat_idx];
                }
            }
        }

        // Weight/bias gradients and input gradient.
        let input = &cache.stage_inputs[stage];
        let pad = conv.kernel / 2;
        let mut dinput = vec![T::zero(); conv.in_ch * len];
        let wgrads = &mut grads[grad_offset..grad_offset + conv.weights.len() + conv.bias.len()];
        for oc in 0..conv.out_ch {
            let drow = &dconv[oc * len..(oc + 1) * len];
            let mut bias_acc = T::zero();
            for &d in drow {
                bias_acc += d;
            }
            wgrads[conv.weights.len() + oc] = bias_acc;
            for ic in 0..conv.in_ch {
                let in_row = &input[ic * len..(ic + 1) * len];
                let din_row = &mut dinput[ic * len..(ic + 1) * len];
                let wbase = (oc * conv.in_ch + ic) * conv.kernel;
                for j in 0..conv.kernel {
                    let shift = j as isize - pad as isize;
                    let (start, end) = if shift < 0 {
                        ((-shift) as usize, len)
                    } else {
                        (0, len - shift as usize)
                    };
                    let mut wacc = T::zero();
                    let wj = conv.weights[wbase + j];
                    for i in start..end {
                        let src = (i as isize + shift) as usize;
                        let d = drow[i];
                        wacc += d * in_row[src];
                        din_row[src] += d * wj;
                    }
                    wgrads[wbase + j] = wacc;
                }
            }
        }
        dpooled = dinput;
    }

    (loss, grads, predicted == target)
}

/// Trains the model in place with minibatch gradient descent with momentum.
///
/// `train`/`val` are `(bins, label)` views. Deterministic for a fixed
/// config unless `parallel` is set.
pub fn train_model<T: Real>(
    model: &mut ClassifierModel<T>,
    train: &[(&[T], SignalLabel)],
    val: &[(&[T], SignalLabel)],
    cfg: &TrainConfig<T>,
) -> Result<TrainingCurve, ClassifyError> {
    if cfg.epochs == 0 {
        return Err(ClassifyError::InvalidTraining("epochs must be >= 1".into()));
    }
    if train.is_empty() {
        return Err(ClassifyError::InvalidTraining("empty training set".into()));
    }
    let has_both = train.iter().any(|(_, l)| *l == SignalLabel::Radar)
        && train.iter().any(|(_, l)| *l == SignalLabel::WiGig);
    if !has_both {
        return Err(ClassifyError::SingleClassDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut velocity = vec![T::zero(); model.parameter_count()];
    let mut curve = TrainingCurve {
        train_loss: Vec::new(),
        train_accuracy: Vec::new(),
        validation_accuracy: Vec::new(),
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = cfg.learning_rate;
    for _ in 0..cfg.epochs {
        // Fisher-Yates with the epoch's stream.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = T::zero();
        let mut epoch_correct = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<(&[T], SignalLabel)> =
                chunk.iter().map(|&i| train[i]).collect();
            let (loss, mut grads, correct) = if cfg.parallel {
                loss_and_gradients_parallel(model, &batch)
            } else {
                loss_and_gradients(model, &batch)
            };
            if cfg.clip_norm > T::zero() {
                let norm = grads.iter().map(|g| *g * *g).sum::<T>().sqrt();
                if norm > cfg.clip_norm {
                    let scale = cfg.clip_norm / norm;
                    grads.iter_mut().for_each(|g| *g *= scale);
                }
            }
            epoch_loss += loss * T::of(batch.len() as f64);
            epoch_correct += correct;
            let mut params = model.params();
            for ((v, g), p) in velocity.iter_mut().zip(&grads).zip(params.iter_mut()) {
                *v = cfg.momentum * *v - lr * *g;
                *p += *v;
            }
            model.set_params(&params);
        }
        curve
            .train_loss
            .push((epoch_loss / T::of(train.len() as f64)).as_f64());
        curve
            .train_accuracy
            .push(epoch_correct as f64 / train.len() as f64);
        curve.validation_accuracy.push(evaluate(model, val));
        lr *= cfg.lr_decay;
    }

    model.metadata.trained = true;
    model.metadata.epochs = cfg.epochs;
    model.metadata.final_train_accuracy = *curve.train_accuracy.last().unwrap();
    model.metadata.final_validation_accuracy = *curve.validation_accuracy.last().unwrap();
    Ok(curve)
}

/// Fraction of correctly classified samples.
pub fn evaluate<T: Real>(model: &ClassifierModel<T>, samples: &[(&[T], SignalLabel)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples
        .iter()
        .filter(|(bins, label)| {
            let probs = model.probabilities(bins);
            let predicted = if probs[0] >= probs[1] {
                SignalLabel::Radar
            } else {
                SignalLabel::WiGig
            };
            predicted == *label
        })
        .count();
    correct as f64 / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_feature(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..SPECTRUM_BINS).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = ClassifierModel::<f64>::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let bins = random_feature(&mut rng);
            let p = model.probabilities(&bins);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
            assert!(p[0] >= 0.0 && p[1] >= 0.0);
        }
    }

    #[test]
    fn memorizes_two_distinct_features() {
        // Ten copies each of two separable features reach 100% within
        // 200 epochs.
        let mut a = vec![0.0; SPECTRUM_BINS];
        a[100] = 1.0;
        a[101] = 0.8;
        let mut b = vec![0.0; SPECTRUM_BINS];
        for (i, v) in b.iter_mut().enumerate() {
            *v = 0.2 + 0.3 * ((i as f64) / 80.0).sin().abs();
        }
        let mut samples: Vec<(&[f64], SignalLabel)> = Vec::new();
        for _ in 0..10 {
            samples.push((a.as_slice(), SignalLabel::Radar));
            samples.push((b.as_slice(), SignalLabel::WiGig));
        }
        let mut model = ClassifierModel::<f64>::new(7);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let curve = train_model(&mut model, &samples, &samples, &cfg).unwrap();
        let last = *curve.train_accuracy.last().unwrap();
        assert_eq!(last, 1.0, "train accuracy {last}");
        // A training sample classifies as its own label.
        let feature = SpectrumFeature {
            bins: a.clone(),
            probe_freq_hz: 0.0,
            label: None,
        };
        let c = model.classify(&feature).unwrap();
        assert_eq!(c.label, SignalLabel::Radar);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = ClassifierModel::<f64>::new(11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats: Vec<Vec<f64>> = (0..3).map(|_| random_feature(&mut rng)).collect();
        let batch: Vec<(&[f64], SignalLabel)> = vec![
            (feats[0].as_slice(), SignalLabel::Radar),
            (feats[1].as_slice(), SignalLabel::WiGig),
            (feats[2].as_slice(), SignalLabel::Radar),
        ];
        let (_, analytic, _) = loss_and_gradients(&model, &batch);

        // Spot-check a spread of parameters across all layers.
        let count = model.parameter_count();
        let mut indices: Vec<usize> = (0..120).map(|_| rng.random_range(0..count)).collect();
        indices.push(0);
        indices.push(count - 1);
        indices.push(count - 2); // fc biases
        let base = model.params();
        let h = 3e-6;
        for &idx in &indices {
            let mut plus = model.clone();
            let mut p = base.clone();
            p[idx] += h;
            plus.set_params(&p);
            let (lp, _, _) = loss_and_gradients(&plus, &batch);
            let mut minus = model.clone();
            p[idx] = base[idx] - h;
            minus.set_params(&p);
            let (lm, _, _) = loss_and_gradients(&minus, &batch);
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic[idx].abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic[idx] - numeric).abs() / denom;
            assert!(
                rel < 1e-4,
                "param {idx}: analytic {} vs numeric {numeric}, rel {rel}",
                analytic[idx]
            );
        }
    }

    #[test]
    fn untrained_model_is_rejected() {
        let model = ClassifierModel::<f64>::new(1);
        let feature = SpectrumFeature {
            bins: vec![0.0; SPECTRUM_BINS],
            probe_freq_hz: 0.0,
            label: None,
        };
        assert!(matches!(
            model.classify(&feature),
            Err(ClassifyError::UntrainedModel)
        ));
    }

    #[test]
    fn zero_spectrum_has_defined_output() {
        let mut model = ClassifierModel::<f64>::new(1);
        model.metadata.trained = true;
        let feature = SpectrumFeature {
            bins: vec![0.0; SPECTRUM_BINS],
            probe_freq_hz: 0.0,
            label: None,
        };
        let c = model.classify(&feature).unwrap();
        assert!(c.probability >= 0.5 && c.probability <= 1.0);
        // An untrained-weights model on a zero input sits at ~0.5: flagged.
        assert!(c.low_confidence);
    }

    #[test]
    fn single_class_dataset_rejected() {
        let bins = vec![0.5; SPECTRUM_BINS];
        let samples: Vec<(&[f64], SignalLabel)> =
            vec![(bins.as_slice(), SignalLabel::Radar); 4];
        let mut model = ClassifierModel::<f64>::new(2);
        assert!(matches!(
            train_model(&mut model, &samples, &samples, &TrainConfig::default()),
            Err(ClassifyError::SingleClassDataset)
        ));
    }

    #[test]
    fn training_is_deterministic_in_serial_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let feats: Vec<Vec<f64>> = (0..8).map(|_| random_feature(&mut rng)).collect();
        let samples: Vec<(&[f64], SignalLabel)> = feats
            .iter()
            .enumerate()
            .map(|(i, f)| {
                (
                    f.as_slice(),
                    if i % 2 == 0 {
                        SignalLabel::Radar
                    } else {
                        SignalLabel::WiGig
                    },
                )
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let mut m1 = ClassifierModel::<f64>::new(21);
        train_model(&mut m1, &samples, &samples, &cfg).unwrap();
        let mut m2 = ClassifierModel::<f64>::new(21);
        train_model(&mut m2, &samples, &samples, &cfg).unwrap();
        assert_eq!(m1.params(), m2.params());
    }
}
