//! Inter-image saliency scoring: a small feed-forward scorer over segment
//! descriptors, its weighted cross-entropy training, and the graph
//! refinement of raw scores into smooth per-segment fields.
//!
//! The scorer is three fully-connected layers with batch normalization and
//! ReLU after the first two, ending in a two-way softmax. A model-free
//! similarity heuristic ships alongside so the pipeline runs without
//! trained weights.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ImageDescriptors;
use crate::graph::{intra_graph, propagate, RankingSolver, SeedVector};
use crate::imagio::Tensor;
use crate::superpixel::{SegmentedImage, SegmentField};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormLayer {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }

    fn infer(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                (v - self.running_mean[j]) / (self.running_var[j] + BN_EPS).sqrt() * self.gamma[j]
                    + self.beta[j]
            })
            .collect()
    }
}

/// Three affine layers with batch normalization and ReLU between them,
/// ending in a two-way softmax.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dims: [usize; 2],
    pub fc: [LinearLayer; 3],
    pub bn: [BatchNormLayer; 2],
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0;
        }
    });
}

/// Probability of the positive class from two logits, computed stably.
fn softmax_positive(z0: f64, z1: f64) -> f64 {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    e1 / (e0 + e1)
}

impl MlpModel {
    /// Inference forward pass using the stored running statistics.
    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch(format!(
                "descriptor has {} dims, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut h = self.fc[0].forward(x);
        h = self.bn[0].infer(&h);
        relu(&mut h);
        let mut h = self.fc[1].forward(&h);
        h = self.bn[1].infer(&h);
        relu(&mut h);
        let z = self.fc[2].forward(&h);
        Ok([z[0], z[1]])
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let [z0, z1] = self.logits(x)?;
        Ok(softmax_positive(z0, z1))
    }

    /// Fresh model with seeded He-style initialization.
    pub fn init(input_dim: usize, hidden_dims: [usize; 2], rng: &mut impl Rng) -> Self {
        let dims = [input_dim, hidden_dims[0], hidden_dims[1], 2];
        let mut fc = Vec::with_capacity(3);
        for l in 0..3 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let weight = (0..fan_in * fan_out)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * scale)
                .collect();
            fc.push(LinearLayer { out_dim: fan_out, in_dim: fan_in, weight, bias: vec![0.0; fan_out] });
        }
        let bn = [BatchNormLayer::identity(hidden_dims[0]), BatchNormLayer::identity(hidden_dims[1])];
        let fc: [LinearLayer; 3] = fc.try_into().expect("three layers");
        Self { input_dim, hidden_dims, fc, bn }
    }

    /// All learnable parameters flattened in a fixed order (fc weights and
    /// biases interleaved with batch-norm scale/shift, layer by layer).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in 0..3 {
            v.extend_from_slice(&self.fc[l].weight);
            v.extend_from_slice(&self.fc[l].bias);
            if l < 2 {
                v.extend_from_slice(&self.bn[l].gamma);
                v.extend_from_slice(&self.bn[l].beta);
            }
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        let mut take = |buf: &mut [f64]| {
            for b in buf.iter_mut() {
                *b = it.next().expect("parameter vector too short");
            }
        };
        for l in 0..3 {
            let mut w = std::mem::take(&mut self.fc[l].weight);
            take(&mut w);
            self.fc[l].weight = w;
            let mut b = std::mem::take(&mut self.fc[l].bias);
            take(&mut b);
            self.fc[l].bias = b;
            if l < 2 {
                let mut g = std::mem::take(&mut self.bn[l].gamma);
                take(&mut g);
                self.bn[l].gamma = g;
                let mut be = std::mem::take(&mut self.bn[l].beta);
                take(&mut be);
                self.bn[l].beta = be;
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }
}

/// One labeled segment for scorer training.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub descriptor: Vec<f64>,
    /// 1 iff the segment-averaged ground truth reaches 0.5.
    pub label: u8,
    /// Segment-level intra-image saliency in `[0,1]`.
    pub intra: f64,
    /// Segment-averaged (continuous) ground-truth co-saliency.
    pub gt_cosal: f64,
}

fn sample_weight(s: &TrainSample, rho: f64, gamma: f64) -> f64 {
    let class = if s.label == 1 { rho } else { 1.0 - rho };
    class * gamma.powf((s.intra - s.gt_cosal).abs())
}

fn log_softmax(z: [f64; 2], y: u8) -> f64 {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    z[y as usize] - lse
}

/// Pointweighted cross entropy: the mean over the batch of
/// `-lambda_i * log softmax(z_i)[y_i]`, where `lambda_i` balances the two
/// classes by `rho` and re-weights by `gamma^|intra - gt|`.
pub fn weighted_loss(samples: &[TrainSample], logits: &[[f64; 2]], rho: f64, gamma: f64) -> f64 {
    assert_eq!(samples.len(), logits.len());
    let n = samples.len().max(1) as f64;
    samples
        .iter()
        .zip(logits)
        .map(|(s, &z)| -sample_weight(s, rho, gamma) * log_softmax(z, s.label))
        .sum::<f64>()
        / n
}

/// Gradient of [`weighted_loss`] with respect to the logits.
pub fn weighted_loss_grad(samples: &[TrainSample], logits: &[[f64; 2]], rho: f64, gamma: f64) -> Vec<[f64; 2]> {
    let n = samples.len().max(1) as f64;
    samples
        .iter()
        .zip(logits)
        .map(|(s, &z)| {
            let p1 = softmax_positive(z[0], z[1]);
            let p = [1.0 - p1, p1];
            let w = sample_weight(s, rho, gamma) / n;
            let mut g = [w * p[0], w * p[1]];
            g[s.label as usize] -= w;
            g
        })
        .collect()
}

/// Parameter gradients in the same flat order as
/// [`MlpModel::flatten_params`].
pub struct Gradients {
    pub fc_weight: [Vec<f64>; 3],
    pub fc_bias: [Vec<f64>; 3],
    pub bn_gamma: [Vec<f64>; 2],
    pub bn_beta: [Vec<f64>; 2],
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in 0..3 {
            v.extend_from_slice(&self.fc_weight[l]);
            v.extend_from_slice(&self.fc_bias[l]);
            if l < 2 {
                v.extend_from_slice(&self.bn_gamma[l]);
                v.extend_from_slice(&self.bn_beta[l]);
            }
        }
        v
    }
}

struct BnBatch {
    mean: Vec<f64>,
    var: Vec<f64>,
    xhat: Vec<Vec<f64>>,
}

fn bn_forward_train(layer: &BatchNormLayer, inputs: &[Vec<f64>]) -> (Vec<Vec<f64>>, BnBatch) {
    let m = inputs.len() as f64;
    let dim = layer.gamma.len();
    let mut mean = vec![0.0f64; dim];
    for x in inputs {
        for j in 0..dim {
            mean[j] += x[j];
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0f64; dim];
    for x in inputs {
        for j in 0..dim {
            var[j] += (x[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let mut xhat = Vec::with_capacity(inputs.len());
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut xh = Vec::with_capacity(dim);
        let mut o = Vec::with_capacity(dim);
        for j in 0..dim {
            let h = (x[j] - mean[j]) / (var[j] + BN_EPS).sqrt();
            xh.push(h);
            o.push(layer.gamma[j] * h + layer.beta[j]);
        }
        xhat.push(xh);
        out.push(o);
    }
    (out, BnBatch { mean, var, xhat })
}

#[allow(clippy::too_many_arguments)]
fn bn_backward(
    layer: &BatchNormLayer,
    inputs: &[Vec<f64>],
    batch: &BnBatch,
    dout: &[Vec<f64>],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<Vec<f64>> {
    let m = inputs.len() as f64;
    let dim = layer.gamma.len();
    let inv_std: Vec<f64> = batch.var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut dvar = vec![0.0f64; dim];
    let mut dmean = vec![0.0f64; dim];
    let mut sum_centered = vec![0.0f64; dim];
    for (i, x) in inputs.iter().enumerate() {
        for j in 0..dim {
            dgamma[j] += dout[i][j] * batch.xhat[i][j];
            dbeta[j] += dout[i][j];
            let dxhat = dout[i][j] * layer.gamma[j];
            dvar[j] += dxhat * (x[j] - batch.mean[j]) * (-0.5) * inv_std[j].powi(3);
            dmean[j] += -dxhat * inv_std[j];
            sum_centered[j] += x[j] - batch.mean[j];
        }
    }
    for j in 0..dim {
        dmean[j] += dvar[j] * (-2.0 / m) * sum_centered[j];
    }
    inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            (0..dim)
                .map(|j| {
                    let dxhat = dout[i][j] * layer.gamma[j];
                    dxhat * inv_std[j] + dvar[j] * 2.0 * (x[j] - batch.mean[j]) / m + dmean[j] / m
                })
                .collect()
        })
        .collect()
}

fn linear_forward_batch(layer: &LinearLayer, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| layer.forward(x)).collect()
}

fn linear_backward_batch(
    layer: &LinearLayer,
    xs: &[Vec<f64>],
    dout: &[Vec<f64>],
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Vec<Vec<f64>> {
    for (x, d) in xs.iter().zip(dout) {
        for o in 0..layer.out_dim {
            dbias[o] += d[o];
            let row = &mut dweight[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (rw, &xv) in row.iter_mut().zip(x) {
                *rw += d[o] * xv;
            }
        }
    }
    dout.iter()
        .map(|d| {
            (0..layer.in_dim)
                .map(|i| (0..layer.out_dim).map(|o| layer.weight[o * layer.in_dim + i] * d[o]).sum())
                .collect()
        })
        .collect()
}

/// Training-mode forward and backward pass over one batch. Returns the
/// Eq-style weighted loss, its parameter gradients (no weight decay), and
/// the batch statistics of both normalization layers.
pub fn batch_loss_and_gradients(
    model: &MlpModel,
    batch: &[TrainSample],
    rho: f64,
    gamma: f64,
) -> (f64, Gradients, [(Vec<f64>, Vec<f64>); 2]) {
    let xs: Vec<Vec<f64>> = batch.iter().map(|s| s.descriptor.clone()).collect();

    let a1 = linear_forward_batch(&model.fc[0], &xs);
    let (u1, bn1) = bn_forward_train(&model.bn[0], &a1);
    let r1: Vec<Vec<f64>> = u1
        .iter()
        .map(|v| v.iter().map(|&x| x.max(0.0)).collect())
        .collect();
    let a2 = linear_forward_batch(&model.fc[1], &r1);
    let (u2, bn2) = bn_forward_train(&model.bn[1], &a2);
    let r2: Vec<Vec<f64>> = u2
        .iter()
        .map(|v| v.iter().map(|&x| x.max(0.0)).collect())
        .collect();
    let z = linear_forward_batch(&model.fc[2], &r2);
    let logits: Vec<[f64; 2]> = z.iter().map(|v| [v[0], v[1]]).collect();
    let loss = weighted_loss(batch, &logits, rho, gamma);
    let dz: Vec<Vec<f64>> = weighted_loss_grad(batch, &logits, rho, gamma)
        .into_iter()
        .map(|g| g.to_vec())
        .collect();

    let mut grads = Gradients {
        fc_weight: [
            vec![0.0; model.fc[0].weight.len()],
            vec![0.0; model.fc[1].weight.len()],
            vec![0.0; model.fc[2].weight.len()],
        ],
        fc_bias: [
            vec![0.0; model.fc[0].bias.len()],
            vec![0.0; model.fc[1].bias.len()],
            vec![0.0; model.fc[2].bias.len()],
        ],
        bn_gamma: [vec![0.0; model.bn[0].gamma.len()], vec![0.0; model.bn[1].gamma.len()]],
        bn_beta: [vec![0.0; model.bn[0].beta.len()], vec![0.0; model.bn[1].beta.len()]],
    };

    let (mut dw2, mut db2) = (std::mem::take(&mut grads.fc_weight[2]), std::mem::take(&mut grads.fc_bias[2]));
    let dr2 = linear_backward_batch(&model.fc[2], &r2, &dz, &mut dw2, &mut db2);
    grads.fc_weight[2] = dw2;
    grads.fc_bias[2] = db2;

    let du2: Vec<Vec<f64>> = dr2
        .iter()
        .zip(&u2)
        .map(|(d, u)| d.iter().zip(u).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect())
        .collect();
    let (mut dg1, mut dbt1) = (std::mem::take(&mut grads.bn_gamma[1]), std::mem::take(&mut grads.bn_beta[1]));
    let da2 = bn_backward(&model.bn[1], &a2, &bn2, &du2, &mut dg1, &mut dbt1);
    grads.bn_gamma[1] = dg1;
    grads.bn_beta[1] = dbt1;

    let (mut dw1, mut db1) = (std::mem::take(&mut grads.fc_weight[1]), std::mem::take(&mut grads.fc_bias[1]));
    let dr1 = linear_backward_batch(&model.fc[1], &r1, &da2, &mut dw1, &mut db1);
    grads.fc_weight[1] = dw1;
    grads.fc_bias[1] = db1;

    let du1: Vec<Vec<f64>> = dr1
        .iter()
        .zip(&u1)
        .map(|(d, u)| d.iter().zip(u).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect())
        .collect();
    let (mut dg0, mut dbt0) = (std::mem::take(&mut grads.bn_gamma[0]), std::mem::take(&mut grads.bn_beta[0]));
    let da1 = bn_backward(&model.bn[0], &a1, &bn1, &du1, &mut dg0, &mut dbt0);
    grads.bn_gamma[0] = dg0;
    grads.bn_beta[0] = dbt0;

    let (mut dw0, mut db0) = (std::mem::take(&mut grads.fc_weight[0]), std::mem::take(&mut grads.fc_bias[0]));
    let _ = linear_backward_batch(&model.fc[0], &xs, &da1, &mut dw0, &mut db0);
    grads.fc_weight[0] = dw0;
    grads.fc_bias[0] = db0;

    let stats = [(bn1.mean, bn1.var), (bn2.mean, bn2.var)];
    (loss, grads, stats)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub rho: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dims: [usize; 2],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rho: 0.7,
            gamma: 3.0,
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 200,
            batch_size: 32,
            hidden_dims: [256, 64],
            seed: 0,
        }
    }
}

pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch SGD with momentum and weight decay on the weighted cross
/// entropy. Deterministic for a fixed seed.
pub fn train(samples: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    if samples.len() < 2 {
        return Err(Error::InvalidData(format!("{} samples, need at least 2", samples.len())));
    }
    let positives = samples.iter().filter(|s| s.label == 1).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::InvalidData("training set must contain both labels".into()));
    }
    let dim = samples[0].descriptor.len();
    if samples.iter().any(|s| s.descriptor.len() != dim) {
        return Err(Error::InvalidData("descriptors disagree on dimension".into()));
    }
    if !(0.0 < config.rho && config.rho < 1.0) {
        return Err(Error::InvalidArg(format!("rho {} outside (0,1)", config.rho)));
    }
    if config.gamma < 1.0 {
        return Err(Error::InvalidArg(format!("gamma {} must be >= 1", config.gamma)));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init(dim, config.hidden_dims, &mut rng);
    let mut velocity: Vec<f64> = vec![0.0; model.flatten_params().len()];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch_size = config.batch_size.max(1);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, grads, stats) = batch_loss_and_gradients(&model, &batch, config.rho, config.gamma);
            epoch_loss += loss;
            batches += 1;

            let mut flat = grads.flatten();
            // weight decay on fully-connected weights only
            let params = model.flatten_params();
            let mut offset = 0usize;
            for l in 0..3 {
                let wlen = model.fc[l].weight.len();
                for p in offset..offset + wlen {
                    flat[p] += config.weight_decay * params[p];
                }
                offset += wlen + model.fc[l].bias.len();
                if l < 2 {
                    offset += model.bn[l].gamma.len() + model.bn[l].beta.len();
                }
            }
            let mut new_params = params;
            for ((v, g), p) in velocity.iter_mut().zip(&flat).zip(new_params.iter_mut()) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
            model.set_params(&new_params);

            for (l, (mean, var)) in stats.into_iter().enumerate() {
                for j in 0..mean.len() {
                    model.bn[l].running_mean[j] =
                        BN_MOMENTUM * model.bn[l].running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                    model.bn[l].running_var[j] =
                        BN_MOMENTUM * model.bn[l].running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
                }
            }
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Scores every segment of an image with the trained model.
pub fn score_segments(model: &MlpModel, desc: &ImageDescriptors) -> Result<SegmentField> {
    let mut values = Vec::with_capacity(desc.segment_count());
    for i in 0..desc.segment_count() {
        values.push(model.score(&desc.concat(i))?);
    }
    Ok(SegmentField::new(values, desc.scale_tag))
}

/// Model-free fallback: cosine similarity between each segment's own
/// descriptor part and the group foreground part (over their aligned
/// sub-blocks), standardized per image and squashed through a logistic.
/// Scores above 0.5 mean above-average group correspondence.
pub fn heuristic_scores(desc: &ImageDescriptors) -> SegmentField {
    let layout = &desc.layout;
    let gfg = &desc.gfg;
    let mut gsub = Vec::new();
    gsub.extend_from_slice(&gfg[layout.region_high()]);
    gsub.extend_from_slice(&gfg[layout.region_lab()]);
    gsub.extend_from_slice(&gfg[layout.region_hist()]);
    let gnorm = gsub.iter().map(|v| v * v).sum::<f64>().sqrt();

    let cosines: Vec<f64> = (0..desc.segment_count())
        .map(|i| {
            let part = &desc.seg[i];
            let mut ssub = Vec::new();
            ssub.extend_from_slice(&part[layout.seg_high()]);
            ssub.extend_from_slice(&part[layout.seg_lab()]);
            ssub.extend_from_slice(&part[layout.seg_hist()]);
            let snorm = ssub.iter().map(|v| v * v).sum::<f64>().sqrt();
            if snorm == 0.0 || gnorm == 0.0 {
                return 0.0;
            }
            ssub.iter().zip(&gsub).map(|(a, b)| a * b).sum::<f64>() / (snorm * gnorm)
        })
        .collect();
    let n = cosines.len().max(1) as f64;
    let mean = cosines.iter().sum::<f64>() / n;
    let std = (cosines.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
    const SLOPE: f64 = 2.0;
    let values = cosines
        .iter()
        .map(|&c| {
            if std == 0.0 {
                0.5
            } else {
                1.0 / (1.0 + (-SLOPE * (c - mean) / std).exp())
            }
        })
        .collect();
    SegmentField::new(values, desc.scale_tag)
}

/// Indices of the top `ceil(0.1 * n)` values, ties broken by ascending
/// index.
pub fn top_decile(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let k = n.div_ceil(10).max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Refines raw scores by seed propagation over the intra-image graph:
/// foreground seeds are top-decile scores above 0.5; background seeds are
/// boundary segments. Falls back to the raw field when no foreground seed
/// qualifies.
pub fn refine_scores(
    seg: &SegmentedImage,
    raw: &SegmentField,
    alpha: f64,
    eta: f64,
) -> Result<SegmentField> {
    let n = seg.segment_count;
    if raw.len() != n {
        return Err(Error::DimMismatch(format!(
            "raw field has {} values, segmentation has {} segments",
            raw.len(),
            n
        )));
    }
    let fg: Vec<usize> = top_decile(&raw.values)
        .into_iter()
        .filter(|&i| raw.values[i] > 0.5)
        .collect();
    if fg.is_empty() {
        return Ok(raw.clone());
    }
    let bg: Vec<usize> = (0..n).filter(|&i| seg.boundary_flags[i]).collect();
    let graph = intra_graph(seg)?;
    let solver = RankingSolver::new(&graph, alpha)?;
    let values = propagate(
        &solver,
        &SeedVector::from_indices(n, fg),
        &SeedVector::from_indices(n, bg),
        eta,
    )?;
    Ok(SegmentField::new(values, raw.scale_tag))
}

#[derive(Serialize, Deserialize)]
struct WeightEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct WeightHeader {
    version: u32,
    input_dim: usize,
    hidden_dims: [usize; 2],
    entries: Vec<WeightEntry>,
}

fn weight_entries(model: &MlpModel) -> Vec<(String, usize, usize, Vec<f64>)> {
    let mut out = Vec::new();
    for l in 0..3 {
        let fc = &model.fc[l];
        out.push((format!("fc{l}.weight"), fc.out_dim, fc.in_dim, fc.weight.clone()));
        out.push((format!("fc{l}.bias"), 1, fc.out_dim, fc.bias.clone()));
        if l < 2 {
            let bn = &model.bn[l];
            out.push((format!("bn{l}.gamma"), 1, bn.gamma.len(), bn.gamma.clone()));
            out.push((format!("bn{l}.beta"), 1, bn.beta.len(), bn.beta.clone()));
            out.push((format!("bn{l}.running_mean"), 1, bn.running_mean.len(), bn.running_mean.clone()));
            out.push((format!("bn{l}.running_var"), 1, bn.running_var.len(), bn.running_var.clone()));
        }
    }
    out
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Writes the model as a flat tensor container plus a JSON sidecar listing
/// the layer shapes in order.
pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let entries = weight_entries(model);
    let mut data = Vec::new();
    let mut header = WeightHeader {
        version: 1,
        input_dim: model.input_dim,
        hidden_dims: model.hidden_dims,
        entries: Vec::new(),
    };
    for (name, rows, cols, values) in entries {
        header.entries.push(WeightEntry { name, rows, cols });
        data.extend(values.iter().map(|&v| v as f32));
    }
    let len = data.len();
    crate::imagio::save_tensor(&Tensor::new(1, len, 1, data)?, path)?;
    let json = serde_json::to_string_pretty(&header).expect("serializable header");
    std::fs::write(sidecar_path(path), json)
        .map_err(|e| Error::Io { path: sidecar_path(path), source: e })
}

/// Loads a model saved by [`save_model`], validating the header against the
/// stored tensor.
pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let json = std::fs::read_to_string(&side).map_err(|e| Error::Io { path: side.clone(), source: e })?;
    let header: WeightHeader = serde_json::from_str(&json)
        .map_err(|e| Error::Format { path: side.clone(), reason: e.to_string() })?;
    if header.version != 1 {
        return Err(Error::Format { path: side, reason: format!("unsupported version {}", header.version) });
    }
    let tensor = crate::imagio::load_tensor(path)?;
    let expected: usize = header.entries.iter().map(|e| e.rows * e.cols).sum();
    if tensor.data.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("tensor holds {} values, header needs {expected}", tensor.data.len()),
        });
    }
    let dims = [header.input_dim, header.hidden_dims[0], header.hidden_dims[1], 2];
    let mut rng_model = MlpModel {
        input_dim: header.input_dim,
        hidden_dims: header.hidden_dims,
        fc: [
            LinearLayer { out_dim: dims[1], in_dim: dims[0], weight: vec![], bias: vec![] },
            LinearLayer { out_dim: dims[2], in_dim: dims[1], weight: vec![], bias: vec![] },
            LinearLayer { out_dim: dims[3], in_dim: dims[2], weight: vec![], bias: vec![] },
        ],
        bn: [BatchNormLayer::identity(dims[1]), BatchNormLayer::identity(dims[2])],
    };
    let mut cursor = 0usize;
    for entry in &header.entries {
        let slice: Vec<f64> =
            tensor.data[cursor..cursor + entry.rows * entry.cols].iter().map(|&v| v as f64).collect();
        cursor += entry.rows * entry.cols;
        let (kind, layer) = entry
            .name
            .split_once('.')
            .ok_or_else(|| Error::Format { path: path.to_path_buf(), reason: format!("bad entry {}", entry.name) })?;
        let idx: usize = kind[2..]
            .parse()
            .map_err(|_| Error::Format { path: path.to_path_buf(), reason: format!("bad entry {}", entry.name) })?;
        let expect_shape = |got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("{} has shape {:?}, expected {:?}", entry.name, got, want),
                })
            }
        };
        match (kind.starts_with("fc"), layer) {
            (true, "weight") => {
                let fc = &mut rng_model.fc[idx];
                expect_shape((entry.rows, entry.cols), (fc.out_dim, fc.in_dim))?;
                fc.weight = slice;
            }
            (true, "bias") => {
                let fc = &mut rng_model.fc[idx];
                expect_shape((entry.rows, entry.cols), (1, fc.out_dim))?;
                fc.bias = slice;
            }
            (false, "gamma") => rng_model.bn[idx].gamma = slice,
            (false, "beta") => rng_model.bn[idx].beta = slice,
            (false, "running_mean") => rng_model.bn[idx].running_mean = slice,
            (false, "running_var") => {
                if slice.iter().any(|&v| v <= 0.0) {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        reason: "non-positive running variance".into(),
                    });
                }
                rng_model.bn[idx].running_var = slice;
            }
            _ => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("unknown entry {}", entry.name),
                })
            }
        }
    }
    if rng_model.fc.iter().any(|fc| fc.weight.is_empty() || fc.bias.is_empty()) {
        return Err(Error::Format { path: path.to_path_buf(), reason: "missing layer weights".into() });
    }
    Ok(rng_model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AffinityGraph;
    use crate::superpixel::test_util::grid_segmentation;

    fn tiny_model() -> MlpModel {
        // 1 -> 2 -> 2 -> 2 with hand-set weights and identity batch norm
        MlpModel {
            input_dim: 1,
            hidden_dims: [2, 2],
            fc: [
                LinearLayer { out_dim: 2, in_dim: 1, weight: vec![1.0, -2.0], bias: vec![0.5, 0.0] },
                LinearLayer {
                    out_dim: 2,
                    in_dim: 2,
                    weight: vec![1.0, 1.0, 0.5, -1.0],
                    bias: vec![0.0, 0.25],
                },
                LinearLayer {
                    out_dim: 2,
                    in_dim: 2,
                    weight: vec![0.2, -0.3, 0.7, 0.1],
                    bias: vec![0.1, -0.2],
                },
            ],
            bn: [BatchNormLayer::identity(2), BatchNormLayer::identity(2)],
        }
    }

    #[test]
    fn forward_pass_matches_hand_arithmetic() {
        let model = tiny_model();
        // x = 1: a1 = [1*1+0.5, -2*1+0] = [1.5, -2]; bn identity divides by
        // sqrt(1+eps); relu -> [1.5/s, 0]
        let s = (1.0f64 + 1e-5).sqrt();
        let h1 = [1.5 / s, 0.0];
        let a2 = [h1[0] + h1[1], 0.5 * h1[0] - h1[1] + 0.25];
        let h2 = [(a2[0] / s).max(0.0), (a2[1] / s).max(0.0)];
        let z0 = 0.2 * h2[0] - 0.3 * h2[1] + 0.1;
        let z1 = 0.7 * h2[0] + 0.1 * h2[1] - 0.2;
        let expect = 1.0 / (1.0 + (z0 - z1).exp());
        let got = model.score(&[1.0]).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn softmax_symmetry_and_saturation() {
        assert_eq!(softmax_positive(0.3, 0.3), 0.5);
        let sat = softmax_positive(0.0, 50.0);
        assert!((sat - 1.0).abs() < 1e-20);
        let p = softmax_positive(1.2, -0.7);
        assert!(p > 0.0 && p < 1.0);
        assert!((p + softmax_positive(-0.7, 1.2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let model = tiny_model();
        assert!(matches!(model.score(&[1.0, 2.0]), Err(Error::DimMismatch(_))));
    }

    fn sample(label: u8, intra: f64, gt: f64) -> TrainSample {
        TrainSample { descriptor: vec![0.0], label, intra, gt_cosal: gt }
    }

    #[test]
    fn weighted_loss_hand_values() {
        // y=1, z0=z1, rho=0.7, gamma=3, |rs-gt|=0 -> 0.7*ln2
        let s = sample(1, 0.4, 0.4);
        let loss = weighted_loss(&[s], &[[1.0, 1.0]], 0.7, 3.0);
        assert!((loss - 0.7 * std::f64::consts::LN_2).abs() < 1e-4);
        assert!((loss - 0.4852).abs() < 1e-4);

        // |rs-gt|=1 -> lambda = 2.1
        let s = sample(1, 1.0, 0.0);
        let loss = weighted_loss(&[s], &[[1.0, 1.0]], 0.7, 3.0);
        assert!((loss - 2.1 * std::f64::consts::LN_2).abs() < 1e-4);
        assert!((loss - 1.4556).abs() < 1e-4);

        // confident correct prediction for y=0 -> loss near zero
        let s = sample(0, 0.2, 0.2);
        let loss = weighted_loss(&[s], &[[30.0, -30.0]], 0.7, 3.0);
        assert!(loss >= 0.0 && loss < 1e-10);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let dim = 4;
            let model = MlpModel::init(dim, [5, 3], &mut rng);
            let batch: Vec<TrainSample> = (0..6)
                .map(|i| TrainSample {
                    descriptor: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    label: (i % 2) as u8,
                    intra: rng.gen::<f64>(),
                    gt_cosal: rng.gen::<f64>(),
                })
                .collect();
            let (_, grads, _) = batch_loss_and_gradients(&model, &batch, 0.7, 3.0);
            let analytic = grads.flatten();
            let params = model.flatten_params();
            let eps = 1e-5;
            let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-10);
            for p in (0..params.len()).step_by(7) {
                let mut m = model.clone();
                let mut pp = params.clone();
                pp[p] += eps;
                m.set_params(&pp);
                let (lp, _, _) = batch_loss_and_gradients(&m, &batch, 0.7, 3.0);
                pp[p] -= 2.0 * eps;
                m.set_params(&pp);
                let (lm, _, _) = batch_loss_and_gradients(&m, &batch, 0.7, 3.0);
                let numeric = (lp - lm) / (2.0 * eps);
                let rel = (analytic[p] - numeric).abs() / scale;
                assert!(rel < 1e-4, "trial {trial} param {p}: {rel}");
            }
        }
    }

    #[test]
    fn training_rejects_single_class_data() {
        let samples: Vec<TrainSample> = (0..4)
            .map(|i| TrainSample {
                descriptor: vec![i as f64],
                label: 1,
                intra: 0.5,
                gt_cosal: 0.5,
            })
            .collect();
        assert!(matches!(train(&samples, &TrainConfig::default()), Err(Error::InvalidData(_))));
    }

    #[test]
    fn heuristic_scores_are_probabilities() {
        let seg_a = grid_segmentation(12, 8, 3, 2);
        let fields = vec![SegmentField::new(vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3], seg_a.scale_tag)];
        let (descs, _) =
            crate::features::build_group_descriptors(std::slice::from_ref(&seg_a), &fields, None)
                .unwrap();
        let scores = heuristic_scores(&descs[0]);
        assert_eq!(scores.len(), 6);
        assert!(scores.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn top_decile_tie_break() {
        let vals = vec![0.9; 25];
        let top = top_decile(&vals);
        assert_eq!(top, vec![0, 1, 2]); // ceil(2.5) = 3, ties by index
    }

    #[test]
    fn refinement_falls_back_without_foreground_seeds() {
        let seg = grid_segmentation(20, 10, 5, 2);
        let raw = SegmentField::new(vec![0.2; 10], seg.scale_tag);
        let es = refine_scores(&seg, &raw, 0.95, 2.0).unwrap();
        assert_eq!(es.values, raw.values);
    }

    #[test]
    fn refinement_handles_constant_high_scores() {
        let seg = grid_segmentation(20, 10, 5, 2);
        let raw = SegmentField::new(vec![0.9; 10], seg.scale_tag);
        let es = refine_scores(&seg, &raw, 0.95, 2.0).unwrap();
        assert_eq!(es.len(), 10);
        assert!(es.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn chain_propagation_peaks_at_seed_and_decays() {
        // 10-node chain, uniform weights; foreground at node 5, background
        // at the two ends
        let edges: Vec<(usize, usize, f64)> = (0..9).map(|i| (i, i + 1, 1.0)).collect();
        let g = AffinityGraph::from_edges(10, edges).unwrap();
        let solver = RankingSolver::new(&g, 0.95).unwrap();
        let fg = SeedVector::from_indices(10, [5]);
        let bg = SeedVector::from_indices(10, [0, 9]);
        let es = propagate(&solver, &fg, &bg, 2.0).unwrap();
        let peak = es.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(peak, 5);
        for i in 0..5 {
            assert!(es[i] <= es[i + 1] + 1e-12, "left side not increasing at {i}: {es:?}");
        }
        for i in 5..9 {
            assert!(es[i] >= es[i + 1] - 1e-12, "right side not decreasing at {i}: {es:?}");
        }
        // dense oracle over the same chain
        let mut dense = nalgebra::DMatrix::<f64>::zeros(10, 10);
        for i in 0..10 {
            dense[(i, i)] = g.degree(i);
        }
        for i in 0..9 {
            dense[(i, i + 1)] = -0.95;
            dense[(i + 1, i)] = -0.95;
        }
        let mut wl = dense.try_inverse().unwrap();
        for i in 0..10 {
            wl[(i, i)] = 0.0;
        }
        let yf = nalgebra::DVector::from_fn(10, |i, _| if i == 5 { 1.0 } else { 0.0 });
        let yb = nalgebra::DVector::from_fn(10, |i, _| if i == 0 || i == 9 { 1.0 } else { 0.0 });
        let ff = &wl * yf;
        let fb = &wl * yb;
        let mut expect: Vec<f64> = (0..10)
            .map(|i| {
                let den = ff[i] + 2.0 * fb[i];
                if den == 0.0 {
                    0.0
                } else {
                    (ff[i] - 2.0 * fb[i]) / den
                }
            })
            .collect();
        crate::graph::min_max_normalize(&mut expect);
        for i in 0..10 {
            assert!((es[i] - expect[i]).abs() < 1e-9, "node {i}: {} vs {}", es[i], expect[i]);
        }
    }

    #[test]
    fn model_roundtrip_through_weight_file() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let model = MlpModel::init(6, [8, 4], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("weights.csgt");
        save_model(&model, &p).unwrap();
        let loaded = load_model(&p).unwrap();
        let x: Vec<f64> = (0..6).map(|i| i as f64 / 6.0).collect();
        let a = model.score(&x).unwrap();
        let b = loaded.score(&x).unwrap();
        assert!((a - b).abs() < 1e-6, "f32 storage roundtrip too lossy: {a} vs {b}");

        // corrupt the version field
        let side = super::sidecar_path(&p);
        let json = std::fs::read_to_string(&side).unwrap().replace("\"version\": 1", "\"version\": 9");
        std::fs::write(&side, json).unwrap();
        assert!(matches!(load_model(&p), Err(Error::Format { .. })));
    }
}
