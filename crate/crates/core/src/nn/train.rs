use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_label, cross_entropy, predict_logits, Network};
use crate::error::{Error, Result};

/// Mini-batch SGD with momentum on the multi-class cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Rescale each batch's mean gradient to at most this L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::BadConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::BadConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::BadConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::BadConfig("momentum must be in [0, 1)".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::BadConfig("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub holdout_loss: Option<f64>,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

fn check_dataset<N: Network>(net: &N, inputs: &[N::Input], labels: &[usize]) -> Result<()> {
    if inputs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels", inputs.len()),
            actual: format!("{} labels", labels.len()),
        });
    }
    for (x, &y) in inputs.iter().zip(labels) {
        net.check_input(x)?;
        check_label(y, net.n_classes())?;
    }
    Ok(())
}

/// Samples per gradient shard. Fixed so the reduction order, and with it
/// every bit of the result, does not depend on the thread count.
const SHARD: usize = 4;

/// Summed gradient of a batch into `grad` (overwritten), plus summed loss
/// and number of correct predictions. Shards run in parallel and are
/// reduced in batch order.
fn batch_gradient<N: Network>(
    net: &N,
    inputs: &[N::Input],
    labels: &[usize],
    batch: &[usize],
    grad: &mut [f64],
) -> Result<(f64, usize)> {
    let shards: Vec<(Vec<f64>, f64, usize)> = batch
        .par_chunks(SHARD)
        .map(|shard| {
            let mut g = vec![0.0; grad.len()];
            let mut loss = 0.0;
            let mut correct = 0usize;
            for &i in shard {
                let (l, pred) = net.accumulate_gradient(&inputs[i], labels[i], &mut g)?;
                loss += l;
                correct += usize::from(pred == labels[i]);
            }
            Ok((g, loss, correct))
        })
        .collect::<Result<_>>()?;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (mut loss, mut correct) = (0.0, 0usize);
    for (g, l, c) in shards {
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
        loss += l;
        correct += c;
    }
    Ok((loss, correct))
}

/// Mean loss and accuracy of `net` over a labeled set.
pub(crate) fn evaluate<N: Network>(net: &N, inputs: &[N::Input], labels: &[usize]) -> Result<(f64, f64)> {
    let per_sample: Vec<(f64, bool)> = inputs
        .par_iter()
        .zip(labels.par_iter())
        .map(|(x, &y)| {
            let logits = net.forward(x)?;
            Ok((cross_entropy(&logits, y), predict_logits(&logits)?.0 == y))
        })
        .collect::<Result<_>>()?;
    let loss: f64 = per_sample.iter().map(|(l, _)| l).sum();
    let correct = per_sample.iter().filter(|(_, c)| *c).count();
    let n = inputs.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains `net` in place of a copy and returns it with per-epoch statistics.
///
/// Sample order is reshuffled every epoch from `config.seed`, so the result
/// is a pure function of the initial parameters, the data order and the
/// config. Training statistics are running means over the epoch's batches.
pub fn train<N: Network>(
    mut net: N,
    inputs: &[N::Input],
    labels: &[usize],
    holdout: Option<(&[N::Input], &[usize])>,
    config: &TrainConfig,
) -> Result<(N, TrainHistory)> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dataset(&net, inputs, labels)?;
    if let Some((hx, hy)) = holdout {
        check_dataset(&net, hx, hy)?;
    }

    let n_params = net.params().len();
    let mut velocity = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let (loss, hits) = batch_gradient(&net, inputs, labels, batch, &mut grad)?;
            loss_sum += loss;
            correct += hits;
            let mut scale = config.learning_rate / batch.len() as f64;
            if let Some(clip) = config.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() / batch.len() as f64;
                if norm > clip {
                    scale *= clip / norm;
                }
            }
            for ((p, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v - scale * g;
                *p += *v;
            }
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let (holdout_loss, holdout_accuracy) = match holdout {
            Some((hx, hy)) if !hx.is_empty() => {
                let (l, a) = evaluate(&net, hx, hy)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        let n = inputs.len() as f64;
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            holdout_loss,
            holdout_accuracy,
        });
    }
    Ok((net, history))
}

fn batch_loss<N: Network>(net: &N, inputs: &[N::Input], labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        total += cross_entropy(&net.forward(x)?, y);
    }
    Ok(total / inputs.len() as f64)
}

/// Relative-error floor: below it, gradients are compared absolutely.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares the analytic gradient of the mean batch loss with central finite
/// differences on every parameter. Returns the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check<N: Network>(net: &N, inputs: &[N::Input], labels: &[usize], epsilon: f64) -> Result<f64> {
    let coords: Vec<usize> = (0..net.params().len()).collect();
    check_coords(net, inputs, labels, epsilon, &coords)
}

/// Like [`gradient_check`] but on `max_coords` parameters chosen from `seed`.
/// Used for networks too large for an exhaustive check.
pub fn gradient_check_sampled<N: Network>(
    net: &N,
    inputs: &[N::Input],
    labels: &[usize],
    epsilon: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64> {
    let total = net.params().len();
    if max_coords >= total {
        return gradient_check(net, inputs, labels, epsilon);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = index::sample(&mut rng, total, max_coords).into_vec();
    coords.sort_unstable();
    check_coords(net, inputs, labels, epsilon, &coords)
}

fn check_coords<N: Network>(
    net: &N,
    inputs: &[N::Input],
    labels: &[usize],
    epsilon: f64,
    coords: &[usize],
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    check_dataset(net, inputs, labels)?;
    let mut analytic = vec![0.0; net.params().len()];
    for (x, &y) in inputs.iter().zip(labels) {
        net.accumulate_gradient(x, y, &mut analytic)?;
    }
    let n = inputs.len() as f64;
    analytic.iter_mut().for_each(|g| *g /= n);

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let original = probe.params()[i];
        probe.params_mut()[i] = original + epsilon;
        let plus = batch_loss(&probe, inputs, labels)?;
        probe.params_mut()[i] = original - epsilon;
        let minus = batch_loss(&probe, inputs, labels)?;
        probe.params_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};

    fn xor_like() -> (Vec<Vec<f64>>, Vec<usize>) {
        let inputs = vec![vec![0.9, 0.8], vec![-0.7, -0.9], vec![0.8, -0.9], vec![-0.9, 0.7]];
        (inputs, vec![0, 0, 1, 1])
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
        ];
        assert!(bad.iter().all(|c| c.validate().is_err()));
    }

    #[test]
    fn empty_dataset_and_bad_labels() {
        let net = Mlp::init(2, 3, 2, 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(net.clone(), &[], &[], None, &cfg),
            Err(Error::EmptyDataset)
        ));
        let err = train(net, &[vec![0.0, 0.0]], &[2], None, &cfg).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, n_classes: 2 }));
    }

    #[test]
    fn clipping_bounds_the_first_step() {
        let (x, y) = xor_like();
        let net = Mlp::init(2, 4, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: x.len(),
            learning_rate: 0.5,
            clip_norm: Some(1e-3),
            ..TrainConfig::default()
        };
        let (trained, _) = train(net.clone(), &x, &y, None, &cfg).unwrap();
        let step: f64 = trained
            .params()
            .iter()
            .zip(net.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(step <= 0.5 * 1e-3 * (1.0 + 1e-9), "step {step}");
        assert!(step > 0.0);
        let bad = TrainConfig {
            clip_norm: Some(0.0),
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::BadConfig(_))));
    }

    #[test]
    fn tiny_learning_rate_still_records_epochs() {
        let (x, y) = xor_like();
        let net = Mlp::init(2, 4, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e-300,
            ..TrainConfig::default()
        };
        let (trained, hist) = train(net.clone(), &x, &y, Some((&x, &y)), &cfg).unwrap();
        assert_eq!(hist.epochs.len(), 3);
        let d = (hist.epochs[0].train_loss - hist.epochs[1].train_loss).abs();
        assert!(d < 1e-12);
        for (a, b) in trained.params().iter().zip(net.params()) {
            assert!((a - b).abs() < 1e-290);
        }
    }

    #[test]
    fn zero_weight_bias_gradient_is_exact() {
        let base = Mlp::init(3, 2, 2, 0).unwrap();
        let n = base.params().len();
        let zero = base.with_params(vec![0.0; n]).unwrap();
        let inputs = vec![vec![0.2, -0.1, 0.4], vec![0.3, 0.5, -0.2]];
        let labels = vec![0, 1];
        let mut grad = vec![0.0; n];
        for (x, &y) in inputs.iter().zip(&labels) {
            zero.accumulate_gradient(x, y, &mut grad).unwrap();
        }
        // Logits are zero, so each sample contributes p - onehot = ±0.5.
        let b2 = &grad[n - 2..];
        assert_eq!(b2, &[0.0, 0.0]);
        assert!(gradient_check(&zero, &inputs, &labels, 1e-5).unwrap() < 1e-9);
    }

    #[test]
    fn identity_activation_gradient_check() {
        let (x, y) = xor_like();
        let mut net = Mlp::init(2, 3, 2, 7).unwrap();
        net.activation = Activation::Identity;
        assert!(gradient_check(&net, &x, &y, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn epsilon_bounds_enforced() {
        let (x, y) = xor_like();
        let net = Mlp::init(2, 3, 2, 7).unwrap();
        assert!(gradient_check(&net, &x, &y, 0.0).is_err());
        assert!(gradient_check(&net, &x, &y, 0.1).is_err());
    }
}
