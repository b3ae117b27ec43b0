//! Training loop for the direction and distance heads, plus accuracy
//! reports on any split.

use rand::seq::SliceRandom;

use crate::config::TrainSection;
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::{encode_batch, mean_cross_entropy, Classifier, NetConfig, NetworkModel, Optimizer, Tensor};
use crate::seed::{derive_seed, rng_from_seed};

const EVAL_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Angle index of the best codeword, `N` classes.
    Direction,
    /// Ring index of the best codeword, `S` classes.
    Distance,
}

impl Head {
    pub fn name(self) -> &'static str {
        match self {
            Head::Direction => "direction",
            Head::Distance => "distance",
        }
    }

    /// 1-based class of a sample for this head.
    pub fn label(self, sample: &Sample) -> usize {
        match self {
            Head::Direction => sample.label_angle as usize,
            Head::Distance => sample.label_ring as usize,
        }
    }

    pub fn classes(self, ds: &Dataset) -> usize {
        match self {
            Head::Direction => ds.spec.num_antennas,
            Head::Distance => ds.spec.num_rings,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Head::Direction => 1,
            Head::Distance => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub head: Head,
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// NaN when the validation split is empty.
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedHeads {
    pub direction: NetworkModel,
    pub distance: NetworkModel,
    pub history: Vec<EpochRecord>,
}

fn labels0(samples: &[Sample], head: Head) -> Vec<usize> {
    samples.iter().map(|s| head.label(s) - 1).collect()
}

fn encode(samples: &[Sample]) -> Tensor {
    encode_batch(samples.iter().map(|s| s.measurements.as_slice()))
}

fn correct(probs: &Tensor, labels: &[usize]) -> usize {
    probs
        .rows()
        .zip(labels)
        .filter(|(row, &y)| crate::linalg::argmax(row) == y)
        .count()
}

/// Eval-mode loss and top-1 accuracy, in chunks.
fn eval_loss(model: &NetworkModel, x: &Tensor, labels: &[usize]) -> Result<(f64, f64)> {
    let n = labels.len();
    if n == 0 {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut loss, mut hits) = (0.0, 0);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let probs = model.forward(&x.gather(chunk))?;
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        loss += mean_cross_entropy(probs.data(), model.head_size(), &y) * chunk.len() as f64;
        hits += correct(&probs, &y);
    }
    Ok((loss / n as f64, hits as f64 / n as f64))
}

/// Trains one head with mini-batch updates, per-epoch learning-rate decay
/// and early stopping on validation loss. Returns the best checkpoint.
pub fn train_head(
    ds: &Dataset,
    head: Head,
    net: &NetConfig,
    train: &TrainSection,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(NetworkModel, Vec<EpochRecord>)> {
    let train_set = ds.train();
    if train_set.len() < 2 {
        return Err(Error::InvalidConfig("training split needs at least two samples".into()));
    }
    let x_train = encode(train_set);
    let y_train = labels0(train_set, head);
    let x_val = encode(ds.val());
    let y_val = labels0(ds.val(), head);

    let mut init = rng_from_seed(derive_seed(seed, &[head.tag(), 0]));
    let mut model = NetworkModel::new(net, ds.spec.num_wide_beams(), head.classes(ds), &mut init)?;
    let optimizer = Optimizer::of_kind(train.optimizer);
    let mut state = optimizer.init_state(&model);
    let mut shuffle = rng_from_seed(derive_seed(seed, &[head.tag(), 1]));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best: Option<(f64, NetworkModel)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 0..train.epochs {
        let lr = train.learning_rate * train.lr_decay.powi(epoch as i32);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0, 0);
        for batch in order.chunks(train.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let labels: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
            let pass = model.forward_train(&x_train.gather(batch))?;
            loss_sum += model.loss(&pass, &labels)? * batch.len() as f64;
            hits += correct(pass.probabilities(), &labels);
            seen += batch.len();
            let grads = model.backward(&pass, &labels)?;
            model.update_running_stats(&pass);
            optimizer.step(&mut model, &grads, &mut state, lr);
        }
        let (val_loss, val_accuracy) = eval_loss(&model, &x_val, &y_val)?;
        let record = EpochRecord {
            head,
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: loss_sum / seen as f64,
            train_accuracy: hits as f64 / seen as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&record);
        let monitored = if y_val.is_empty() { record.train_loss } else { val_loss };
        history.push(record);
        match &best {
            Some((b, _)) if monitored >= *b => {
                since_best += 1;
                if since_best >= train.patience {
                    break;
                }
            }
            _ => {
                best = Some((monitored, model.clone()));
                since_best = 0;
            }
        }
    }
    Ok((best.map(|(_, m)| m).unwrap_or(model), history))
}

/// Trains both heads from the same samples, one after the other.
pub fn train_heads(
    ds: &Dataset,
    net: &NetConfig,
    train: &TrainSection,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainedHeads> {
    let (direction, mut history) = train_head(ds, Head::Direction, net, train, seed, on_epoch)?;
    let (distance, dist_history) = train_head(ds, Head::Distance, net, train, seed, on_epoch)?;
    history.extend(dist_history);
    Ok(TrainedHeads {
        direction,
        distance,
        history,
    })
}

/// Per-epoch history as CSV.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("head,epoch,lr,train_loss,train_acc,val_loss,val_acc\n");
    for r in history {
        out += &format!(
            "{},{},{},{},{},{},{}\n",
            r.head.name(),
            r.epoch,
            r.learning_rate,
            r.train_loss,
            r.train_accuracy,
            r.val_loss,
            r.val_accuracy
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrBucket {
    pub snr_db_lo: f64,
    pub snr_db_hi: f64,
    pub count: usize,
    pub top1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub classes: usize,
    pub count: usize,
    pub top1: f64,
    /// `(k, accuracy)` for every requested `k`.
    pub top_k: Vec<(usize, f64)>,
    pub by_snr: Vec<SnrBucket>,
    /// `confusion[truth][prediction]`, 0-based.
    pub confusion: Vec<Vec<u32>>,
}

impl AccuracyReport {
    /// Most frequent wrong predictions as `(truth, predicted, count)`, 1-based.
    pub fn top_confusions(&self, n: usize) -> Vec<(usize, usize, u32)> {
        let mut pairs: Vec<(usize, usize, u32)> = self
            .confusion
            .iter()
            .enumerate()
            .flat_map(|(t, row)| row.iter().enumerate().map(move |(p, &c)| (t + 1, p + 1, c)))
            .filter(|&(t, p, c)| t != p && c > 0)
            .collect();
        pairs.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        pairs.truncate(n);
        pairs
    }
}

/// 0-based position of `label` when classes are sorted by descending
/// probability with ties to the smaller index.
fn rank_of(probs: &[f64], label: usize) -> usize {
    let p = probs[label];
    probs
        .iter()
        .enumerate()
        .filter(|&(i, &q)| q > p || (q == p && i < label))
        .count()
}

/// Accuracy of class distributions against 1-based labels, bucketed by SNR
/// in `bucket_db` steps.
pub fn evaluate_predictions(
    probs: &[Vec<f64>],
    labels: &[usize],
    snr_db: &[f64],
    ks: &[usize],
    bucket_db: f64,
) -> Result<AccuracyReport> {
    if probs.len() != labels.len() || snr_db.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: probs.len().min(snr_db.len()),
        });
    }
    if bucket_db.is_nan() || bucket_db <= 0.0 {
        return Err(Error::InvalidConfig("SNR bucket width must be positive".into()));
    }
    let classes = probs.first().map_or(0, Vec::len);
    let mut confusion = vec![vec![0u32; classes]; classes];
    let mut hits_k = vec![0usize; ks.len()];
    let mut buckets: std::collections::BTreeMap<i64, (usize, usize)> = Default::default();
    let mut hits = 0;
    for ((p, &label), &snr) in probs.iter().zip(labels).zip(snr_db) {
        if p.len() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                actual: p.len(),
            });
        }
        if label == 0 || label > classes {
            return Err(Error::IndexOutOfRange {
                index: label,
                max: classes,
            });
        }
        let rank = rank_of(p, label - 1);
        let pred = crate::linalg::argmax(p);
        confusion[label - 1][pred] += 1;
        for (h, &k) in hits_k.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
        let entry = buckets.entry((snr / bucket_db).floor() as i64).or_default();
        entry.0 += 1;
        if rank == 0 {
            hits += 1;
            entry.1 += 1;
        }
    }
    let n = labels.len();
    let frac = |h: usize, c: usize| if c == 0 { f64::NAN } else { h as f64 / c as f64 };
    Ok(AccuracyReport {
        classes,
        count: n,
        top1: frac(hits, n),
        top_k: ks.iter().zip(hits_k).map(|(&k, h)| (k, frac(h, n))).collect(),
        by_snr: buckets
            .into_iter()
            .map(|(b, (count, h))| SnrBucket {
                snr_db_lo: b as f64 * bucket_db,
                snr_db_hi: (b + 1) as f64 * bucket_db,
                count,
                top1: frac(h, count),
            })
            .collect(),
        confusion,
    })
}

pub fn evaluate_head(
    model: &dyn Classifier,
    samples: &[Sample],
    head: Head,
    ks: &[usize],
    bucket_db: f64,
) -> Result<AccuracyReport> {
    let inputs: Vec<&[num_complex::Complex64]> = samples.iter().map(|s| s.measurements.as_slice()).collect();
    let probs = model.predict_batch(&inputs)?;
    let labels: Vec<usize> = samples.iter().map(|s| head.label(s)).collect();
    let snr: Vec<f64> = samples.iter().map(|s| s.snr_db).collect();
    evaluate_predictions(&probs, &labels, &snr, ks, bucket_db)
}
