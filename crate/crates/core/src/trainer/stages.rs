use super::{
    iterations_per_epoch, EpochRecord, Plateau, RandomSkipBatcher, Schedule, Stage, TrainConfig,
};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{Classifier, HashHead, HeadOrigin, Network, ParamGrad};
use crate::rng::Rng;
use crate::scalar::{cst, Scalar};
use crate::tensor::{gemm, sgd_step_in_place, MatView, Tensor};

const FEATURE_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub records: Vec<EpochRecord>,
    /// Training-set accuracy of the softmax classifier after training.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome<T> {
    pub head: HashHead<T>,
    pub records: Vec<EpochRecord>,
    /// Accuracy of `softmax(tanh(W z))` on the training features.
    pub accuracy: f64,
}

fn apply_classifier<T: Scalar>(c: &mut Classifier<T>, g: &ParamGrad<T>, eta: T) -> Result<()> {
    let (w, b) = c.params_mut();
    sgd_step_in_place(w, &g.weight, eta)?;
    sgd_step_in_place(b, &g.bias, eta)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[u32]) -> usize {
    (0..labels.len())
        .filter(|&i| argmax(logits.row(i)) == labels[i] as usize)
        .count()
}

fn diverged(epoch: usize, what: &str) -> Error {
    Error::Training {
        epoch,
        message: format!("{what} is not finite"),
    }
}

/// Trains the feature layers and softmax classifier by mini-batch SGD on
/// cross-entropy.
pub fn pretrain_stage1<T: Scalar>(
    dataset: &LabeledDataset<T>,
    net: &mut Network<T>,
    cfg: &TrainConfig,
) -> Result<Stage1Outcome> {
    cfg.validate()?;
    let classes = net
        .classifier
        .as_ref()
        .ok_or_else(|| Error::config("stage 1 needs a network with a softmax head"))?
        .classes();
    if classes != dataset.classes() {
        return Err(Error::config(format!(
            "softmax has {classes} outputs but the dataset has {} classes",
            dataset.classes()
        )));
    }
    let mut batcher = RandomSkipBatcher::new(
        dataset.len(),
        cfg.batch_size,
        cfg.skip_max,
        Rng::new(cfg.seed).derive(1),
    )?;
    let iters = iterations_per_epoch(dataset.len(), cfg.batch_size);
    let mut schedule = Schedule::new(cfg);
    let mut records = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let eta = schedule.eta;
        let step = cst::<T>(eta);
        let mut total = 0.0;
        for _ in 0..iters {
            let idx = batcher.next_batch();
            let z = net.forward(&dataset.batch(&idx)?)?;
            let labels = dataset.batch_labels(&idx);
            let classifier = net.classifier.as_ref().expect("checked above");
            let (loss, g, dz) = classifier.loss_and_grad(&z, &labels)?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(diverged(epoch, "cross-entropy"));
            }
            total += loss;
            if eta > 0.0 {
                let grads = net.backward(&dz)?;
                net.apply_gradients(&grads, step)
                    .map_err(|_| diverged(epoch, "parameter update"))?;
                apply_classifier(net.classifier.as_mut().expect("checked above"), &g, step)
                    .map_err(|_| diverged(epoch, "classifier update"))?;
            }
        }
        net.clear_cache();
        let loss = total / iters as f64;
        records.push(EpochRecord {
            stage: Stage::Stage1,
            epoch,
            loss,
            eta,
        });
        if let Plateau::Stop = schedule.observe(loss) {
            break;
        }
    }
    let mut correct = 0;
    for start in (0..dataset.len()).step_by(FEATURE_CHUNK) {
        let part = dataset.slice(start, FEATURE_CHUNK);
        let z = net.infer(part.images())?;
        let logits = net.classifier.as_ref().expect("checked above").logits(&z)?;
        correct += accuracy(&logits, part.labels());
    }
    Ok(Stage1Outcome {
        records,
        accuracy: correct as f64 / dataset.len().max(1) as f64,
    })
}

/// Responses `z` of the topmost feature layer for every sample, as an
/// `n x dim(z)` array.
pub fn extract_features<T: Scalar>(
    dataset: &LabeledDataset<T>,
    net: &Network<T>,
) -> Result<Tensor<T>> {
    let dim = net.feature_dim();
    let mut data = Vec::with_capacity(dataset.len() * dim);
    for start in (0..dataset.len()).step_by(FEATURE_CHUNK) {
        let part = dataset.slice(start, FEATURE_CHUNK);
        data.extend_from_slice(net.infer(part.images())?.data());
    }
    Tensor::from_vec(vec![dataset.len(), dim], data)
}

/// `tanh(Z W')` for a batch of features.
fn relaxed_codes<T: Scalar>(z: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let (n, dim) = (z.rows(), z.row_len());
    let bits = w.rows();
    let mut h = Tensor::zeros(&[n, bits]);
    gemm(
        T::one(),
        MatView::row_major(z.data(), n, dim),
        MatView::row_major(w.data(), bits, dim).t(),
        T::zero(),
        h.data_mut(),
    );
    h.map(|v| v.tanh())
}

/// Fits the hash head on frozen features by training the two-layer net
/// `softmax(V tanh(W z) + c)` for classification, then keeps `W`.
pub fn pretrain_stage2<T: Scalar>(
    features: &Tensor<T>,
    labels: &[u32],
    classes: usize,
    bits: usize,
    gain: f64,
    cfg: &TrainConfig,
) -> Result<Stage2Outcome<T>> {
    cfg.validate()?;
    let (n, dim) = features.dims2()?;
    if labels.len() != n {
        return Err(Error::dim(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::config(format!(
            "label {bad} not below class count {classes}"
        )));
    }
    let mut rng = Rng::new(cfg.seed).derive(2);
    let mut head = HashHead::random(bits, dim, gain, &mut rng)?;
    let mut classifier = Classifier::<T>::new(bits, classes, gain, &mut rng)?;
    let mut records = Vec::new();
    if n > 0 && cfg.max_epochs > 0 {
        let mut batcher =
            RandomSkipBatcher::new(n, cfg.batch_size.min(n), cfg.skip_max, rng.derive(3))?;
        let iters = iterations_per_epoch(n, cfg.batch_size);
        let mut schedule = Schedule::new(cfg);
        for epoch in 0..cfg.max_epochs {
            let eta = schedule.eta;
            let step = cst::<T>(eta);
            let mut total = 0.0;
            for _ in 0..iters {
                let idx = batcher.next_batch();
                let mut zb = Vec::with_capacity(idx.len() * dim);
                for &i in &idx {
                    zb.extend_from_slice(features.row(i));
                }
                let zb = Tensor::from_vec(vec![idx.len(), dim], zb)?;
                let yb: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
                let h = relaxed_codes(&zb, &head.weights);
                let (loss, g, dh) = classifier.loss_and_grad(&h, &yb)?;
                let loss = loss.to_f64().unwrap_or(f64::NAN);
                if !loss.is_finite() {
                    return Err(diverged(epoch, "stage-2 cross-entropy"));
                }
                total += loss;
                if eta > 0.0 {
                    let mut du = dh;
                    for (d, &hv) in du.data_mut().iter_mut().zip(h.data()) {
                        *d *= T::one() - hv * hv;
                    }
                    let mut gw = Tensor::zeros(&[bits, dim]);
                    gemm(
                        T::one(),
                        MatView::row_major(du.data(), idx.len(), bits).t(),
                        MatView::row_major(zb.data(), idx.len(), dim),
                        T::zero(),
                        gw.data_mut(),
                    );
                    sgd_step_in_place(&mut head.weights, &gw, step)
                        .map_err(|_| diverged(epoch, "hash head update"))?;
                    apply_classifier(&mut classifier, &g, step)
                        .map_err(|_| diverged(epoch, "classifier update"))?;
                }
            }
            let loss = total / iters as f64;
            records.push(EpochRecord {
                stage: Stage::Stage2,
                epoch,
                loss,
                eta,
            });
            if let Plateau::Stop = schedule.observe(loss) {
                break;
            }
        }
    }
    let correct = if n > 0 {
        accuracy(
            &classifier.logits(&relaxed_codes(features, &head.weights))?,
            labels,
        )
    } else {
        0
    };
    head.origin = HeadOrigin::PreTrained;
    Ok(Stage2Outcome {
        head,
        records,
        accuracy: correct as f64 / n.max(1) as f64,
    })
}
