use super::{
    iterations_per_epoch, EpochRecord, Plateau, RandomSkipBatcher, Schedule, Stage, Strategy,
    TrainConfig,
};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::hashloss::{accumulate_batch, encode_features};
use crate::network::{HeadOrigin, Network};
use crate::rng::Rng;
use crate::scalar::{cst, Scalar};
use crate::supervision::SimilarityOracle;
use crate::tensor::sgd_step_in_place;

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub records: Vec<EpochRecord>,
    /// Lowest per-epoch mean pair loss, if any epoch ran.
    pub best_q: Option<f64>,
    pub best_epoch: Option<usize>,
}

/// Joint SGD on the feature layers and hash head under the hashing loss.
///
/// Each iteration runs one forward pass, takes codes from its signs,
/// accumulates the smoothed loss over all labelled pairs of the batch and
/// uses those gradients for both the head and the feature layers. Loss and
/// gradients are averaged over the batch's pairs. The network is left at
/// the end-of-epoch parameters of the epoch with the lowest mean loss.
pub fn finetune<T: Scalar>(
    dataset: &LabeledDataset<T>,
    net: &mut Network<T>,
    cfg: &TrainConfig,
    strategy: Strategy,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if cfg.batch_size < 2 {
        return Err(Error::config(
            "fine-tuning needs batches of at least 2 samples",
        ));
    }
    let origin = net
        .hash_head
        .as_ref()
        .ok_or_else(|| Error::config("fine-tuning needs a network with a hash head"))?
        .origin;
    if strategy == Strategy::FineTuning && origin == HeadOrigin::Random {
        return Err(Error::State(
            "hash head is not pre-trained; run both pre-training stages or use random init".into(),
        ));
    }
    if strategy == Strategy::PreTraining {
        return Err(Error::config(
            "the pre-training strategy does not fine-tune",
        ));
    }
    let oracle = SimilarityOracle::from_known(dataset.labels());
    let mut batcher = RandomSkipBatcher::new(
        dataset.len(),
        cfg.batch_size,
        cfg.skip_max,
        Rng::new(cfg.seed).derive(4),
    )?;
    let iters = iterations_per_epoch(dataset.len(), cfg.batch_size);
    let mut schedule = Schedule::new(cfg);
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, Network<T>)> = None;
    for epoch in 0..cfg.max_epochs {
        let eta = schedule.eta;
        let mut total = 0.0;
        for _ in 0..iters {
            let idx = batcher.next_batch();
            let z = net.forward(&dataset.batch(&idx)?)?;
            let head = net.hash_head.as_ref().expect("checked above");
            let codes = encode_features(&z, &head.weights)?;
            let pairs = oracle.batch_pairs(&idx)?;
            let batch = accumulate_batch(&pairs, &z, &codes, &head.weights)?;
            let per_pair = 1.0 / pairs.len() as f64;
            let q = batch.q.to_f64().unwrap_or(f64::NAN) * per_pair;
            if !q.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "hashing loss is not finite".into(),
                });
            }
            total += q;
            if eta > 0.0 {
                let step = cst::<T>(eta * per_pair);
                let grads = net.backward(&batch.grads.grad_z)?;
                let diverged = |_| Error::Training {
                    epoch,
                    message: "parameter update is not finite".into(),
                };
                let head = net.hash_head.as_mut().expect("checked above");
                sgd_step_in_place(&mut head.weights, &batch.grads.grad_w, step)
                    .map_err(diverged)?;
                net.apply_gradients(&grads, step).map_err(diverged)?;
            }
        }
        net.clear_cache();
        let loss = total / iters as f64;
        records.push(EpochRecord {
            stage: Stage::FineTune,
            epoch,
            loss,
            eta,
        });
        if best.as_ref().is_none_or(|(b, _, _)| loss < *b) {
            best = Some((loss, epoch, net.clone()));
        }
        if let Plateau::Stop = schedule.observe(loss) {
            break;
        }
    }
    let (best_q, best_epoch) = match best {
        Some((q, epoch, snapshot)) => {
            *net = snapshot;
            if let Some(h) = net.hash_head.as_mut() {
                h.origin = HeadOrigin::FineTuned;
            }
            (Some(q), Some(epoch))
        }
        None => (None, None),
    };
    Ok(FinetuneOutcome {
        records,
        best_q,
        best_epoch,
    })
}
