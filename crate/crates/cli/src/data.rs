use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deephash::dataio::{
    read_cifar10, read_mnist, LabeledDataset, MnistSplit, Split, SyntheticBlobs, SyntheticSpec,
};
use deephash::network::{LayerSpec, NetConfig};
use deephash::{Rng, Scalar};

use crate::{DataArgs, DatasetKind};

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];
const CIFAR_TRAIN: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const CIFAR_TEST: &str = "test_batch.bin";

fn data_dir(args: &DataArgs) -> Result<&Path> {
    match &args.data_dir {
        Some(d) => Ok(d),
        None => Err(deephash::Error::config("--data-dir is required for this dataset").into()),
    }
}

/// Files whose contents determine the run, for the manifest.
pub fn input_files(args: &DataArgs) -> Result<Vec<PathBuf>> {
    Ok(match args.dataset {
        DatasetKind::Mnist => {
            let dir = data_dir(args)?;
            MNIST_FILES.iter().map(|f| dir.join(f)).collect()
        }
        DatasetKind::Cifar10 => {
            let dir = data_dir(args)?;
            CIFAR_TRAIN
                .iter()
                .chain(std::iter::once(&CIFAR_TEST))
                .map(|f| dir.join(f))
                .collect()
        }
        DatasetKind::Synthetic => Vec::new(),
    })
}

fn synthetic_spec(args: &DataArgs) -> SyntheticSpec {
    SyntheticSpec {
        classes: args.classes,
        per_class: args.per_class,
        channels: 1,
        height: args.side,
        width: args.side,
        spread: args.spread,
    }
}

fn limit<T: Scalar>(ds: LabeledDataset<T>, n: Option<usize>) -> LabeledDataset<T> {
    match n {
        Some(n) if n < ds.len() => ds.slice(0, n),
        _ => ds,
    }
}

pub fn load_split<T: Scalar>(args: &DataArgs, split: Split) -> Result<LabeledDataset<T>> {
    let n = match split {
        Split::Train => args.train_limit,
        Split::Query => args.query_limit,
    };
    let ds = match args.dataset {
        DatasetKind::Mnist => {
            let which = match split {
                Split::Train => MnistSplit::Train,
                Split::Query => MnistSplit::Test,
            };
            let dir = data_dir(args)?;
            read_mnist(dir, which, 0, n)
                .with_context(|| format!("reading MNIST from {}", dir.display()))?
        }
        DatasetKind::Cifar10 => {
            let dir = data_dir(args)?;
            let paths: Vec<PathBuf> = match split {
                Split::Train => CIFAR_TRAIN.iter().map(|f| dir.join(f)).collect(),
                Split::Query => vec![dir.join(CIFAR_TEST)],
            };
            let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
            let ds = read_cifar10(&refs)
                .with_context(|| format!("reading CIFAR-10 from {}", dir.display()))?;
            limit(ds, n).with_split(split)
        }
        DatasetKind::Synthetic => {
            let base = Rng::new(args.data_seed);
            let blobs = SyntheticBlobs::new(synthetic_spec(args), &mut base.derive(0))?;
            let (per_class, salt) = match split {
                Split::Train => (args.per_class, 1),
                Split::Query => (args.query_per_class, 2),
            };
            limit(blobs.sample(per_class, &mut base.derive(salt), split)?, n)
        }
    };
    if ds.is_empty() && split == Split::Train {
        bail!(deephash::Error::config("training split is empty"));
    }
    Ok(ds)
}

/// Small conv net for synthetic images.
fn synthetic_net(side: usize) -> Result<NetConfig> {
    let mut cfg = NetConfig::mnist();
    cfg.name = Some("synthetic".into());
    cfg.input.height = side;
    cfg.input.width = side;
    cfg.layers = vec![
        LayerSpec::Convolution {
            outputs: 8,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool {
            kernel: 2,
            stride: 2,
            pad: 0,
        },
        LayerSpec::InnerProduct { outputs: 32 },
        LayerSpec::Relu,
    ];
    if side < 2 {
        bail!(deephash::Error::config("synthetic images need side >= 2"));
    }
    Ok(cfg)
}

/// The architecture from `path`, or the built-in one for the dataset.
pub fn net_config(args: &DataArgs, path: Option<&Path>) -> Result<NetConfig> {
    match path {
        Some(p) => Ok(NetConfig::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => match args.dataset {
            DatasetKind::Mnist => Ok(NetConfig::mnist()),
            DatasetKind::Cifar10 => Ok(NetConfig::cifar10()),
            DatasetKind::Synthetic => synthetic_net(args.side),
        },
    }
}
