use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;

use deephash::baselines::{lsh_train, pcah_train, LinearHasher};
use deephash::dataio::{
    load_checkpoint, load_codes, save_checkpoint, save_codes, CodeDatabase, Split,
};
use deephash::evalrank::{evaluate_map, map_csv, pr_csv, precision_recall, MapRow};
use deephash::network::{HashHead, HeadOrigin, Network, SoftmaxSpec};
use deephash::trainer::{
    extract_features, finetune, pretrain_stage1, pretrain_stage2, Strategy, TrainConfig,
    TrainReport,
};
use deephash::{ErrorClass, Rng, Scalar};

use crate::manifest::RunManifest;
use crate::{
    data, BaselineArgs, BaselineMethod, Cli, Command, EncodeArgs, EvalArgs, FinetuneArgs,
    OptimArgs, Precision, PretrainArgs, ReplayArgs, SplitArg,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;
pub const EXIT_TRAINING: u8 = 4;
pub const EXIT_EVALUATION: u8 = 5;

/// Process exit status for an error: 2 configuration, 3 file format or
/// I/O, 4 training, 5 evaluation.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<deephash::Error>() {
            return match e.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Format => EXIT_FORMAT,
                ErrorClass::Training => EXIT_TRAINING,
                ErrorClass::Evaluation => EXIT_EVALUATION,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_FORMAT;
        }
    }
    EXIT_CONFIG
}

pub fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Pretrain(a) => match a.precision {
            Precision::F32 => pretrain::<f32>(&a, argv),
            Precision::F64 => pretrain::<f64>(&a, argv),
        },
        Command::Finetune(a) => match a.precision {
            Precision::F32 => finetune_cmd::<f32>(&a, argv),
            Precision::F64 => finetune_cmd::<f64>(&a, argv),
        },
        Command::Encode(a) => match a.precision {
            Precision::F32 => encode::<f32>(&a, argv),
            Precision::F64 => encode::<f64>(&a, argv),
        },
        Command::Eval(a) => eval(&a, argv),
        Command::Baseline(a) => match a.precision {
            Precision::F32 => baseline::<f32>(&a, argv),
            Precision::F64 => baseline::<f64>(&a, argv),
        },
        Command::Replay(a) => replay(&a),
    }
}

fn train_config(o: &OptimArgs) -> TrainConfig {
    TrainConfig {
        eta: o.eta,
        batch_size: o.batch_size,
        max_epochs: o.epochs,
        skip_max: o.skip_max,
        seed: o.seed,
        window: o.window,
        max_decays: o.max_decays,
        ..TrainConfig::default()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dataset_name(a: &crate::DataArgs) -> String {
    match a.dataset {
        crate::DatasetKind::Mnist => "mnist",
        crate::DatasetKind::Cifar10 => "cifar10",
        crate::DatasetKind::Synthetic => "synthetic",
    }
    .to_string()
}

fn log_report(report: &TrainReport) {
    for r in &report.records {
        eprintln!(
            "{:>8} epoch {:>3}  loss {:.6}  eta {}",
            r.stage.name(),
            r.epoch,
            r.loss,
            r.eta
        );
    }
    if let Some(a) = report.stage1_accuracy {
        eprintln!("stage 1 training accuracy {a:.4}");
    }
    if let Some(a) = report.stage2_accuracy {
        eprintln!("stage 2 training accuracy {a:.4}");
    }
    if let Some(q) = report.best_q {
        eprintln!("best fine-tuning loss {q:.6}");
    }
    eprintln!("wall clock {:.1}s", report.wall_clock.as_secs_f64());
}

fn pretrain<T: Scalar>(a: &PretrainArgs, argv: &[String]) -> Result<()> {
    let started = std::time::Instant::now();
    create_dir(&a.out_dir)?;
    let train = data::load_split::<T>(&a.data, Split::Train)?;
    let mut cfg = data::net_config(&a.data, a.net_config.as_deref())?;
    cfg.softmax = Some(SoftmaxSpec {
        classes: train.classes(),
    });
    cfg.hash_head = None;
    let mut net = Network::<T>::new(&cfg, &mut Rng::new(a.optim.seed))?;
    let s1 = train_config(&a.optim);
    let s2 = TrainConfig {
        eta: a.stage2_eta,
        max_epochs: a.stage2_epochs,
        ..s1.clone()
    };

    let mut report;
    if a.random_init {
        report = TrainReport::new(Strategy::RandomInit);
        save_checkpoint(&net, &a.out_dir.join("stage1.ckpt"))?;
        let head = HashHead::random(
            a.bits,
            net.feature_dim(),
            cfg.init.gain,
            &mut Rng::new(a.optim.seed).derive(5),
        )?;
        net.hash_head = Some(head);
    } else {
        report = TrainReport::new(Strategy::PreTraining);
        let o1 = pretrain_stage1(&train, &mut net, &s1)?;
        report.extend(&o1.records)?;
        report.stage1_accuracy = Some(o1.accuracy);
        save_checkpoint(&net, &a.out_dir.join("stage1.ckpt"))?;
        let z = extract_features(&train, &net)?;
        let o2 = pretrain_stage2(
            &z,
            train.labels(),
            train.classes(),
            a.bits,
            cfg.init.gain,
            &s2,
        )?;
        report.extend(&o2.records)?;
        report.stage2_accuracy = Some(o2.accuracy);
        net.hash_head = Some(o2.head);
    }
    save_checkpoint(&net, &a.out_dir.join("pretrained.ckpt"))?;
    write_text(&a.out_dir.join("pretrain_report.csv"), &report.to_csv())?;
    report.wall_clock = started.elapsed();
    log_report(&report);

    let mut m = RunManifest::new("pretrain", argv, &a.out_dir);
    m.dataset = Some(dataset_name(&a.data));
    m.net_config = a.net_config.as_ref().map(|p| p.display().to_string());
    m.train_config = Some(s1);
    m.seed = Some(a.optim.seed);
    m.hash_inputs(
        data::input_files(&a.data)?
            .iter()
            .chain(a.net_config.iter()),
    )?;
    m.write(&a.out_dir.join("manifest.json"))
}

fn finetune_cmd<T: Scalar>(a: &FinetuneArgs, argv: &[String]) -> Result<()> {
    let started = std::time::Instant::now();
    create_dir(&a.out_dir)?;
    let train = data::load_split::<T>(&a.data, Split::Train)?;
    let mut net = match &a.checkpoint {
        Some(p) if !a.random_init => {
            load_checkpoint::<T>(p).with_context(|| format!("loading {}", p.display()))?
        }
        _ => {
            let mut cfg = data::net_config(&a.data, a.net_config.as_deref())?;
            cfg.softmax = None;
            cfg.hash_head = None;
            let mut net = Network::<T>::new(&cfg, &mut Rng::new(a.optim.seed))?;
            net.hash_head = Some(HashHead::random(
                a.bits,
                net.feature_dim(),
                cfg.init.gain,
                &mut Rng::new(a.optim.seed).derive(5),
            )?);
            net
        }
    };
    let head = net.hash_head.as_ref().ok_or_else(|| {
        deephash::Error::config("checkpoint has no hash head; run pretrain first")
    })?;
    if head.bits() != a.bits {
        return Err(deephash::Error::config(format!(
            "checkpoint hash head has {} bits, --bits is {}",
            head.bits(),
            a.bits
        ))
        .into());
    }
    let strategy = match head.origin {
        HeadOrigin::Random => Strategy::RandomInit,
        _ => Strategy::FineTuning,
    };
    let cfg = train_config(&a.optim);
    let outcome = finetune(&train, &mut net, &cfg, strategy)?;
    let mut report = TrainReport::new(strategy);
    report.extend(&outcome.records)?;
    report.best_q = outcome.best_q;
    save_checkpoint(&net, &a.out_dir.join("finetuned.ckpt"))?;
    write_text(&a.out_dir.join("finetune_report.csv"), &report.to_csv())?;
    report.wall_clock = started.elapsed();
    log_report(&report);

    let mut m = RunManifest::new("finetune", argv, &a.out_dir);
    m.dataset = Some(dataset_name(&a.data));
    m.net_config = a.net_config.as_ref().map(|p| p.display().to_string());
    m.train_config = Some(cfg);
    m.seed = Some(a.optim.seed);
    m.hash_inputs(
        data::input_files(&a.data)?
            .iter()
            .chain(a.checkpoint.iter().filter(|_| !a.random_init))
            .chain(a.net_config.iter()),
    )?;
    m.write(&a.out_dir.join("manifest.json"))
}

/// Hard codes for every sample of `split` under the checkpoint's hash head.
fn encode_split<T: Scalar>(
    net: &Network<T>,
    ds: &deephash::dataio::LabeledDataset<T>,
) -> Result<CodeDatabase> {
    let head = net
        .hash_head
        .as_ref()
        .ok_or_else(|| deephash::Error::config("checkpoint has no hash head"))?;
    let z = extract_features(ds, net)?;
    Ok(CodeDatabase::new(
        head.bits(),
        head.encode(&z)?,
        ds.labels().to_vec(),
    )?)
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Query => Split::Query,
    }
}

fn encode<T: Scalar>(a: &EncodeArgs, argv: &[String]) -> Result<()> {
    let net = load_checkpoint::<T>(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    if let (Some(want), Some(head)) = (a.bits, net.hash_head.as_ref()) {
        if head.bits() != want {
            return Err(deephash::Error::config(format!(
                "checkpoint hash head has {} bits, --bits is {want}",
                head.bits()
            ))
            .into());
        }
    }
    let ds = data::load_split::<T>(&a.data, split_of(a.split))?;
    let db = encode_split(&net, &ds)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_codes(&db, &a.out)?;
    eprintln!("encoded {} samples with {} bits", db.len(), db.bits());

    let mut m = RunManifest::new("encode", argv, &a.out);
    m.dataset = Some(dataset_name(&a.data));
    m.hash_inputs(
        data::input_files(&a.data)?
            .iter()
            .chain(std::iter::once(&a.checkpoint)),
    )?;
    m.write(&manifest_beside(&a.out))
}

fn manifest_beside(file: &Path) -> PathBuf {
    let mut name = file
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}

fn write_eval(
    out_dir: &Path,
    method: &str,
    queries: &CodeDatabase,
    db: &CodeDatabase,
) -> Result<f64> {
    if queries.bits() != db.bits() {
        return Err(deephash::Error::config(format!(
            "query codes have {} bits, database codes have {}",
            queries.bits(),
            db.bits()
        ))
        .into());
    }
    let report = evaluate_map(queries, db)?;
    let curve = precision_recall(queries, db)?;
    if !report.excluded.is_empty() {
        eprintln!(
            "{} queries without a relevant database item were excluded",
            report.excluded.len()
        );
    }
    let rows = [MapRow {
        method: method.to_string(),
        bits: db.bits(),
        map: report.map,
    }];
    write_text(&out_dir.join("map.csv"), &map_csv(&rows))?;
    write_text(&out_dir.join("pr.csv"), &pr_csv(&curve))?;
    println!("{method} K={} mAP {:.6}", db.bits(), report.map);
    Ok(report.map)
}

fn eval(a: &EvalArgs, argv: &[String]) -> Result<()> {
    let queries =
        load_codes(&a.queries).with_context(|| format!("loading {}", a.queries.display()))?;
    let db =
        load_codes(&a.database).with_context(|| format!("loading {}", a.database.display()))?;
    create_dir(&a.out_dir)?;
    write_eval(&a.out_dir, &a.method, &queries, &db)?;
    let mut m = RunManifest::new("eval", argv, &a.out_dir);
    m.hash_inputs([&a.queries, &a.database])?;
    m.write(&a.out_dir.join("manifest.json"))
}

fn baseline<T: Scalar>(a: &BaselineArgs, argv: &[String]) -> Result<()> {
    create_dir(&a.out_dir)?;
    let net = load_checkpoint::<T>(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let train = data::load_split::<T>(&a.data, Split::Train)?;
    let query = data::load_split::<T>(&a.data, Split::Query)?;
    let ztr = extract_features(&train, &net)?;
    let zq = extract_features(&query, &net)?;
    let hasher: LinearHasher = match a.method {
        BaselineMethod::Lsh => lsh_train(ztr.row_len(), a.bits, &mut Rng::new(a.seed))?,
        BaselineMethod::Pcah => pcah_train(&ztr, a.bits)?,
    };
    if hasher.rank_deficient {
        eprintln!("warning: feature covariance is rank deficient; some directions are arbitrary");
    }
    let name = hasher.kind.name();
    let db = CodeDatabase::new(a.bits, hasher.encode(&ztr)?, train.labels().to_vec())?;
    let queries = CodeDatabase::new(a.bits, hasher.encode(&zq)?, query.labels().to_vec())?;
    hasher.save(&a.out_dir.join(format!("{name}.hasher")))?;
    save_codes(&db, &a.out_dir.join(format!("{name}_train.codes")))?;
    save_codes(&queries, &a.out_dir.join(format!("{name}_query.codes")))?;
    write_eval(&a.out_dir, name, &queries, &db)?;

    let mut m = RunManifest::new("baseline", argv, &a.out_dir);
    m.dataset = Some(dataset_name(&a.data));
    m.seed = Some(a.seed);
    m.hash_inputs(
        data::input_files(&a.data)?
            .iter()
            .chain(std::iter::once(&a.checkpoint)),
    )?;
    m.write(&a.out_dir.join("manifest.json"))
}

/// Replaces the value of `flag` in `args` (both `--flag v` and
/// `--flag=v` forms).
fn replace_flag(args: &mut [String], flag: &str, f: impl Fn(&str) -> String) -> bool {
    let prefix = format!("{flag}=");
    for i in 0..args.len() {
        if args[i] == flag && i + 1 < args.len() {
            args[i + 1] = f(&args[i + 1]);
            return true;
        }
        if let Some(v) = args[i].strip_prefix(&prefix) {
            args[i] = format!("{prefix}{}", f(v));
            return true;
        }
    }
    false
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    m.verify_inputs()?;
    let mut args = m.args.clone();
    if let Some(dir) = &a.out_dir {
        let to_dir = |_: &str| dir.display().to_string();
        let moved = replace_flag(&mut args, "--out-dir", to_dir)
            || replace_flag(&mut args, "--out", |v| {
                let name = Path::new(v)
                    .file_name()
                    .map(PathBuf::from)
                    .unwrap_or_default();
                dir.join(name).display().to_string()
            });
        if !moved {
            return Err(
                deephash::Error::config("manifest arguments name no output location").into(),
            );
        }
    }
    let cli =
        Cli::try_parse_from(std::iter::once("deephash".to_string()).chain(args.iter().cloned()))
            .map_err(|e| {
                deephash::Error::config(format!("manifest arguments do not parse: {e}"))
            })?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(deephash::Error::config("a manifest cannot replay another replay").into());
    }
    run(cli.command, &args)
}
