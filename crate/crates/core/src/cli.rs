//! The `srdl` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration, input or
//! contract violation, 3 numeric failure during training.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{Manifest, Precision, RunConfig};
use crate::data::{self, Dataset, GaussianMixture};
use crate::error::{Error, Result};
use crate::landscape::{self, PerturbationSpec};
use crate::metrics::{self, RetrievalSet};
use crate::tensor::Real;
use crate::training::{self, RunReport, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        e if e.is_numeric() => EXIT_NUMERIC,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "srdl", version, about = "Self-referenced two-stage training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train with the strategy named in a run config.
    Train(TrainArgs),
    /// Evaluate one checkpoint, or an ensemble of several.
    Eval(EvalArgs),
    /// Loss along random parameter-space directions.
    Landscape(LandscapeArgs),
    /// Tabulate accuracy and cost of finished runs.
    Compare(CompareArgs),
    /// Write a synthetic Gaussian-mixture dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Run config (.toml) or a previous run's manifest.json.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Config whose data section names the dataset.
    #[arg(long)]
    config: PathBuf,
    /// Repeat for an ensemble.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Also report CMC and mAP: test-split embeddings query the training split.
    #[arg(long)]
    retrieval: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    ranks: Vec<usize>,
    /// Write the CSV here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    directions: usize,
    #[arg(long, default_value_t = 5.0)]
    d_max: f64,
    /// Number of evenly spaced magnitudes from 0 to d_max.
    #[arg(long, default_value_t = 11)]
    steps: usize,
    /// Explicit magnitudes; overrides --d-max and --steps.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    vanilla: PathBuf,
    #[arg(long)]
    srdl: PathBuf,
    #[arg(long)]
    kd: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    /// Defaults to per-class / 5.
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 1.5)]
    mean_range: f64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Directory receiving train.csv and test.csv.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    if let Some(n) = std::env::var("SRDL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails harmlessly if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Landscape(a) => cmd_landscape(&a, out),
        Command::Compare(a) => cmd_compare(&a, out),
        Command::GenData(a) => cmd_gen_data(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(dir) = &a.out {
        cfg.output.dir = Some(std::path::absolute(dir)?);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let dir = cfg
        .output
        .dir
        .clone()
        .ok_or_else(|| Error::config("output.dir", "no output directory (set output.dir or pass --out)"))?;
    let (train, test) = cfg.data.load()?;
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("manifest.json"), &Manifest::new(cfg.clone()))?;
    let report = match cfg.precision {
        Precision::F32 => train_with::<f32>(&cfg, &train, test.as_ref(), &dir)?,
        Precision::F64 => train_with::<f64>(&cfg, &train, test.as_ref(), &dir)?,
    };
    write_json(&dir.join("report.json"), &report)?;
    fs::write(dir.join("epochs.csv"), report.epochs_csv())?;
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "wall_clock_secs": report.wall_clock_secs }),
    )?;
    let test_top1 = report.final_eval.test.map(|t| format!("{:.4}", t.top1)).unwrap_or("-".into());
    writeln!(
        out,
        "{} done: {} epochs, train top-1 {:.4}, test top-1 {}, TrCost {} FLOPs -> {}",
        report.strategy.as_str(),
        report.epochs.len(),
        report.final_eval.train.top1,
        test_top1,
        report.cost.reported_trcost,
        dir.display()
    )?;
    Ok(())
}

fn train_with<F: Real>(cfg: &RunConfig, train: &Dataset, test: Option<&Dataset>, dir: &Path) -> Result<RunReport> {
    let spec = cfg.model.spec("model", train.feature_shape(), train.classes())?;
    let settings = cfg.settings();
    match cfg.strategy {
        Strategy::Vanilla => {
            let (ckpt, report) = training::train_vanilla::<F>(&spec, train, test, &settings)?;
            save_checkpoint(&ckpt, dir.join("final.ckpt"))?;
            Ok(report)
        }
        Strategy::Srdl => {
            let o = training::train_srdl::<F>(&spec, train, test, &settings, &cfg.srdl_options())?;
            save_checkpoint(&o.stage1, dir.join("stage1.ckpt"))?;
            save_checkpoint(&o.last, dir.join("final.ckpt"))?;
            o.knowledge.save(dir.join("knowledge.srkn"))?;
            Ok(o.report)
        }
        Strategy::Kd => {
            let (teacher, teacher_cost) = match (&cfg.teacher.checkpoint, &cfg.teacher.model) {
                (Some(p), _) => (load_checkpoint(p)?, None),
                (None, Some(m)) => {
                    let tspec = m.spec("teacher.model", train.feature_shape(), train.classes())?;
                    let mut ts = settings.clone();
                    ts.epochs = cfg.teacher.epochs.unwrap_or(cfg.epochs);
                    ts.schedule = ts.schedule.with_horizon(ts.epochs);
                    ts.seed = cfg.teacher.seed.unwrap_or(cfg.seed);
                    let (t, r) = training::train_vanilla::<F>(&tspec, train, test, &ts)?;
                    save_checkpoint(&t, dir.join("teacher.ckpt"))?;
                    write_json(&dir.join("teacher_report.json"), &r)?;
                    (t, Some(r.cost.trcost))
                }
                (None, None) => return Err(Error::config("teacher", "kd needs a teacher")),
            };
            let (ckpt, knowledge, report) =
                training::train_kd::<F>(&spec, &teacher, teacher_cost, train, test, &settings, cfg.temperature)?;
            save_checkpoint(&ckpt, dir.join("final.ckpt"))?;
            knowledge.save(dir.join("knowledge.srkn"))?;
            Ok(report)
        }
    }
}

fn pick(split: SplitArg, train: Dataset, test: Option<Dataset>) -> Result<Dataset> {
    match split {
        SplitArg::Train => Ok(train),
        SplitArg::Test => test.ok_or_else(|| Error::config("data", "no test split configured")),
    }
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::Train => "train",
        SplitArg::Test => "test",
    }
}

fn emit(out: &mut dyn Write, text: &str, path: Option<&Path>) -> Result<()> {
    out.write_all(text.as_bytes())?;
    if let Some(p) = path {
        fs::write(p, text)?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let ckpts = a.checkpoints.iter().map(load_checkpoint).collect::<Result<Vec<Checkpoint>>>()?;
    let classes = ckpts[0].spec.classes;
    if ckpts.iter().any(|c| c.spec.classes != classes) {
        return Err(Error::contract("checkpoints predict different class counts"));
    }
    let (train, test) = cfg.data.load()?;
    let split = split_name(a.split);
    let retrieval_sets = if a.retrieval {
        Some((train.clone(), test.clone().ok_or_else(|| Error::config("data", "retrieval needs a test split"))?))
    } else {
        None
    };
    let data = pick(a.split, train, test)?;
    let mut csv = String::from("model,split,metric,value\n");
    for (path, c) in a.checkpoints.iter().zip(&ckpts) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let e = training::evaluate(&c.spec, &c.params, &data)?;
        csv.push_str(&format!("{name},{split},top1,{}\n{name},{split},ce,{}\n", e.top1, e.ce));
        if let Some((gallery, probe)) = &retrieval_sets {
            let g = training::dataset_features(&c.spec, &c.params, gallery)?;
            let p = training::dataset_features(&c.spec, &c.params, probe)?;
            let labels = |d: &Dataset| d.labels().iter().map(|&y| y as u64).collect::<Vec<_>>();
            let set = RetrievalSet::new(g.cols(), p.into_data(), labels(probe), g.into_data(), labels(gallery))?;
            for (k, v) in a.ranks.iter().zip(metrics::cmc(&set, &a.ranks, false)?) {
                csv.push_str(&format!("{name},retrieval,rank{k},{v}\n"));
            }
            csv.push_str(&format!("{name},retrieval,mAP,{}\n", metrics::mean_average_precision(&set, false)?));
        }
    }
    if ckpts.len() > 1 {
        let refs: Vec<&Checkpoint> = ckpts.iter().collect();
        csv.push_str(&format!("ensemble,{split},top1,{}\n", training::ensemble_accuracy(&refs, &data)?));
    }
    emit(out, &csv, a.out.as_deref())
}

fn cmd_landscape(a: &LandscapeArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let (train, test) = cfg.data.load()?;
    let data = pick(a.split, train, test)?;
    let spec = match &a.grid {
        Some(grid) => {
            let s = PerturbationSpec {
                directions: a.directions,
                grid: grid.clone(),
                seed: a.seed,
            };
            s.validate()?;
            s
        }
        None => PerturbationSpec::evenly_spaced(a.directions, a.d_max, a.steps, a.seed)?,
    };
    let curves = landscape::landscape_sweep(&ckpt, &data, &spec)?;
    emit(out, &landscape::curves_csv(&curves), a.out.as_deref())
}

fn test_top1(r: &RunReport) -> f64 {
    r.final_eval.test.map_or(r.final_eval.train.top1, |t| t.top1)
}

/// The comparison table as CSV. Accuracies are percentages.
pub fn compare_table(vanilla: &RunReport, srdl: &RunReport, kd: Option<&RunReport>) -> Result<String> {
    for (name, r) in std::iter::once(("srdl", srdl)).chain(kd.map(|k| ("kd", k))) {
        if r.train_hash != vanilla.train_hash || r.test_hash != vanilla.test_hash {
            return Err(Error::contract(format!("{name} report was produced on a different dataset")));
        }
    }
    let mut s = String::from("row,top1,trcost,estimated_total_flops,epochs\n");
    let mut row = |name: &str, r: &RunReport| {
        s.push_str(&format!(
            "{name},{:.2},{},{},{}\n",
            100.0 * test_top1(r),
            r.cost.reported_trcost,
            r.cost.estimated_total_flops,
            r.epochs.len()
        ));
    };
    row("vanilla", vanilla);
    row("srdl", srdl);
    if let Some(k) = kd {
        row("kd", k);
    }
    let gain = 100.0 * test_top1(srdl) - 100.0 * test_top1(vanilla);
    s.push_str(&format!("gain (srdl-vanilla),{gain:+.2},,,\n"));
    s.push_str(&format!("cost ratio (srdl/vanilla),{:.4},,,\n", srdl.cost.ratio_to(&vanilla.cost)));
    Ok(s)
}

fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let vanilla = read_report(&a.vanilla)?;
    let srdl = read_report(&a.srdl)?;
    let kd = a.kd.as_deref().map(read_report).transpose()?;
    let table = compare_table(&vanilla, &srdl, kd.as_ref())?;
    emit(out, &table, a.out.as_deref())
}

fn cmd_gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let g = GaussianMixture {
        classes: a.classes,
        per_class: a.per_class,
        test_per_class: a.test_per_class.unwrap_or((a.per_class / 5).max(1)),
        dim: a.dim,
        spread: a.spread,
        mean_range: a.mean_range,
        seed: a.seed,
    };
    let (train, test) = g.generate()?;
    fs::create_dir_all(&a.out)?;
    data::write_csv(&train, a.out.join("train.csv"))?;
    data::write_csv(&test, a.out.join("test.csv"))?;
    writeln!(
        out,
        "wrote {} training and {} test samples to {}",
        train.len(),
        test.len(),
        a.out.display()
    )?;
    Ok(())
}
