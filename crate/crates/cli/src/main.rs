use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hydent::data::{load_csv_with, split, synth_noisy_gaussian, write_csv, Dataset, SplitSpec};
use hydent::graph::{knn_pattern, write_edge_list, Kernel};
use hydent::orchestrate::{paired_t_test, run_baseline, RunConfig, RunResult, Variant};
use serde::{Deserialize, Serialize};
use serde_json::json;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "hydent",
    version,
    about = "Ensemble-taught hybrid label propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a two-Gaussian synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Run one variant on a dataset and print a JSON summary.
    Run(RunArgs),
    /// Run variants over several label budgets and repeats; write a results table.
    Bench(BenchArgs),
    /// Paired one-sided t-test between two variants of a results table.
    Ttest(TtestArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0.5)]
    cov: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LearnerKind {
    Hf,
    Flap,
}

#[derive(Args)]
struct ConfigArgs {
    /// Learner kernels, in order.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [LearnerKind::Hf, LearnerKind::Flap])]
    learners: Vec<LearnerKind>,
    /// Self-loop factor of the flap learner.
    #[arg(long, default_value_t = 1.0)]
    self_loop: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 100.0)]
    kappa2: f64,
    #[arg(long, default_value_t = 100.0)]
    beta0: f64,
    #[arg(long, default_value_t = 100.0)]
    beta1: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    theta: f64,
    #[arg(long, default_value_t = 0.001)]
    threshold: f64,
    #[arg(long, default_value_t = 1e-8)]
    zeta: f64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon_bcd: f64,
    #[arg(long, default_value_t = 300)]
    iter_max: usize,
}

impl ConfigArgs {
    fn config(&self, seed: u64) -> RunConfig {
        let learners = self
            .learners
            .iter()
            .map(|kind| match kind {
                LearnerKind::Hf => Kernel::Gaussian,
                LearnerKind::Flap => Kernel::FlapStyle {
                    self_loop: self.self_loop,
                },
            })
            .collect();
        RunConfig {
            learners,
            k: self.k,
            sigma: self.sigma,
            kappa2: self.kappa2,
            beta0: self.beta0,
            beta1: self.beta1,
            gamma: self.gamma,
            theta: self.theta,
            threshold: self.threshold,
            zeta: self.zeta,
            epsilon_bcd: self.epsilon_bcd,
            iter_max: self.iter_max,
            seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Skip the first CSV line.
    #[arg(long)]
    header: bool,
    /// Reveal this many labels per class; without it the `?` rows are the
    /// unlabeled set.
    #[arg(long)]
    labeled_per_class: Option<usize>,
    #[arg(long, default_value = "hydent")]
    variant: Variant,
    /// Seeds both the split and the solver.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for rounds.csv and bcd_trace.csv.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// CSV of predicted classes, one row per example.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Directory for per-learner edge lists (`graph_<m>.txt`).
    #[arg(long)]
    graph_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long, value_delimiter = ',', required = true)]
    labeled_per_class: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// One seed per repeat; defaults to 0, 1, ...
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = [
            Variant::Hydent,
            Variant::HybridNoTeaching,
            Variant::SingleLearner(0),
            Variant::SingleLearner(1),
            Variant::SingleTeacher(0),
            Variant::SingleTeacher(1),
        ]
    )]
    variants: Vec<Variant>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TtestArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    variant_a: String,
    #[arg(long)]
    variant_b: String,
    #[arg(long, default_value_t = 0.9)]
    confidence: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
        Command::Ttest(args) => ttest(args),
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let data = synth_noisy_gaussian(args.n_per_class, args.cov, args.seed)?;
    let file =
        File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_csv(&data, BufWriter::new(file))?;
    println!("n={} d={} c={}", data.len(), data.dim(), data.class_count);
    Ok(())
}

fn load(path: &Path, header: bool) -> Result<Dataset> {
    load_csv_with(path, header).with_context(|| format!("cannot load {}", path.display()))
}

fn seeds_for(data: &Dataset, labeled_per_class: Option<usize>, seed: u64) -> Result<Vec<usize>> {
    Ok(match labeled_per_class {
        Some(l) => {
            split(
                data,
                SplitSpec {
                    labeled_per_class: l,
                    seed,
                },
            )?
            .0
        }
        None => data.labeled_indices(),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let data = load(&args.data, args.header)?;
    let labeled = seeds_for(&data, args.labeled_per_class, args.seed)?;
    let config = args.config.config(args.seed);
    let result = run_baseline(&data, &labeled, &config, args.variant)?;

    if let Some(dir) = &args.trace_dir {
        write_traces(dir, &result)?;
    }
    if let Some(path) = &args.labels_out {
        write_labels(path, &data, &result)?;
    }
    if let Some(dir) = &args.graph_dir {
        write_graphs(dir, &data, &config)?;
    }

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "variant": result.variant.to_string(),
        "accuracy": result.accuracy,
        "rounds": result.rounds.len(),
        "curriculum_total": result.curriculum_total(),
        "seconds": result.seconds,
        "config": config,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn write_traces(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut rounds = csv::Writer::from_writer(create(&dir.join("rounds.csv"))?);
    rounds.write_record(["round", "b", "s", "g", "seconds"])?;
    let mut bcd = csv::Writer::from_writer(create(&dir.join("bcd_trace.csv"))?);
    bcd.write_record(["round", "iteration", "Q"])?;
    for r in &result.rounds {
        rounds.write_record([
            r.round.to_string(),
            r.b.to_string(),
            r.s.to_string(),
            r.g.to_string(),
            r.seconds.to_string(),
        ])?;
        for (iteration, q) in r.objective_trace.iter().enumerate() {
            bcd.write_record([r.round.to_string(), iteration.to_string(), q.to_string()])?;
        }
    }
    rounds.flush()?;
    bcd.flush()?;
    Ok(())
}

fn write_labels(path: &Path, data: &Dataset, result: &RunResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(path)?);
    out.write_record(["index", "predicted"])?;
    for (i, &c) in result.predictions.iter().enumerate() {
        out.write_record([i.to_string(), data.class_names[c].clone()])?;
    }
    out.flush()?;
    Ok(())
}

fn write_graphs(dir: &Path, data: &Dataset, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let pattern = knn_pattern(&data.features, config.k)?;
    for (m, kernel) in config.learners.iter().enumerate() {
        let w = kernel.weights(&pattern, &data.features, config.sigma);
        let mut out = create(&dir.join(format!("graph_{}.txt", m + 1)))?;
        write_edge_list(&w, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchRow {
    variant: String,
    l: usize,
    repeat: String,
    seed: Option<u64>,
    accuracy: f64,
    std: Option<f64>,
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn bench(args: BenchArgs) -> Result<()> {
    if args.repeats == 0 {
        bail!("--repeats must be positive");
    }
    let seeds: Vec<u64> = if args.seeds.is_empty() {
        (0..args.repeats as u64).collect()
    } else if args.seeds.len() == args.repeats {
        args.seeds.clone()
    } else {
        bail!(
            "--seeds lists {} values for {} repeats",
            args.seeds.len(),
            args.repeats
        );
    };
    let data = load(&args.data, args.header)?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &variant in &args.variants {
        for &l in &args.labeled_per_class {
            let mut accuracies = Vec::with_capacity(args.repeats);
            for (repeat, &seed) in seeds.iter().enumerate() {
                let labeled = seeds_for(&data, Some(l), seed)?;
                let result = run_baseline(&data, &labeled, &args.config.config(seed), variant)?;
                let Some(accuracy) = result.accuracy else {
                    bail!("no ground truth among the unlabeled rows");
                };
                accuracies.push(accuracy);
                rows.push(BenchRow {
                    variant: variant.to_string(),
                    l,
                    repeat: repeat.to_string(),
                    seed: Some(seed),
                    accuracy,
                    std: None,
                });
            }
            summaries.push(BenchRow {
                variant: variant.to_string(),
                l,
                repeat: "mean".into(),
                seed: None,
                accuracy: accuracies.iter().sum::<f64>() / accuracies.len() as f64,
                std: Some(sample_std(&accuracies)),
            });
        }
    }

    let mut out = csv::Writer::from_writer(create(&args.out)?);
    for row in rows.iter().chain(&summaries) {
        out.serialize(row)?;
    }
    out.flush()?;
    for s in &summaries {
        println!(
            "{} l={} mean={:.4} std={:.4}",
            s.variant,
            s.l,
            s.accuracy,
            s.std.unwrap_or(0.0)
        );
    }
    Ok(())
}

fn ttest(args: TtestArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.results)
        .with_context(|| format!("cannot read {}", args.results.display()))?;
    // (l, repeat) -> accuracy, per variant
    let mut a: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut b: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: BenchRow = row?;
        let Ok(repeat) = row.repeat.parse::<usize>() else {
            continue;
        };
        let target = if row.variant == args.variant_a {
            &mut a
        } else if row.variant == args.variant_b {
            &mut b
        } else {
            continue;
        };
        if target.insert((row.l, repeat), row.accuracy).is_some() {
            bail!(
                "duplicate row for {} l={} repeat={}",
                row.variant,
                row.l,
                repeat
            );
        }
    }
    for (name, side) in [(&args.variant_a, &a), (&args.variant_b, &b)] {
        if side.is_empty() {
            bail!("variant {name} not found in {}", args.results.display());
        }
    }
    if let Some(key) = a
        .keys()
        .chain(b.keys())
        .find(|k| !(a.contains_key(k) && b.contains_key(k)))
    {
        bail!("unpaired row at l={} repeat={}", key.0, key.1);
    }

    let mut budgets: Vec<usize> = a.keys().map(|k| k.0).collect();
    budgets.dedup();
    println!("l\tmean_a\tmean_b\tt\tverdict");
    for l in budgets {
        let xs: Vec<f64> = a.range((l, 0)..=(l, usize::MAX)).map(|(_, v)| *v).collect();
        let ys: Vec<f64> = b.range((l, 0)..=(l, usize::MAX)).map(|(_, v)| *v).collect();
        let test = paired_t_test(&xs, &ys, args.confidence)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "{l}\t{:.4}\t{:.4}\t{:.4}\t{}",
            mean(&xs),
            mean(&ys),
            test.t,
            if test.significant { "✓" } else { "−" }
        );
    }
    Ok(())
}
