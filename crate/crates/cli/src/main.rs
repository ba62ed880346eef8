//! `ibgn`: train, evaluate and sample interval-based Bayesian generative
//! network models of complex activities.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ibgn_core::bundle::fit_class;
use ibgn_core::eval::{PerturbKind, Perturbation};
use ibgn_core::generative::{generate_instance, sample_size};
use ibgn_core::learning::{AlphaUpdate, BetaUpdate};
use ibgn_core::{
    check_consistency, composition_classes, compose, cross_validate, instance_to_network, BaseRelation, Corpus,
    EvalOptions, ModelBundle, StructureMode, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "ibgn", version, about = "Interval-based Bayesian generative networks for activity recognition")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-class training.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per class and write a model file.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score every instance of a corpus and write predictions as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Predictions CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate on a labeled corpus.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        noise: NoiseArgs,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Confusion matrix CSV path.
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Sample instances from a trained class.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Fixed number of intervals; drawn from the training sizes when omitted.
        #[arg(long)]
        size: Option<usize>,
        /// Output corpus; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add label or duration noise to a corpus.
    Perturb {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interval algebra utilities.
    Algebra {
        #[command(subcommand)]
        command: AlgebraCommand,
    },
}

#[derive(Subcommand)]
enum AlgebraCommand {
    /// Compose two base relations.
    Compose { first: BaseRelation, second: BaseRelation },
    /// List the constraint classes.
    Classes,
    /// Report temporal consistency of every instance in a corpus.
    Check { file: PathBuf },
}

#[derive(Args)]
struct NoiseArgs {
    /// Noise kind: labels or durations.
    #[arg(long)]
    perturb: Option<PerturbKind>,
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
}

impl NoiseArgs {
    fn perturbation(&self) -> Option<Perturbation> {
        self.perturb.map(|kind| Perturbation { kind, rate: self.rate })
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Structure mode: learned, chain or full.
    #[arg(long, default_value_t = StructureMode::Learned)]
    structure: StructureMode,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    burnin: usize,
    #[arg(long, default_value_t = 1000)]
    avg_window: usize,
    /// Relation smoothing constant.
    #[arg(long, default_value_t = 1e-5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_init: f64,
    #[arg(long, default_value_t = 0.5)]
    beta_init: f64,
    #[arg(long, default_value_t = 1e-6)]
    clamp_min: f64,
    #[arg(long, default_value_t = 1e6)]
    clamp_max: f64,
    /// Concentration update: crp, corpus, instance or fixed.
    #[arg(long, default_value_t = AlphaUpdate::default())]
    alpha_update: AlphaUpdate,
    /// Action prior update: symmetric, cell or fixed.
    #[arg(long, default_value_t = BetaUpdate::default())]
    beta_update: BetaUpdate,
    /// Report a convergence score for each class.
    #[arg(long)]
    geweke: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iters,
            burn_in: self.burnin,
            avg_window: self.avg_window,
            structure: self.structure,
            rho: self.rho,
            seed,
            alpha_init: self.alpha_init,
            beta_init: self.beta_init,
            clamp_min: self.clamp_min,
            clamp_max: self.clamp_max,
            alpha_update: self.alpha_update,
            beta_update: self.beta_update,
            geweke: self.geweke,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IBGN_LOG", "error")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    match cli.command {
        Command::Train { input, out, train } => {
            let corpus = load_corpus(&input)?;
            let config = train.config(cli.seed);
            let bundle = pool.install(|| train_bundle(&corpus, &config, true))?;
            bundle.save(&out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Predict { model, input, out } => predict(&model, &input, out.as_deref())?,
        Command::Eval { input, folds, noise, report, confusion, train } => {
            let corpus = load_corpus(&input)?;
            if !corpus.is_labeled() {
                bail!("evaluation needs a labeled corpus");
            }
            let options = EvalOptions { folds, seed: cli.seed, perturbation: noise.perturbation() };
            let config = train.config(cli.seed);
            let result =
                pool.install(|| cross_validate(&corpus, &options, &config, |c, cfg| train_bundle(c, cfg, false)))?;
            println!("accuracy: {:.4}", result.accuracy);
            for (i, a) in result.fold_accuracies.iter().enumerate() {
                println!("fold {}: {a:.4}", i + 1);
            }
            if let Some(path) = report {
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &result)?;
                writeln!(w)?;
                w.flush()?;
            }
            if let Some(path) = confusion {
                std::fs::write(&path, result.confusion_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Generate { model, class, count, size, out } => {
            let bundle = load_bundle(&model)?;
            let label = bundle.class_index(&class)?;
            let model = &bundle.models[label];
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let mut instances = Vec::with_capacity(count);
            for _ in 0..count {
                let k = size.unwrap_or_else(|| sample_size(model, &mut rng));
                let mut inst = generate_instance(model, k, &mut rng)?;
                let report = check_consistency(&instance_to_network(&inst)?);
                if !report.is_consistent() {
                    bail!("generated an inconsistent network: {:?}", report.violations);
                }
                inst.label = Some(0);
                instances.push(inst);
            }
            let corpus = Corpus { instances, vocab: model.action_vocab.clone(), classes: vec![class] };
            write_corpus(&corpus, out.as_deref())?;
        }
        Command::Perturb { input, noise, out } => {
            let Some(p) = noise.perturbation() else { bail!("--perturb is required") };
            let corpus = load_corpus(&input)?;
            write_corpus(&p.apply(&corpus, cli.seed)?, out.as_deref())?;
        }
        Command::Algebra { command } => algebra(command)?,
    }
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::load(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_corpus(corpus: &Corpus, path: Option<&Path>) -> Result<()> {
    corpus.write_to(output(path)?)?;
    Ok(())
}

/// Trains every class on the current rayon pool. Models are collected in
/// class order, and each class has its own random stream.
fn train_bundle(corpus: &Corpus, config: &TrainConfig, verbose: bool) -> ibgn_core::Result<ModelBundle> {
    let fitted = (0..corpus.classes.len())
        .into_par_iter()
        .map(|label| fit_class(corpus, label, config))
        .collect::<ibgn_core::Result<Vec<_>>>()?;
    for ((name, (model, stats)), label) in corpus.classes.iter().zip(&fitted).zip(0..) {
        log::info!("class {label} `{name}` trained");
        if verbose {
            let mut line = format!(
                "{name}: k*={} links={} occupied_tables={}",
                model.k_star,
                model.structure.len(),
                stats.occupied_tables
            );
            if let Some(z) = stats.geweke_z {
                line.push_str(&format!(" geweke_z={z:.3}"));
            }
            println!("{line}");
        }
    }
    ModelBundle::from_models(corpus, config, fitted.into_iter().map(|(m, _)| m).collect())
}

fn predict(model: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let bundle = load_bundle(model)?;
    let corpus = bundle.align(&load_corpus(input)?);
    let labeled = !corpus.is_empty() && corpus.is_labeled();
    let mut w = csv::Writer::from_writer(output(out)?);
    let mut header = vec!["index".to_string(), "predicted".to_string()];
    if labeled {
        header.push("true".into());
    }
    header.extend(bundle.classes.iter().map(|c| format!("score_{c}")));
    header.push("margin".into());
    w.write_record(&header)?;

    let mut correct = 0;
    for (i, inst) in corpus.instances.iter().enumerate() {
        let p = bundle.predict(inst)?;
        let mut row = vec![i.to_string(), bundle.classes[p.label].clone()];
        if let Some(truth) = inst.label.filter(|_| labeled) {
            row.push(corpus.classes[truth].clone());
            correct += usize::from(truth == p.label);
        }
        row.extend(p.log_scores.iter().map(f64::to_string));
        row.push(p.margin.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    if labeled {
        let accuracy = correct as f64 / corpus.len() as f64;
        // keep standard output clean when it carries the CSV
        if out.is_some() {
            println!("accuracy: {accuracy:.4}");
        } else {
            eprintln!("accuracy: {accuracy:.4}");
        }
    }
    Ok(())
}

fn algebra(command: AlgebraCommand) -> Result<()> {
    match command {
        AlgebraCommand::Compose { first, second } => println!("{}", compose(first, second)),
        AlgebraCommand::Classes => {
            for class in composition_classes() {
                println!("{} {}", class.index, class.members);
            }
        }
        AlgebraCommand::Check { file } => {
            let corpus = load_corpus(&file)?;
            let mut inconsistent = 0;
            for (i, inst) in corpus.instances.iter().enumerate() {
                let report = check_consistency(&instance_to_network(inst)?);
                if report.is_consistent() {
                    println!("{i}: consistent");
                } else {
                    inconsistent += 1;
                    let triangles: Vec<String> =
                        report.violations.iter().map(|(a, b, c)| format!("({a},{b},{c})")).collect();
                    println!("{i}: inconsistent {}", triangles.join(" "));
                }
            }
            println!("{} of {} consistent", corpus.len() - inconsistent, corpus.len());
        }
    }
    Ok(())
}
