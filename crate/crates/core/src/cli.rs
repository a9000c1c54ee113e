//! The `tripemb` command line.
//!
//! ```text
//! tripemb gen-data   --n 400 --seed 7 --out data/
//! tripemb train      --config run.json --data data/ --out runs/f4/
//! tripemb eval       --weights runs/f4/weights.bin --data data/ --out runs/f4/eval/
//! tripemb embed      --weights runs/f4/weights.bin --data data/ --out runs/f4/embedding.csv
//! tripemb grad-check --seed 0 --trials 10
//! ```
//!
//! Exit codes: 0 success, 1 failed gradient check, 2 usage or configuration
//! error, 3 training failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{self, load_dataset, save_dataset, Dataset, ImageFormat};
use crate::error::{Error, Result};
use crate::experiment::{
    embed_dataset, evaluate, run_experiment, write_embedding_csv, write_history_csv, write_violations_csv,
    ExperimentConfig, LossKind, SamplerKind, Summary, TrainConfig,
};
use crate::gradcheck::{run_grad_check, GradCheckConfig};
use crate::nn::{weights, AdamConfig, FilterSchedule, ModelConfig, NetworkParams};
use crate::rng;
use crate::sampling::TestScheme;

/// Exit code of a gradient check that ran but did not reach the pass rate.
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tripemb", version, about = "Triplet embeddings of ordinally scored images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scored image dataset.
    GenData(GenDataArgs),
    /// Train repeated runs and write weights and reports.
    Train(TrainArgs),
    /// Evaluate weights on the test split under every test scheme.
    Eval(WeightsArgs),
    /// Export embeddings as CSV.
    Embed(EmbedArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = data::synthetic::DEFAULT_HEIGHT)]
    height: usize,
    #[arg(long, default_value_t = data::synthetic::DEFAULT_WIDTH)]
    width: usize,
    #[arg(long, default_value = "txt")]
    format: ImageFormat,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_parser = parse_sampler)]
    sampler: Option<SamplerKind>,
    /// `fixed:<filters>` or `increasing`.
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<FilterSchedule>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    triplets_per_epoch: Option<usize>,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed and triplet count are read from `config.json` next to the weights
    /// when present; these flags override them.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_triplets: Option<usize>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Embed every image instead of the test split.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    coords: usize,
}

fn parse_sampler(s: &str) -> std::result::Result<SamplerKind, String> {
    match s.to_ascii_uppercase().as_str() {
        "UNIFORM" => Ok(SamplerKind::Uniform),
        "EXTENT" => Ok(SamplerKind::Extent),
        _ => Err(format!("expected UNIFORM or EXTENT, got {s:?}")),
    }
}

fn parse_schedule(s: &str) -> std::result::Result<FilterSchedule, String> {
    match s.split_once(':') {
        None if s == "increasing" => Ok(FilterSchedule::Increasing),
        Some(("fixed", n)) => n.parse().map(FilterSchedule::Fixed).map_err(|e| format!("{n:?}: {e}")),
        _ => Err(format!("expected fixed:<n> or increasing, got {s:?}")),
    }
}

/// Architecture without the input size, which comes from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub filter_schedule: FilterSchedule,
    pub num_layers: usize,
    pub embed_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            filter_schedule: FilterSchedule::default(),
            num_layers: 4,
            embed_dim: 2,
        }
    }
}

/// The `train` configuration file. Every field is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ArchConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub triplets_per_epoch: usize,
    pub validation_triplets: usize,
    pub sampler: SamplerKind,
    pub loss: LossKind,
    pub adam: AdamConfig,
    pub seed: u64,
    pub n_runs: usize,
    pub test_triplets: usize,
    pub jobs: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        let train = TrainConfig::new(ModelConfig {
            filter_schedule: FilterSchedule::default(),
            num_layers: 4,
            embed_dim: 2,
            input_height: 0,
            input_width: 0,
        });
        let exp = ExperimentConfig::new(train.clone());
        Self {
            data: None,
            out: None,
            model: ArchConfig::default(),
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            triplets_per_epoch: train.triplets_per_epoch,
            validation_triplets: train.validation_triplets,
            sampler: train.sampler,
            loss: train.loss,
            adam: train.adam,
            seed: train.seed,
            n_runs: exp.n_runs,
            test_triplets: exp.test_triplets,
            jobs: exp.jobs,
        }
    }
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config file: {e}")))
    }

    /// The experiment configuration for images of `height x width`.
    pub fn experiment(&self, height: usize, width: usize) -> Result<ExperimentConfig> {
        let model = ModelConfig {
            filter_schedule: self.model.filter_schedule,
            num_layers: self.model.num_layers,
            embed_dim: self.model.embed_dim,
            input_height: height,
            input_width: width,
        };
        let config = ExperimentConfig {
            train: TrainConfig {
                model,
                batch_size: self.batch_size,
                max_epochs: self.max_epochs,
                patience: self.patience,
                triplets_per_epoch: self.triplets_per_epoch,
                validation_triplets: self.validation_triplets,
                sampler: self.sampler,
                loss: self.loss,
                adam: self.adam,
                seed: self.seed,
            },
            n_runs: self.n_runs,
            test_triplets: self.test_triplets,
            jobs: self.jobs,
        };
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, args: &TrainArgs) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = args.$flag.clone() { self.$($field).+ = v; })*
            };
        }
        set!(
            seed => seed,
            runs => n_runs,
            jobs => jobs,
            sampler => sampler,
            schedule => model.filter_schedule,
            layers => model.num_layers,
            max_epochs => max_epochs,
            patience => patience,
            triplets_per_epoch => triplets_per_epoch,
        );
        if args.data.is_some() {
            self.data = args.data.clone();
        }
        if args.out.is_some() {
            self.out = args.out.clone();
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::GenData(a) => gen_data(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Embed(a) => embed(&a, out),
        Command::GradCheck(a) => grad_check(&a, out),
    }
    .map(|passed| if passed { 0 } else { EXIT_CHECK_FAILED })
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<bool> {
    if a.n < data::synthetic::MIN_IMAGES {
        return Err(Error::usage(format!(
            "--n must be at least {}, got {}",
            data::synthetic::MIN_IMAGES,
            a.n
        )));
    }
    if a.out.exists() {
        let non_empty = fs::read_dir(&a.out)?.next().is_some();
        if non_empty && !a.force {
            return Err(Error::usage(format!(
                "{} is not empty; pass --force to overwrite",
                a.out.display()
            )));
        }
        if a.force {
            clear_dataset(&a.out)?;
        }
    }
    fs::create_dir_all(&a.out)?;
    let images = data::generate_synthetic(a.n, a.seed, a.height, a.width)?;
    let dataset = Dataset::with_split(images, rng::derive_named(a.seed, "split"))?;
    save_dataset(&a.out, &dataset, a.format)?;
    writeln!(
        out,
        "wrote {} images ({}x{}) to {}: {} train, {} validation, {} test",
        a.n,
        a.height,
        a.width,
        a.out.display(),
        dataset.split.train_ids.len(),
        dataset.split.val_ids.len(),
        dataset.split.test_ids.len()
    )?;
    Ok(true)
}

/// Removes what a previous `gen-data` wrote, leaving anything else alone.
fn clear_dataset(dir: &Path) -> Result<()> {
    if dir.join("images").is_dir() {
        fs::remove_dir_all(dir.join("images"))?;
    }
    for f in ["labels.csv", "split.json"] {
        if dir.join(f).is_file() {
            fs::remove_file(dir.join(f))?;
        }
    }
    Ok(())
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<bool> {
    let mut config = match &a.config {
        Some(path) => CliConfig::from_json(&fs::read_to_string(path)?)?,
        None => CliConfig::default(),
    };
    config.apply(a);
    let (Some(data_dir), Some(out_dir)) = (config.data.clone(), config.out.clone()) else {
        return Err(Error::usage("train needs --data and --out (or data/out in the config file)"));
    };
    let dataset = load_dataset(&data_dir)?;
    let (h, w) = dataset.image_dims();
    let exp = config.experiment(h, w)?;
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;

    let result = run_experiment(&exp, &dataset)?;
    let summary = Summary::from_result(&result);
    fs::write(out_dir.join("summary.json"), summary.to_json()?)?;
    write_violations_csv(fs::File::create(out_dir.join("violations.csv"))?, &result, true)?;
    write_violations_csv(fs::File::create(out_dir.join("untrained_violations.csv"))?, &result, false)?;
    write_history_csv(fs::File::create(out_dir.join("history.csv"))?, &result)?;
    let Some(best) = result.best_run() else {
        let reasons: Vec<String> = summary.failed_runs.iter().map(|f| format!("run {}: {}", f.run, f.error)).collect();
        return Err(Error::Training(format!("every run failed ({})", reasons.join("; "))));
    };
    weights::save_weights(out_dir.join("weights.bin"), &best.result.best_params)?;

    writeln!(
        out,
        "{} {:?}: {}/{} runs completed, best run {}",
        summary.model, exp.train.sampler, summary.completed_runs, summary.n_runs, best.run
    )?;
    if let (Some(e), Some(v), Some(u)) = (summary.epochs, summary.val_violations, summary.untrained_val_violations) {
        writeln!(
            out,
            "median epochs {:.1} (IQR {:.1}), validation violations {:.2}% (IQR {:.2}), untrained {:.2}%",
            e.median, e.iqr, v.median, v.iqr, u.median
        )?;
    }
    writeln!(out, "{:<9} {:>9} {:>9}", "scheme", "trained", "untrained")?;
    for s in TestScheme::ALL {
        let fmt = |m: Option<&Option<crate::experiment::MedianIqr>>| match m.copied().flatten() {
            Some(m) => format!("{:.2}", m.median),
            None => "n/a".into(),
        };
        writeln!(
            out,
            "{:<9} {:>9} {:>9}",
            s.name(),
            fmt(summary.test.get(s.name())),
            fmt(summary.untrained_test.get(s.name()))
        )?;
    }
    Ok(true)
}

/// Loads weights and checks them against the dataset's image size.
fn load_compatible(weights_path: &Path, dataset: &Dataset) -> Result<NetworkParams> {
    let params = weights::load_weights(weights_path)?;
    let c = params.config();
    let (h, w) = dataset.image_dims();
    if (c.input_height, c.input_width) != (h, w) {
        return Err(Error::config(format!(
            "weights expect {}x{} images, dataset has {h}x{w}",
            c.input_height, c.input_width
        )));
    }
    Ok(params)
}

fn eval(a: &WeightsArgs, out: &mut dyn Write) -> Result<bool> {
    let dataset = load_dataset(&a.data)?;
    let params = load_compatible(&a.weights, &dataset)?;
    let sibling = a.weights.with_file_name("config.json");
    let base = if sibling.is_file() {
        CliConfig::from_json(&fs::read_to_string(&sibling)?)?
    } else {
        CliConfig::default()
    };
    let seed = a.seed.unwrap_or(base.seed);
    let triplets = a.test_triplets.unwrap_or(base.test_triplets);
    let report = evaluate(&params, &dataset.test_images()?, triplets, rng::derive_named(seed, "test"))?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    for r in &report.schemes {
        match r.violations {
            Some(v) => writeln!(out, "{:<9} {v:>7.2}%", r.scheme.name())?,
            None => writeln!(out, "{:<9} unavailable", r.scheme.name())?,
        }
    }
    Ok(true)
}

fn embed(a: &EmbedArgs, out: &mut dyn Write) -> Result<bool> {
    let dataset = load_dataset(&a.data)?;
    let params = load_compatible(&a.weights, &dataset)?;
    let images = if a.all { dataset.images.clone() } else { dataset.test_images()? };
    let rows = embed_dataset(&params, &images)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_embedding_csv(fs::File::create(&a.out)?, &rows)?;
    writeln!(out, "wrote {} embeddings to {}", rows.len(), a.out.display())?;
    Ok(true)
}

fn grad_check(a: &GradCheckArgs, out: &mut dyn Write) -> Result<bool> {
    let config = GradCheckConfig {
        seed: a.seed,
        trials: a.trials,
        coords_per_trial: a.coords,
        ..GradCheckConfig::default()
    };
    let report = run_grad_check(&config)?;
    let passed = report.pass_rate() >= config.required_pass_rate;
    writeln!(
        out,
        "{}: {}/{} coordinates within relative error {} ({:.2}%), {} skipped near kinks",
        if passed { "PASS" } else { "FAIL" },
        report.passed,
        report.checked,
        config.tolerance,
        100.0 * report.pass_rate(),
        report.skipped_near_kink
    )?;
    if let Some(w) = &report.worst {
        writeln!(
            out,
            "worst: trial {} model {} tensor {} index {}: analytic {:e}, numeric {:e}, relative error {:e}",
            w.trial, w.model, w.tensor, w.index, w.analytic, w.numeric, w.rel_error
        )?;
    }
    Ok(passed)
}
