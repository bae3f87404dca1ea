//! `cata` command-line tool.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cata::data::{dataset_stats, generate_synthetic, split_per_category, Split};
use cata::eval::{evaluate, grid_search, MetricsReport};
use cata::training::grad_check;
use cata::{
    load_dataset, CataError, CataModel, Dataset, FeatureDims, ModelDims, PlantedSpec, Result,
    SplitSpec, TrainConfig, TrainReport, Variant,
};

#[derive(Parser)]
#[command(name = "cata", version, about = "Tucker-factorized context-aware rating models")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a dataset.
    Train(TrainArgs),
    /// Predict ratings for every record of a dataset.
    Predict(PredictArgs),
    /// Score a model on a dataset (MAE and RMSE, overall and per category).
    Evaluate(EvaluateArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a planted-model synthetic dataset.
    Gen(GenArgs),
    /// Summarize a dataset.
    Stats(StatsArgs),
    /// Grid search over alpha and beta on a per-category split.
    ///
    /// Each cell is trained on the train part and scored on the validation
    /// part. The selected configuration's model (trained on the train part
    /// only, without refitting on train + validation) is then scored on the
    /// test part.
    Grid(GridArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Squared Frobenius penalty on the linear weights.
    Cata,
    /// Group l1 penalty on per-category, per-view blocks of the linear weights.
    #[value(name = "cata_g", alias = "cata-g")]
    CataG,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Cata => Variant::Cata,
            VariantArg::CataG => Variant::CataG,
        }
    }
}

/// Training hyperparameters. Each flag overrides the config file, which
/// overrides the built-in defaults.
#[derive(Args, Clone, Default)]
struct TrainFlags {
    /// TOML config file (keys: ranks, alpha, beta, eta, max_iters, tol, seed,
    /// init_sigma, variant, line_search, alpha_grid, beta_grid, and a [split]
    /// table with train, valid, test, seed).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated ranks: category mode first, then one per view
    /// [default: 5 for every mode].
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Regularization weight on the core tensor and factor matrices [default: 1e-4].
    #[arg(long)]
    alpha: Option<f64>,
    /// Regularization weight on the linear weights [default: 1e-4].
    #[arg(long)]
    beta: Option<f64>,
    /// Step size [default: 0.1].
    #[arg(long)]
    eta: Option<f64>,
    /// Maximum number of iterations [default: 400].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative objective change that counts as converged [default: 1e-5].
    #[arg(long)]
    tol: Option<f64>,
    /// Initialization seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Standard deviation of the random initialization [default: 0.01].
    #[arg(long)]
    init_sigma: Option<f64>,
    /// Model variant [default: cata].
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Take fixed steps instead of halving steps that increase the objective.
    #[arg(long)]
    no_line_search: bool,
}

#[derive(Args, Clone, Default)]
struct SplitFlags {
    /// Train fraction within each category [default: 0.8].
    #[arg(long)]
    train_frac: Option<f64>,
    /// Validation fraction within each category [default: 0.1].
    #[arg(long)]
    valid_frac: Option<f64>,
    /// Test fraction within each category [default: 0.1].
    #[arg(long)]
    test_frac: Option<f64>,
    /// Split seed [default: 0].
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Output training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output objective trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Train on the train part of a per-category split and report
    /// validation and test metrics.
    #[arg(long)]
    split: bool,
    /// With --split, write train.jsonl, valid.jsonl and test.jsonl here.
    #[arg(long, requires = "split")]
    split_dir: Option<PathBuf>,
    #[command(flatten)]
    hyper: TrainFlags,
    #[command(flatten)]
    split_flags: SplitFlags,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset (JSON lines); ratings are ignored.
    #[arg(long)]
    data: PathBuf,
    /// Output predictions (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output text table (it is always printed to stdout).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    categories: usize,
    /// Comma-separated feature count per view.
    #[arg(long, value_delimiter = ',', default_value = "5,4,3")]
    view_dims: Vec<usize>,
    /// Comma-separated ranks, category mode first.
    #[arg(long, value_delimiter = ',', default_value = "2,2,2,2")]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 25)]
    trials: usize,
    #[arg(long, value_enum, default_value = "cata")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest acceptable relative error; exit status 1 above it.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    /// Output per-block report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 3)]
    categories: usize,
    /// Comma-separated feature count per view.
    #[arg(long, value_delimiter = ',', default_value = "10,8")]
    view_dims: Vec<usize>,
    /// Comma-separated planted ranks, category mode first [default: 2 for every mode].
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    n_per_category: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Probability that a feature is active in a record.
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = 1.0)]
    interaction_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    linear_scale: f64,
    /// Make view 0 a one-hot user id.
    #[arg(long)]
    one_hot_users: bool,
    /// Comma-separated views that carry no interaction signal.
    #[arg(long, value_delimiter = ',')]
    interaction_free_views: Vec<usize>,
    /// Comma-separated `category:view` blocks of the linear weights set to zero.
    #[arg(long, value_delimiter = ',', value_parser = parse_block)]
    zero_d_blocks: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Output planted model.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    /// View holding a one-hot user id; enables per-user category diversity.
    #[arg(long)]
    user_view: Option<usize>,
    /// Output statistics (JSON); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated alpha values [default: 1e-4,1e-3,1e-2,1e-1].
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Comma-separated beta values [default: 1e-4,1e-3,1e-2,1e-1].
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Output cell table (CSV).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Output result with the selected configuration and its test metrics (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: TrainFlags,
    #[command(flatten)]
    split_flags: SplitFlags,
}

fn parse_block(s: &str) -> std::result::Result<(usize, usize), String> {
    let (c, v) = s
        .split_once(':')
        .ok_or_else(|| format!("expected category:view, got {s:?}"))?;
    let c = c.trim().parse().map_err(|e| format!("{c:?}: {e}"))?;
    let v = v.trim().parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((c, v))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    ranks: Option<Vec<usize>>,
    alpha: Option<f64>,
    beta: Option<f64>,
    eta: Option<f64>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    seed: Option<u64>,
    init_sigma: Option<f64>,
    variant: Option<Variant>,
    line_search: Option<bool>,
    alpha_grid: Option<Vec<f64>>,
    beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    split: FileSplit,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileSplit {
    train: Option<f64>,
    valid: Option<f64>,
    test: Option<f64>,
    seed: Option<u64>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    require_file(path)?;
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        CataError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })
}

fn train_config(flags: &TrainFlags, file: &FileConfig, num_views: usize) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::new(num_views);
    macro_rules! layer {
        ($($field:ident),*) => {$(
            if let Some(x) = file.$field.clone() { cfg.$field = x; }
            if let Some(x) = flags.$field.clone() { cfg.$field = x; }
        )*};
    }
    layer!(ranks, alpha, beta, eta, max_iters, tol, seed, init_sigma);
    if let Some(v) = file.variant {
        cfg.variant = v;
    }
    if let Some(v) = flags.variant {
        cfg.variant = v.into();
    }
    if let Some(ls) = file.line_search {
        cfg.line_search = ls;
    }
    if flags.no_line_search {
        cfg.line_search = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn split_spec(flags: &SplitFlags, file: &FileSplit) -> Result<SplitSpec> {
    let d = SplitSpec::default();
    let spec = SplitSpec {
        train: flags.train_frac.or(file.train).unwrap_or(d.train),
        valid: flags.valid_frac.or(file.valid).unwrap_or(d.valid),
        test: flags.test_frac.or(file.test).unwrap_or(d.test),
        seed: flags.split_seed.or(file.seed).unwrap_or(d.seed),
    };
    spec.validate()?;
    Ok(spec)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CataError::InvalidArgument(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    require_file(path)?;
    load_dataset(path)
}

fn read_model(path: &Path) -> Result<CataModel> {
    require_file(path)?;
    CataModel::load(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    config: &'a TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<MetricsReport>,
    report: &'a TrainReport,
}

fn metrics_if_nonempty(model: &CataModel, ds: &Dataset) -> Result<Option<MetricsReport>> {
    if ds.is_empty() {
        Ok(None)
    } else {
        evaluate(model, ds).map(Some)
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = read_config(args.hyper.config.as_deref())?;
    let dataset = read_dataset(&args.data)?;
    let cfg = train_config(&args.hyper, &file, dataset.dims().num_views())?;
    let split = if args.split {
        let spec = split_spec(&args.split_flags, &file.split)?;
        let parts = split_per_category(&dataset, &spec)?;
        if let Some(dir) = &args.split_dir {
            fs::create_dir_all(dir)?;
            parts.train.save(dir.join("train.jsonl"))?;
            parts.valid.save(dir.join("valid.jsonl"))?;
            parts.test.save(dir.join("test.jsonl"))?;
        }
        Some((spec, parts))
    } else {
        None
    };
    let train_set = split.as_ref().map_or(&dataset, |(_, p)| &p.train);
    let (model, report) = cata::train(train_set, &cfg)?;
    model.save(&args.out)?;

    let (valid, test) = match &split {
        Some((_, Split { valid, test, .. })) => {
            (metrics_if_nonempty(&model, valid)?, metrics_if_nonempty(&model, test)?)
        }
        None => (None, None),
    };
    if let Some(path) = &args.report {
        let out = TrainOutput {
            config: &cfg,
            split: split.as_ref().map(|(s, _)| *s),
            valid: valid.clone(),
            test: test.clone(),
            report: &report,
        };
        write_json(path, &out)?;
    }
    if let Some(path) = &args.trace {
        fs::write(path, report.trace_csv())?;
    }
    println!(
        "iterations {} objective {:.6e} converged {}",
        report.iterations_run, report.final_objective, report.converged
    );
    if let Some(m) = valid {
        println!("valid mae {:.6} rmse {:.6}", m.mae, m.rmse);
    }
    if let Some(m) = test {
        println!("test mae {:.6} rmse {:.6}", m.mae, m.rmse);
    }
    Ok(())
}

#[derive(Serialize)]
struct Predictions {
    predictions: Vec<f64>,
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let dataset = read_dataset(&args.data)?;
    let predictions = model.predict_batch(dataset.records())?;
    write_json(&args.out, &Predictions { predictions })
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let dataset = read_dataset(&args.data)?;
    let report = evaluate(&model, &dataset)?;
    let table = report.to_table();
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.table {
        fs::write(path, &table)?;
    }
    print!("{table}");
    Ok(())
}

/// Returns whether the check passed.
fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let features = FeatureDims::new(args.categories, args.view_dims.clone())?;
    let dims = ModelDims::new(features, args.ranks.clone())?;
    let mut cfg = TrainConfig::new(dims.num_views());
    cfg.ranks = args.ranks.clone();
    cfg.alpha = args.alpha;
    cfg.beta = args.beta;
    cfg.seed = args.seed;
    cfg.variant = args.variant.into();
    cfg.validate()?;
    let report = grad_check(&dims, &cfg, args.trials)?;
    for b in &report.blocks {
        if b.is_skipped() {
            println!("{:>10}  skipped (nonsmooth)", b.block);
        } else {
            println!("{:>10}  {:.3e}", b.block, b.max_rel_error);
        }
    }
    let max = report.max_rel_error();
    println!("max relative error: {max:.3e}");
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(max <= args.threshold)
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let features = FeatureDims::new(args.categories, args.view_dims.clone())?;
    let ranks = args
        .ranks
        .clone()
        .unwrap_or_else(|| vec![2; features.num_views() + 1]);
    let dims = ModelDims::new(features, ranks)?;
    let mut spec = PlantedSpec::new(args.categories, args.n_per_category, args.noise, args.seed);
    spec.density = args.density;
    spec.interaction_scale = args.interaction_scale;
    spec.linear_scale = args.linear_scale;
    spec.one_hot_first_view = args.one_hot_users;
    spec.interaction_free_views = args.interaction_free_views.clone();
    spec.zero_d_blocks = args.zero_d_blocks.clone();
    let (dataset, model) = generate_synthetic(&dims, &spec)?;
    dataset.save(&args.out)?;
    if let Some(path) = &args.model_out {
        model.save(path)?;
    }
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let stats = dataset_stats(&dataset, args.user_view)?;
    match &args.out {
        Some(path) => write_json(path, &stats),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &stats)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct GridOutput<'a> {
    split: SplitSpec,
    grid: &'a cata::eval::GridResult,
    test: Option<MetricsReport>,
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let file = read_config(args.hyper.config.as_deref())?;
    let dataset = read_dataset(&args.data)?;
    let base = train_config(&args.hyper, &file, dataset.dims().num_views())?;
    let spec = split_spec(&args.split_flags, &file.split)?;
    let default_grid = vec![1e-4, 1e-3, 1e-2, 1e-1];
    let alphas = args
        .alphas
        .clone()
        .or(file.alpha_grid.clone())
        .unwrap_or_else(|| default_grid.clone());
    let betas = args
        .betas
        .clone()
        .or(file.beta_grid.clone())
        .unwrap_or(default_grid);
    let parts = split_per_category(&dataset, &spec)?;
    let result = grid_search(&parts.train, &parts.valid, &base, &alphas, &betas)?;
    let test = if parts.test.is_empty() {
        None
    } else {
        let (model, _) = cata::train(&parts.train, &result.best)?;
        Some(evaluate(&model, &parts.test)?)
    };
    print!("{}", result.to_table());
    if let Some(m) = &test {
        println!("test mae {:.6} rmse {:.6}", m.mae, m.rmse);
    }
    if let Some(path) = &args.csv {
        fs::write(path, result.to_csv())?;
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &GridOutput {
                split: spec,
                grid: &result,
                test,
            },
        )?;
    }
    Ok(())
}

fn exit_code(err: &CataError) -> u8 {
    match err {
        CataError::Parse { .. } | CataError::Json(_) | CataError::FormatVersion(_) => 2,
        CataError::InvalidArgument(_)
        | CataError::InvalidRecord { .. }
        | CataError::OracleTooLarge { .. } => 3,
        CataError::Diverged { .. } => 4,
        CataError::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gradcheck(a) => match cmd_gradcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Gen(a) => cmd_gen(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Grid(a) => cmd_grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
