//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hici_core::datagen::{generate, save_dataset, DatasetMeta, Source};
use hici_core::model::{HyperConfig, Variant};

use crate::error::{CliError, CliResult};
use crate::grid::{load_config, HyperGrid, DEFAULT_MAX_CELLS};
use crate::ledger::{default_ledger_path, Ledger};
use crate::report::{ablation_table, build_report, by_dataset_variant, ReportKind, ReportSpec, Table};
use crate::runner::{ablate, evaluate_checkpoint, grid_search, load_data, train_single, RunEnv};

#[derive(Debug, Parser)]
#[command(name = "hici", version, about = "Counterfactual regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset into <out>/<base><K>/seed<seed>/.
    Gen(GenArgs),
    /// Train one configuration and evaluate it on the test split.
    Train(TrainArgs),
    /// Exhaustive grid search; the winner is evaluated on the test split.
    Gridsearch(GridArgs),
    /// Test metrics of a saved checkpoint.
    Evaluate(EvalArgs),
    /// Compare loss assemblies on shared data, splits and seeds.
    Ablate(AblateArgs),
    /// Aggregate ledger records into a table or plot-data CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dgp {
    Syn,
    NewsLike,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "syn")]
    pub dgp: Dgp,
    #[arg(long, default_value_t = 10000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long)]
    pub k: usize,
    /// Dosage levels.
    #[arg(long, default_value_t = 1)]
    pub e: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n_confounders: Option<usize>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub nonlinearity: Option<f64>,
    #[arg(long)]
    pub dosage_confounded: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overwrite a non-empty target directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file of HyperConfig fields; omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoints and per-epoch logs.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_CELLS)]
    pub max_cells: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// One or more dataset directories.
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "hici,onn,deeptreat_plus,l21_ae")]
    pub variants: Vec<Variant>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: ReportKind,
    /// Directory for the CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub datasets: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// P values for vary-p, E values for vary-e.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
}

fn base_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<HyperConfig> {
    let mut c = match path {
        Some(p) => load_config(p)?,
        None => HyperConfig::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn write_table(table: &Table, out: Option<&Path>, name: &str) -> CliResult<String> {
    let csv = table.to_csv();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        let path = dir.join(name);
        fs::write(&path, &csv).map_err(|e| CliError::io(path.display(), e))?;
    }
    Ok(csv)
}

/// Dataset metadata implied by `gen` flags.
pub fn gen_meta(a: &GenArgs) -> DatasetMeta {
    let mut m = match a.dgp {
        Dgp::Syn => DatasetMeta::syn(a.n, a.p, a.k, a.seed),
        Dgp::NewsLike => DatasetMeta::news_like(a.n, a.p, a.k, a.seed),
    }
    .with_dosage_levels(a.e);
    if let Some(v) = a.kappa {
        m.kappa = v;
    }
    if let Some(v) = a.sigma {
        m.sigma = v;
    }
    if let Some(v) = a.n_confounders {
        m.n_confounders = v;
    }
    if let Some(v) = a.sparsity {
        m.sparsity = v;
    }
    if let Some(v) = a.nonlinearity {
        m.nonlinearity = v;
    }
    m.dosage_confounded = a.dosage_confounded;
    m
}

/// Writes the dataset and returns its directory.
pub fn cmd_gen(a: &GenArgs) -> CliResult<PathBuf> {
    let meta = gen_meta(a);
    meta.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = a.out.join(meta.name()).join(format!("seed{}", meta.seed));
    let occupied = fs::read_dir(&dir).map(|mut it| it.next().is_some()).unwrap_or(false);
    if occupied && !a.force {
        return Err(CliError::Usage(format!(
            "{} exists and is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    debug_assert!(meta.source != Source::External);
    let d = generate(&meta).map_err(CliError::data)?;
    save_dataset(&d, &dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Runs a parsed command against `ledger`, returning what goes to stdout.
pub fn execute(cli: Cli, ledger: &Ledger) -> CliResult<String> {
    match cli.command {
        Command::Gen(a) => Ok(format!("{}\n", cmd_gen(&a)?.display())),
        Command::Train(a) => {
            let mut config = base_config(a.run.config.as_deref(), a.run.seed)?;
            if let Some(v) = a.variant {
                config.variant = v;
            }
            let d = load_data(&a.run.data)?;
            let env = RunEnv {
                ledger,
                out_dir: &a.run.out,
                workers: 1,
            };
            Ok(to_json(&train_single(&config, &d, &env)?) + "\n")
        }
        Command::Gridsearch(a) => {
            let base = base_config(a.run.config.as_deref(), None)?;
            let grid = HyperGrid::load(&a.grid)?;
            eprintln!("grid: {} cells (cap {})", grid.size(), a.max_cells);
            let mut cells = grid.expand(&base, a.max_cells)?;
            if let Some(s) = a.run.seed {
                cells.iter_mut().for_each(|c| c.seed = s);
            }
            let d = load_data(&a.run.data)?;
            let env = RunEnv {
                ledger,
                out_dir: &a.run.out,
                workers: a.workers,
            };
            let outcome = grid_search(&cells, &d, &env)?;
            let failed = outcome.cells.iter().filter(|c| !c.record.is_ok()).count();
            if failed > 0 {
                eprintln!("grid: {failed} of {} cells failed", outcome.cells.len());
            }
            Ok(to_json(&outcome.winner) + "\n")
        }
        Command::Evaluate(a) => {
            let d = load_data(&a.data)?;
            Ok(to_json(&evaluate_checkpoint(&a.checkpoint, &d)?) + "\n")
        }
        Command::Ablate(a) => {
            let base = base_config(a.config.as_deref(), None)?;
            if a.seeds.is_empty() || a.variants.is_empty() {
                return Err(CliError::Usage("ablate needs at least one seed and one variant".into()));
            }
            let datasets = a
                .data
                .iter()
                .map(|p| Ok((p.clone(), load_data(p)?)))
                .collect::<CliResult<Vec<_>>>()?;
            let env = RunEnv {
                ledger,
                out_dir: &a.out,
                workers: a.workers,
            };
            let runs = ablate(&base, &datasets, &a.seeds, &a.variants, &env)?;
            let records: Vec<_> = runs.into_iter().map(|r| r.record).collect();
            let groups = by_dataset_variant(&records);
            let mut names: Vec<String> = Vec::new();
            for (_, d) in &datasets {
                if !names.contains(&d.meta.name()) {
                    names.push(d.meta.name());
                }
            }
            let table = ablation_table(&names, &a.variants, |d, v| {
                groups.get(&(d.to_string(), v)).cloned().unwrap_or_default()
            });
            write_table(&table, Some(&a.out), "ablation.csv")
        }
        Command::Report(a) => {
            let mut spec = ReportSpec::defaults(a.kind);
            if let Some(d) = a.datasets {
                spec.datasets = d;
            }
            if let Some(v) = a.variants {
                spec.variants = v;
            }
            if let Some(v) = a.values {
                spec.values = v;
            }
            let table = build_report(&ledger.read_all()?, &spec)?;
            write_table(&table, a.out.as_deref(), &a.kind.file_name())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let ledger = Ledger::new(default_ledger_path());
    match execute(cli, &ledger) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
