use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbmr::config::RunConfig;
use cbmr::error::{validation, CliError};
use cbmr::pipeline;

const CONFIG_HELP: &str = "\
CONFIG FILE (TOML, or JSON when the path ends in .json):
  paths.foci                 foci table, CSV or TSV with columns study_id,x,y,z
                             (extra numeric columns become study covariates)
  paths.mask                 brain mask, NIfTI-1 .nii or .nii.gz (nonzero = inside)
  paths.output_dir           where artifacts are written (created if absent)
  model.family               poisson | quasi_poisson | negative_binomial |
                             clustered_negative_binomial        [poisson]
  model.binarize             collapse repeated foci per study/voxel to 0/1 [true]
  spline.spacing_mm          knot spacing of the cubic B-spline basis    [20.0]
  spline.prune_threshold     drop tensor bases with in-mask mass below this [0.1]
  covariates.terms           list of { column, transform } with transform
                             none | sqrt                              [empty]
  covariates.standardize     center and scale moderator columns        [true]
  fit.max_iter               optimizer iteration cap                   [1000]
  fit.tol_grad               gradient sup-norm convergence tolerance   [1e-6]
  fit.tol_loglik             relative log-likelihood stall tolerance   [1e-8]
  inference.sidedness        one_sided_excess | two_sided  [one_sided_excess]
  inference.q                FDR level for BH rejection                [0.05]
  inference.truncation_floor p-values below this are lifted to it      [1e-3]
  simulation.sampler         model_based | empirical_shuffle    [model_based]
  simulation.n_realizations  null datasets for calibration              [100]
  ale.fwhm_mm                Gaussian kernel FWHM for the ALE baseline [14.0]
  ale.n_iter                 permutation iterations for ALE null      [2000]
  compare.uncorrected_p      p cutoff for the uncorrected DSC row      [0.05]
  seed                       master seed; all randomness derives from it [0]

Paths in the config are resolved relative to the config file. Outputs are
byte-identical across reruns and thread counts for a fixed config and seed.";

#[derive(Parser)]
#[command(
    name = "cbmr",
    version,
    about = "Coordinate-based meta-regression of neuroimaging foci",
    after_long_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (TOML, or JSON if the extension is .json)
    #[arg(short, long, value_name = "FILE")]
    config: PathBuf,

    /// Override the master seed from the config
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Override paths.output_dir from the config
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Override model.family from the config
    #[arg(long, value_name = "FAMILY")]
    model: Option<String>,

    /// Worker threads (default: all cores; env: CBMR_THREADS)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the intensity model and write fit.json plus intensity maps
    #[command(after_long_help = CONFIG_HELP)]
    Fit(Common),

    /// Voxelwise homogeneity test: z/p maps and FDR mask from a prior fit
    #[command(after_long_help = CONFIG_HELP)]
    Infer(Common),

    /// Test a linear hypothesis on the study-covariate coefficients
    #[command(after_long_help = CONFIG_HELP)]
    Glh {
        #[command(flatten)]
        common: Common,

        /// Contrast rows as JSON, e.g. "[1,0]" or "[[1,0],[0,1]]"
        #[arg(long, value_name = "JSON")]
        contrast: String,
    },

    /// Fit all four model families and write a comparison report
    #[command(after_long_help = CONFIG_HELP)]
    Select(Common),

    /// Calibrate the inference pipeline on synthetic null data
    #[command(name = "simulate-null", after_long_help = CONFIG_HELP)]
    SimulateNull(Common),

    /// Kernel-based ALE baseline with a permutation null
    #[command(after_long_help = CONFIG_HELP)]
    Ale(Common),

    /// Overlap (DSC) between the ALE and model-based significance maps
    #[command(after_long_help = CONFIG_HELP)]
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Fit(c)
            | Command::Infer(c)
            | Command::Select(c)
            | Command::SimulateNull(c)
            | Command::Ale(c)
            | Command::Compare(c) => c,
            Command::Glh { common, .. } => common,
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("CBMR_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .map_err(|_| validation(format!("CBMR_THREADS must be a positive integer, got {raw:?}")))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    if let Some(n) = resolve_threads(common.threads)? {
        if n == 0 {
            return Err(validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| validation(format!("cannot configure {n} worker threads: {e}")))?;
    }

    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        config.paths.output_dir = dir.clone();
    }
    if let Some(model) = &common.model {
        config.model.family = model.clone();
        config.model_kind()?; // reject unknown names before any work happens
    }

    match &cli.command {
        Command::Fit(_) => pipeline::cmd_fit(&config),
        Command::Infer(_) => pipeline::cmd_infer(&config),
        Command::Glh { contrast, .. } => pipeline::cmd_glh(&config, contrast),
        Command::Select(_) => pipeline::cmd_select(&config),
        Command::SimulateNull(_) => pipeline::cmd_simulate_null(&config),
        Command::Ale(_) => pipeline::cmd_ale(&config),
        Command::Compare(_) => pipeline::cmd_compare(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
