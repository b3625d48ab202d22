use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use primfit::cli::{cmd_classify, cmd_evaluate, cmd_generate, CliError, RunConfig, EXIT_OK, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "primfit", version, about = "Primitive-segment benchmark: generate, classify, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset with ground truth and manifest.
    Generate(Common),
    /// Classify every cloud of a dataset and write `_pred.txt` files.
    Classify(Common),
    /// Score predictions against a dataset and write report.csv / report.md.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key=value file; flags given here win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory (classify) or prediction directory (evaluate).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Dataset directory holding the ground truth (evaluate).
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    per_kind: Option<usize>,
    /// Comma-separated labels such as a0,a2 or `all`.
    #[arg(long)]
    perturbations: Option<String>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    max_points: Option<usize>,
    #[arg(long)]
    use_hough: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    halfwidth: Option<f64>,
    #[arg(long)]
    parsimony: Option<f64>,
    #[arg(long)]
    method: Option<String>,
    /// Threshold such as `macro_acc>=0.95`; repeatable.
    #[arg(long = "assert")]
    assertions: Vec<String>,
}

impl Common {
    fn flags(&self) -> Vec<(String, String)> {
        let mut f: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                f.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", path(&self.out));
        put("input", path(&self.input));
        put("gt", path(&self.gt));
        put("per-kind", self.per_kind.map(|v| v.to_string()));
        put("perturbations", self.perturbations.clone());
        put("min-points", self.min_points.map(|v| v.to_string()));
        put("max-points", self.max_points.map(|v| v.to_string()));
        put("use-hough", self.use_hough.then(|| "true".to_string()));
        put("k", self.k.map(|v| v.to_string()));
        put("bins", self.bins.map(|v| v.to_string()));
        put("halfwidth", self.halfwidth.map(|v| v.to_string()));
        put("parsimony", self.parsimony.map(|v| v.to_string()));
        put("method", self.method.clone());
        for a in &self.assertions {
            put("assert", Some(a.clone()));
        }
        f
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, which) = match &cli.command {
        Command::Generate(c) => (c, 0),
        Command::Classify(c) => (c, 1),
        Command::Evaluate(c) => (c, 2),
    };
    let cfg = RunConfig::from_sources(common.config.as_deref(), &common.flags())?;
    let mut stdout = std::io::stdout().lock();
    match which {
        0 => cmd_generate(&cfg, &mut stdout).map(drop),
        1 => cmd_classify(&cfg, &mut stdout).map(drop),
        _ => cmd_evaluate(&cfg, &mut stdout).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
