use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsevecm::config::{parse_override, PipelineConfig, ScenarioSettings};
use sparsevecm::error::{AppError, AppResult};
use sparsevecm::grid::export_grid;
use sparsevecm::pipeline::{run_pipeline, ModelBundle, Stage};
use sparsevecm::synth::{self, SynthSpec};
use sparsevecm::{io, service};

#[derive(Parser)]
#[command(name = "sparsevecm", version, about = "Sparse VECM estimation and joint impulse responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate, deflate, interpolate and log-transform the raw prices.
    Ingest(PipelineArgs),
    /// Summaries, unit-root, cointegration and Chow tests.
    Test(PipelineArgs),
    /// Lag selection and cross-validated elastic-net fits.
    Fit(PipelineArgs),
    /// VECM view and effective-rank table.
    Rank(PipelineArgs),
    /// Point joint impulse responses for the default and custom scenarios.
    Jirf(ScenarioArgs),
    /// Bootstrap bands for every scenario (the full pipeline).
    Bootstrap(ScenarioArgs),
    /// Full pipeline; same as `bootstrap`.
    Run(ScenarioArgs),
    /// Write a coefficient grid from a fitted output directory.
    Export(ExportArgs),
    /// Serve what-if queries over a fitted output directory.
    Serve(ServeArgs),
    /// Generate a synthetic dataset and a matching config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config file.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    cpi: Option<PathBuf>,
    /// Master seed (falls back to the config, then SPARSEVECM_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed lag order instead of AIC selection.
    #[arg(long)]
    lags: Option<usize>,
    /// Comma-separated lambda values instead of the automatic grid.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Comma-separated elastic-net mixing values.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Coordinate-descent convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    /// Also write every bootstrap draw.
    #[arg(long)]
    keep_draws: bool,
    /// Override any config key, e.g. `--set jirf.horizon=12`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Extra scenario: comma-separated series labels to shock together.
    #[arg(long, value_delimiter = ',')]
    shock: Option<Vec<String>>,
    /// Magnitudes for `--shock` (default: the configured source).
    #[arg(long, value_delimiter = ',', requires = "shock")]
    magnitudes: Option<Vec<f64>>,
    #[arg(long, default_value = "custom", requires = "shock")]
    name: String,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    /// Output directory of a pipeline run.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    period: String,
    /// `pi` or `gammaK`.
    #[arg(long, default_value = "pi")]
    matrix: String,
    /// Destination JSON; a rendering file is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory with the explorer's static files, served under /ui.
    #[arg(long)]
    ui: Option<PathBuf>,
    /// Concurrent bootstrap jobs.
    #[arg(long, default_value_t = 2)]
    workers: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 3)]
    commodities: usize,
    #[arg(long, default_value_t = 4)]
    regions: usize,
    #[arg(long, default_value_t = 300)]
    weeks: usize,
    /// Cointegration rank (default: one trend per commodity).
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    sparsity: f64,
    #[arg(long, env = "SPARSEVECM_SEED", default_value_t = 1)]
    seed: u64,
    /// Probability that a weekly report is missing.
    #[arg(long, default_value_t = 0.02)]
    missing: f64,
}

impl PipelineArgs {
    fn overrides(&self) -> AppResult<Vec<(String, toml::Value)>> {
        let mut out = Vec::new();
        let path = |p: &Path| toml::Value::String(p.to_string_lossy().into_owned());
        let floats = |v: &[f64]| toml::Value::Array(v.iter().map(|x| toml::Value::Float(*x)).collect());
        let int = |v: usize| toml::Value::Integer(v as i64);
        if let Some(p) = &self.output {
            out.push(("output".into(), path(&absolute(p)?)));
        }
        if let Some(p) = &self.prices {
            out.push(("prices".into(), path(&absolute(p)?)));
        }
        if let Some(p) = &self.cpi {
            out.push(("cpi".into(), path(&absolute(p)?)));
        }
        if let Some(s) = self.seed {
            let s = i64::try_from(s).map_err(|_| AppError::Config("seed must fit in a signed 64-bit integer".into()))?;
            out.push(("seed".into(), toml::Value::Integer(s)));
        }
        if let Some(p) = self.lags {
            out.push(("lags".into(), int(p)));
        }
        if let Some(v) = &self.lambda_grid {
            out.push(("elastic_net.lambdas".into(), floats(v)));
        }
        if let Some(v) = &self.gamma_grid {
            out.push(("elastic_net.gammas".into(), floats(v)));
        }
        if let Some(k) = self.cv_folds {
            out.push(("elastic_net.cv_folds".into(), int(k)));
        }
        if let Some(t) = self.tol {
            out.push(("elastic_net.tolerance".into(), toml::Value::Float(t)));
        }
        if let Some(b) = self.replicates {
            out.push(("bootstrap.replicates".into(), int(b)));
        }
        if let Some(c) = self.confidence {
            out.push(("bootstrap.confidence".into(), toml::Value::Float(c)));
        }
        if self.keep_draws {
            out.push(("bootstrap.keep_draws".into(), toml::Value::Boolean(true)));
        }
        for s in &self.set {
            out.push(parse_override(s)?);
        }
        Ok(out)
    }

    fn load(&self) -> AppResult<PipelineConfig> {
        PipelineConfig::load(&self.config, &self.overrides()?)
    }
}

/// Command-line paths are relative to the working directory, not the
/// config file.
fn absolute(p: &Path) -> AppResult<PathBuf> {
    std::path::absolute(p).map_err(|e| AppError::io(p, e))
}

fn pipeline(args: &PipelineArgs, until: Stage) -> AppResult<()> {
    let cfg = args.load()?;
    let manifest = run_pipeline(&cfg, until)?;
    println!(
        "{} stage(s) complete; manifest at {}",
        manifest.stages.len(),
        cfg.output_dir().join(sparsevecm::pipeline::MANIFEST).display()
    );
    Ok(())
}

fn scenario_pipeline(args: &ScenarioArgs, until: Stage) -> AppResult<()> {
    let mut cfg = args.pipeline.load()?;
    if let Some(series) = &args.shock {
        cfg.jirf.scenarios.push(ScenarioSettings {
            name: args.name.clone(),
            series: series.clone(),
            magnitudes: args.magnitudes.clone(),
        });
    }
    if let Some(h) = args.horizon {
        cfg.jirf.horizon = h;
    }
    let manifest = run_pipeline(&cfg, until)?;
    println!("{} stage(s) complete in {}", manifest.stages.len(), cfg.output_dir().display());
    Ok(())
}

fn export(args: &ExportArgs) -> AppResult<()> {
    let bundle = ModelBundle::load(&args.model)?;
    let fit = bundle
        .fits
        .get(&args.period)
        .ok_or_else(|| AppError::Core(sparsevecm_core::Error::UnknownPeriod(args.period.clone())))?;
    let grid = export_grid(&sparsevecm_core::to_vecm(fit)?, &args.matrix, &args.period)?;
    match &args.out {
        Some(path) => {
            io::write_json(path, &grid)?;
            let render = path.with_extension("render.json");
            io::write_json(&render, &grid.rendering())?;
        }
        None => {
            let text = serde_json::to_string_pretty(&grid)?;
            let mut out = std::io::stdout().lock();
            // a closed pipe (e.g. `| head`) is not an error
            if let Err(e) = writeln!(out, "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(AppError::io("stdout", e));
                }
            }
        }
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> AppResult<()> {
    let spec = SynthSpec {
        commodities: args.commodities,
        regions: args.regions,
        weeks: args.weeks,
        rank: args.rank,
        sparsity: args.sparsity,
        seed: args.seed,
        missing: args.missing,
        ..Default::default()
    };
    let data = synth::generate(&spec)?;
    let dir = &args.output;
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    io::write_prices(&dir.join("prices.csv"), &data.prices)?;
    io::write_cpi(&dir.join("cpi.csv"), &data.cpi)?;
    io::write_json(&dir.join("truth.json"), &data.truth)?;
    let cfg = PipelineConfig {
        prices: "prices.csv".into(),
        cpi: Some("cpi.csv".into()),
        cpi_base: Some(synth::base_month(&spec).to_string()),
        output: "out".into(),
        seed: Some(spec.seed),
        commodities: Some(synth::commodity_names(spec.commodities)),
        periods: data.periods,
        ..Default::default()
    };
    io::write_text(&dir.join("pipeline.toml"), &cfg.to_toml())?;
    println!(
        "wrote {} reports for {} series ({} weeks, rank {}) to {}",
        data.prices.len(),
        spec.series_count(),
        spec.weeks,
        data.truth.rank,
        dir.display()
    );
    Ok(())
}

fn serve(args: &ServeArgs) -> AppResult<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io("runtime", e))?;
    rt.block_on(service::serve(&args.model, args.bind, args.ui.clone(), args.workers))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => pipeline(a, Stage::Summarize),
        Command::Test(a) => pipeline(a, Stage::Chow),
        Command::Fit(a) => pipeline(a, Stage::Fit),
        Command::Rank(a) => pipeline(a, Stage::VecmRank),
        Command::Jirf(a) => scenario_pipeline(a, Stage::Jirf),
        Command::Bootstrap(a) | Command::Run(a) => scenario_pipeline(a, Stage::Bootstrap),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let next = s.to_string();
                if !msg.contains(&next) {
                    msg.push_str(": ");
                    msg.push_str(&next);
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
