//! Command-line driver: synthesize datasets, forecast, benchmark, cluster.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ndarray::s;

use nmfcast_core::lcf::{lcf_forecast, LcfConfig, RegressorSpec};
use nmfcast_core::smm::{
    cross_validate, rmpe, rrmse, GeometryCandidate, Program, SmmConfig,
};
use nmfcast_core::solver::{solve_palm, ConstraintProfile, SolverConfig, SolverKind};
use nmfcast_datakit::{
    baseline_exs, generate_synthetic, load_dataset, render_table, save_forecast, save_matrix,
    Dataset, Report, SyntheticSpec, DEFAULT_SMOOTHING,
};

#[derive(Parser)]
#[command(
    name = "nmfcast",
    about = "Forecast collections of nonnegative time series via masked matrix factorization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset (replicated base series plus noise).
    Synth(SynthArgs),
    /// Forecast a dataset with the sliding-mask or clustered pipeline.
    Forecast(ForecastArgs),
    /// Run the benchmark matrix (SMM, LCF, baselines) on a dataset and emit a metrics table.
    Bench(BenchArgs),
    /// Cluster series by their factorization weights and emit labeled rows.
    Cluster(ClusterArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of base series.
    #[arg(long, default_value_t = 500)]
    n_base: usize,
    /// Timestamps per base series (the period).
    #[arg(long, default_value_t = 10)]
    base_length: usize,
    /// How many times each base series is tiled.
    #[arg(long, default_value_t = 10)]
    replications: usize,
    /// White-noise scale.
    #[arg(long, default_value_t = 0.005)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "synthetic.csv")]
    output: PathBuf,
}

/// Flags shared by `forecast` and `bench`. Every flag may also be supplied
/// through `--config <toml>` under the same key (dashes included); explicit
/// flags win over the config file.
#[derive(Args, Clone, Default)]
struct PipelineArgs {
    /// TOML file providing defaults for any of these keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Forecasting method: smm | lcf.
    #[arg(long)]
    method: Option<String>,
    /// Masked program for SMM: mnmf | mamf.
    #[arg(long)]
    program: Option<String>,
    /// Solver: als | hals | palm | ipalm.
    #[arg(long)]
    solver: Option<String>,
    /// Candidate ranks K, comma separated.
    #[arg(long, value_delimiter = ',')]
    rank_grid: Option<Vec<usize>>,
    /// Candidate window sizes W, comma separated.
    #[arg(long, value_delimiter = ',')]
    window_grid: Option<Vec<usize>>,
    /// Candidate archetypal penalties, comma separated (mAMF only).
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Block period P (timestamps per block).
    #[arg(long)]
    period: Option<usize>,
    /// Row-group stride S (1 = sliding, W = non-overlapping).
    #[arg(long)]
    stride: Option<usize>,
    /// Forecast horizon F.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Row subsample size for the large-scale solver variant.
    #[arg(long)]
    subsample_rows: Option<usize>,
    /// Column subsample size for the large-scale solver variant.
    #[arg(long)]
    subsample_cols: Option<usize>,
    /// Cluster size bound d for LCF (default: the global rank).
    #[arg(long)]
    cluster_max: Option<usize>,
    /// Per-cluster rank for LCF.
    #[arg(long)]
    cluster_rank: Option<usize>,
    /// Profile regressor for LCF: lag | exs.
    #[arg(long)]
    regressor: Option<String>,
    /// Lag window for the lag regressor.
    #[arg(long)]
    regressor_window: Option<usize>,
    /// Ridge penalty for the lag regressor.
    #[arg(long)]
    ridge: Option<f64>,
    /// Smoothing factor for the exs regressor and baseline.
    #[arg(long)]
    smoothing: Option<f64>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Forecast CSV output path.
    #[arg(long, default_value = "forecast.csv")]
    output: PathBuf,
    /// Report JSON output path (default: alongside the forecast).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory receiving one report per method plus the rendered table.
    #[arg(long, default_value = "bench-reports")]
    output: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    /// Rank of the weight factorization.
    #[arg(long, default_value_t = 10)]
    rank: usize,
    /// Cluster size bound d (default: the rank).
    #[arg(long)]
    cluster_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Output CSV of (series, cluster) rows.
    #[arg(long, default_value = "clusters.csv")]
    output: PathBuf,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => cmd_synth(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Cluster(args) => cmd_cluster(args),
    }
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        n_base: args.n_base,
        base_length: args.base_length,
        replications: args.replications,
        sigma: args.sigma,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    save_matrix(&args.output, &data.series.view().to_owned(), None, None)?;
    println!(
        "wrote {} series x {} timestamps to {} ({} entries clamped at 0)",
        spec.n_base,
        spec.total_len(),
        args.output.display(),
        data.clamped
    );
    Ok(())
}

/// Resolved pipeline settings after merging flags and the config file.
struct PipelineSettings {
    dataset: Dataset,
    method: String,
    program: Program,
    solver: SolverKind,
    ranks: Vec<usize>,
    windows: Vec<usize>,
    lambdas: Vec<f64>,
    period: usize,
    stride: usize,
    horizon: usize,
    seed: u64,
    max_iters: usize,
    subsample_rows: Option<usize>,
    subsample_cols: Option<usize>,
    cluster_max: Option<usize>,
    cluster_rank: usize,
    regressor: RegressorSpec<f64>,
    smoothing: f64,
}

impl PipelineArgs {
    fn resolve(mut self) -> anyhow::Result<PipelineSettings> {
        if let Some(path) = &self.config {
            let table = load_config(path)?;
            self.merge_config(&table)?;
        }
        let input = self
            .input
            .ok_or_else(|| anyhow::anyhow!("--input is required (flag or config key)"))?;
        let dataset = load_dataset(&input)?;
        let horizon = self
            .horizon
            .ok_or_else(|| anyhow::anyhow!("--horizon is required (flag or config key)"))?;
        let period = self.period.unwrap_or(horizon);
        let method = self.method.unwrap_or_else(|| "smm".into());
        let program = match self.program.as_deref().unwrap_or("mnmf") {
            "mnmf" => Program::MNmf,
            "mamf" => Program::MAmf,
            other => bail!("unknown program {other:?}; expected mnmf or mamf"),
        };
        let solver = match self.solver.as_deref() {
            None => match program {
                Program::MNmf => SolverKind::Hals,
                Program::MAmf => SolverKind::Palm,
            },
            Some("als") => SolverKind::Als,
            Some("hals") => SolverKind::Hals,
            Some("palm") => SolverKind::Palm,
            Some("ipalm") => SolverKind::Ipalm,
            Some(other) => bail!("unknown solver {other:?}"),
        };
        let smoothing = self.smoothing.unwrap_or(DEFAULT_SMOOTHING);
        let regressor = match self.regressor.as_deref().unwrap_or("exs") {
            "exs" => RegressorSpec::ExponentialSmoothing { factor: smoothing },
            "lag" => RegressorSpec::LagLeastSquares {
                window: self.regressor_window.unwrap_or(period),
                ridge: self.ridge.unwrap_or(1e-6),
            },
            other => bail!("unknown regressor {other:?}; expected lag or exs"),
        };
        Ok(PipelineSettings {
            dataset,
            method,
            program,
            solver,
            ranks: self.rank_grid.unwrap_or_else(|| vec![4]),
            windows: self.window_grid.unwrap_or_else(|| vec![4]),
            lambdas: self.lambda_grid.unwrap_or_else(|| vec![0.1]),
            period,
            stride: self.stride.unwrap_or(1),
            horizon,
            seed: self.seed.unwrap_or(0),
            max_iters: self.max_iters.unwrap_or(200),
            subsample_rows: self.subsample_rows,
            subsample_cols: self.subsample_cols,
            cluster_max: self.cluster_max,
            cluster_rank: self.cluster_rank.unwrap_or(3),
            regressor,
            smoothing,
        })
    }

    fn merge_config(&mut self, table: &toml::Table) -> anyhow::Result<()> {
        merge_path(&mut self.input, table, "input")?;
        merge_string(&mut self.method, table, "method")?;
        merge_string(&mut self.program, table, "program")?;
        merge_string(&mut self.solver, table, "solver")?;
        merge_usize_list(&mut self.rank_grid, table, "rank-grid")?;
        merge_usize_list(&mut self.window_grid, table, "window-grid")?;
        merge_f64_list(&mut self.lambda_grid, table, "lambda-grid")?;
        merge_usize(&mut self.period, table, "period")?;
        merge_usize(&mut self.stride, table, "stride")?;
        merge_usize(&mut self.horizon, table, "horizon")?;
        merge_u64(&mut self.seed, table, "seed")?;
        merge_usize(&mut self.max_iters, table, "max-iters")?;
        merge_usize(&mut self.subsample_rows, table, "subsample-rows")?;
        merge_usize(&mut self.subsample_cols, table, "subsample-cols")?;
        merge_usize(&mut self.cluster_max, table, "cluster-max")?;
        merge_usize(&mut self.cluster_rank, table, "cluster-rank")?;
        merge_string(&mut self.regressor, table, "regressor")?;
        merge_usize(&mut self.regressor_window, table, "regressor-window")?;
        merge_f64(&mut self.ridge, table, "ridge")?;
        merge_f64(&mut self.smoothing, table, "smoothing")?;
        Ok(())
    }
}

impl PipelineSettings {
    fn smm_config(&self) -> SmmConfig<f64> {
        let mut cfg = SmmConfig::new(self.program, self.solver);
        cfg.geometries = self
            .windows
            .iter()
            .map(|&window| GeometryCandidate {
                period: self.period,
                window,
                stride: self.stride,
            })
            .collect();
        cfg.ranks = self.ranks.clone();
        cfg.lambdas = self.lambdas.clone();
        cfg.solver_cfg = SolverConfig::new(self.ranks[0])
            .with_seed(self.seed)
            .with_max_iters(self.max_iters);
        cfg.solver_cfg.subsample_rows = self.subsample_rows;
        cfg.solver_cfg.subsample_cols = self.subsample_cols;
        cfg
    }

    fn lcf_config(&self) -> LcfConfig<f64> {
        let rank_global = self.ranks[0];
        let mut cfg = LcfConfig::new(rank_global, self.cluster_rank, self.regressor);
        cfg.max_cluster_size = Some(self.cluster_max.unwrap_or(rank_global));
        cfg.solver_cfg = SolverConfig::new(rank_global)
            .with_seed(self.seed)
            .with_max_iters(self.max_iters);
        cfg
    }
}

fn cmd_forecast(args: ForecastArgs) -> anyhow::Result<()> {
    let settings = args.pipeline.resolve()?;
    let started = Instant::now();
    let mut report = Report::new(&format!("{}-{}", settings.method, settings.program.name()));
    report.set_u64("horizon", settings.horizon as u64);
    report.set_u64("seed", settings.seed);

    let forecast = match settings.method.as_str() {
        "smm" => {
            let cfg = settings.smm_config();
            let out = cross_validate(&settings.dataset.series, settings.horizon, &cfg)?;
            fill_smm_report(&mut report, &out);
            out.forecast
        }
        "lcf" => {
            let cfg = settings.lcf_config();
            let out = lcf_forecast(&settings.dataset.series, settings.horizon, &cfg)?;
            fill_lcf_report(&mut report, &out);
            out.forecast
        }
        other => bail!("unknown method {other:?}; expected smm or lcf"),
    };
    report.set_f64("cpu_seconds", started.elapsed().as_secs_f64());

    save_forecast(&args.output, &forecast, &settings.dataset)?;
    let report_path = args
        .report
        .unwrap_or_else(|| args.output.with_extension("report.json"));
    report.write(&report_path)?;
    println!(
        "forecast {}x{} written to {}; report at {}",
        forecast.nrows(),
        forecast.ncols(),
        args.output.display(),
        report_path.display()
    );
    Ok(())
}

fn fill_smm_report(report: &mut Report, out: &nmfcast_core::smm::ForecastReport<f64>) {
    if let Some(v) = out.rrmse {
        report.set_f64("rrmse", v);
    }
    if let Some(v) = out.rmpe {
        report.set_f64("rmpe", v);
    }
    report.set_u64("rank", out.chosen.rank as u64);
    report.set_u64("window", out.chosen.window as u64);
    report.set_f64("lambda", out.chosen.lambda);
    report.set_u64("period", out.chosen.period as u64);
    report.set_u64("stride", out.chosen.stride as u64);
    report.set_u64("iterations", out.iterations as u64);
    report.set_str("stop_reason", out.stop_reason.name());
    report.set_f64("final_objective", out.final_objective);
    report.set_f64("kkt_residual", out.kkt_residual);
    report.set_u64("clamped_cells", out.clamped_cells as u64);
    for (cand, score) in &out.cv_scores {
        report.set_f64(
            &format!(
                "cv_score.k{}_w{}_l{}_p{}_s{}",
                cand.rank, cand.window, cand.lambda, cand.period, cand.stride
            ),
            *score,
        );
    }
}

fn fill_lcf_report(report: &mut Report, out: &nmfcast_core::lcf::LcfReport<f64>) {
    report.set_u64("rank", out.rank_global as u64);
    report.set_u64("cluster_rank", out.rank_cluster as u64);
    report.set_u64("cluster_max", out.max_cluster_size as u64);
    report.set_u64("clusters", out.partition.clusters.len() as u64);
    report.set_u64("clamped_cells", out.clamped_cells as u64);
    report.set_u64("reduced_rank_clusters", out.reduced_rank_clusters as u64);
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let settings = args.pipeline.resolve()?;
    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let horizon = settings.horizon;
    let series = &settings.dataset.series;
    let t = series.len();
    anyhow::ensure!(
        t > horizon,
        "dataset too short to hold out {horizon} timestamps"
    );

    // The last F observed timestamps are the benchmark truth.
    let observed = series.truncated(t - horizon)?;
    let truth = series.view().slice(s![.., t - horizon..]).to_owned();
    let score =
        |report: &mut Report, forecast: &ndarray::Array2<f64>| -> anyhow::Result<()> {
            report.set_f64("rrmse", rrmse(forecast.view(), truth.view())?);
            report.set_f64("rmpe", rmpe(forecast.view(), truth.view())?);
            Ok(())
        };

    let mut report_paths = Vec::new();

    // SMM on both masked programs.
    for program in [Program::MNmf, Program::MAmf] {
        let name = format!("smm-{}", program.name());
        let mut report = Report::new(&name);
        let started = Instant::now();
        let mut cfg = settings.smm_config();
        cfg.program = program;
        cfg.solver = match program {
            Program::MNmf => SolverKind::Hals,
            Program::MAmf => SolverKind::Palm,
        };
        let out = cross_validate(&observed, horizon, &cfg)?;
        report.set_f64("cpu_seconds", started.elapsed().as_secs_f64());
        score(&mut report, &out.forecast)?;
        report.set_u64("rank", out.chosen.rank as u64);
        report.set_u64("window", out.chosen.window as u64);
        let path = args.output.join(format!("{name}.json"));
        report.write(&path)?;
        report_paths.push(path);
    }

    // LCF with the configured regressor.
    {
        let mut report = Report::new("lcf");
        let started = Instant::now();
        let cfg = settings.lcf_config();
        let out = lcf_forecast(&observed, horizon, &cfg)?;
        report.set_f64("cpu_seconds", started.elapsed().as_secs_f64());
        score(&mut report, &out.forecast)?;
        report.set_str("regressor", settings.regressor.name());
        report.set_u64("clusters", out.partition.clusters.len() as u64);
        let path = args.output.join("lcf.json");
        report.write(&path)?;
        report_paths.push(path);
    }

    // Exponential-smoothing baseline.
    {
        let mut report = Report::new("exs");
        let started = Instant::now();
        let forecast = baseline_exs(&observed, horizon, settings.smoothing)?;
        report.set_f64("cpu_seconds", started.elapsed().as_secs_f64());
        score(&mut report, &forecast)?;
        let path = args.output.join("exs.json");
        report.write(&path)?;
        report_paths.push(path);
    }

    // Random-forest regression is not part of this build; the row is kept
    // explicit rather than silently dropped.
    {
        let mut report = Report::new("rfr");
        report.set_str("rrmse", "not built");
        report.set_str("rmpe", "not built");
        let path = args.output.join("rfr.json");
        report.write(&path)?;
        report_paths.push(path);
    }

    // Regenerate the table purely from the report files.
    let reports: Vec<Report> = report_paths
        .iter()
        .map(Report::read)
        .collect::<anyhow::Result<_>>()?;
    let table = render_table(&reports);
    std::fs::write(args.output.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> anyhow::Result<()> {
    let dataset = load_dataset(&args.input)?;
    let problem =
        nmfcast_core::MaskedProblem::unmasked(dataset.series.view().to_owned())?;
    let cfg = SolverConfig::new(args.rank)
        .with_seed(args.seed)
        .with_max_iters(args.max_iters);
    let f = solve_palm(&problem, &ConstraintProfile::snnmf(), &cfg)?;
    let dendro = nmfcast_core::lcf::build_dendrogram(f.w.view())?;
    let d = args.cluster_max.unwrap_or(args.rank);
    let partition = nmfcast_core::lcf::exploring_dendrogram(&dendro, d)?;

    let mut out = String::from("series,cluster\n");
    for (label, cluster) in partition.clusters.iter().enumerate() {
        for &i in cluster {
            let id = dataset
                .series_ids
                .as_ref()
                .map(|ids| ids[i].clone())
                .unwrap_or_else(|| i.to_string());
            out.push_str(&format!("{id},{label}\n"));
        }
    }
    std::fs::write(&args.output, out)?;
    println!(
        "{} clusters over {} series written to {}",
        partition.clusters.len(),
        dataset.n_series(),
        args.output.display()
    );
    Ok(())
}

fn load_config(path: &Path) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing config {}", path.display()))
}

fn merge_string(slot: &mut Option<String>, table: &toml::Table, key: &str) -> anyhow::Result<()> {
    if slot.is_none() {
        if let Some(v) = table.get(key) {
            *slot = Some(
                v.as_str()
                    .ok_or_else(|| anyhow::anyhow!("config key {key} must be a string"))?
                    .to_string(),
            );
        }
    }
    Ok(())
}

fn merge_path(slot: &mut Option<PathBuf>, table: &toml::Table, key: &str) -> anyhow::Result<()> {
    let mut s = slot.as_ref().map(|p| p.display().to_string());
    merge_string(&mut s, table, key)?;
    *slot = s.map(PathBuf::from);
    Ok(())
}

fn merge_usize(slot: &mut Option<usize>, table: &toml::Table, key: &str) -> anyhow::Result<()> {
    if slot.is_none() {
        if let Some(v) = table.get(key) {
            let n = v
                .as_integer()
                .ok_or_else(|| anyhow::anyhow!("config key {key} must be an integer"))?;
            *slot = Some(usize::try_from(n).context(key.to_string())?);
        }
    }
    Ok(())
}

fn merge_u64(slot: &mut Option<u64>, table: &toml::Table, key: &str) -> anyhow::Result<()> {
    if slot.is_none() {
        if let Some(v) = table.get(key) {
            let n = v
                .as_integer()
                .ok_or_else(|| anyhow::anyhow!("config key {key} must be an integer"))?;
            *slot = Some(u64::try_from(n).context(key.to_string())?);
        }
    }
    Ok(())
}

fn merge_f64(slot: &mut Option<f64>, table: &toml::Table, key: &str) -> anyhow::Result<()> {
    if slot.is_none() {
        if let Some(v) = table.get(key) {
            *slot = Some(
                v.as_float()
                    .or_else(|| v.as_integer().map(|n| n as f64))
                    .ok_or_else(|| anyhow::anyhow!("config key {key} must be a number"))?,
            );
        }
    }
    Ok(())
}

fn merge_usize_list(
    slot: &mut Option<Vec<usize>>,
    table: &toml::Table,
    key: &str,
) -> anyhow::Result<()> {
    if slot.is_none() {
        if let Some(v) = table.get(key) {
            let arr = v
                .as_array()
                .ok_or_else(|| anyhow::anyhow!("config key {key} must be an array"))?;
            let mut out = Vec::with_capacity(arr.len());
            for item in arr {
                let n = item
                    .as_integer()
                    .ok_or_else(|| anyhow::anyhow!("config key {key} must hold integers"))?;
                out.push(usize::try_from(n).context(key.to_string())?);
            }
            *slot = Some(out);
        }
    }
    Ok(())
}

fn merge_f64_list(
    slot: &mut Option<Vec<f64>>,
    table: &toml::Table,
    key: &str,
) -> anyhow::Result<()> {
    if slot.is_none() {
        if let Some(v) = table.get(key) {
            let arr = v
                .as_array()
                .ok_or_else(|| anyhow::anyhow!("config key {key} must be an array"))?;
            let mut out = Vec::with_capacity(arr.len());
            for item in arr {
                let x = item
                    .as_float()
                    .or_else(|| item.as_integer().map(|n| n as f64))
                    .ok_or_else(|| anyhow::anyhow!("config key {key} must hold numbers"))?;
                out.push(x);
            }
            *slot = Some(out);
        }
    }
    Ok(())
}
