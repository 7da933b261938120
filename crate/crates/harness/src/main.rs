//! Command-line front end for the laboratory.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsflab::features::{
    baseline_features, features_to_json_file, inverse_laplacian_features, optimal_features,
    BaselineKind,
};
use rsflab::kernel::build_kernel;
use rsflab::rewards::RewardModel;
use rsflab_harness::checks::{run_suite, CheckId, SuiteConfig};
use rsflab_harness::env::{generate_environment, EnvironmentSpec, GeneratorKind, PolicyKind};
use rsflab_harness::report::{emit_report, json_report_to_csv, ReportFormat, ReportRow};
use rsflab_harness::sweep::sweep_features;

#[derive(Parser)]
#[command(
    name = "rsflab",
    about = "Regularized successor features at desk scale: environments, verification checks, and feature sweeps",
    version
)]
struct Cli {
    /// Master seed for all generated randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output path (directory for `gen`, file otherwise).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format: csv or json.
    #[arg(long, global = true, default_value = "csv")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment and write its spec, MDP, and policy files.
    Gen(GenArgs),
    /// Extract a feature family from an environment to JSON.
    Features(FeaturesArgs),
    /// Run verification checks and emit a report. Exit code 0 iff all pass.
    Verify(VerifyArgs),
    /// Compare feature families by exact and Monte-Carlo expected gains.
    Sweep(SweepArgs),
    /// Re-render a stored JSON report as CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// gridworld | directed_cycle | random_deterministic | random_stochastic | reversible_chain
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 0.0)]
    slip: f64,
    /// State count for cycle/random/reversible generators.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Action count for random generators.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// uniform | softmax
    #[arg(long, default_value = "uniform")]
    policy: String,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Path to an environment spec JSON (as written by `gen`).
    #[arg(long)]
    env: PathBuf,
    /// optimal | laplacian_eigs | p_symmetrized | random | inv_laplacian
    #[arg(long)]
    kind: String,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated check ids (V1..V9) or "all".
    #[arg(long, default_value = "all")]
    checks: String,
    /// "default" or a path to a suite config JSON.
    #[arg(long, default_value = "default")]
    suite: String,
}

#[derive(Args)]
struct SweepArgs {
    /// Path to an environment spec JSON.
    #[arg(long)]
    env: PathBuf,
    /// gaussian | goal | scattered
    #[arg(long, default_value = "gaussian")]
    model: String,
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Comma-separated feature dimensions (0 allowed).
    #[arg(long, default_value = "0,1,2,4,8")]
    d: String,
    #[arg(long = "T", default_value_t = 256.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Monte-Carlo sample count per cell.
    #[arg(long, default_value_t = 2000)]
    mc: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Stored JSON report.
    #[arg(long)]
    input: PathBuf,
}

fn parse_model(name: &str, kappa: f64, mu: f64, sigma2: f64) -> Result<RewardModel> {
    match name.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(RewardModel::Gaussian),
        "goal" => Ok(RewardModel::GoalReaching),
        "scattered" => Ok(RewardModel::scattered(kappa, mu, sigma2)),
        other => bail!("unknown reward model {other:?}"),
    }
}

fn parse_dims(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| part.trim().parse::<usize>().context("parsing --d list"))
        .collect()
}

fn run_gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let generator = match args.kind.as_str() {
        "gridworld" => GeneratorKind::Gridworld {
            width: args.width,
            height: args.height,
            slip: args.slip,
        },
        "directed_cycle" => GeneratorKind::DirectedCycle { n: args.n },
        "random_deterministic" => GeneratorKind::RandomDeterministic {
            n: args.n,
            m: args.m,
        },
        "random_stochastic" => GeneratorKind::RandomStochastic {
            n: args.n,
            m: args.m,
        },
        "reversible_chain" => GeneratorKind::ReversibleChain { n: args.n },
        other => bail!("unknown generator kind {other:?}"),
    };
    let policy = match args.policy.as_str() {
        "uniform" => PolicyKind::Uniform,
        "softmax" => PolicyKind::SoftmaxRandomLogits { floor: 1e-3 },
        other => bail!("unknown policy kind {other:?}"),
    };
    let spec = EnvironmentSpec {
        generator,
        policy,
        gamma: args.gamma,
        seed: cli.seed,
    };
    let env = generate_environment(&spec)?;

    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    env.mdp.to_json_file(dir.join("mdp.json"))?;
    env.pi0.to_json_file(dir.join("policy.json"))?;
    println!(
        "wrote {} ({} states x {} actions) to {}",
        env.label(),
        env.mdp.num_states(),
        env.mdp.num_actions(),
        dir.display()
    );
    Ok(())
}

fn run_features(cli: &Cli, args: &FeaturesArgs) -> Result<()> {
    let spec = EnvironmentSpec::from_json_file(&args.env)?;
    let env = generate_environment(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let features = match args.kind.as_str() {
        "optimal" => {
            let kernel = build_kernel(&env.mdp, &env.pi0, &env.weights, args.gamma)?;
            optimal_features(&kernel, args.d)?
        }
        "laplacian_eigs" => baseline_features(
            BaselineKind::LaplacianEigs,
            &env.mdp,
            &env.pi0,
            &env.weights,
            args.d,
            &mut rng,
        )?,
        "p_symmetrized" => baseline_features(
            BaselineKind::PSymmetrized,
            &env.mdp,
            &env.pi0,
            &env.weights,
            args.d,
            &mut rng,
        )?,
        "random" => baseline_features(
            BaselineKind::Random,
            &env.mdp,
            &env.pi0,
            &env.weights,
            args.d,
            &mut rng,
        )?,
        "inv_laplacian" => inverse_laplacian_features(&env.mdp, &env.pi0, &env.weights, args.d)?,
        other => bail!("unknown feature kind {other:?}"),
    };
    let path = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("features.json"));
    features_to_json_file(&features, &path)?;
    println!(
        "wrote {} features (d = {}) to {}",
        args.kind,
        args.d,
        path.display()
    );
    Ok(())
}

fn emit(cli: &Cli, rows: &[ReportRow], default_name: &str) -> Result<PathBuf> {
    let format: ReportFormat = cli.format.parse()?;
    let path = cli.out.clone().unwrap_or_else(|| {
        PathBuf::from(match format {
            ReportFormat::Csv => format!("{default_name}.csv"),
            ReportFormat::Json => format!("{default_name}.json"),
        })
    });
    emit_report(rows, format, &path)?;
    Ok(path)
}

fn run_verify(cli: &Cli, args: &VerifyArgs) -> Result<i32> {
    let checks: Vec<CheckId> = if args.checks.eq_ignore_ascii_case("all") {
        CheckId::ALL.to_vec()
    } else {
        args.checks
            .split(',')
            .map(|part| part.trim().parse())
            .collect::<Result<_>>()?
    };
    let config: SuiteConfig = if args.suite == "default" {
        SuiteConfig::default()
    } else {
        let text = std::fs::read_to_string(&args.suite)
            .with_context(|| format!("reading suite config {}", args.suite))?;
        serde_json::from_str(&text)?
    };

    let rows = run_suite(&checks, &config, cli.seed)?;
    let mut failures = 0usize;
    for row in &rows {
        let status = if row.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {} {} {} d={} gamma={}",
            row.check_id,
            row.env,
            row.model,
            row.d.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            row.gamma,
        );
        if !row.pass {
            failures += 1;
        }
    }
    let path = emit(cli, &rows, "report")?;
    println!(
        "{} rows, {} failures; report written to {}",
        rows.len(),
        failures,
        path.display()
    );
    Ok(if failures == 0 { 0 } else { 1 })
}

fn run_sweep(cli: &Cli, args: &SweepArgs) -> Result<i32> {
    let spec = EnvironmentSpec::from_json_file(&args.env)?;
    let env = generate_environment(&spec)?;
    let model = parse_model(&args.model, args.kappa, args.mu, args.sigma2)?;
    let dims = parse_dims(&args.d)?;
    let rows = sweep_features(
        &env,
        args.gamma,
        args.temperature,
        &dims,
        &model,
        args.mc,
        cli.seed,
    )?;
    let mut failures = 0usize;
    for row in &rows {
        let status = if row.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {} d={} exact={} mc={}±{}",
            row.model,
            row.d.map(|d| d.to_string()).unwrap_or_default(),
            row.exact
                .map(rsflab_harness::report::fmt12)
                .unwrap_or_default(),
            row.mc_mean
                .map(rsflab_harness::report::fmt12)
                .unwrap_or_default(),
            row.mc_se
                .map(rsflab_harness::report::fmt12)
                .unwrap_or_default(),
        );
        if !row.pass {
            failures += 1;
        }
    }
    let path = emit(cli, &rows, "sweep")?;
    println!("sweep written to {}", path.display());
    Ok(if failures == 0 { 0 } else { 1 })
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => run_gen(&cli, args).map(|()| 0),
        Command::Features(args) => run_features(&cli, args).map(|()| 0),
        Command::Verify(args) => run_verify(&cli, args),
        Command::Sweep(args) => run_sweep(&cli, args),
        Command::Report(args) => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("report.csv"));
            json_report_to_csv(&args.input, &out).map(|n| {
                println!("re-rendered {n} rows to {}", out.display());
                0
            })
        }
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            // precondition violations (for example a deterministic-only
            // check pointed at a stochastic environment) land here as
            // configuration errors, distinct from check failures
            eprintln!("configuration error: {err:#}");
            std::process::exit(2);
        }
    }
}
