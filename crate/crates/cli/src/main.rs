//! `sfde`: command-line front end for the truncated EM library.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sfde_core::harness::moments_to_csv;
use sfde_core::{
    check_khasminskii_inequality, moment_diagnostic, run_convergence, simulate, AntipodalPairSampler,
    AssumptionConstants, BrownianGrid, ErrorNorm, ExperimentConfig, SegmentPairSampler, SfdeError,
    TruncationPolicy, UniformPairSampler,
};

#[derive(Debug, Parser)]
#[command(name = "sfde", version, about = "Truncated Euler-Maruyama for stochastic functional differential equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coupled strong-error experiment and log-log order fit.
    Run(RunArgs),
    /// Simulate one path and write its nodes as CSV.
    Simulate(SimulateArgs),
    /// Sample the one-sided monotonicity condition for a model.
    VerifyAssumptions(VerifyArgs),
    /// Empirical sup_k E|Y(kΔ)|^p across a step-size ladder.
    Moments(MomentArgs),
    /// Write one Brownian sample as a binary dump.
    DumpNoise(DumpArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Built-in model: cubic-vol or linear-delay.
    #[arg(long, default_value = "cubic-vol")]
    model: String,
    #[arg(long, allow_hyphen_values = true)]
    a0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma1: Option<f64>,
    /// Constant initial value ξ.
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
}

impl ModelArgs {
    fn params(&self) -> BTreeMap<String, f64> {
        [
            ("a0", self.a0),
            ("a1", self.a1),
            ("a2", self.a2),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("sigma0", self.sigma0),
            ("sigma1", self.sigma1),
            ("xi", self.xi),
            ("tau", self.tau),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
    }
}

#[derive(Debug, Args)]
struct LadderArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Horizon T.
    #[arg(long = "T", default_value_t = 10.0)]
    horizon: f64,
    /// Coarse step exponents e (Δ = 2^-e), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "7,8,9,10,11")]
    step_exps: Vec<u32>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    varrho: f64,
    #[arg(long, default_value_t = 1.0)]
    h_scale: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Run classical EM without truncation.
    #[arg(long)]
    no_truncate: bool,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl LadderArgs {
    fn config(&self, ref_exp: u32, error_norm: ErrorNorm) -> ExperimentConfig {
        ExperimentConfig {
            model_id: self.model.model.clone(),
            model_params: self.model.params(),
            horizon: self.horizon,
            ref_exp,
            step_exps: self.step_exps.clone(),
            samples: self.samples,
            base_seed: self.seed,
            varrho: self.varrho,
            h_scale: self.h_scale,
            error_norm,
            truncate: !self.no_truncate,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    ladder: LadderArgs,
    /// Reference step exponent (Δ_ref = 2^-e).
    #[arg(long, default_value_t = 12)]
    ref_exp: u32,
    /// segment-sup or terminal-point.
    #[arg(long, default_value = "segment-sup")]
    error_norm: String,
}

#[derive(Debug, Args)]
struct MomentArgs {
    #[command(flatten)]
    ladder: LadderArgs,
    /// Moment exponent p.
    #[arg(long, default_value_t = 4.0)]
    p: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Step exponent e (Δ = 2^-e).
    #[arg(long, default_value_t = 7)]
    delta_exp: u32,
    #[arg(long = "T", default_value_t = 10.0)]
    horizon: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    sample_index: u64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    varrho: f64,
    #[arg(long, default_value_t = 1.0)]
    h_scale: f64,
    #[arg(long)]
    no_truncate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 27.0)]
    q: f64,
    #[arg(long, default_value_t = 20.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 53.0)]
    alpha1: f64,
    #[arg(long, default_value_t = 52.0)]
    alpha2: f64,
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// Number of sampled segment pairs.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Node values are drawn from [-bound, bound].
    #[arg(long, default_value_t = 5.0)]
    bound: f64,
    /// Node intervals per sampled segment.
    #[arg(long, default_value_t = 8)]
    nodes: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Draw antipodal pairs ψ̄(0) = -ψ(0) instead of uniform ones.
    #[arg(long)]
    adversarial: bool,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    sample_index: u64,
    #[arg(long)]
    n_fine: usize,
    /// Fine step exponent e (Δ = 2^-e).
    #[arg(long, default_value_t = 12)]
    delta_exp: u32,
    #[arg(long, default_value_t = 1)]
    dim_noise: usize,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Sfde(SfdeError),
    Io(String),
}

impl From<SfdeError> for Failure {
    fn from(e: SfdeError) -> Self {
        Failure::Sfde(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let norm: ErrorNorm = args.error_norm.parse()?;
    let config = args.ladder.config(args.ref_exp, norm);
    let report = run_convergence(&config)?;
    emit(&args.ladder.out, &report.to_csv())?;
    eprintln!(
        "rms slope {:.4} (mean-square order {:.4}), r2 {:.4}",
        report.slope,
        report.mean_square_order(),
        report.r_squared
    );
    let blow_ups: usize = report.rows.iter().map(|r| r.blow_ups).sum::<usize>() + report.reference_blow_ups;
    if blow_ups > 0 {
        eprintln!("blow-ups excluded: {blow_ups} (reference: {})", report.reference_blow_ups);
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<(), Failure> {
    let model = sfde_core::build_model(&args.model.model, &args.model.params())?;
    let policy = TruncationPolicy::new(&model, args.h_scale, args.varrho)?;
    let delta = 2f64.powi(-(args.delta_exp as i32));
    let n_steps = (args.horizon / delta).round() as usize;
    let noise = Arc::new(BrownianGrid::generate(
        args.seed,
        args.sample_index,
        n_steps.max(1),
        delta,
        model.dim_noise(),
    )?);
    let path = simulate(&model, &policy, delta, args.horizon, noise, !args.no_truncate)?;
    let n1 = path.dim();
    let mut csv = String::from("k,t");
    for i in 0..n1 {
        let _ = write!(csv, ",y_{i}");
    }
    for i in 0..n1 {
        let _ = write!(csv, ",yhat_{i}");
    }
    csv.push('\n');
    let m = path.m() as isize;
    for k in -m..=path.n_steps() as isize {
        let _ = write!(csv, "{},{}", k, k as f64 * delta);
        for v in path.y(k).iter().chain(path.y_hat(k)) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    emit(&args.out, &csv)
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let model = sfde_core::build_model(&args.model.model, &args.model.params())?;
    let constants = AssumptionConstants::new(args.q, args.alpha0, args.alpha1, args.alpha2, args.c1, args.c2)?;
    let mut sampler: Box<dyn SegmentPairSampler> = if args.adversarial {
        Box::new(AntipodalPairSampler::for_model(&model, args.nodes, args.bound, args.seed)?)
    } else {
        Box::new(UniformPairSampler::for_model(&model, args.nodes, args.bound, args.seed)?)
    };
    let report = check_khasminskii_inequality(&model, &constants, sampler.as_mut(), args.samples)?;
    println!("evaluated,violations,worst_margin");
    println!("{},{},{}", report.evaluated, report.violations, report.worst_margin);
    Ok(())
}

fn moments(args: MomentArgs) -> Result<(), Failure> {
    let config = args.ladder.config(0, ErrorNorm::SegmentSup);
    let rows = moment_diagnostic(&config, args.p)?;
    emit(&args.ladder.out, &moments_to_csv(&rows))
}

fn dump(args: DumpArgs) -> Result<(), Failure> {
    let delta = 2f64.powi(-(args.delta_exp as i32));
    let grid = BrownianGrid::generate(args.seed, args.sample_index, args.n_fine, delta, args.dim_noise)?;
    let mut bytes = Vec::new();
    grid.write_binary(&mut bytes)?;
    fs::write(&args.out, bytes)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::VerifyAssumptions(a) => verify(a),
        Command::Moments(a) => moments(a),
        Command::DumpNoise(a) => dump(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Sfde(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_hard_failure() { 3 } else { 2 })
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
