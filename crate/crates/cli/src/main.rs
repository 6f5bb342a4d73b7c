use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use mipulse::fidelity::{
    p0_from_temperature, simulate, thermal_limit_exact, thermal_limit_leading, GateTarget,
};
use mipulse::model::{Model, SystemParams, DEFAULT_ETA};
use mipulse::optimize::{
    min_time_search, solve_fixed_t, ControlProblem, OptimizationResult, Preset,
};
use mipulse::pulse::{self, make_torf, PulseProgram};
use mipulse::scan::{self, PulseSource, SweepSpec};
use mipulse::torf::{solve_torf, solve_torf2, table1, TorfSolution};

#[derive(Parser)]
#[command(name = "mipulse", version, about = "Design and simulate motion-insensitive laser pulses")]
struct Cli {
    /// Cap on parallel worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-optimal recoil-free bang-bang pulse (first order in η).
    DesignTorf(TorfArgs),
    /// Time-optimal recoil-free bang-bang pulse (second order in η).
    DesignTorf2(TorfArgs),
    /// Shortest pulse that is recoil-free and disentangled from thermal motion.
    DesignTod(OptArgs),
    /// Shortest motion-insensitive pulse robust to detuning and Rabi offsets.
    DesignRobust(OptArgs),
    /// Thermal gate fidelity of a pulse file.
    Simulate(SimulateArgs),
    /// Gate error versus frequency ratio.
    ScanRatio(ScanRatioArgs),
    /// Gate error over the (detuning, Rabi offset) plane.
    ScanMap(ScanMapArgs),
    /// Gate error versus ground-state population.
    ScanP0(ScanP0Args),
    /// Recoil-free thermal fidelity limit.
    Limit(LimitArgs),
    /// Time-optimal angles for the standard target/ratio table.
    Table1(Table1Args),
}

#[derive(Args, Serialize, Clone)]
struct Physical {
    /// Trap frequency in Hz.
    #[arg(long, default_value_t = 100e3)]
    trap_hz: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Highest retained motional level.
    #[arg(long, default_value_t = 20)]
    truncation: usize,
}

impl Physical {
    fn params(&self, rabi_hz: f64) -> SystemParams {
        SystemParams {
            omega: 2.0 * PI * self.trap_hz,
            rabi: 2.0 * PI * rabi_hz,
            eta: self.eta,
            truncation: self.truncation,
            ..SystemParams::default()
        }
    }
}

#[derive(Args, Serialize, Clone)]
#[group(required = true, multiple = false)]
struct Population {
    /// Motional ground-state probability.
    #[arg(long)]
    p0: Option<f64>,
    /// Temperature in microkelvin, converted with the trap frequency.
    #[arg(long)]
    temperature_uk: Option<f64>,
}

impl Population {
    fn resolve(&self, trap_hz: f64) -> Result<f64> {
        match (self.p0, self.temperature_uk) {
            (Some(p), None) => Ok(p),
            (None, Some(t)) => Ok(p0_from_temperature(t * 1e-6, 2.0 * PI * trap_hz)?),
            _ => bail!("give exactly one of --p0 and --temperature-uk"),
        }
    }
}

#[derive(Args, Serialize, Clone)]
struct Target {
    /// Target rotation angle in degrees.
    #[arg(long, default_value_t = 90.0)]
    theta: f64,
    /// Rotation axis angle in the xy-plane, degrees.
    #[arg(long, default_value_t = 0.0)]
    axis: f64,
}

impl Target {
    fn gate(&self) -> GateTarget {
        GateTarget {
            theta_tar: self.theta.to_radians(),
            axis_angle: self.axis.to_radians(),
        }
    }
}

#[derive(Args, Serialize, Clone)]
struct TorfArgs {
    /// Frequency ratio ω/Ω.
    #[arg(long)]
    lambda: f64,
    /// Target rotation angle in degrees.
    #[arg(long)]
    theta: f64,
    #[command(flatten)]
    physical: Physical,
    /// Output pulse file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct OptArgs {
    /// Frequency ratio ω/Ω; `inf` drops the recoil constraints.
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    target: Target,
    /// Rabi frequency in Hz. Defaults to trap/λ, or 20 kHz when λ is infinite.
    #[arg(long)]
    rabi_hz: Option<f64>,
    #[command(flatten)]
    physical: Physical,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random restarts per duration, besides the bang-bang start.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Segments per π of pulse area.
    #[arg(long, default_value_t = 40.0)]
    density: f64,
    /// Solve at this duration (μs) instead of searching for the shortest.
    #[arg(long)]
    duration_us: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelArg {
    Full,
    LambDicke,
    SecondOrder,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Full => Model::Full,
            ModelArg::LambDicke => Model::LambDicke,
            ModelArg::SecondOrder => Model::SecondOrder,
        }
    }
}

#[derive(Args, Serialize, Clone)]
struct SimulateArgs {
    #[arg(long)]
    pulse: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Full)]
    model: ModelArg,
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    population: Population,
    #[command(flatten)]
    physical: Physical,
    /// Detuning offset in units of the pulse Rabi frequency.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    ddelta: f64,
    /// Rabi-frequency offset in units of the pulse Rabi frequency.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    domega: f64,
    /// Write the full report as JSON.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SourceArg {
    Constant,
    Corrected,
    Torf,
    Torf2,
    File,
}

#[derive(Args, Serialize, Clone)]
struct ScanRatioArgs {
    #[arg(long, value_enum)]
    source: SourceArg,
    /// Pulse file for `--source file`.
    #[arg(long)]
    pulse: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::Full)]
    model: ModelArg,
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    population: Population,
    #[command(flatten)]
    physical: Physical,
    /// Drive Rabi frequency in Hz; the trap frequency follows each ratio.
    #[arg(long, default_value_t = 20e3)]
    rabi_hz: f64,
    #[arg(long, default_value_t = 2.0)]
    from: f64,
    #[arg(long, default_value_t = 20.0)]
    to: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct ScanMapArgs {
    #[arg(long)]
    pulse: PathBuf,
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    population: Population,
    #[command(flatten)]
    physical: Physical,
    /// Half-width of both axes in units of Ω.
    #[arg(long, default_value_t = 0.25)]
    span: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 81)]
    points: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct ScanP0Args {
    /// Pulse files (repeat the flag for several).
    #[arg(long, required = true)]
    pulse: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::SecondOrder)]
    model: ModelArg,
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    physical: Physical,
    /// Comma-separated ground-state probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.98,0.99,1")]
    p0_grid: Vec<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct LimitArgs {
    #[command(flatten)]
    population: Population,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Target rotation angle in degrees.
    #[arg(long, default_value_t = 180.0)]
    theta: f64,
    /// Trap frequency in Hz, used for temperature input.
    #[arg(long, default_value_t = 100e3)]
    trap_hz: f64,
}

#[derive(Args, Serialize, Clone)]
struct Table1Args {
    /// Also write the table as CSV.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn config(command: &str, args: &impl Serialize) -> Value {
    json!({
        "command": command,
        "args": args,
        "tool_version": env!("CARGO_PKG_VERSION"),
    })
}

fn read_pulse(path: &Path) -> Result<PulseProgram> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(pulse::parse(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn write_pulse(path: &Path, p: &PulseProgram, metadata: Value) -> Result<()> {
    std::fs::write(path, pulse::serialize_with_metadata(p, Some(metadata)))
        .with_context(|| format!("writing {}", path.display()))
}

fn write_table(path: &Path, result: &mut scan::SweepResult, cfg: Value) -> Result<()> {
    result.metadata.config = Some(cfg);
    result.write(path).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "wrote {} rows ({} failed) to {}",
        result.rows.len(),
        result.failures(),
        path.display()
    );
    Ok(())
}

fn design_torf(args: &TorfArgs, second: bool) -> Result<()> {
    let theta = args.theta.to_radians();
    let sol: TorfSolution = if second {
        solve_torf2(args.lambda, theta, args.physical.eta)?
    } else {
        solve_torf(args.lambda, theta)?
    };
    let rabi = 2.0 * PI * args.physical.trap_hz / args.lambda;
    let p = make_torf(&sol.angles, rabi)?;
    let name = if second { "design-torf2" } else { "design-torf" };
    let angles_pi: Vec<f64> = sol.angles.values().iter().map(|a| a / PI).collect();
    let mut meta = config(name, args);
    meta["solution"] = json!({
        "angles_over_pi": angles_pi,
        "omega_t_over_pi": sol.omega_t / PI,
        "residual": sol.residual,
    });
    write_pulse(&args.out, &p, meta)?;
    println!(
        "angles/π = {:?}\nΩT = {:.5}π  T = {:.4} μs  residual = {:.2e}",
        angles_pi,
        sol.omega_t / PI,
        p.duration() * 1e6,
        sol.residual
    );
    Ok(())
}

fn report_optimization(r: &OptimizationResult) -> String {
    let norms: Vec<String> = r
        .constraint_norms
        .iter()
        .map(|(k, v)| format!("{k}={v:.2e}"))
        .collect();
    format!(
        "T = {:.4} μs, target defect {:.2e}, {}",
        r.duration * 1e6,
        r.target_defect,
        norms.join(" ")
    )
}

fn design_optimized(args: &OptArgs, preset: Preset, name: &str) -> Result<()> {
    let rabi_hz = match args.rabi_hz {
        Some(r) => r,
        None if args.lambda.is_finite() => args.physical.trap_hz / args.lambda,
        None => 20e3,
    };
    let problem = ControlProblem::preset(preset, args.target.gate(), args.lambda)
        .with_rabi(2.0 * PI * rabi_hz)
        .with_eta(args.physical.eta);
    let result = match args.duration_us {
        Some(us) => {
            let t = us * 1e-6;
            let n = ((args.density * problem.rabi * t / PI).ceil() as usize).max(2);
            solve_fixed_t(&problem, t, n, args.restarts, args.seed)?
        }
        None => min_time_search(&problem, args.density, args.restarts, args.seed)?,
    };
    if !result.converged {
        bail!("no converged design: {}", report_optimization(&result));
    }
    let mut meta = config(name, args);
    meta["result"] = serde_json::to_value(&result)?;
    write_pulse(&args.out, result.pulse(), meta)?;
    println!("{}", report_optimization(&result));
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let p = read_pulse(&args.pulse)?;
    let p0 = args.population.resolve(args.physical.trap_hz)?;
    let mut params = args.physical.params(p.rabi_hz());
    params.delta_detuning = args.ddelta * p.rabi();
    params.delta_rabi = args.domega * p.rabi();
    let report = simulate(&params, &p, args.model.into(), &args.target.gate(), p0)?;
    println!("p0 = {p0:.6}  1 − F = {:.6e}", report.infidelity());
    if let Some(out) = &args.out {
        let doc = json!({ "config": config("simulate", args), "p0": p0, "infidelity": report.infidelity(), "report": report });
        std::fs::write(out, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(())
}

fn run_scan_ratio(args: &ScanRatioArgs) -> Result<()> {
    if !(args.step > 0.0) || args.to < args.from {
        bail!("need --step > 0 and --to ≥ --from");
    }
    let theta = args.target.theta.to_radians();
    let source = match args.source {
        SourceArg::Constant => PulseSource::Constant { theta, speed_correction: false },
        SourceArg::Corrected => PulseSource::Constant { theta, speed_correction: true },
        SourceArg::Torf => PulseSource::Torf { theta },
        SourceArg::Torf2 => PulseSource::Torf2 { theta },
        SourceArg::File => {
            let path = args.pulse.as_ref().context("--source file needs --pulse")?;
            PulseSource::Fixed { pulse: read_pulse(path)? }
        }
    };
    let n = ((args.to - args.from) / args.step + 1e-9).floor() as usize + 1;
    let spec = SweepSpec {
        source,
        model: args.model.into(),
        grid: scan::linspace(args.from, args.from + (n - 1) as f64 * args.step, n),
        p0: args.population.resolve(args.physical.trap_hz)?,
        target: args.target.gate(),
        params: args.physical.params(args.rabi_hz),
    };
    let mut result = scan::sweep_ratio(&spec)?;
    write_table(&args.out, &mut result, config("scan-ratio", args))
}

fn run_scan_map(args: &ScanMapArgs) -> Result<()> {
    let p = read_pulse(&args.pulse)?;
    let axis = scan::linspace(-args.span, args.span, args.points);
    let p0 = args.population.resolve(args.physical.trap_hz)?;
    let params = args.physical.params(p.rabi_hz());
    let mut result = scan::robustness_map(&p, &params, &axis, &axis, p0, &args.target.gate())?;
    write_table(&args.out, &mut result, config("scan-map", args))
}

fn run_scan_p0(args: &ScanP0Args) -> Result<()> {
    let pulses = args.pulse.iter().map(|p| read_pulse(p)).collect::<Result<Vec<_>>>()?;
    let params = args.physical.params(pulses[0].rabi_hz());
    let mut result = scan::error_vs_p0(&pulses, &args.p0_grid, &args.target.gate(), &params, args.model.into())?;
    write_table(&args.out, &mut result, config("scan-p0", args))
}

fn run_limit(args: &LimitArgs) -> Result<()> {
    let p0 = args.population.resolve(args.trap_hz)?;
    let theta = args.theta.to_radians();
    let exact = thermal_limit_exact(p0, args.eta, theta);
    let leading = thermal_limit_leading(p0, args.eta, theta);
    let rel = if exact > 0.0 { (leading - exact).abs() / exact } else { 0.0 };
    println!("p0            {p0:.6}");
    println!("exact         {exact:e}");
    println!("leading       {leading:e}");
    println!("relative gap  {rel:.4}");
    Ok(())
}

fn run_table1(args: &Table1Args) -> Result<()> {
    let rows = table1()?;
    println!("theta_deg lambda   theta1_deg  theta2_deg  theta3_deg  omega_t/pi  residual");
    for r in &rows {
        println!(
            "{:>9} {:>6} {:>11.4} {:>11.4} {:>11.4} {:>11.5} {:>9.1e}",
            r.theta_tar_deg, r.lambda, r.angles_deg[0], r.angles_deg[1], r.angles_deg[2], r.omega_t / PI, r.residual
        );
    }
    if let Some(out) = &args.out {
        let mut text = String::from("theta_tar_deg,lambda,theta1_deg,theta2_deg,theta3_deg,omega_t_over_pi,residual\n");
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.theta_tar_deg, r.lambda, r.angles_deg[0], r.angles_deg[1], r.angles_deg[2], r.omega_t / PI, r.residual
            ));
        }
        std::fs::write(out, text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::DesignTorf(a) => design_torf(a, false),
        Command::DesignTorf2(a) => design_torf(a, true),
        Command::DesignTod(a) => design_optimized(a, Preset::Tod, "design-tod"),
        Command::DesignRobust(a) => design_optimized(a, Preset::RobustMi, "design-robust"),
        Command::Simulate(a) => run_simulate(a),
        Command::ScanRatio(a) => run_scan_ratio(a),
        Command::ScanMap(a) => run_scan_map(a),
        Command::ScanP0(a) => run_scan_p0(a),
        Command::Limit(a) => run_limit(a),
        Command::Table1(a) => run_table1(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
