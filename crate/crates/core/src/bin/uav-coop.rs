use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uav_coop::baselines::BaselineId;
use uav_coop::ccp::{CcpSettings, Tolerance};
use uav_coop::error::{Error, Result};
use uav_coop::harness::{all_converged, run_experiment, to_json, write_csv, ExperimentConfig, ResultRow, ScenarioSource, Scheme, Sweep};
use uav_coop::scenario::{generate_scenario, load_scenario, scenario_to_string, Layout, SimParams};

#[derive(Parser)]
#[command(name = "uav-coop", version, about = "Power-minimizing trajectory, cooperation and beamforming planner for UAV relays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve each block of one scenario per seed.
    Plan(RunArgs),
    /// Sweep the number of UAVs (comma-separated list in --uavs).
    SweepUavs(RunArgs),
    /// Sweep the minimum user rate (comma-separated list in --rmin).
    SweepRate(RunArgs),
    /// Run the comparison schemes (all four unless --scheme is given).
    Baseline(RunArgs),
    /// Check a scenario file, or the generated one, and optionally write it out.
    ValidateScenario(ScenarioArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    #[arg(long, value_name = "L[,L...]", value_delimiter = ',')]
    uavs: Vec<usize>,
    #[arg(long, value_name = "K")]
    users: Option<usize>,
    #[arg(long, value_name = "T")]
    slots: Option<usize>,
    #[arg(long, value_name = "B")]
    blocks: Option<usize>,
    #[arg(long, value_name = "S[,S...]", value_delimiter = ',')]
    seed: Vec<u64>,
    /// Minimum user rate in bit/s.
    #[arg(long, value_name = "BPS[,BPS...]", value_delimiter = ',')]
    rmin: Vec<f64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_name = "V")]
    beta: Option<f64>,
    /// Absolute stopping tolerance in watts (default 1e-3 of the initial objective).
    #[arg(long, value_name = "V")]
    eps: Option<f64>,
    #[arg(long, value_name = "N")]
    max_iters: Option<usize>,
    /// proposed, baseline1..baseline4
    #[arg(long, value_name = "NAME[,NAME...]", value_delimiter = ',')]
    scheme: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Append dBm versions of the power columns.
    #[arg(long)]
    dbm: bool,
    /// Record wall time in the seconds column.
    #[arg(long)]
    timing: bool,
    /// Skip the final rounding and re-solve of the beamformers.
    #[arg(long)]
    no_polish: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn single(v: &[usize], what: &str) -> Result<Option<usize>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(Error::Config(format!("{what} takes a single value here"))),
    }
}

fn params_from(a: &ScenarioArgs, uavs: Option<usize>) -> Result<SimParams> {
    let mut p = SimParams::desk();
    if let Some(l) = uavs {
        p = p.with_uavs(l);
    }
    if let Some(k) = a.users {
        p.num_users = k;
    }
    if let Some(t) = a.slots {
        p.num_slots = t;
    }
    if let Some(b) = a.blocks {
        p.num_blocks = b;
    }
    if let [r] = a.rmin[..] {
        p.r_min_bps = r;
    }
    p.validate()?;
    Ok(p)
}

fn source_from(a: &ScenarioArgs, sweep_uavs: bool) -> Result<(ScenarioSource, usize)> {
    if let Some(path) = &a.scenario {
        if !a.uavs.is_empty() || a.users.is_some() || a.slots.is_some() {
            return Err(Error::Config("--scenario cannot be combined with --uavs/--users/--slots".into()));
        }
        let s = load_scenario(path)?;
        let blocks = a.blocks.unwrap_or(s.params.num_blocks);
        return Ok((ScenarioSource::File(path.clone()), blocks));
    }
    let uavs = if sweep_uavs { None } else { single(&a.uavs, "--uavs")? };
    let params = params_from(a, uavs)?;
    let blocks = params.num_blocks;
    Ok((ScenarioSource::Generate { params, layout: Layout::default() }, blocks))
}

fn parse_schemes(names: &[String], default: Vec<Scheme>) -> Result<Vec<Scheme>> {
    if names.is_empty() {
        return Ok(default);
    }
    let mut out = Vec::new();
    for n in names {
        let s = if n.eq_ignore_ascii_case("all") {
            Scheme::all()
        } else {
            vec![n.parse::<Scheme>()?]
        };
        for x in s {
            if !out.contains(&x) {
                out.push(x);
            }
        }
    }
    Ok(out)
}

fn build_config(cmd: &Command, a: &RunArgs) -> Result<ExperimentConfig> {
    let sc = &a.scenario;
    let (sweep, default_schemes) = match cmd {
        Command::SweepUavs(_) => {
            let v = if sc.uavs.is_empty() { (2..=8).collect() } else { sc.uavs.clone() };
            (Sweep::Uavs(v), Scheme::all())
        }
        Command::SweepRate(_) => {
            let v = if sc.rmin.is_empty() { vec![0.4e6, 0.8e6, 1.2e6, 1.6e6] } else { sc.rmin.clone() };
            (Sweep::Rmin(v), Scheme::all())
        }
        Command::Baseline(_) => (Sweep::None, BaselineId::ALL.into_iter().map(Scheme::Baseline).collect()),
        _ => (Sweep::None, vec![Scheme::Proposed]),
    };
    if !matches!(sweep, Sweep::Rmin(_)) && sc.rmin.len() > 1 {
        return Err(Error::Config("--rmin takes a single value here".into()));
    }
    let (source, blocks) = source_from(sc, matches!(sweep, Sweep::Uavs(_)))?;
    let source = match (source, &sweep) {
        (ScenarioSource::Generate { mut params, layout }, Sweep::Rmin(_)) => {
            params.r_min_bps = SimParams::desk().r_min_bps;
            ScenarioSource::Generate { params, layout }
        }
        (s, _) => s,
    };
    let schemes = parse_schemes(&a.scheme, default_schemes)?;
    if matches!(cmd, Command::Baseline(_)) && schemes.contains(&Scheme::Proposed) {
        return Err(Error::Config("the baseline command runs baselines only".into()));
    }
    let mut ccp = CcpSettings { beta: a.beta, polish: !a.no_polish, ..Default::default() };
    if let Some(e) = a.eps {
        ccp.epsilon = Tolerance::Absolute(e);
    }
    if let Some(n) = a.max_iters {
        ccp.max_iters = n;
    }
    let cfg = ExperimentConfig {
        source,
        schemes,
        sweep,
        blocks,
        seeds: if sc.seed.is_empty() { vec![0] } else { sc.seed.clone() },
        ccp,
        output: sc.out.clone(),
        timing: a.timing,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emit(rows: &[ResultRow], a: &RunArgs) -> Result<()> {
    let mut buf = Vec::new();
    match a.format {
        Format::Csv => write_csv(rows, &mut buf, a.dbm)?,
        Format::Json => {
            buf = to_json(rows, a.dbm)?.into_bytes();
            buf.push(b'\n');
        }
    }
    match &a.scenario.out {
        Some(path) => std::fs::write(path, buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn validate_scenario(a: &ScenarioArgs) -> Result<()> {
    let s = match &a.scenario {
        Some(path) => load_scenario(path)?,
        None => {
            let params = params_from(a, single(&a.uavs, "--uavs")?)?;
            let seed = match a.seed[..] {
                [] => 0,
                [s] => s,
                _ => return Err(Error::Config("--seed takes a single value here".into())),
            };
            generate_scenario(&params, &Layout::default(), seed)?
        }
    };
    s.validate()?;
    eprintln!(
        "ok: L={} K={} T={} B={} N={} M={}",
        s.num_uavs(),
        s.num_users(),
        s.num_slots(),
        s.params.num_blocks,
        s.params.bs_antennas,
        s.params.uav_antennas
    );
    if let Some(path) = &a.out {
        std::fs::write(path, scenario_to_string(&s)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::ValidateScenario(a) => validate_scenario(a).map(|_| true),
        cmd @ (Command::Plan(a) | Command::SweepUavs(a) | Command::SweepRate(a) | Command::Baseline(a)) => {
            let cfg = build_config(cmd, a)?;
            let rows = run_experiment(&cfg)?;
            emit(&rows, a)?;
            Ok(all_converged(&rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some runs did not converge; see the converged column");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
