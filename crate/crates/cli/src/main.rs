use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptest::acquisition::{run_campaign, CampaignConfig, CampaignRecord, Strategy};
use adaptest::bench::{export_field, run_benchmark, BenchError, BenchmarkConfig};
use adaptest::blackbox::{BlackBox, BlackBoxSpec};
use adaptest::design::{candidate_pool, random_design, uniform_design, Domain};
use adaptest::gp::Surrogate;
use adaptest::robustness::agm_rob;
use adaptest::stl::{parse_formula_with_warnings, Formula, Trace};
use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Budgeted testing of black-box systems against STL specifications.
#[derive(Parser)]
#[command(name = "adaptest", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Robustness of a formula on a recorded trace. Exits 0 if satisfied, 1 if violated.
    Monitor(MonitorArgs),
    /// Emit a design over a domain as CSV.
    Design(DesignArgs),
    /// Run one strategy and write its campaign record.
    Campaign(CampaignArgs),
    /// Compare strategies over a budget sweep.
    Bench(BenchArgs),
    /// Export the surrogate field of a campaign record as CSV.
    Field(FieldArgs),
    /// Check that an external black box speaks the protocol.
    ProtocolCheck(ProtocolArgs),
}

#[derive(Args)]
struct MonitorArgs {
    /// Formula text, or `@path` to read it from a file.
    #[arg(long)]
    formula: String,
    /// Trace file: `.csv`, `.jsonl` (one sample per line) or `.json`.
    #[arg(long)]
    trace: PathBuf,
    /// Evaluation time in seconds, rounded to the nearest sample.
    #[arg(long, default_value_t = 0.0)]
    time: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignKind {
    /// Good-lattice-point uniform design.
    Uniform,
    Random,
    /// Latin-hypercube candidate pool.
    Pool,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    target: Target,
    #[arg(short, long)]
    n: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    kind: DesignKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// The system under test: a benchmark configuration file or a built-in
/// scenario name, with an optional domain file overriding either.
#[derive(Args)]
struct Target {
    /// Benchmark configuration (TOML or JSON).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario: reach-arc, pick-mass or slide-shifted.
    #[arg(long)]
    scenario: Option<String>,
    /// Domain file (TOML or JSON).
    #[arg(long)]
    domain: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = "mepe")]
    strategy: Strategy,
    /// Defaults to the largest budget of the configuration.
    #[arg(long)]
    budget: Option<usize>,
    /// Where to write the campaign record (JSON).
    #[arg(short, long, default_value = "campaign.json")]
    out: PathBuf,
    /// Also write the evaluation log as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    target: Target,
    #[command(flatten)]
    overrides: Overrides,
    /// Restrict to these strategies (repeatable).
    #[arg(long)]
    strategy: Vec<Strategy>,
    /// Replace the budget sweep (repeatable).
    #[arg(long)]
    budget: Vec<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    test_points: Option<usize>,
    #[arg(short, long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Args)]
struct FieldArgs {
    /// Campaign record (JSON).
    #[arg(long)]
    record: PathBuf,
    /// Use the checkpoint at this budget instead of the final surrogate.
    #[arg(long)]
    budget: Option<usize>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 50)]
    resolution: usize,
    #[arg(short, long, default_value = "field.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ProtocolArgs {
    /// Seconds to wait for each reply.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Domain file; the check evaluates the design points below inside it.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Number of uniform-design points to evaluate (needs --domain).
    #[arg(short, long, default_value_t = 3)]
    n: usize,
    /// Parameter point to evaluate, comma separated (repeatable).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    point: Vec<f64>,
    /// Command and arguments of the black box.
    #[arg(last = true, required = true)]
    command: Vec<String>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn blackbox_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 3, error: e.into() }
}

fn bench_err(e: BenchError) -> Failure {
    Failure { code: e.exit_code() as u8, error: e.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Monitor(a) => monitor(a),
        Cmd::Design(a) => design(a),
        Cmd::Campaign(a) => campaign(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Field(a) => field(a),
        Cmd::ProtocolCheck(a) => protocol_check(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_formula(arg: &str) -> anyhow::Result<Formula> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
        None => arg.to_string(),
    };
    let parsed = parse_formula_with_warnings(&text)?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.formula)
}

fn read_trace(path: &Path) -> anyhow::Result<Trace> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    Ok(match ext {
        "csv" => Trace::read_csv(file)?,
        "jsonl" => Trace::read_json_lines(BufReader::new(file))?,
        "json" => serde_json::from_reader(BufReader::new(file))?,
        _ => bail!("unknown trace format `{ext}` (expected csv, jsonl or json)"),
    })
}

fn monitor(a: MonitorArgs) -> Result<u8, Failure> {
    let formula = read_formula(&a.formula).map_err(config_err)?;
    let trace = read_trace(&a.trace).map_err(config_err)?;
    if !(a.time.is_finite() && a.time >= 0.0) {
        return Err(config_err(anyhow!("time must be non-negative, got {}", a.time)));
    }
    let step = (a.time / trace.dt()).round() as usize;
    let rob = agm_rob(&formula, &trace, step).map_err(config_err)?;
    println!("robustness {rob}");
    println!("satisfied {}", rob.is_satisfied());
    Ok(if rob.is_satisfied() { 0 } else { 1 })
}

fn load_target(t: &Target) -> Result<BenchmarkConfig, Failure> {
    let mut cfg = match (&t.config, &t.scenario) {
        (Some(p), _) => BenchmarkConfig::load(p).map_err(bench_err)?,
        (None, Some(s)) => BenchmarkConfig::from_toml_str(&format!("scenario = {s:?}")).map_err(bench_err)?,
        (None, None) if t.domain.is_some() => {
            BenchmarkConfig::from_toml_str("scenario = \"custom\"").map_err(bench_err)?
        }
        (None, None) => return Err(config_err(anyhow!("give --config or --scenario"))),
    };
    if let Some(d) = &t.domain {
        cfg.domain = None;
        cfg.domain_file = Some(d.clone());
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut BenchmarkConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.master_seed = s;
    }
    if let Some(p) = o.pool_size {
        cfg.pool_size = p;
    }
    if let Some(n) = o.n_init {
        cfg.n_init = n;
    }
}

fn resolve_domain(cfg: &BenchmarkConfig) -> Result<Domain, Failure> {
    if let Some(d) = &cfg.domain {
        return Ok(d.clone());
    }
    if let Some(p) = &cfg.domain_file {
        return Domain::load(p).map_err(config_err);
    }
    cfg.resolve().map(|s| s.domain).map_err(bench_err)
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn design(a: DesignArgs) -> Result<u8, Failure> {
    let cfg = load_target(&a.target)?;
    let dom = resolve_domain(&cfg)?;
    let dm = match a.kind {
        DesignKind::Uniform => uniform_design(&dom, a.n),
        DesignKind::Random => random_design(&dom, a.n, a.seed),
        DesignKind::Pool => candidate_pool(&dom, a.n, a.seed),
    }
    .map_err(config_err)?;
    let write = || -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(output(&a.out)?);
        w.write_record(dom.names())?;
        for p in &dm.points {
            w.write_record(p.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(config_err)?;
    if let Some(g) = &dm.generator {
        log::info!("generating vector {g:?}");
    }
    Ok(0)
}

fn campaign(a: CampaignArgs) -> Result<u8, Failure> {
    let mut cfg = load_target(&a.target)?;
    apply_overrides(&mut cfg, &a.overrides);
    let scenario = cfg.resolve().map_err(bench_err)?;
    let budget = a.budget.or_else(|| cfg.budgets.last().copied()).unwrap_or(0);
    let cc = CampaignConfig {
        n_init: cfg.n_init,
        pool_size: cfg.pool_size,
        seed: cfg.master_seed,
        alpha_rule: cfg.alpha_rule,
        fit_restarts: cfg.fit_restarts,
        refit_restarts: cfg.refit_restarts,
        refit_every: cfg.refit_every,
        ..CampaignConfig::new(a.strategy, budget)
    };
    let mut bb = scenario.blackbox.instantiate().map_err(blackbox_err)?;
    let rec = run_campaign(&scenario.formula, &scenario.domain, &mut bb, &cc).map_err(|e| {
        bench_err(BenchError::Campaign { strategy: a.strategy, budget, seed: cc.seed, source: e })
    })?;
    let json = serde_json::to_string_pretty(&rec).map_err(config_err)?;
    std::fs::write(&a.out, json).with_context(|| format!("writing {}", a.out.display())).map_err(config_err)?;
    if let Some(p) = &a.csv {
        let f = File::create(p).with_context(|| format!("creating {}", p.display())).map_err(config_err)?;
        rec.write_csv(f).map_err(config_err)?;
    }
    println!(
        "{} runs ({} failed), final log-likelihood {:.4}",
        rec.evaluations.len(),
        rec.failures(),
        rec.surrogate.log_likelihood
    );
    Ok(0)
}

fn bench(a: BenchArgs) -> Result<u8, Failure> {
    let mut cfg = load_target(&a.target)?;
    apply_overrides(&mut cfg, &a.overrides);
    if !a.strategy.is_empty() {
        cfg.strategies = a.strategy.clone();
    }
    if !a.budget.is_empty() {
        cfg.budgets = a.budget.clone();
    }
    if let Some(s) = a.seeds {
        cfg.seeds = s;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(t) = a.test_points {
        cfg.test_points = t;
    }
    let report = run_benchmark(&cfg, Some(&a.out)).map_err(bench_err)?;
    println!("{:<8} {:>6} {:>10} {:>10} {:>10}", "strategy", "N", "median", "mean", "std");
    for c in &report.cells {
        println!(
            "{:<8} {:>6} {:>10.5} {:>10.5} {:>10.5}",
            c.strategy, c.budget, c.summary.median, c.summary.mean, c.summary.std
        );
    }
    println!("results in {}", a.out.display());
    Ok(0)
}

fn field(a: FieldArgs) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(&a.record)
        .with_context(|| format!("reading {}", a.record.display()))
        .map_err(config_err)?;
    let rec: CampaignRecord = serde_json::from_str(&text).map_err(config_err)?;
    let snap = match a.budget {
        Some(b) => rec
            .checkpoint(b)
            .map(|c| c.surrogate.clone())
            .ok_or_else(|| config_err(anyhow!("record has no checkpoint at budget {b}")))?,
        None => rec.surrogate.clone(),
    };
    let s = Surrogate::try_from(snap).map_err(config_err)?;
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display())).map_err(config_err)?;
    export_field(&s, &rec.domain, &vec![a.resolution; rec.domain.dim()], f).map_err(bench_err)?;
    Ok(0)
}

fn protocol_check(a: ProtocolArgs) -> Result<u8, Failure> {
    if !(a.timeout.is_finite() && a.timeout > 0.0) {
        return Err(config_err(anyhow!("timeout must be positive")));
    }
    let mut points = Vec::new();
    if !a.point.is_empty() {
        points.push(a.point.clone());
    }
    if let Some(p) = &a.domain {
        let dom = Domain::load(p).map_err(config_err)?;
        points.extend(uniform_design(&dom, a.n.max(2)).map_err(config_err)?.points.into_iter().take(a.n));
    }
    if points.is_empty() {
        return Err(config_err(anyhow!("give --point or --domain")));
    }
    let (cmd, args) = a.command.split_first().expect("command is required");
    let spec = BlackBoxSpec::External {
        command: cmd.clone(),
        args: args.to_vec(),
        timeout: a.timeout,
        dim: Some(points[0].len()),
    };
    let mut bb: Box<dyn BlackBox> = match spec.instantiate() {
        Ok(b) => b,
        Err(e) => return Err(blackbox_err(e)),
    };
    println!("handshake ok (protocol v{})", adaptest::blackbox::PROTOCOL_VERSION);
    for x in &points {
        let tr = bb.evaluate(x).with_context(|| format!("evaluating {x:?}")).map_err(blackbox_err)?;
        let names: Vec<&str> = tr.channel_names().collect();
        println!("{x:?}: {} samples at dt {} over channels {names:?}", tr.len(), tr.dt());
    }
    Ok(0)
}
