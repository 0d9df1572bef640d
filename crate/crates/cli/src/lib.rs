//! The `rlfa` command line: simulations, file-driven and interactive audits,
//! the HTTP server and session replay.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rlfa_core::engine::SessionStatus;
use rlfa_core::simulator::{self, ScenarioConfig};
use rlfa_core::{AuditError, AuditSession, CsFamily, Interval, Population, SessionConfig, Strategy};

#[derive(Debug, Parser)]
#[command(name = "rlfa", version, about = "Sequential financial audits with confidence sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run repeated simulated audits and write summary.json, trials.csv and widths.csv.
    Simulate(SimulateArgs),
    /// Compare stopping times with and without control variates across score quality.
    SweepCv(SweepArgs),
    /// Audit a population CSV, answering from its true_f column or from stdin.
    Audit(AuditArgs),
    /// Start the HTTP session server.
    Serve(ServeArgs),
    /// Restore a saved session and print its interval trace.
    Replay(ReplayArgs),
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: AuditError| e.to_string())
}

fn parse_family(s: &str) -> Result<CsFamily, String> {
    s.parse().map_err(|e: AuditError| e.to_string())
}

/// Session settings shared by the subcommands. Unset flags keep the value
/// from the scenario file (or the default, for `audit`).
#[derive(Debug, Args)]
pub struct SessionFlags {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// uniform, propM, propMS or oracle
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// betting, hoeffding or empirical_bernstein
    #[arg(long = "cs", value_parser = parse_family)]
    pub cs_family: Option<CsFamily>,
    #[arg(long)]
    pub control_variates: bool,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Number of grid points for the betting CS.
    #[arg(long = "grid")]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub session: SessionFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scenario JSON; its score mode is replaced by each mixture weight.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Mixture weights to try, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "points")]
    pub c: Vec<f64>,
    /// Evenly spaced mixture weights from 0.1 to 0.9.
    #[arg(long, default_value_t = 9)]
    pub points: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Population CSV (id, reported_value, optional score and true_f).
    #[arg(long)]
    pub population: PathBuf,
    #[command(flatten)]
    pub session: SessionFlags,
    /// Relative accuracy of the score column, if known.
    #[arg(long)]
    pub score_accuracy: Option<f64>,
    /// Write the final session JSON here.
    #[arg(long)]
    pub save: Option<PathBuf>,
    /// Prompt for every f even when the CSV has a true_f column.
    #[arg(long)]
    pub interactive: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Directory for population and session JSON; sessions survive restarts.
    #[arg(long)]
    pub persist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Session JSON written by `audit --save` or the server.
    pub session: PathBuf,
}

/// Runtime failure: printed as `error: <kind>: <detail>`, exit code 1.
#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub detail: String,
}

impl CliError {
    fn new(kind: &str, detail: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            detail: detail.into(),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(err: AuditError) -> Self {
        Self::new(err.kind(), err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        AuditError::Io(err).into()
    }
}

type CliResult<T> = Result<T, CliError>;

fn one_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn run<I, A>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(err, "{e}");
                return 2;
            }
            let text = e.kind().as_str().map(str::to_string).unwrap_or_default();
            let rendered = one_line(&e.render().to_string());
            let detail = rendered.strip_prefix("error: ").unwrap_or(&rendered);
            let _ = writeln!(err, "error: usage: {}", if detail.is_empty() { &text } else { detail });
            return 2;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::SweepCv(a) => sweep_cv(a, out),
        Command::Audit(a) => audit(a, input, out),
        Command::Serve(a) => serve(a, err),
        Command::Replay(a) => replay(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            let _ = writeln!(err, "error: {}: {}", e.kind, one_line(&e.detail));
            1
        }
    }
}

fn load_scenario(path: &Path) -> CliResult<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new("format", format!("{}: {e}", path.display())))
}

fn apply_flags(sc: &mut ScenarioConfig, flags: &SessionFlags) {
    if let Some(v) = flags.epsilon {
        sc.epsilon = v;
    }
    if let Some(v) = flags.delta {
        sc.delta = v;
    }
    if let Some(v) = flags.strategy {
        sc.strategy = v;
    }
    if let Some(v) = flags.cs_family {
        sc.cs_family = v;
    }
    if flags.control_variates {
        sc.control_variates = true;
    }
    if let Some(v) = flags.batch_size {
        sc.batch_size = v;
    }
    if let Some(v) = flags.grid_size {
        sc.grid_size = v;
    }
    if let Some(v) = flags.seed {
        sc.seed = v;
    }
}

fn simulate(args: SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut sc = load_scenario(&args.config)?;
    apply_flags(&mut sc, &args.session);
    if let Some(t) = args.trials {
        sc.trials = t;
    }
    let result = simulator::run_trials(&sc)?;
    simulator::write_results(&result, &args.out)?;
    for m in &result.methods {
        writeln!(
            out,
            "{}: mean tau {} over {} trials, miscoverage {}",
            m.label,
            m.mean_tau(),
            m.taus.len(),
            m.miscoverage_rate()
        )?;
    }
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

fn sweep_cv(args: SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut sc = load_scenario(&args.config)?;
    if let Some(t) = args.trials {
        sc.trials = t;
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    let cs = if args.c.is_empty() {
        simulator::linspace(0.1, 0.9, args.points)
    } else {
        args.c.clone()
    };
    let points = simulator::cv_gain_sweep(&sc, &cs)?;
    simulator::write_cv_gain(&points, &args.out)?;
    for p in &points {
        writeln!(out, "c={}: mean tau_cv/tau {} (sd {})", p.c, p.mean_ratio, p.std_ratio)?;
    }
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

fn fmt_interval(i: &Interval<f64>) -> String {
    if i.empty {
        "empty".into()
    } else {
        format!("[{}, {}]", i.lo, i.hi)
    }
}

/// Reads one f value, re-prompting on bad input. `None` at end of input.
fn prompt_f(
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    t: usize,
    id: &str,
    weight: f64,
) -> CliResult<Option<f64>> {
    loop {
        write!(out, "t={t} audit index {id} (weight {weight}), enter f: ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(None);
        }
        match line.trim().parse::<f64>() {
            Ok(f) if (0.0..=1.0).contains(&f) => return Ok(Some(f)),
            _ => writeln!(out, "f must be a number in [0, 1], got {:?}", line.trim())?,
        }
    }
}

fn audit(args: AuditArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult<()> {
    let population = Population::load_csv(&args.population)
        .map_err(|e| CliError::new(e.kind(), format!("{}: {e}", args.population.display())))?;
    let flags = &args.session;
    let mut config = SessionConfig::new(
        flags.epsilon.unwrap_or(0.05),
        flags.delta.unwrap_or(0.05),
        flags.strategy.unwrap_or(Strategy::PropM),
        flags.cs_family.unwrap_or(CsFamily::Betting),
    );
    config.control_variates = flags.control_variates;
    if let Some(b) = flags.batch_size {
        config.batch_size = b;
    }
    if let Some(g) = flags.grid_size {
        config.grid_size = g;
    }
    config.score_accuracy = args.score_accuracy;
    config.seed = match flags.seed {
        Some(s) => s,
        None => {
            let s = rand::random();
            writeln!(out, "seed: {s}")?;
            s
        }
    };

    let truth = if args.interactive {
        None
    } else {
        population.truth().map(<[f64]>::to_vec)
    };
    let population = Arc::new(population);
    let mut session = AuditSession::create("cli", Arc::clone(&population), config)?;
    let mut finished = true;
    loop {
        let drawn = session.next_draw()?;
        let t = session.t() + 1;
        let mut observed = Vec::with_capacity(drawn.len());
        for &i in &drawn {
            let id = &population.ids()[i];
            let f = match &truth {
                Some(truth) => truth[i],
                None => match prompt_f(input, out, t, id, population.weights()[i])? {
                    Some(f) => f,
                    None => {
                        finished = false;
                        break;
                    }
                },
            };
            observed.push((i, f));
        }
        if !finished {
            break;
        }
        let update = session.record_observation(&observed)?;
        let items: Vec<String> = observed
            .iter()
            .map(|&(i, f)| format!("{}={}", population.ids()[i], f))
            .collect();
        writeln!(
            out,
            "t={} audited {} interval {} width {}",
            update.t,
            items.join(" "),
            fmt_interval(&update.interval),
            update.width
        )?;
        if session.status() != SessionStatus::Running {
            break;
        }
    }

    if let Some(path) = &args.save {
        std::fs::write(path, session.to_json()?)?;
    }
    if !finished {
        return Err(CliError::new(
            "input",
            format!("input ended at t={} before the interval reached the target width", session.t()),
        ));
    }
    writeln!(out, "tau: {}", session.stopped_at().unwrap_or(session.t()))?;
    writeln!(out, "interval: {}", fmt_interval(&session.interval()))?;
    writeln!(out, "width: {}", session.width())?;
    if let Some(m) = population.m_star().filter(|_| truth.is_some()) {
        writeln!(out, "true m*: {m}")?;
    }
    Ok(())
}

fn serve(args: ServeArgs, err: &mut dyn Write) -> CliResult<()> {
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .try_init();
    let addr = SocketAddr::new(args.host, args.port);
    writeln!(err, "serving on http://{addr}")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(rlfa_server::serve(addr, args.persist))?;
    Ok(())
}

fn replay(args: ReplayArgs, out: &mut dyn Write) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.session)
        .map_err(|e| CliError::new("io", format!("{}: {e}", args.session.display())))?;
    let session = AuditSession::from_json(&text)?;
    for e in session.trace() {
        writeln!(
            out,
            "t={} audited {} interval {} width {}",
            e.t,
            e.audited,
            fmt_interval(&e.combined),
            e.width
        )?;
    }
    let status = match session.status() {
        SessionStatus::Running => "running",
        SessionStatus::Stopped => "stopped",
        SessionStatus::Exhausted => "exhausted",
    };
    writeln!(out, "status: {status}")?;
    if let Some(tau) = session.stopped_at() {
        writeln!(out, "tau: {tau}")?;
    }
    writeln!(out, "interval: {}", fmt_interval(&session.interval()))?;
    Ok(())
}
