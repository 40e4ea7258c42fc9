use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use primsel::ilp::{self, build_problem, SolveMode, SolveRequest, SolveStatus};
use primsel::io::SelectionDocument;
use primsel::model::{validate_profile, Network, NetworkProfile};
use primsel::pareto::{self, Regime};
use primsel::strategies::{self, GREEDY, ILP};
use primsel::synth::{self, SynthConfig, Topology};
use primsel::units::{parse_bytes, parse_micros};
use primsel::{cost, workspace};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "primsel",
    version,
    about = "Per-layer convolution primitive selection under time and memory budgets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    MinTime,
    MinMemory,
    MinWorkspace,
}

impl From<Mode> for SolveMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::MinTime => SolveMode::MinTime,
            Mode::MinMemory => SolveMode::MinMemorySum,
            Mode::MinWorkspace => SolveMode::MinWorkspace,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Chain,
    ForkJoin,
}

#[derive(Subcommand)]
enum Command {
    /// Check a profile and list every problem found.
    Validate { profile: PathBuf },
    /// Solve one selection problem.
    Solve {
        profile: PathBuf,
        #[arg(long, value_enum, default_value = "min-time")]
        mode: Mode,
        /// Bound on the summed footprint, e.g. 12MiB (min-time).
        #[arg(long, value_parser = parse_bytes)]
        memory_budget: Option<u64>,
        /// Bound on every layer's footprint (min-time).
        #[arg(long, value_parser = parse_bytes)]
        workspace_budget: Option<u64>,
        /// Bound on total time, e.g. 40ms (min-memory, min-workspace).
        #[arg(long, value_parser = parse_micros)]
        time_budget: Option<u64>,
        /// Give up after this long and report the best selection found.
        #[arg(long, value_parser = parse_micros)]
        time_limit: Option<u64>,
        /// Selection JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the integer program in LP format.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Sweep memory budgets and write the time/memory frontier as CSV.
    Sweep {
        profile: PathBuf,
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Bound the largest layer footprint instead of the sum.
        #[arg(long)]
        workspace: bool,
        /// Keep only non-dominated points.
        #[arg(long)]
        frontier_only: bool,
        #[arg(long, value_parser = parse_micros)]
        time_limit: Option<u64>,
        /// CSV destination; selections go to `<stem>.selections.json` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// ILP against the greedy baseline over a budget grid.
    Compare {
        profile: PathBuf,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic profile.
    Gen {
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        candidates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "chain")]
        topology: TopologyArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a selection against a profile.
    Score {
        profile: PathBuf,
        selection: PathBuf,
    },
    /// Buffer plan for layer-by-layer execution of a chain.
    Plan {
        profile: PathBuf,
        selection: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_network(path: &Path) -> Result<Network> {
    let profile = NetworkProfile::from_json(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Network::from_profile(&profile).with_context(|| format!("loading {}", path.display()))
}

fn load_selection(net: &Network, path: &Path) -> Result<Vec<usize>> {
    let doc = SelectionDocument::from_json(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(doc.assignment_for(net)?)
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::TimedOut => EXIT_TIMEOUT,
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Validate { profile } => {
            let p = NetworkProfile::from_json(&read(&profile)?)?;
            let violations = validate_profile(&p);
            if violations.is_empty() {
                println!("OK");
                return Ok(0);
            }
            for v in &violations {
                println!("{v}");
            }
            Ok(EXIT_INPUT)
        }
        Command::Solve {
            profile,
            mode,
            memory_budget,
            workspace_budget,
            time_budget,
            time_limit,
            out,
            dump_lp,
        } => {
            let net = load_network(&profile)?;
            let req = SolveRequest {
                mode: mode.into(),
                memory_budget,
                workspace_budget,
                time_budget,
                time_limit: time_limit.map(Duration::from_micros),
            };
            req.validate()?;
            if let Some(lp) = dump_lp {
                let problem = build_problem(&net, &req)?;
                fs::write(&lp, problem.to_lp_string())
                    .with_context(|| format!("writing {}", lp.display()))?;
            }
            let outcome = ilp::solve(&net, &req)?;
            eprintln!(
                "{}: {} nodes in {:.3} s",
                outcome.status.as_str(),
                outcome.stats.nodes,
                outcome.stats.wall_time.as_secs_f64()
            );
            if let Some(sel) = &outcome.selection {
                let mut doc = SelectionDocument::from_selection(&net, sel);
                doc.mode = Some(req.mode.as_str().into());
                doc.status = Some(outcome.status.as_str().into());
                write_or_print(out.as_deref(), &doc.to_json())?;
            } else {
                eprintln!("no selection satisfies the budgets");
            }
            Ok(status_code(outcome.status))
        }
        Command::Sweep {
            profile,
            points,
            workspace,
            frontier_only,
            time_limit,
            out,
        } => {
            let net = load_network(&profile)?;
            let regime = if workspace {
                Regime::Workspace
            } else {
                Regime::WholeNetwork
            };
            let grid = pareto::auto_grid(&net, points, regime);
            let mut pts = pareto::sweep_memory_budget(
                &net,
                &grid,
                regime,
                time_limit.map(Duration::from_micros),
            )?;
            if frontier_only {
                pts = pareto::extract_frontier(&pts);
            }
            let file =
                fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let set = pareto::write_frontier(&net, &pts, file)?;
            let sidecar = out.with_extension("selections.json");
            fs::write(&sidecar, set.to_json())
                .with_context(|| format!("writing {}", sidecar.display()))?;
            let timed_out = pts.iter().any(|p| p.status == SolveStatus::TimedOut);
            Ok(if timed_out { EXIT_TIMEOUT } else { 0 })
        }
        Command::Compare {
            profile,
            points,
            out,
        } => {
            let net = load_network(&profile)?;
            let grid = pareto::auto_grid(&net, points, Regime::WholeNetwork);
            let report = strategies::compare(&net, &grid)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["budget", "ilp_time_us", "greedy_time_us", "speedup"])?;
            let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
            for e in &report.entries {
                let time = |name: &str| {
                    e.methods
                        .iter()
                        .find(|m| m.name == name)
                        .and_then(|m| m.breakdown)
                        .map(|b| b.total_time_us)
                };
                w.write_record([
                    e.budget.to_string(),
                    opt(time(ILP)),
                    opt(time(GREEDY)),
                    e.speedup(ILP, GREEDY)
                        .map(|s| format!("{s:.4}"))
                        .unwrap_or_default(),
                ])?;
            }
            let text = String::from_utf8(w.into_inner()?)?;
            write_or_print(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Gen {
            layers,
            candidates,
            seed,
            topology,
            out,
        } => {
            if layers == 0 || candidates == 0 {
                bail!("--layers and --candidates must be positive");
            }
            let topology = match topology {
                TopologyArg::Chain => Topology::Chain,
                TopologyArg::ForkJoin => Topology::ForkJoin,
            };
            let profile = synth::generate(&SynthConfig {
                layers,
                candidates,
                seed,
                topology,
            });
            write_or_print(out.as_deref(), &profile.to_json())?;
            Ok(0)
        }
        Command::Score { profile, selection } => {
            let net = load_network(&profile)?;
            let assignment = load_selection(&net, &selection)?;
            let b = cost::evaluate(&net, &assignment)?;
            println!("exec_time_us {}", b.exec_time_us);
            println!("transform_time_us {}", b.transform_time_us);
            println!("total_time_us {}", b.total_time_us);
            println!("memory_sum_bytes {}", b.memory_sum_bytes);
            println!("workspace_max_bytes {}", b.workspace_max_bytes);
            Ok(0)
        }
        Command::Plan {
            profile,
            selection,
            out,
        } => {
            let net = load_network(&profile)?;
            let assignment = load_selection(&net, &selection)?;
            let plan = workspace::plan_execution(&net, &assignment)?;
            write_or_print(out.as_deref(), &plan.to_json())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with status 2, which is reserved for
    // infeasible budgets here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
