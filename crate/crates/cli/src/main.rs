use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popdp_cli::config::{parse_epsilon, AgentKind, ExperimentConfig};
use popdp_cli::experiment::{build_graph, run_on_graph, write_file};
use popdp_cli::sweep::{sweep, sweep_csv};
use popdp_cli::verify::{curve_csv, run_suite, write_outcome, CurveRow, SUITES};
use popdp_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "popdp", version, about = "Differentially private RL on epidemic population processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the epidemic under a non-learning agent (fixed-action by default).
    Simulate(ConfigArgs),
    /// Train a learning agent (dqn by default) and write its run log.
    Train(ConfigArgs),
    /// Replicated runs over several privacy levels.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated target epsilons; `off` disables privacy.
        #[arg(long, value_delimiter = ',', default_value = "off,10,0.5", value_parser = parse_epsilon)]
        eps: Vec<Option<f64>>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Run an oracle suite and write its JSON report.
    Verify {
        /// One of accounting, tail, induced, trend, pufferfish, or `all`.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/verify")]
        out: PathBuf,
    },
    /// Target versus achieved epsilon under advanced composition, as CSV.
    AccountingCurve {
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.00001")]
        delta: Vec<f64>,
        #[arg(long, default_value_t = 500_000)]
        horizon: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1,2,3,5,7.5,10")]
        targets: Vec<f64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus per-field overrides.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph_path: Option<PathBuf>,
    #[arg(long)]
    graph_nodes: Option<usize>,
    #[arg(long)]
    graph_edges_per_node: Option<usize>,
    #[arg(long)]
    graph_seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma_rate: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    initial_infected: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    sample_size: Option<usize>,
    /// Target epsilon, or `off`.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    fixed_action: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    target_period: Option<u64>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    eps_start: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eps_floor: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    rms_smoothing: Option<f64>,
    #[arg(long)]
    rms_floor: Option<f64>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl ConfigArgs {
    fn resolve(&self, default_agent: AgentKind) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig {
                agent: default_agent,
                ..ExperimentConfig::default()
            },
        };
        let args = self;
        overlay!(
            cfg, args, graph_nodes, graph_edges_per_node, beta, sigma, gamma_rate, rho, initial_infected, alpha, horizon,
            delta, agent, fixed_action, batch_size, target_period, discount, eps_start, kappa, eps_floor,
            buffer_capacity, learning_rate, rms_smoothing, rms_floor, hidden_width, seed, output_dir
        );
        if let Some(text) = &self.epsilon {
            cfg.epsilon = parse_epsilon(text).map_err(CliError::Config)?;
        }
        if self.graph_path.is_some() {
            cfg.graph_path = self.graph_path.clone();
        }
        if self.graph_seed.is_some() {
            cfg.graph_seed = self.graph_seed;
        }
        if self.sample_size.is_some() {
            cfg.sample_size = self.sample_size;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_single(cfg: &ExperimentConfig) -> CliResult<()> {
    let (graph, stats) = build_graph(cfg)?;
    if let Some(s) = stats {
        eprintln!(
            "graph: {} nodes, {} edges ({} self-loops and {} duplicates dropped)",
            s.nodes, s.edges, s.self_loops, s.duplicates
        );
    }
    let run = run_on_graph(cfg, &graph)?;
    write_file(&cfg.output_dir.join("config.json"), &cfg.to_json())?;
    write_file(&cfg.output_dir.join("run.csv"), &run.to_csv())?;
    eprintln!(
        "{} steps, trailing mean reward {:.6}, achieved epsilon {}",
        cfg.horizon,
        run.trailing_reward(),
        run.footer.achieved_epsilon.map_or("n/a".to_string(), |e| e.to_string())
    );
    Ok(())
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(args) => {
            let cfg = args.resolve(AgentKind::FixedAction)?;
            if cfg.agent.learns() {
                return Err(CliError::Config("simulate runs random or fixed-action agents; use train".into()));
            }
            run_single(&cfg)
        }
        Command::Train(args) => {
            let cfg = args.resolve(AgentKind::Dqn)?;
            if !cfg.agent.learns() {
                return Err(CliError::Config("train needs a dqn or tabular agent; use simulate".into()));
            }
            run_single(&cfg)
        }
        Command::Sweep { config, eps, seeds } => {
            let cfg = config.resolve(AgentKind::Dqn)?;
            let rows = sweep(&cfg, &eps, seeds)?;
            write_file(&cfg.output_dir.join("config.json"), &cfg.to_json())?;
            let csv = sweep_csv(&rows);
            write_file(&cfg.output_dir.join("sweep.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Verify { suite, seed, out } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut failed = Vec::new();
            for name in names {
                let outcome = run_suite(name, seed)?;
                write_outcome(&outcome, &out)?;
                println!("{name}: {}", if outcome.passed { "pass" } else { "FAIL" });
                if !outcome.passed {
                    failed.push(name.to_string());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(failed.join(", ")))
            }
        }
        Command::AccountingCurve {
            delta,
            horizon,
            targets,
            out,
        } => {
            let mut rows = Vec::new();
            for d in delta {
                for point in popdp::accounting::achieved_curve(d, horizon, &targets)? {
                    rows.push(CurveRow { delta: d, horizon, point });
                }
            }
            let csv = curve_csv(&rows);
            match out {
                Some(path) => write_file(&path, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
