use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use energy_coop::building::build_feasible_set;
use energy_coop::evaluate::{compare_costs, evaluate_solution};
use energy_coop::oracle::{solve_baseline, solve_p1, OracleError};
use energy_coop::orchestrator::{run_distributed, RunError, RunResult};
use energy_coop::output::{read_method, read_summary, write_results};
use energy_coop::scenario::{load_scenario, ScenarioFile};

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "energy-coop", version, about = "Peer-to-peer energy cooperation in a building community")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the distributed algorithm over the lossy network.
    Run(RunArgs),
    /// Solve the social-cost problem centrally.
    Solve(SolveArgs),
    /// Solve every building in isolation with P2P trading disabled.
    Baseline(SolveArgs),
    /// Per-building cost change between two result directories.
    Compare {
        /// Result directory before cooperation.
        before: PathBuf,
        /// Result directory after cooperation.
        after: PathBuf,
    },
    /// Check a scenario file and report every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Seed of the link-failure draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration budget K.
    #[arg(long)]
    iterations: Option<usize>,
    /// Failure probability applied to every link.
    #[arg(long = "loss-prob")]
    loss_prob: Option<f64>,
    /// Penalty parameter c.
    #[arg(long)]
    penalty: Option<f64>,
    /// Residual threshold for the convergence flag.
    #[arg(long)]
    tol: Option<f64>,
    /// Stop as soon as both residuals reach this value.
    #[arg(long = "stop-residual")]
    stop_residual: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.to_string(),
        }
    }

    fn infeasible(message: impl ToString) -> Self {
        Self {
            code: EXIT_INFEASIBLE,
            message: message.to_string(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::infeasible(e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::infeasible(e)
    }
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    load_scenario(path).map_err(Failure::validation)
}

fn report(result: &RunResult, scenario: &ScenarioFile, out: Option<&Path>) -> Result<(), Failure> {
    let community = scenario.community().map_err(Failure::validation)?;
    let ev = evaluate_solution(result, &community);
    println!("method       {}", result.method);
    println!("social cost  {:.6}", result.social_cost);
    if !result.residuals.is_empty() {
        let last = result.residuals.last().unwrap();
        println!(
            "iterations   {} (primal {:.3e}, consensus {:.3e})",
            result.iterations, last.primal, last.consensus
        );
        println!("asymmetry    {:.3e} before cleaning", result.pre_clean_asymmetry);
    }
    println!("violation    {:.3e}", ev.max_violation());
    println!("payments     {:.3e}", ev.payment_sum);
    for c in &result.costs {
        println!(
            "  {:<10} internal {:>12.4}  payment {:>10.4}  total {:>12.4}",
            c.id,
            c.internal.total(),
            c.payment,
            c.total()
        );
    }
    if let Some(dir) = out {
        write_results(result, dir).map_err(|e| Failure {
            code: EXIT_VALIDATION,
            message: e.to_string(),
        })?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut scenario = load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.loss.seed = seed;
    }
    if let Some(k) = args.iterations {
        scenario.algo.max_iterations = k;
    }
    if let Some(xi) = args.loss_prob {
        scenario.loss.prob = xi;
        scenario.loss.per_link.clear();
    }
    if let Some(c) = args.penalty {
        scenario.algo.penalty = c;
    }
    if let Some(tol) = args.tol {
        scenario.algo.convergence_tol = tol;
    }
    if let Some(eps) = args.stop_residual {
        scenario.algo.stop_residual = Some(eps);
    }
    let community = scenario.community().map_err(Failure::validation)?;
    let algo = scenario.algo.params();
    let policy = scenario.link_policy(&community.topology);
    let result = run_distributed(&community, &algo, &policy, scenario.algo.convergence_tol)?;
    report(&result, &scenario, args.out.as_deref())?;
    if !result.converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!(
                "not converged after {} iterations (threshold {:e})",
                result.iterations, scenario.algo.convergence_tol
            ),
        });
    }
    Ok(())
}

fn solve(args: SolveArgs, baseline: bool) -> Result<(), Failure> {
    let scenario = load(&args.scenario)?;
    let community = scenario.community().map_err(Failure::validation)?;
    let result = if baseline {
        solve_baseline(&community)?
    } else {
        solve_p1(&community)?
    };
    report(&result, &scenario, args.out.as_deref())
}

fn compare(before: &Path, after: &Path) -> Result<(), Failure> {
    let b = read_summary(before).map_err(Failure::validation)?;
    let a = read_summary(after).map_err(Failure::validation)?;
    let method = |d| read_method(d).unwrap_or_else(|_| "?".into());
    println!("before: {} ({})", before.display(), method(before));
    println!("after:  {} ({})", after.display(), method(after));
    println!(
        "{:<10} {:>12} {:>12} {:>12} {:>9}",
        "building", "before", "after", "reduction", "%"
    );
    for row in compare_costs(&b, &a) {
        println!(
            "{:<10} {:>12.4} {:>12.4} {:>12.4} {:>8.2}%",
            row.id,
            row.before,
            row.after,
            row.reduction(),
            row.reduction_pct()
        );
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let scenario = load(path)?;
    let community = scenario.community().map_err(Failure::validation)?;
    let problems: Vec<String> = community
        .buildings
        .iter()
        .zip(&community.profiles)
        .enumerate()
        .filter_map(|(i, (b, p))| {
            build_feasible_set(b, p, community.topology.degree(i))
                .err()
                .map(|e| e.to_string())
        })
        .collect();
    if !problems.is_empty() {
        return Err(Failure::validation(problems.join("\n")));
    }
    println!(
        "{}: ok ({} buildings, {} links, horizon {})",
        path.display(),
        community.len(),
        community.topology.num_edges(),
        community.horizon()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Solve(args) => solve(args, false),
        Command::Baseline(args) => solve(args, true),
        Command::Compare { before, after } => compare(&before, &after),
        Command::Validate { scenario } => validate(&scenario),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
