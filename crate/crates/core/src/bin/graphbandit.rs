use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use graphbandit::environment::AdversarySpec;
use graphbandit::estimator::WeightVector;
use graphbandit::experts::{load_csv_with, train_expert_pool, write_synthetic_csv, PredictionTable};
use graphbandit::graph::{parse_graph_literal, EdgeProbabilityTable, NominalGraph};
use graphbandit::harness::{
    emit_probability_log, emit_results, run_experiment, AggregateResult, ExperimentConfig, ProbabilityGenerator,
    ProbabilitySource, Workload,
};
use graphbandit::oracle;
use graphbandit::policies::Algorithm;
use graphbandit::{Error, Result, Schedule};

#[derive(Parser)]
#[command(name = "graphbandit", version, about = "Experts with uncertain feedback graphs: simulations and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic adversary; reports cumulative regret.
    Simulate(SimulateArgs),
    /// Trains the expert pool on a CSV file and reports running MSE.
    Dataset(DatasetArgs),
    /// Runs the Monte Carlo estimator checks and prints one line per check.
    Oracle(OracleArgs),
    /// Writes a synthetic regression CSV (Friedman #1, target column `y`).
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Shared {
    /// Algorithm to run; repeat the flag for several.
    #[arg(long = "algo", required = true, value_parser = parse_algo)]
    algorithms: Vec<Algorithm>,
    /// A graph file, or `complete` / `bandit`.
    #[arg(long, default_value = "complete")]
    graph: String,
    /// Edge probabilities: equal:<v> or uniform:<lo>,<hi>. Defaults to the
    /// probabilities in the graph file, or equal:0.25 when it has none.
    #[arg(long = "p", value_parser = parse_generator)]
    p: Option<ProbabilityGenerator>,
    /// Reveal edge probabilities to the learners (default).
    #[arg(long, overrides_with = "uninformative")]
    informative: bool,
    /// Hide edge probabilities from the learners.
    #[arg(long, overrides_with = "informative")]
    uninformative: bool,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long = "M", default_value_t = 25)]
    m: usize,
    #[arg(long = "xi", default_value_t = 1.0)]
    xi: f64,
    /// Smallest edge probability assumed by the Exp3-GR doubling schedule.
    #[arg(long)]
    epsilon: Option<f64>,
    /// fixed:<eta>, inverse-sqrt or doubling.
    #[arg(long, default_value = "inverse-sqrt", value_parser = parse_schedule)]
    schedule: Schedule,
    /// Run r uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    shared: Shared,
    /// Number of experts for the `complete` and `bandit` graph shorthands.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Horizon. Defaults to the table length for `table:` adversaries.
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// gap:<best>,<base>,<gap> | switching:<base>,<gap>,<period> | table:<csv>
    #[arg(long, default_value = "gap:1,0.5,0.1")]
    adversary: String,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    shared: Shared,
    /// Regression CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    target: String,
    /// Share of leading rows used to train the experts.
    #[arg(long, default_value_t = 0.1)]
    train_fraction: f64,
    /// Truncates evaluation to the first T rows after the training prefix.
    #[arg(long = "T")]
    horizon: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    /// Monte Carlo draws per check.
    #[arg(long, default_value_t = 1_000_000)]
    draws: u64,
    /// Replicates for the probability estimation check.
    #[arg(long, default_value_t = 100)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_algo(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_generator(s: &str) -> std::result::Result<ProbabilityGenerator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_schedule(s: &str) -> std::result::Result<Schedule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn resolve_graph(spec: &str, k: Option<usize>) -> Result<(NominalGraph, Option<EdgeProbabilityTable>)> {
    match spec {
        "complete" | "bandit" => {
            let k = k.ok_or_else(|| config_error(format!("--graph {spec} needs the number of experts (--K)")))?;
            let g = if spec == "complete" {
                NominalGraph::complete(k)?
            } else {
                NominalGraph::bandit(k)?
            };
            Ok((g, None))
        }
        path => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read graph file {path}: {e}")))?;
            let lit = parse_graph_literal(&text)?;
            if let Some(k) = k {
                if k != lit.graph.num_experts() {
                    return Err(config_error(format!(
                        "--K {k} disagrees with K = {} in {path}",
                        lit.graph.num_experts()
                    )));
                }
            }
            Ok((lit.graph, lit.probabilities))
        }
    }
}

fn build_config(shared: &Shared, k: Option<usize>, workload: Workload) -> Result<ExperimentConfig> {
    let (graph, file_p) = resolve_graph(&shared.graph, k)?;
    let probabilities = match (shared.p, file_p) {
        (Some(gen), _) => ProbabilitySource::Generated(gen),
        (None, Some(table)) => ProbabilitySource::Fixed(table),
        (None, None) => ProbabilitySource::Generated(ProbabilityGenerator::Equal(0.25)),
    };
    let mut cfg = ExperimentConfig::new(shared.algorithms.clone(), graph, probabilities, workload);
    cfg.informative = !shared.uninformative;
    cfg.runs = shared.runs;
    cfg.m = shared.m;
    cfg.xi = shared.xi;
    cfg.epsilon = shared.epsilon;
    cfg.schedule = shared.schedule;
    cfg.seed = shared.seed;
    Ok(cfg)
}

fn parse_numbers(rest: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = rest
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| config_error(format!("invalid numbers in `{what}`")))?;
    if vals.len() != n {
        return Err(config_error(format!("`{what}` needs {n} comma-separated values")));
    }
    Ok(vals)
}

fn whole(v: f64, what: &str) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err(config_error(format!("{what} must be a non-negative integer")))
    }
}

fn resolve_adversary(spec: &str, k: Option<usize>) -> Result<AdversarySpec> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let need_k = || k.ok_or_else(|| config_error(format!("adversary `{spec}` needs the number of experts")));
    match kind {
        "table" => AdversarySpec::fixed_table_from_csv(rest),
        "gap" => {
            let v = parse_numbers(rest, 3, spec)?;
            let best = whole(v[0], "best expert")? as usize;
            if best == 0 {
                return Err(config_error("expert indices start at 1"));
            }
            AdversarySpec::stochastic_gap(need_k()?, best - 1, v[1], v[2])
        }
        "switching" => {
            let v = parse_numbers(rest, 3, spec)?;
            AdversarySpec::switching(need_k()?, v[0], v[1], whole(v[2], "period")?)
        }
        _ => Err(config_error(format!(
            "unknown adversary `{spec}`; expected gap:, switching: or table:"
        ))),
    }
}

fn graph_size_hint(shared: &Shared, k: Option<usize>) -> Result<Option<usize>> {
    if k.is_some() || matches!(shared.graph.as_str(), "complete" | "bandit") {
        return Ok(k);
    }
    Ok(Some(resolve_graph(&shared.graph, None)?.0.num_experts()))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let k = graph_size_hint(&args.shared, args.k)?;
    let adversary = resolve_adversary(&args.adversary, k)?;
    let k = k.unwrap_or(adversary.num_experts());
    let horizon = match (args.horizon, adversary.max_horizon()) {
        (Some(t), _) => t,
        (None, Some(t)) => t,
        (None, None) => return Err(config_error("--T is required for this adversary")),
    };
    let cfg = build_config(&args.shared, Some(k), Workload::Synthetic { adversary, horizon })?;
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &args.shared.out)
}

fn dataset(args: &DatasetArgs) -> Result<()> {
    let data = load_csv_with(&args.data, &args.target, true, args.train_fraction)?;
    data.check_experiment_ready()?;
    let pool = train_expert_pool(&data)?;
    let mut table = PredictionTable::build(&pool, &data)?;
    if let Some(t) = args.horizon {
        table = table.truncated(t as usize)?;
    }
    eprintln!("trained {} experts on {} rows; evaluating on {} rows", pool.len(), data.train_len, table.num_rows());
    for (model, mse) in pool.iter().zip(table.expert_mse()) {
        eprintln!("  {:<20} mse {mse:.6}", model.label());
    }
    let cfg = build_config(&args.shared, Some(pool.len()), Workload::Dataset { table: Arc::new(table) })?;
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &args.shared.out)
}

fn write_outputs(result: &AggregateResult, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    emit_results(result, out.join("results.csv"))?;
    emit_probability_log(result, out.join("probabilities.csv"))?;
    println!("algorithm,metric,mean,std,runs");
    for s in &result.summaries {
        println!("{},{},{},{},{}", s.algorithm, s.metric.name(), s.mean, s.std, s.runs);
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn report(name: &str, ok: bool, detail: String) -> bool {
    println!("{}  {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn run_oracles(args: &OracleArgs) -> Result<bool> {
    let mut all = true;

    let g = NominalGraph::complete(5)?;
    let p = EdgeProbabilityTable::equal(&g, 0.25)?;
    let w = WeightVector::from_weights(&[1.0, 2.0, 3.0, 4.0, 5.0])?;
    let losses = [0.1, 0.3, 0.5, 0.7, 0.9];
    let ip = oracle::ip_estimator(&g, &p, &w, 0.3, &losses, args.draws, args.seed)?;
    let z = (0..5).map(|i| ip.estimate[i].z_score(losses[i])).fold(0.0, f64::max);
    let z2 = (0..5)
        .map(|i| ip.estimate_sq[i].z_score(losses[i] * losses[i] / ip.q[i]))
        .fold(0.0, f64::max);
    all &= report("ip estimator mean", z <= 4.0, format!("max {z:.2} standard errors"));
    all &= report("ip estimator second moment", z2 <= 4.0, format!("max {z2:.2} standard errors"));

    for q in [0.1, 0.5, 0.9] {
        for m in [5usize, 25] {
            let gr = oracle::gr_resampling(q, m, 0.6, args.draws, args.seed.wrapping_add(m as u64))?;
            let covered = 1.0 - (1.0 - q).powi(m as i32);
            let zq = gr.resampled.z_score(covered / q);
            let zl = gr.estimate.z_score(covered * 0.6);
            all &= report(
                &format!("gr resampling q={q} M={m}"),
                zq <= 4.0 && zl <= 4.0,
                format!("mean Q {:.4} ({zq:.2} se), mean estimate {:.4} ({zl:.2} se)", gr.resampled.mean(), gr.estimate.mean()),
            );
        }
    }

    let values = [0.25, 0.4, 0.6, 0.9];
    let g = NominalGraph::complete(4)?;
    let matrix: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| values[(i + j) % 4]).collect()).collect();
    let p = EdgeProbabilityTable::from_matrix(&g, &matrix)?;
    let errors = oracle::probability_estimation(&g, &p, 400, args.replicates, args.seed)?;
    let failures = errors.iter().filter(|&&e| e > 0.1).count();
    all &= report(
        "probability estimation M=400",
        (failures as f64) < 0.01 * args.replicates as f64,
        format!("{failures}/{} replicates above 0.1", args.replicates),
    );

    for alg in [Algorithm::Exp3Up, Algorithm::Exp3Gr] {
        let counts = oracle::exploration_counts(alg, 6, 10, args.seed)?;
        all &= report(
            &format!("{alg} exploration K=6 M=10"),
            counts.iter().all(|&c| c == 10),
            format!("{counts:?}"),
        );
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Dataset(a) => dataset(a).map(|_| true),
        Command::Oracle(a) => run_oracles(a),
        Command::Synth(a) => write_synthetic_csv(&a.out, a.rows, a.seed).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
