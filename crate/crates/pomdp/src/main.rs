//! Command-line entry point: planning, exact solving, evaluation,
//! observability, contraction experiments, inequality checks, instance
//! generation, and window-length comparison, all file-based.
//!
//! Exit codes: 0 success, 1 usage error, 2 budget/validation/domain
//! failure, 3 internal assertion. Errors print machine-readable JSON on
//! stderr. Every command that writes an output file writes a manifest
//! (argv, seeds, threads, versions) beside it.

use clap::{Args, Parser, Subcommand};
use pomdp::exactplan::{
    eval_policy_exact, eval_policy_mc, solve_exact, DEFAULT_EXACT_BUDGET,
};
use pomdp::gen::{
    gen_contraction_lb, gen_example, gen_hadamard_sat, gen_random_observable, gen_sat_hard,
    parse_dimacs, ExampleName, ExampleParams, SatHardParams, DEFAULT_SIZE_BUDGET,
};
use pomdp::lab::{
    contraction_curve, contraction_inequality_suite, divergence_increase_demo, CurveMethod,
    CurvePolicy,
};
use pomdp::model::{load, save, Pomdp};
use pomdp::observability::{observability_report, ReportMethod, MAX_EXACT_STATES};
use pomdp::smp::{
    policy_from_json, policy_to_json, smp_plan, suboptimality_report, PlanMode, SmpPolicy,
    DEFAULT_SMP_BUDGET,
};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pomdp", version, about = "Finite-horizon tabular POMDP toolkit")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Emit tables as CSV instead of aligned text.
    #[arg(long, global = true, value_parser = ["text", "csv"], default_value = "text")]
    format: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan with bounded-window backward induction; writes a policy file.
    Plan(PlanArgs),
    /// Solve exactly by belief-memoized Bellman recursion.
    Exact(ExactArgs),
    /// Evaluate a policy file exactly or by Monte Carlo rollouts.
    Eval(EvalArgs),
    /// Per-step observability report.
    Gamma(GammaArgs),
    /// Belief-error contraction curve.
    Contract(ContractArgs),
    /// Exact-inequality contraction checks.
    Check(CheckArgs),
    /// Instance generators.
    Gen(GenArgs),
    /// Suboptimality across window lengths.
    Compare(CompareArgs),
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    model: PathBuf,
    /// Window length L.
    #[arg(long)]
    window: usize,
    #[arg(long, value_parser = ["dense", "reachable"], default_value = "dense")]
    mode: String,
    /// Table-entry budget.
    #[arg(long, default_value_t = DEFAULT_SMP_BUDGET)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    model: PathBuf,
    /// History-node budget.
    #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
    budget: usize,
    /// Dump the optimal policy/value tree as JSON (histories as index arrays).
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Policy file produced by `plan`.
    #[arg(long)]
    policy: PathBuf,
    /// Evaluate by Monte Carlo with this many episodes instead of exactly.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
    budget: usize,
}

#[derive(Args)]
struct GammaArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = ["exact", "mc"], default_value = "exact")]
    method: String,
    /// Sampled directions per step (mc method).
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-step table here (CSV with --format csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ContractArgs {
    #[arg(long)]
    model: PathBuf,
    /// Anchor step h; the wrong prior is uniform at the anchor.
    #[arg(long, default_value_t = 2)]
    anchor: usize,
    /// Largest window length t.
    #[arg(long)]
    tmax: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = ["mc", "exact-tree"], default_value = "mc")]
    method: String,
    /// uniform | const:<a> | open-loop:<a,b,...>
    #[arg(long, default_value = "uniform")]
    policy: String,
    #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
    budget: usize,
    /// CSV destination (columns t, mean_l1, stderr, trials).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 500)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the one-step divergence demonstrations.
    #[arg(long)]
    demo: bool,
    /// Channel flip probability for the demo.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// sat | hadamard | contraction-lb | random | example:<name>
    kind: String,
    #[arg(long)]
    out: PathBuf,
    /// DIMACS CNF input (sat, hadamard).
    #[arg(long)]
    cnf: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Trial count override (sat).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    steps_per_trial: Option<usize>,
    /// States (random, null-channel).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    eps: Option<f64>,
    /// large-net size.
    #[arg(long)]
    m: Option<usize>,
    /// Stored-float budget for the generated model.
    #[arg(long, default_value_t = DEFAULT_SIZE_BUDGET)]
    budget: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated window lengths.
    #[arg(long)]
    windows: String,
    #[arg(long, default_value_t = DEFAULT_SMP_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
    exact_budget: usize,
    #[arg(long, default_value_t = 10_000)]
    mc_episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            kind: "usage",
            message: message.into(),
            code: 1,
        }
    }

    fn domain(kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
            code: 2,
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure {
            kind: "internal",
            message: message.into(),
            code: 3,
        }
    }
}

fn model_failure(e: pomdp::model::ModelError) -> Failure {
    match &e {
        pomdp::model::ModelError::Validation(_) => Failure::domain("validation", e.to_string()),
        _ => Failure::domain("model", e.to_string()),
    }
}

fn budget_failure(e: impl std::fmt::Display) -> Failure {
    Failure::domain("budget", e.to_string())
}

fn load_model(path: &Path) -> Result<Pomdp, Failure> {
    load(path).map_err(model_failure)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::domain("io", format!("{}: {e}", path.display())))
}

/// Writes `<out>.manifest.json` capturing everything needed to re-run.
fn write_manifest(
    out: &Path,
    subcommand: &str,
    inputs: &[&Path],
    extra: serde_json::Value,
) -> Result<(), Failure> {
    let argv: Vec<String> = std::env::args().collect();
    let manifest = json!({
        "tool": "pomdp",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "argv": argv,
        "threads": rayon::current_num_threads(),
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "output": out.display().to_string(),
        "details": extra,
    });
    let path = out.with_extension(format!(
        "{}manifest.json",
        out.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    write_file(&path, &serde_json::to_string_pretty(&manifest).unwrap())
}

fn parse_curve_policy(text: &str) -> Result<CurvePolicy, Failure> {
    if text == "uniform" {
        return Ok(CurvePolicy::Uniform);
    }
    if let Some(rest) = text.strip_prefix("const:") {
        let a = rest
            .parse::<usize>()
            .map_err(|_| Failure::usage(format!("bad action in --policy {text}")))?;
        return Ok(CurvePolicy::Constant(a));
    }
    if let Some(rest) = text.strip_prefix("open-loop:") {
        let actions: Result<Vec<usize>, _> = rest.split(',').map(|s| s.parse::<usize>()).collect();
        let actions = actions.map_err(|_| Failure::usage(format!("bad --policy {text}")))?;
        if actions.is_empty() {
            return Err(Failure::usage("open-loop policy needs at least one action"));
        }
        return Ok(CurvePolicy::OpenLoop(actions));
    }
    Err(Failure::usage(format!(
        "unknown --policy {text}; expected uniform, const:<a>, or open-loop:<a,b,...>"
    )))
}

fn run_plan(args: &PlanArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let mode = if args.mode == "dense" {
        PlanMode::Dense
    } else {
        PlanMode::Reachable
    };
    let policy = smp_plan(&model, args.window, mode, args.budget).map_err(budget_failure)?;
    write_file(&args.out, &policy_to_json(&policy))?;
    write_manifest(
        &args.out,
        "plan",
        &[&args.model],
        json!({
            "window": args.window,
            "mode": args.mode,
            "budget": args.budget,
            "value_estimate": policy.value_estimate,
        }),
    )?;
    println!("value_estimate {}", policy.value_estimate);
    Ok(())
}

fn run_exact(args: &ExactArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let solution = solve_exact(&model, args.budget).map_err(budget_failure)?;
    if let Some(dump) = &args.dump_tree {
        let policy = solution
            .history_policy(&model, args.budget)
            .map_err(budget_failure)?;
        let mut entries: Vec<serde_json::Value> = Vec::new();
        let mut keys: Vec<&pomdp::History> = policy.actions.keys().collect();
        keys.sort_by_key(|h| (h.stage(), h.actions.clone(), h.observations.clone()));
        for hist in keys {
            entries.push(json!({
                "actions": hist.actions,
                "observations": hist.observations,
                "action": policy.actions[hist],
                "value": policy.values[hist],
            }));
        }
        let tree = json!({ "value": solution.value, "entries": entries });
        write_file(dump, &serde_json::to_string(&tree).unwrap())?;
        write_manifest(
            dump,
            "exact",
            &[&args.model],
            json!({ "budget": args.budget, "value": solution.value }),
        )?;
    }
    println!("value {}", solution.value);
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let text = std::fs::read_to_string(&args.policy)
        .map_err(|e| Failure::domain("io", format!("{}: {e}", args.policy.display())))?;
    let policy: SmpPolicy = policy_from_json(&text, model.num_actions)
        .map_err(|e| Failure::domain("policy", e))?;
    match args.mc {
        None => {
            let value = eval_policy_exact(&model, &policy, args.budget).map_err(budget_failure)?;
            println!("value {value} method exact");
        }
        Some(episodes) => {
            if episodes == 0 {
                return Err(Failure::usage("--mc needs at least one episode"));
            }
            if !(args.confidence > 0.0 && args.confidence < 1.0) {
                return Err(Failure::usage("--confidence must lie in (0, 1)"));
            }
            let est = eval_policy_mc(&model, &policy, episodes, args.seed, args.confidence);
            println!(
                "value {} method mc half_width {} episodes {} confidence {}",
                est.mean, est.half_width, est.samples, est.confidence
            );
        }
    }
    Ok(())
}

fn run_gamma(args: &GammaArgs, format: &str) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let method = match args.method.as_str() {
        "exact" => {
            if model.num_states > MAX_EXACT_STATES {
                return Err(Failure::domain(
                    "observability",
                    format!(
                        "exact method supports at most {MAX_EXACT_STATES} states; use --method mc"
                    ),
                ));
            }
            ReportMethod::Exact
        }
        _ => ReportMethod::McUpper {
            samples: args.samples,
            seed: args.seed,
        },
    };
    let report = observability_report(&model, method)
        .map_err(|e| Failure::domain("observability", e.to_string()))?;
    let mut table = String::new();
    if format == "csv" {
        table.push_str("h,gamma,method,weak_gamma,weak_x,weak_y\n");
        for s in &report.per_step {
            table.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.h, s.gamma, s.method, s.weak_gamma, s.weak_pair.0, s.weak_pair.1
            ));
        }
        table.push_str(&format!(
            "pomdp,{},{},,,\n",
            report.pomdp_gamma,
            if report.is_upper_bound { "upper-bound" } else { "exact" }
        ));
    } else {
        table.push_str(&format!(
            "{:>4}  {:>22}  {:>11}  {:>22}  {:>10}\n",
            "h", "gamma", "method", "weak_gamma", "weak_pair"
        ));
        for s in &report.per_step {
            table.push_str(&format!(
                "{:>4}  {:>22}  {:>11}  {:>22}  {:>10}\n",
                s.h,
                format!("{:.12}", s.gamma),
                s.method.to_string(),
                format!("{:.12}", s.weak_gamma),
                format!("({},{})", s.weak_pair.0, s.weak_pair.1)
            ));
        }
        table.push_str(&format!(
            "pomdp_gamma {}{}\n",
            report.pomdp_gamma,
            if report.is_upper_bound { " (upper bound)" } else { "" }
        ));
    }
    print!("{table}");
    if let Some(out) = &args.out {
        write_file(out, &table)?;
        write_manifest(
            out,
            "gamma",
            &[&args.model],
            json!({
                "method": args.method,
                "samples": args.samples,
                "seed": args.seed,
                "pomdp_gamma": report.pomdp_gamma,
            }),
        )?;
    }
    Ok(())
}

fn run_contract(args: &ContractArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let policy = parse_curve_policy(&args.policy)?;
    let method = if args.method == "mc" {
        CurveMethod::Mc
    } else {
        CurveMethod::ExactTree
    };
    let curve = contraction_curve(
        &model,
        &policy,
        args.anchor,
        args.tmax,
        args.trials,
        args.seed,
        method,
        args.budget,
    )
    .map_err(|e| match e {
        pomdp::lab::LabError::Budget(b) => budget_failure(b),
        other => Failure::domain("lab", other.to_string()),
    })?;
    let mut csv = String::from("t,mean_l1,stderr,trials\n");
    for p in &curve.points {
        csv.push_str(&format!("{},{},{},{}\n", p.t, p.mean_l1, p.stderr, p.trials));
    }
    write_file(&args.out, &csv)?;
    write_manifest(
        &args.out,
        "contract",
        &[&args.model],
        json!({
            "anchor": args.anchor,
            "tmax": args.tmax,
            "trials": args.trials,
            "seed": args.seed,
            "method": args.method,
            "policy": curve.policy,
            "gamma": if curve.gamma.is_nan() { serde_json::Value::Null } else { json!(curve.gamma) },
        }),
    )?;
    println!(
        "contraction curve written to {} (gamma {}, {} points)",
        args.out.display(),
        curve.gamma,
        curve.points.len()
    );
    Ok(())
}

fn run_check(args: &CheckArgs) -> Result<(), Failure> {
    let report = contraction_inequality_suite(args.seed, args.trials);
    for r in &report.reports {
        let status = if r.violations.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "{status} {} ({} trials, {} violations)",
            r.name,
            r.trials_checked,
            r.violations.len()
        );
    }
    let demo = if args.demo {
        let d = divergence_increase_demo(args.eps)
            .map_err(|e| Failure::domain("lab", e.to_string()))?;
        println!(
            "demo: kl_before {} kl_after {} increased {} ratio_spread {}",
            d.kl_before, d.kl_after, d.increased, d.ratio_spread
        );
        Some(d)
    } else {
        None
    };
    if let Some(out) = &args.out {
        let body = json!({ "suite": report, "demo": demo });
        write_file(out, &serde_json::to_string_pretty(&body).unwrap())?;
        write_manifest(
            out,
            "check",
            &[],
            json!({ "trials": args.trials, "seed": args.seed, "demo": args.demo, "eps": args.eps }),
        )?;
    }
    Ok(())
}

fn run_gen(args: &GenArgs) -> Result<(), Failure> {
    let gen_fail = |e: pomdp::gen::GenError| match &e {
        pomdp::gen::GenError::SizeBudgetExceeded { .. } => budget_failure(e),
        _ => Failure::domain("generate", e.to_string()),
    };
    let read_cnf = || -> Result<pomdp::gen::CnfFormula, Failure> {
        let path = args
            .cnf
            .as_ref()
            .ok_or_else(|| Failure::usage("--cnf is required for this generator"))?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::domain("io", format!("{}: {e}", path.display())))?;
        parse_dimacs(&text).map_err(gen_fail)
    };
    let (model, metadata): (Pomdp, serde_json::Value) = match args.kind.as_str() {
        "sat" => {
            let formula = read_cnf()?;
            let params = SatHardParams {
                gamma: args.gamma.ok_or_else(|| Failure::usage("--gamma is required for sat"))?,
                trial_count: args.trials,
                block_size: args.block_size,
                steps_per_trial: args.steps_per_trial,
            };
            let (m, meta) = gen_sat_hard(&formula, &params, args.budget).map_err(gen_fail)?;
            (m, serde_json::to_value(meta).unwrap())
        }
        "hadamard" => {
            let formula = read_cnf()?;
            let (m, meta) = gen_hadamard_sat(&formula, args.budget).map_err(gen_fail)?;
            (m, serde_json::to_value(meta).unwrap())
        }
        "contraction-lb" => {
            let gamma = args
                .gamma
                .ok_or_else(|| Failure::usage("--gamma is required for contraction-lb"))?;
            let horizon = args
                .horizon
                .ok_or_else(|| Failure::usage("--horizon is required for contraction-lb"))?;
            let m = gen_contraction_lb(gamma, horizon).map_err(gen_fail)?;
            (m, json!({ "gamma": gamma, "horizon": horizon, "gamma_exact": 2.0 * gamma }))
        }
        "random" => {
            let s = args.n.ok_or_else(|| Failure::usage("--n (states) is required for random"))?;
            let a = args.actions.unwrap_or(2);
            let horizon = args
                .horizon
                .ok_or_else(|| Failure::usage("--horizon is required for random"))?;
            let gamma = args
                .gamma
                .ok_or_else(|| Failure::usage("--gamma is required for random"))?;
            let m = gen_random_observable(s, a, horizon, gamma, args.seed).map_err(gen_fail)?;
            (
                m,
                json!({ "states": s, "actions": a, "horizon": horizon, "gamma": gamma, "seed": args.seed }),
            )
        }
        other => {
            let Some(name) = other.strip_prefix("example:") else {
                return Err(Failure::usage(format!(
                    "unknown generator {other}; expected sat, hadamard, contraction-lb, random, or example:<name>"
                )));
            };
            let name: ExampleName = name.parse().map_err(gen_fail)?;
            let defaults = ExampleParams::default();
            let params = ExampleParams {
                m: args.m.unwrap_or(defaults.m),
                eps: args.eps.unwrap_or(defaults.eps),
                gamma: args.gamma.unwrap_or(defaults.gamma),
                states: args.n.unwrap_or(defaults.states),
            };
            let (m, meta) = gen_example(name, &params).map_err(gen_fail)?;
            (m, serde_json::to_value(meta).unwrap())
        }
    };
    save(&model, &args.out).map_err(model_failure)?;
    write_manifest(&args.out, "gen", &[], json!({ "kind": args.kind, "metadata": metadata }))?;
    println!(
        "wrote {} (S={}, A={}, O={}, H={})",
        args.out.display(),
        model.num_states,
        model.num_actions,
        model.num_observations,
        model.horizon
    );
    Ok(())
}

fn run_compare(args: &CompareArgs, format: &str) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let windows: Result<Vec<usize>, _> =
        args.windows.split(',').map(|s| s.trim().parse::<usize>()).collect();
    let windows = windows.map_err(|_| Failure::usage(format!("bad --windows {}", args.windows)))?;
    if windows.is_empty() {
        return Err(Failure::usage("--windows needs at least one length"));
    }
    let rows = suboptimality_report(
        &model,
        &windows,
        args.budget,
        args.exact_budget,
        args.mc_episodes,
        args.seed,
    );
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("l,value_estimate,policy_value,policy_value_method,v_star,gap,error\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.l,
            fmt_opt(r.value_estimate),
            fmt_opt(r.policy_value),
            r.policy_value_method,
            fmt_opt(r.v_star),
            fmt_opt(r.gap),
            r.error.clone().unwrap_or_default()
        ));
    }
    write_file(&args.out, &csv)?;
    write_manifest(
        &args.out,
        "compare",
        &[&args.model],
        json!({
            "windows": windows,
            "budget": args.budget,
            "exact_budget": args.exact_budget,
            "mc_episodes": args.mc_episodes,
            "seed": args.seed,
        }),
    )?;
    if format == "csv" {
        print!("{csv}");
    } else {
        println!(
            "{:>4}  {:>22}  {:>22}  {:>7}  {:>22}  {:>22}",
            "L", "value_estimate", "policy_value", "method", "v_star", "gap"
        );
        for r in &rows {
            println!(
                "{:>4}  {:>22}  {:>22}  {:>7}  {:>22}  {:>22}",
                r.l,
                fmt_opt(r.value_estimate),
                fmt_opt(r.policy_value),
                r.policy_value_method,
                fmt_opt(r.v_star),
                fmt_opt(r.gap)
            );
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Plan(args) => run_plan(args),
        Command::Exact(args) => run_exact(args),
        Command::Eval(args) => run_eval(args),
        Command::Gamma(args) => run_gamma(args, &cli.format),
        Command::Contract(args) => run_contract(args),
        Command::Check(args) => run_check(args),
        Command::Gen(args) => run_gen(args),
        Command::Compare(args) => run_compare(args, &cli.format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            if e.use_stderr() {
                eprintln!(
                    "{}",
                    json!({ "error": "usage", "message": e.to_string() })
                );
                return ExitCode::from(1);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("{}", json!({ "error": "usage", "message": "--threads must be >= 1" }));
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("{}", json!({ "error": "internal", "message": e.to_string() }));
            return ExitCode::from(3);
        }
    }
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(f.code)
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal assertion failed".into());
            let f = Failure::internal(message);
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(f.code)
        }
    }
}
