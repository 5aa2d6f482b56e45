use std::path::PathBuf;

use clap::Args;
use dataplace_core::auction::{build_primal, certify_bound, cs_audit, run_auction, CsFinding};
use dataplace_core::duality::{ne_quality_bound, solve_dual, SolveConfig};
use dataplace_core::exact::{exact_tv_curve, fast_mixing_beta, mixing_bound, mixing_time_bound};
use dataplace_core::experiment::run_suite;
use dataplace_core::glauber::{
    best_response_dynamics, estimate_mixing, replica_rng, run, GlauberConfig, InitialState,
    MixingConfig,
};
use dataplace_core::{
    brute_force_optimum, gen_random, player_cost, potential, reduce_to_unit_cache, Allocation,
    Error, GenParams, Instance,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::line;
use crate::output::{
    one_based, provenance, stdout_csv, write_csv, write_json, write_text, CliError, Context,
};
use crate::{Format, Input};

/// The instance a command works on. Agents with larger caches are split
/// into unit-cache copies first.
struct Loaded {
    inst: Instance,
    reduced_from: Option<usize>,
}

fn load_unit(path: &PathBuf) -> Result<Loaded, CliError> {
    let inst = Instance::load(path)?;
    if inst.cache_sizes.iter().all(|&u| u == 1) {
        return Ok(Loaded {
            inst,
            reduced_from: None,
        });
    }
    let n = inst.n;
    Ok(Loaded {
        inst: reduce_to_unit_cache(&inst)?.into_instance(),
        reduced_from: Some(n),
    })
}

impl Loaded {
    fn note(&self, buf: &mut String) {
        if let Some(n) = self.reduced_from {
            line!(
                buf,
                "note: {n} agents reduced to {} unit-cache agents",
                self.inst.n
            );
        }
    }
}

/// Brute-force optimum when the state space is small enough.
fn try_optimum(inst: &Instance) -> Result<Option<f64>, CliError> {
    match brute_force_optimum(inst) {
        Ok(o) => Ok(Some(o.value)),
        Err(Error::StateSpaceTooLarge { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn parse_alloc(s: &str, inst: &Instance) -> Result<Allocation, CliError> {
    let x = Allocation::parse(s, inst.k)?;
    if x.len() != inst.n {
        return Err(CliError::Usage(format!(
            "allocation lists {} agents, instance has {}",
            x.len(),
            inst.n
        )));
    }
    Ok(x)
}

fn opt_f64(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    cost_min: f64,
    #[arg(long, default_value_t = 10.0)]
    cost_max: f64,
    #[arg(long, default_value_t = 0.0)]
    demand_min: f64,
    #[arg(long, default_value_t = 1.0)]
    demand_max: f64,
    #[arg(long, default_value_t = 0.0)]
    fee_min: f64,
    #[arg(long, default_value_t = 1.0)]
    fee_max: f64,
    #[arg(long, default_value_t = 1)]
    cache_min: u32,
    #[arg(long, default_value_t = 1)]
    cache_max: u32,
    /// Output file; the instance is printed when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn generate(ctx: &Context, a: GenerateArgs) -> Result<(), CliError> {
    let params = GenParams {
        n: a.n,
        k: a.k,
        cost_range: (a.cost_min, a.cost_max),
        demand_range: (a.demand_min, a.demand_max),
        fee_range: (a.fee_min, a.fee_max),
        cache_range: (a.cache_min, a.cache_max),
    };
    let inst = gen_random(a.seed, &params)?;
    let prov = provenance("generate", Some(a.seed), json!(params));
    let text = inst.to_json_string();
    match &a.output {
        Some(path) => {
            write_text(path, &text)?;
            ctx.emit(
                &prov,
                json!({ "output": path, "n": inst.n, "k": inst.k }),
                || {
                    format!(
                        "wrote {} (n = {}, k = {}, total cache = {})",
                        path.display(),
                        inst.n,
                        inst.k,
                        inst.total_cache()
                    )
                },
            );
        }
        None => {
            let value: Value = serde_json::from_str(&text).expect("valid JSON");
            match ctx.format {
                Format::Json => ctx.emit(&prov, value, String::new),
                Format::Human => {
                    ctx.emit(&prov, Value::Null, String::new);
                    print!("{text}");
                }
            }
        }
    }
    Ok(())
}

pub fn validate(ctx: &Context, a: Input) -> Result<(), CliError> {
    let prov = provenance("validate", None, json!({ "input": a.input }));
    match Instance::load(&a.input) {
        Ok(inst) => {
            ctx.emit(
                &prov,
                json!({ "valid": true, "n": inst.n, "k": inst.k,
                        "total_cache": inst.total_cache(),
                        "empty_set_distance": inst.empty_set_distance }),
                || {
                    format!(
                        "valid: {} agents, {} resources, total cache {}, empty-set distance {}",
                        inst.n,
                        inst.k,
                        inst.total_cache(),
                        inst.empty_set_distance
                    )
                },
            );
            Ok(())
        }
        Err(Error::Invalid(violations)) => {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            ctx.emit(&prov, json!({ "valid": false, "violations": list }), || {
                let mut buf = String::from("invalid instance:\n");
                for v in &list {
                    line!(buf, "  - {v}");
                }
                buf
            });
            Err(CliError::Reported(1))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

pub fn reduce(ctx: &Context, a: ReduceArgs) -> Result<(), CliError> {
    let inst = Instance::load(&a.input)?;
    let unit = reduce_to_unit_cache(&inst)?;
    write_text(&a.output, &unit.instance().to_json_string())?;
    let origins: Vec<usize> = unit.origins().iter().map(|o| o + 1).collect();
    let prov = provenance(
        "reduce",
        None,
        json!({ "input": a.input, "output": a.output }),
    );
    ctx.emit(
        &prov,
        json!({ "agents": unit.n, "origin": origins }),
        || {
            format!(
                "wrote {}: {} agents became {} unit-cache agents",
                a.output.display(),
                inst.n,
                unit.n
            )
        },
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct AllocArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Resource per agent, 1-indexed and comma separated.
    #[arg(long)]
    alloc: String,
}

pub fn eval(ctx: &Context, a: AllocArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let x = parse_alloc(&a.alloc, inst)?;
    let phi = potential(inst, &x);
    let costs: Vec<f64> = (0..inst.n).map(|i| player_cost(inst, &x, i)).collect();
    let holders: Vec<Vec<usize>> = x
        .holders(inst.k)
        .into_iter()
        .map(|h| h.into_iter().map(|i| i + 1).collect())
        .collect();
    let prov = provenance("eval", None, json!({ "input": a.input, "alloc": a.alloc }));
    ctx.emit(
        &prov,
        json!({ "potential": phi, "player_costs": costs, "holders": holders }),
        || {
            let mut buf = String::new();
            loaded.note(&mut buf);
            line!(buf, "potential: {phi:.6}");
            line!(buf, "{:>6} {:>9} {:>12}", "agent", "resource", "cost");
            for (i, c) in costs.iter().enumerate() {
                line!(buf, "{:>6} {:>9} {:>12.6}", i + 1, x.get(i) + 1, c);
            }
            for (l, h) in holders.iter().enumerate() {
                line!(buf, "resource {}: {:?}", l + 1, h);
            }
            buf
        },
    );
    Ok(())
}

pub fn brute(ctx: &Context, a: Input) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let opt = brute_force_optimum(&loaded.inst)?;
    let optima: Vec<String> = opt.optima.iter().map(ToString::to_string).collect();
    let prov = provenance("brute", None, json!({ "input": a.input }));
    ctx.emit(
        &prov,
        json!({ "optimum": opt.value, "allocation": opt.allocation.to_string(), "optima": optima }),
        || {
            let mut buf = String::new();
            loaded.note(&mut buf);
            line!(buf, "optimum: {:.6}", opt.value);
            line!(buf, "allocation: {}", opt.allocation);
            if optima.len() > 1 {
                line!(buf, "{} optimal allocations", optima.len());
            }
            buf
        },
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ChainArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Noise parameter; defaults to the fast-mixing level.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    tmax: usize,
    /// CSV output; printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CurveRow {
    t: usize,
    d_t: f64,
    bound_n_exp: f64,
}

pub fn chain(ctx: &Context, a: ChainArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let beta = a.beta.unwrap_or_else(|| fast_mixing_beta(inst));
    let curve = exact_tv_curve(inst, beta, a.tmax)?;
    let rows = curve.iter().enumerate().map(|(t, &d)| CurveRow {
        t,
        d_t: d,
        bound_n_exp: mixing_bound(inst.n, t as f64),
    });
    let t_quarter = curve.iter().position(|&d| d <= 0.25);
    let prov = provenance(
        "chain",
        None,
        json!({ "input": a.input, "beta": beta, "tmax": a.tmax, "out": a.out }),
    );
    match &a.out {
        Some(path) => write_csv(path, rows)?,
        None => {
            ctx.emit(&prov, Value::Null, String::new);
            return stdout_csv(rows);
        }
    }
    ctx.emit(
        &prov,
        json!({ "beta": beta, "t_quarter": t_quarter, "bound_t_quarter": mixing_time_bound(inst.n, 0.25) }),
        || {
            let mut buf = String::new();
            loaded.note(&mut buf);
            line!(buf, "beta: {beta}");
            match t_quarter {
                Some(t) => line!(buf, "d(t) <= 1/4 from t = {t}"),
                None => line!(buf, "d(t) > 1/4 up to t = {}", a.tmax),
            }
            line!(buf, "coupling bound gives t <= {}", mixing_time_bound(inst.n, 0.25));
            buf
        },
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct GlauberArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting allocation; uniform at random when omitted.
    #[arg(long)]
    init: Option<String>,
    /// Trace CSV with one row per recorded step.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every `stride`-th step in the trace.
    #[arg(long, default_value_t = 1)]
    stride: u64,
}

#[derive(Serialize)]
struct TraceRow {
    t: u64,
    player: Option<usize>,
    old: Option<usize>,
    new: Option<usize>,
    phi: f64,
}

pub fn glauber(ctx: &Context, a: GlauberArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let mut cfg = GlauberConfig::new(a.beta, a.steps, a.seed);
    if let Some(s) = &a.init {
        cfg.init = InitialState::Explicit(parse_alloc(s, inst)?);
    }
    cfg.stride = if a.trace.is_some() {
        a.stride.max(1)
    } else {
        0
    };
    let trace = run(inst, &cfg)?;
    if let Some(path) = &a.trace {
        write_csv(
            path,
            trace.records.iter().map(|r| TraceRow {
                t: r.t,
                player: r.step.map(|s| s.player + 1),
                old: r.step.map(|s| s.old + 1),
                new: r.step.map(|s| s.new + 1),
                phi: r.phi,
            }),
        )?;
    }
    let initial_phi = potential(inst, &trace.initial);
    let prov = provenance(
        "glauber",
        Some(a.seed),
        json!({ "input": a.input, "beta": a.beta, "steps": a.steps, "init": a.init,
                "trace": a.trace, "stride": a.stride }),
    );
    ctx.emit(
        &prov,
        json!({ "initial": trace.initial.to_string(), "initial_phi": initial_phi,
                "final": trace.final_state.to_string(), "final_phi": trace.final_phi,
                "best": trace.best_state.to_string(), "best_phi": trace.best_phi }),
        || {
            let mut buf = String::new();
            loaded.note(&mut buf);
            line!(buf, "seed: {}", a.seed);
            line!(
                buf,
                "initial: {} (potential {:.6})",
                trace.initial,
                initial_phi
            );
            line!(
                buf,
                "final:   {} (potential {:.6})",
                trace.final_state,
                trace.final_phi
            );
            line!(
                buf,
                "best:    {} (potential {:.6})",
                trace.best_state,
                trace.best_phi
            );
            buf
        },
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct BestResponseArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting allocation; uniform at random when omitted.
    #[arg(long)]
    init: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
}

pub fn best_response(ctx: &Context, a: BestResponseArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let start = match &a.init {
        Some(s) => parse_alloc(s, inst)?,
        None => Allocation::uniform_random(inst.n, inst.k, &mut replica_rng(a.seed, 0)),
    };
    let out = best_response_dynamics(inst, &start, a.max_sweeps)?;
    let phi = potential(inst, &out.allocation);
    let prov = provenance(
        "bestresponse",
        Some(a.seed),
        json!({ "input": a.input, "init": a.init, "max_sweeps": a.max_sweeps }),
    );
    ctx.emit(
        &prov,
        json!({ "start": start.to_string(), "equilibrium": out.allocation.to_string(),
                "potential": phi, "moves": out.moves, "sweeps": out.sweeps }),
        || {
            let mut buf = String::new();
            loaded.note(&mut buf);
            line!(buf, "seed: {}", a.seed);
            line!(buf, "start:       {start}");
            line!(buf, "equilibrium: {}", out.allocation);
            line!(buf, "potential:   {phi:.6}");
            line!(buf, "{} moves in {} sweeps", out.moves, out.sweeps);
            buf
        },
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct MixArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Noise parameter; defaults to the fast-mixing level.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    /// Random starting pairs besides the adversarial one.
    #[arg(long, default_value_t = 4)]
    pairs: usize,
    #[arg(long, default_value_t = 100_000)]
    tmax: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn mix(ctx: &Context, a: MixArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let beta = a.beta.unwrap_or_else(|| fast_mixing_beta(inst));
    let cfg = MixingConfig {
        beta,
        eps: a.eps,
        replicas: a.replicas,
        random_pairs: a.pairs,
        t_max: a.tmax,
        seed: a.seed,
    };
    let est = estimate_mixing(inst, &cfg)?;
    let bound = mixing_time_bound(inst.n, a.eps);
    let prov = provenance(
        "mix",
        Some(a.seed),
        json!({ "input": a.input, "beta": beta, "eps": a.eps, "replicas": a.replicas,
                "pairs": a.pairs, "tmax": a.tmax }),
    );
    ctx.emit(
        &prov,
        json!({ "t_mix": est.t_mix, "coupling_bound": bound }),
        || {
            let mut buf = String::new();
            loaded.note(&mut buf);
            line!(buf, "seed: {}", a.seed);
            line!(buf, "beta: {beta}");
            match est.t_mix {
                Some(t) => line!(buf, "estimated mixing time (eps = {}): {t}", a.eps),
                None => line!(buf, "not mixed within {} steps", a.tmax),
            }
            line!(buf, "bound at the fast-mixing level: {bound}");
            buf
        },
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct DualArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = SolveConfig::default().max_iters)]
    iters: usize,
    /// Random starting prices; zero prices when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = SolveConfig::default().tol)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn solve(
    inst: &Instance,
    iters: usize,
    seed: Option<u64>,
    tol: f64,
) -> Result<dataplace_core::duality::DualOutcome, CliError> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::Usage(format!(
            "tolerance must be nonnegative, got {tol}"
        )));
    }
    let cfg = SolveConfig {
        max_iters: iters,
        seed,
        tol,
        reference: try_optimum(inst)?,
        ..SolveConfig::default()
    };
    Ok(solve_dual(inst, &cfg)?)
}

pub fn dual(ctx: &Context, a: DualArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let out = solve(inst, a.iters, a.seed, a.tol)?;
    let sol = &out.solution;
    let y: Vec<Value> = out.assignment.iter().map(|&l| one_based(l)).collect();
    let body = json!({
        "beta": sol.beta, "alpha": sol.alpha, "y": y, "objective": sol.objective,
        "iterations": out.iterations, "upper_bound": out.upper_bound,
        "certified_gap": out.certified_gap, "tolerance_met": out.tolerance_met,
        "feasibility_residual": sol.feasibility_residual(inst),
        "optimum": out.reference_gap.map(|g| g + sol.objective),
    });
    let prov = provenance(
        "dual",
        a.seed,
        json!({ "input": a.input, "iters": a.iters, "tol": a.tol }),
    );
    if let Some(path) = &a.out {
        write_json(path, &prov, body.clone())?;
    }
    ctx.emit(&prov, body, || {
        let mut buf = String::new();
        loaded.note(&mut buf);
        line!(
            buf,
            "seed: {}",
            a.seed
                .map_or("none (zero start)".to_string(), |s| s.to_string())
        );
        line!(buf, "dual value:   {:.9}", sol.objective);
        line!(buf, "upper bound:  {:.9}", out.upper_bound);
        line!(buf, "iterations:   {}", out.iterations);
        line!(
            buf,
            "tolerance:    {}",
            if out.tolerance_met { "met" } else { "not met" }
        );
        if let Some(g) = out.reference_gap {
            line!(
                buf,
                "optimum:      {:.9} (gap {:.3e})",
                g + sol.objective,
                g
            );
        }
        buf
    });
    Ok(())
}

pub fn nebound(ctx: &Context, a: AllocArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let x = parse_alloc(&a.alloc, inst)?;
    let report = ne_quality_bound(inst, &x, try_optimum(inst)?)?;
    let prov = provenance(
        "nebound",
        None,
        json!({ "input": a.input, "alloc": a.alloc }),
    );
    ctx.emit(&prov, json!(report), || {
        let mut buf = String::new();
        loaded.note(&mut buf);
        line!(buf, "potential at equilibrium: {:.6}", report.phi);
        line!(buf, "optimum:                  {}", opt_f64(report.optimum));
        line!(buf, "bound:                    {}", opt_f64(report.bound));
        line!(
            buf,
            "bound, fee dropped:       {}",
            opt_f64(report.bound_drop_fee)
        );
        line!(
            buf,
            "certificate value:        {:.6}",
            report.certificate_objective
        );
        line!(
            buf,
            "{:>6} {:>14} {:>14}",
            "agent",
            "evacuated",
            "fee dropped"
        );
        for (j, (e, d)) in report
            .evacuated
            .iter()
            .zip(&report.evacuated_drop_fee)
            .enumerate()
        {
            line!(buf, "{:>6} {:>14.6} {:>14.6}", j + 1, e, d);
        }
        if report.violated {
            line!(buf, "VIOLATED: potential exceeds the bound");
        }
        buf
    });
    Ok(())
}

#[derive(Args, Debug)]
pub struct AuctionArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = SolveConfig::default().max_iters)]
    iters: usize,
    /// Random starting prices for the dual solve; zero when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = SolveConfig::default().tol)]
    tol: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn finding_json(f: &CsFinding) -> Value {
    match *f {
        CsFinding::PriceMismatch {
            item,
            resource,
            alpha,
            surplus,
        } => json!({
            "kind": "price_mismatch", "item": item + 1, "resource": resource + 1,
            "alpha": alpha, "surplus": surplus }),
        CsFinding::PricedUnsold { item, alpha } => json!({
            "kind": "priced_unsold", "item": item + 1, "alpha": alpha }),
        CsFinding::SlackItem { item } => json!({ "kind": "slack_item", "item": item + 1 }),
        CsFinding::Uncovered { resource } => {
            json!({ "kind": "uncovered", "resource": resource + 1 })
        }
        CsFinding::Underpriced {
            client,
            resource,
            holder,
            beta,
            cost,
        } => json!({
            "kind": "underpriced", "client": client + 1, "resource": resource + 1,
            "holder": holder + 1, "beta": beta, "cost": cost }),
    }
}

pub fn auction(ctx: &Context, a: AuctionArgs) -> Result<(), CliError> {
    let loaded = load_unit(&a.input)?;
    let inst = &loaded.inst;
    let out = solve(inst, a.iters, a.seed, a.tol)?;
    let optimum = out.reference_gap.map(|g| g + out.solution.objective);
    let auc = run_auction(inst, &out.solution)?;
    let primal = build_primal(inst, &auc);
    let cert = certify_bound(inst, &auc, &primal, optimum);
    let audit = cs_audit(inst, &primal, &out.solution);
    let winners: Vec<Value> = auc.winners.iter().map(|&l| one_based(l)).collect();
    let bundles: Vec<Vec<usize>> = auc
        .bundles
        .iter()
        .map(|b| b.iter().map(|i| i + 1).collect())
        .collect();
    let uncovered: Vec<usize> = primal.uncovered.iter().map(|l| l + 1).collect();
    let findings: Vec<Value> = audit.findings.iter().map(finding_json).collect();
    let body = json!({
        "dual": { "beta": out.solution.beta, "objective": out.solution.objective,
                  "iterations": out.iterations, "tolerance_met": out.tolerance_met,
                  "certified_gap": out.certified_gap },
        "bids": auc.bids, "winners": winners, "payments": auc.payments,
        "bundles": bundles, "utilities": auc.utilities,
        "social_welfare": auc.social_welfare, "revenue": auc.revenue,
        "gamma": auc.gamma, "factor": auc.factor,
        "primal": { "cost": primal.cost, "access_cost": primal.access_cost,
                    "fee_cost": primal.fee_cost, "uncovered": uncovered },
        "bound": { "within_hypothesis": cert.within_hypothesis, "holds": cert.bound_holds,
                   "optimum": optimum, "ratio_to_optimum": cert.ratio_to_optimum,
                   "ratio_holds": cert.ratio_holds, "factor_from_gamma": cert.factor_from_gamma },
        "cs_audit": { "findings": findings, "gap": audit.gap,
                      "identity_residual": audit.identity_residual,
                      "conditions_hold": audit.conditions_hold,
                      "identity_holds": audit.identity_holds },
    });
    let prov = provenance(
        "auction",
        a.seed,
        json!({ "input": a.input, "iters": a.iters, "tol": a.tol }),
    );
    if let Some(path) = &a.report {
        write_json(path, &prov, body.clone())?;
    }
    ctx.emit(&prov, body, || {
        let mut buf = String::new();
        loaded.note(&mut buf);
        line!(
            buf,
            "dual value {:.6} after {} iterations (tolerance {})",
            out.solution.objective,
            out.iterations,
            if out.tolerance_met { "met" } else { "not met" }
        );
        line!(buf, "{:>5} {:>8} {:>12}", "item", "winner", "payment");
        for (i, w) in auc.winners.iter().enumerate() {
            let w = w.map_or("unsold".to_string(), |l| (l + 1).to_string());
            line!(buf, "{:>5} {:>8} {:>12.6}", i + 1, w, auc.payments[i]);
        }
        line!(
            buf,
            "cost {:.6}, welfare {:.6}, revenue {:.6}",
            primal.cost,
            auc.social_welfare,
            auc.revenue
        );
        line!(
            buf,
            "gamma {}, factor {}",
            opt_f64(auc.gamma),
            opt_f64(auc.factor)
        );
        if !cert.within_hypothesis {
            line!(buf, "fees are nonzero: the cost bound is not claimed");
        }
        line!(buf, "cost <= welfare + revenue: {}", cert.bound_holds);
        if let Some(r) = cert.ratio_to_optimum {
            line!(buf, "cost / optimum = {r:.6}");
        }
        line!(
            buf,
            "slackness audit: {} findings, gap {:.6}, residual {:.2e}",
            audit.findings.len(),
            audit.gap,
            audit.identity_residual
        );
        buf
    });
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Suite to run; only `acceptance` exists.
    #[arg(long, default_value = "acceptance")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// JSON summary file.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn experiment(ctx: &Context, a: ExperimentArgs) -> Result<(), CliError> {
    if a.suite != "acceptance" {
        return Err(CliError::Usage(format!(
            "unknown suite '{}'; expected 'acceptance'",
            a.suite
        )));
    }
    let results = run_suite(a.seed);
    let rows: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({ "id": r.id, "title": r.title, "passed": r.passed, "detail": r.detail,
                    "elapsed_s": r.elapsed.as_secs_f64(), "limit_s": r.limit.as_secs() })
        })
        .collect();
    let passed = results.iter().filter(|r| r.passed).count();
    let body = json!({ "criteria": rows, "passed": passed, "total": results.len() });
    let prov = provenance("experiment", Some(a.seed), json!({ "suite": a.suite }));
    if let Some(path) = &a.out {
        write_json(path, &prov, body.clone())?;
    }
    ctx.emit(&prov, body, || {
        let mut buf = String::new();
        for r in &results {
            line!(buf, "{r}");
        }
        line!(buf, "{passed}/{} criteria passed", results.len());
        buf
    });
    Ok(())
}
