use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use adsat_core::adversary::AnnealError;
use adsat_core::bp::{bethe_entropy, factorized_regular_bp, run_bp, BpError, FactorizedConfig, FactorizedPattern};
use adsat_core::exact::{brute_force_count, empirical_ldf, CountError, EldfOptions};
use adsat_core::formula::{assign_negations, generate_regular, to_dimacs};
use adsat_core::ldev::{default_x_grid, ldf_curve, LdevError};
use adsat_core::rng::{derive_seed, derive_seed_path};
use adsat_core::sp::{balanced_scan_point, complexity, locate_crossing, run_sp_dual, SpConfig, SpState};
use adsat_core::{
    anneal as run_anneal, count_models, ps_experiment, AcceptanceRule, AnnealConfig, BpConfig, CountLimits, Ensemble,
    NegationMode, PopDynConfig, Status,
};

use crate::artifact::{csv_document, fmt_opt, json_document, Sink, VERSION};
use crate::{
    AnnealParams, BpArgs, CliError, CountArgs, EldfArgs, GenArgs, InstanceFormat, LdevArgs, PsArgs, RuleArg, SpArgs,
    SpScanArgs, Table1Args,
};

pub struct Context {
    pub sink: Sink,
    pub strict: bool,
}

impl Context {
    /// Reports a degenerate run: a warning, or exit status 3 under `--strict`.
    fn flag(&self, issues: Vec<String>) -> Result<(), CliError> {
        if issues.is_empty() {
            return Ok(());
        }
        let msg = issues.join("; ");
        if self.strict {
            Err(CliError::Degenerate(msg))
        } else {
            eprintln!("adsat: warning: {msg}");
            Ok(())
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn check_damping(d: f64) -> Result<(), CliError> {
    ensure((0.0..1.0).contains(&d), || format!("--damping must lie in [0, 1), got {d}"))
}

fn check_tol(t: f64) -> Result<(), CliError> {
    ensure(t > 0.0, || format!("--tol must be > 0, got {t}"))
}

fn count_err(e: CountError) -> CliError {
    match e {
        CountError::Timeout { .. } => CliError::Run(e.to_string()),
        _ => config_err(e),
    }
}

fn anneal_err(e: AnnealError) -> CliError {
    match e {
        AnnealError::Count(c) => count_err(c),
        _ => config_err(e),
    }
}

fn ldev_err(e: LdevError) -> CliError {
    config_err(e)
}

fn timeout(secs: Option<f64>) -> Result<Option<Duration>, CliError> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|_| CliError::Config(format!("--timeout: invalid value {s}"))))
        .transpose()
}

pub fn gen(ctx: &Context, a: &GenArgs) -> Result<(), CliError> {
    let inst = a.graph.resolve()?;
    let config = json!({ "args": a });
    let (name, text) = match a.format {
        InstanceFormat::Json => {
            let mut v: Value = serde_json::from_str(&inst.to_json()).expect("instance json");
            v["generated_by"] = json!({ "version": VERSION, "command": "gen", "config": config });
            ("instance.json", serde_json::to_string_pretty(&v).expect("instance json") + "\n")
        }
        InstanceFormat::Dimacs => (
            "instance.cnf",
            format!(
                "c adsat {VERSION}\nc command: gen\nc config: {config}\n{}",
                to_dimacs(&inst.graph, &inst.negations)
            ),
        ),
    };
    let path = ctx.sink.write(name, &text)?;
    let g = &inst.graph;
    println!("N={} M={} K={} -> {}", g.n_vars(), g.n_clauses(), g.clause_size(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct BpReport {
    n_vars: usize,
    n_clauses: usize,
    status: Status,
    sweeps: usize,
    max_change: f64,
    entropy: Option<f64>,
    averaged_entropy: Option<f64>,
}

pub fn bp(ctx: &Context, a: &BpArgs) -> Result<(), CliError> {
    check_damping(a.damping)?;
    check_tol(a.tol)?;
    let inst = a.graph.resolve()?;
    let cfg = BpConfig {
        damping: a.damping,
        tol: a.tol,
        max_sweeps: a.max_sweeps,
        seed: derive_seed(a.graph.seed, 2),
        average_window: a.average_window,
    };
    let (g, j) = (&inst.graph, &inst.negations);
    let st = run_bp(g, j, &cfg);
    let entropy = bethe_entropy(g, j, &st).ok();
    let report = BpReport {
        n_vars: g.n_vars(),
        n_clauses: g.n_clauses(),
        status: st.status,
        sweeps: st.sweeps,
        max_change: st.max_change,
        entropy,
        averaged_entropy: st.averaged_entropy,
    };
    let path = ctx.sink.write("bp.json", &json_document("bp", &json!({ "args": a, "bp": cfg }), &report))?;
    println!("status={} sweeps={} s={} -> {}", st.status, st.sweeps, fmt_opt(entropy), path.display());
    let mut issues = Vec::new();
    if st.status != Status::Converged {
        issues.push(format!("BP {} after {} sweeps", st.status, st.sweeps));
    }
    if st.status != Status::Contradiction && entropy.is_none() {
        issues.push("Bethe entropy undefined".into());
    }
    ctx.flag(issues)
}

#[derive(Serialize)]
struct SpRunReport {
    status: Status,
    sweeps: usize,
    max_change: f64,
    max_survey: f64,
    trivial: bool,
    complexity: Option<f64>,
    averaged_complexity: Option<f64>,
}

fn sp_run_report(inst: &adsat_core::Instance, st: &SpState) -> SpRunReport {
    SpRunReport {
        status: st.status,
        sweeps: st.sweeps,
        max_change: st.max_change,
        max_survey: st.max_survey(),
        trivial: st.is_trivial(),
        complexity: complexity(&inst.graph, &inst.negations, st).ok(),
        averaged_complexity: st.averaged_complexity,
    }
}

pub fn sp(ctx: &Context, a: &SpArgs) -> Result<(), CliError> {
    check_damping(a.damping)?;
    check_tol(a.tol)?;
    let inst = a.graph.resolve()?;
    let cfg = SpConfig {
        damping: a.damping,
        tol: a.tol,
        max_sweeps: a.max_sweeps,
        seed: derive_seed(a.graph.seed, 2),
        average_window: Some(a.average_window),
        ..SpConfig::default()
    };
    let dual = run_sp_dual(&inst.graph, &inst.negations, &cfg);
    let random = sp_run_report(&inst, &dual.random);
    let zero = sp_run_report(&inst, &dual.zero);
    let issues: Vec<String> = (random.status != Status::Converged)
        .then(|| format!("SP {} after {} sweeps", random.status, random.sweeps))
        .into_iter()
        .collect();
    println!(
        "random start: status={} trivial={} complexity={}",
        random.status,
        random.trivial,
        fmt_opt(random.complexity.or(random.averaged_complexity))
    );
    let result = json!({ "n_vars": inst.graph.n_vars(), "random": random, "zero": zero, "trivial": dual.trivial });
    let path = ctx.sink.write("sp.json", &json_document("sp", &json!({ "args": a, "sp": cfg }), &result))?;
    println!("-> {}", path.display());
    ctx.flag(issues)
}

fn alpha_grid(a: &SpScanArgs) -> Result<Vec<f64>, CliError> {
    let grid = match &a.alphas {
        Some(v) => v.clone(),
        None => {
            ensure(a.alpha_step > 0.0, || format!("--alpha-step must be > 0, got {}", a.alpha_step))?;
            let steps = ((a.alpha_max - a.alpha_min) / a.alpha_step + 1e-9).floor();
            ensure(steps >= 1.0, || "--alpha-max must exceed --alpha-min by at least one step".into())?;
            // Rounded so that 3.3 + 5·0.02 prints as 3.4.
            (0..=steps as usize).map(|i| ((a.alpha_min + i as f64 * a.alpha_step) * 1e9).round() / 1e9).collect()
        }
    };
    ensure(grid.len() >= 2, || "the alpha grid needs at least two values".into())?;
    ensure(grid.windows(2).all(|w| w[1] > w[0]), || "the alpha grid must be increasing".into())?;
    ensure(grid.iter().all(|&x| x > 0.0), || "alpha values must be > 0".into())?;
    Ok(grid)
}

pub fn sp_scan(ctx: &Context, a: &SpScanArgs) -> Result<(), CliError> {
    check_damping(a.damping)?;
    check_tol(a.tol)?;
    let grid = alpha_grid(a)?;
    let cfg = SpConfig {
        damping: a.damping,
        tol: a.tol,
        max_sweeps: a.max_sweeps,
        average_window: Some(a.average_window),
        ..SpConfig::default()
    };
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &alpha)| balanced_scan_point(a.n, alpha, a.k, derive_seed(a.seed, idx as u64), &cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err)?;
    let crossing = locate_crossing(&points);
    let mut body = String::from("alpha,complexity,status,trivial,sweeps\n");
    for p in &points {
        body.push_str(&format!("{},{},{},{},{}\n", p.alpha, fmt_opt(p.complexity), p.status, p.trivial, p.sweeps));
    }
    let config = json!({ "args": a, "grid": grid, "sp": cfg });
    let doc = csv_document("sp-scan", &config, &[("crossing", fmt_opt(crossing))], &body);
    let path = ctx.sink.write("sp_scan.csv", &doc)?;
    println!("crossing={} -> {}", crossing.map_or("none".into(), |c| format!("{c:.4}")), path.display());
    let mut issues = Vec::new();
    if crossing.is_none() {
        issues.push("no zero crossing of the complexity on the grid".to_string());
    }
    let contradictions = points.iter().filter(|p| p.status == Status::Contradiction).count();
    if contradictions > 0 {
        issues.push(format!("{contradictions} grid points ended in a contradiction"));
    }
    ctx.flag(issues)
}

pub fn ldev(ctx: &Context, a: &LdevArgs) -> Result<(), CliError> {
    let ensemble = if let Some(l) = a.regular_ensemble {
        Ensemble::Regular { degree: l, clause_size: a.k }
    } else if let Some(alpha) = a.poisson_ensemble {
        let n = a.n.expect("clap enforces --n");
        Ensemble::poisson(n, alpha, a.k, derive_seed(a.seed, 0)).map_err(ldev_err)?
    } else if let Some(path) = &a.instance {
        let inst = adsat_core::Instance::load(path)
            .map_err(|e| CliError::Config(format!("--instance {}: {e}", path.display())))?;
        Ensemble::Instance(inst.graph)
    } else {
        return Err(CliError::Config("one of --regular-ensemble, --poisson-ensemble or --instance is required".into()));
    };
    let xs = a.x.clone().unwrap_or_else(default_x_grid);
    ensure(xs.iter().all(|x| x.is_finite()), || "--x values must be finite".into())?;
    ensure(a.population >= 2, || "--population must be >= 2".into())?;
    ensure(a.measure_every >= 1, || "--measure-every must be >= 1".into())?;
    ensure(a.measure_sweeps >= a.measure_every, || "--measure-sweeps must be >= --measure-every".into())?;
    let cfg = PopDynConfig {
        population: a.population,
        candidates: a.candidates,
        burn_in: a.burn_in,
        measure_sweeps: a.measure_sweeps,
        measure_every: a.measure_every,
        samples: a.samples,
        max_doublings: a.max_doublings,
        restrict_balanced: a.balanced,
        seed: derive_seed(a.seed, 1),
    };
    let curve = ldf_curve(&ensemble, a.base, &xs, &cfg).map_err(ldev_err)?;
    let meta = [("ensemble", curve.ensemble.clone()), ("base", a.base.to_string()), ("x0", fmt_opt(curve.x0()))];
    let doc = csv_document("ldev", &json!({ "args": a, "popdyn": cfg }), &meta, &curve.to_csv());
    let path = ctx.sink.write("ldev.csv", &doc)?;
    println!("{} points ({}) -> {}", curve.points.len(), curve.ensemble, path.display());
    let issues: Vec<String> = curve
        .points
        .iter()
        .filter(|p| p.degenerate || p.drifting)
        .map(|p| format!("x={}: {}", p.x, if p.degenerate { "degenerate population" } else { "estimate drifting" }))
        .collect();
    ctx.flag(issues)
}

#[derive(Serialize)]
struct CountReport {
    n_vars: usize,
    n_clauses: usize,
    count: String,
    entropy: Option<f64>,
    unsat: bool,
    brute_force_agrees: Option<bool>,
}

pub fn count(ctx: &Context, a: &CountArgs) -> Result<(), CliError> {
    let inst = a.graph.resolve()?;
    let limits = CountLimits { max_nodes: a.max_nodes, timeout: timeout(a.timeout)? };
    let mc = count_models(&inst.graph, &inst.negations, &limits).map_err(count_err)?;
    let brute_force_agrees = if a.brute_force {
        Some(brute_force_count(&inst.graph, &inst.negations).map_err(count_err)?.count == mc.count)
    } else {
        None
    };
    let report = CountReport {
        n_vars: inst.graph.n_vars(),
        n_clauses: inst.graph.n_clauses(),
        count: mc.count.to_string(),
        entropy: mc.entropy(),
        unsat: mc.is_unsat(),
        brute_force_agrees,
    };
    let path = ctx.sink.write("count.json", &json_document("count", &json!({ "args": a }), &report))?;
    println!("count={} s={} -> {}", report.count, fmt_opt(report.entropy), path.display());
    if brute_force_agrees == Some(false) {
        return Err(CliError::Run("exact count disagrees with enumeration".into()));
    }
    Ok(())
}

pub fn eldf(ctx: &Context, a: &EldfArgs) -> Result<(), CliError> {
    let inst = a.graph.resolve()?;
    let opts =
        EldfOptions { balanced: a.balanced, limits: CountLimits { max_nodes: None, timeout: timeout(a.timeout)? } };
    let hist =
        empirical_ldf(&inst.graph, a.samples, a.bin_width, derive_seed(a.graph.seed, 3), &opts).map_err(count_err)?;
    let mut body = String::from("s_bin,count,l_n\n");
    for r in hist.curve() {
        body.push_str(&format!("{},{},{}\n", r.s_bin, r.count, r.l_n));
    }
    let meta = [
        ("n_vars", hist.n_vars.to_string()),
        ("samples", hist.samples.to_string()),
        ("unsat", hist.unsat.to_string()),
        ("skipped", hist.skipped.to_string()),
        ("mode", fmt_opt(hist.mode())),
        ("mean", fmt_opt(hist.mean())),
        ("variance", fmt_opt(hist.variance())),
    ];
    let doc = csv_document("eldf", &json!({ "args": a }), &meta, &body);
    let path = ctx.sink.write("eldf.csv", &doc)?;
    println!(
        "mode={} mean={} unsat={} skipped={} -> {}",
        fmt_opt(hist.mode()),
        fmt_opt(hist.mean()),
        hist.unsat,
        hist.skipped,
        path.display()
    );
    ctx.flag(if hist.skipped > 0 { vec![format!("{} samples timed out", hist.skipped)] } else { vec![] })
}

fn anneal_config(p: &AnnealParams) -> Result<AnnealConfig, CliError> {
    ensure(p.rate >= 1.0, || format!("--rate must be >= 1, got {}", p.rate))?;
    ensure(p.beta0 > 0.0, || format!("--beta0 must be > 0, got {}", p.beta0))?;
    ensure(p.steps_per_rate >= 1, || "--steps-per-rate must be >= 1".into())?;
    Ok(AnnealConfig {
        rate: p.rate,
        beta0: p.beta0,
        steps_per_rate: p.steps_per_rate,
        init: p.init,
        rule: match p.rule {
            RuleArg::Metropolis => AcceptanceRule::Metropolis,
            RuleArg::LiteralPrinted => AcceptanceRule::LiteralPrinted,
        },
        limits: CountLimits { max_nodes: None, timeout: timeout(p.timeout)? },
        max_mc_steps: p.max_mc_steps,
        record_trace: true,
    })
}

pub fn anneal(ctx: &Context, a: &crate::AnnealArgs) -> Result<(), CliError> {
    let inst = a.graph.resolve()?;
    let cfg = anneal_config(&a.params)?;
    let r = run_anneal(&inst.graph, &cfg, derive_seed(a.graph.seed, 4)).map_err(anneal_err)?;
    let mut result = serde_json::to_value(&r).expect("anneal result serializes");
    result["best_dimacs"] = to_dimacs(&inst.graph, &r.best).into();
    let path =
        ctx.sink.write("anneal.json", &json_document("anneal", &json!({ "args": a, "anneal": cfg }), &result))?;
    println!("found_unsat={} s_min={} mc_steps={} -> {}", r.found_unsat, r.s_min, r.mc_steps_total, path.display());
    ctx.flag(if r.aborted { vec!["annealing aborted by a counting limit".into()] } else { vec![] })
}

/// `p_s` for every `(L, N)` pair; the pair uses master seed
/// `derive(seed, [L, N])`.
pub fn ps(ctx: &Context, a: &PsArgs) -> Result<(), CliError> {
    let cfg = anneal_config(&a.params)?;
    let mut reports = Vec::new();
    for &degree in &a.degrees.0 {
        for &n in &a.n {
            let seed = derive_seed_path(a.seed, &[degree as u64, n as u64]);
            let report = ps_experiment(degree, n, a.instances, &cfg, seed).map_err(anneal_err)?;
            println!(
                "L={degree} N={n} p_s={:.3} ± {:.3} (unsat found in {} of {})",
                report.p_s,
                report.stderr,
                report.found,
                report.found + report.not_found
            );
            reports.push(report);
        }
    }
    let config = json!({ "args": a, "anneal": cfg });
    let mut body = String::from("L,N,I,found,not_found,aborted,p_s,stderr\n");
    for r in &reports {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.degree, r.n_vars, r.instances, r.found, r.not_found, r.aborted, r.p_s, r.stderr
        ));
    }
    let csv = ctx.sink.write("ps.csv", &csv_document("ps", &config, &[], &body))?;
    let json_path = csv.with_extension("json");
    crate::artifact::write_file(&json_path, &json_document("ps", &config, &reports))?;
    println!("-> {} {}", csv.display(), json_path.display());
    let aborted: usize = reports.iter().map(|r| r.aborted).sum();
    ctx.flag(if aborted > 0 { vec![format!("{aborted} runs aborted")] } else { vec![] })
}

struct Table1Row {
    degree: usize,
    s_b: Option<f64>,
    s_r: Option<f64>,
    s_ran: Option<f64>,
    ran_status: Option<Status>,
    n_ran: Option<usize>,
    issues: Vec<String>,
}

fn factorized(degree: usize, k: usize, pattern: FactorizedPattern, issues: &mut Vec<String>) -> Option<f64> {
    match factorized_regular_bp(degree, k, pattern, &FactorizedConfig::default()) {
        Ok(f) => Some(f.entropy),
        Err(BpError::FactorizedNotConverged { last, .. }) => {
            issues.push(format!("L={degree}: factorized {pattern:?} iteration did not converge"));
            Some(last.entropy)
        }
        Err(e) => {
            issues.push(format!("L={degree}: {e}"));
            None
        }
    }
}

/// Largest `N' <= n` with `N'·L` divisible by `K`.
fn valid_size(n: usize, degree: usize, k: usize) -> usize {
    let gcd = |mut a: usize, mut b: usize| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let step = k / gcd(degree, k);
    n - n % step
}

pub fn table1(ctx: &Context, a: &Table1Args) -> Result<(), CliError> {
    ensure(a.k >= 2, || "--k must be >= 2".into())?;
    check_damping(a.damping)?;
    let bp_cfg =
        BpConfig { damping: a.damping, max_sweeps: a.max_sweeps, average_window: Some(100), ..BpConfig::default() };
    let rows: Vec<Table1Row> = a
        .degrees
        .0
        .par_iter()
        .map(|&degree| {
            let mut issues = Vec::new();
            let s_r = factorized(degree, a.k, FactorizedPattern::Uniform, &mut issues);
            let s_b = (degree % 2 == 0)
                .then(|| factorized(degree, a.k, FactorizedPattern::BalancedEven, &mut issues))
                .flatten();
            let (mut s_ran, mut ran_status) = (None, None);
            let mut n_ran = None;
            if let Some(n) = a.n {
                let d = degree as u64;
                let n = valid_size(n, degree, a.k);
                n_ran = Some(n);
                match generate_regular(n, degree, a.k, derive_seed_path(a.seed, &[d, 0])) {
                    Ok(g) => {
                        let j = assign_negations(&g, NegationMode::Random, derive_seed_path(a.seed, &[d, 1]));
                        let st = run_bp(&g, &j, &BpConfig { seed: derive_seed_path(a.seed, &[d, 2]), ..bp_cfg });
                        s_ran = match st.status {
                            Status::Converged => bethe_entropy(&g, &j, &st).ok(),
                            Status::NotConverged => st.averaged_entropy,
                            Status::Contradiction => None,
                        };
                        ran_status = Some(st.status);
                        if st.status == Status::Contradiction {
                            issues.push(format!("L={degree}: BP contradiction"));
                        }
                    }
                    Err(e) => issues.push(format!("L={degree}: {e}")),
                }
            }
            Table1Row { degree, s_b, s_r, s_ran, ran_status, n_ran, issues }
        })
        .collect();
    let mut body = String::from("L,s_B,s_R,s_ran,ran_status,n\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.degree,
            fmt_opt(r.s_b),
            fmt_opt(r.s_r),
            fmt_opt(r.s_ran),
            r.ran_status.map(|s| s.to_string()).unwrap_or_default(),
            r.n_ran.map(|n| n.to_string()).unwrap_or_default()
        ));
    }
    let doc = csv_document("table1", &json!({ "args": a, "bp": bp_cfg }), &[], &body);
    let path = ctx.sink.write("table1.csv", &doc)?;
    println!("{:>3} {:>8} {:>8} {:>9}", "L", "s_B", "s_R", "s_ran");
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &rows {
        let star = if r.ran_status == Some(Status::NotConverged) { "*" } else { "" };
        println!("{:>3} {:>8} {:>8} {:>8}{star:1}", r.degree, f(r.s_b), f(r.s_r), f(r.s_ran));
    }
    println!("-> {}", path.display());
    ctx.flag(rows.into_iter().flat_map(|r| r.issues).collect())
}
