//! Simulated annealing of the negations towards few (ideally zero) solutions.

use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{Cnf, CountError, CountLimits, ModelCount};
use crate::formula::{assign_negations, generate_regular, FactorGraph, FormulaError, NegationMode, Negations};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum AnnealError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// How a proposed flip `s → s'` is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    /// `min{1, e^{−β(s'−s)}}`: descends the entropy.
    #[default]
    Metropolis,
    /// `max{1, e^{β(s'−s)}}` taken literally, which accepts every flip.
    LiteralPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    /// Factor applied to `β` every `steps_per_rate` MC steps.
    pub rate: f64,
    pub beta0: f64,
    pub steps_per_rate: usize,
    pub init: NegationMode,
    pub rule: AcceptanceRule,
    pub limits: CountLimits,
    /// Hard cap on MC steps, on top of the stopping rule.
    pub max_mc_steps: Option<usize>,
    pub record_trace: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            rate: 1.1,
            beta0: 1.0,
            steps_per_rate: 10,
            init: NegationMode::Random,
            rule: AcceptanceRule::Metropolis,
            limits: CountLimits::default(),
            max_mc_steps: None,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub beta: f64,
    /// Current entropy; `None` for an unsatisfiable configuration.
    pub s: Option<f64>,
    /// Running minimum of the entropy.
    pub s_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnealResult {
    pub best: Negations,
    /// Lowest entropy reached; `−∞` when an unsatisfiable configuration was
    /// found (serialized as `null`).
    pub s_min: f64,
    pub found_unsat: bool,
    /// MC step at which `s_min` was first reached.
    pub n0: usize,
    pub mc_steps_total: usize,
    pub trace: Vec<TracePoint>,
    /// The counter hit its limits; the result is partial.
    pub aborted: bool,
}

/// Exact counts of the current negations and of single-flip neighbours, with
/// a cache keyed by the packed negation bits.
struct Evaluator {
    cnf: Cnf,
    bits: Vec<u64>,
    count: u128,
    cache: HashMap<Vec<u64>, u128>,
    n_vars: usize,
    limits: CountLimits,
}

const EVAL_CACHE_LIMIT: usize = 1 << 20;

impl Evaluator {
    fn new(graph: &FactorGraph, j: &Negations, limits: CountLimits) -> Result<Self, CountError> {
        let mut bits = vec![0u64; j.len().div_ceil(64)];
        for (e, &b) in j.as_slice().iter().enumerate() {
            bits[e / 64] |= (b as u64) << (e % 64);
        }
        let cnf = Cnf::new(graph, j)?;
        let count = cnf.count_raw(&limits)?;
        Ok(Self { cnf, bits, count, cache: HashMap::new(), n_vars: graph.n_vars(), limits })
    }

    /// Count with edge `e` flipped, leaving the state unchanged.
    fn propose(&mut self, e: usize) -> Result<u128, CountError> {
        self.bits[e / 64] ^= 1 << (e % 64);
        let c = match self.cache.get(&self.bits) {
            Some(&c) => Ok(c),
            None => self.cnf.count_after_flip(e, self.count, &self.limits),
        };
        if let Ok(c) = c {
            if self.cache.len() >= EVAL_CACHE_LIMIT {
                self.cache.clear();
            }
            self.cache.insert(self.bits.clone(), c);
        }
        self.bits[e / 64] ^= 1 << (e % 64);
        c
    }

    fn commit(&mut self, e: usize, count: u128) {
        self.cnf.flip(e);
        self.bits[e / 64] ^= 1 << (e % 64);
        self.count = count;
    }

    /// `log(𝒩)/N`, `−∞` when unsatisfiable.
    fn entropy(&self, count: u128) -> f64 {
        ModelCount { count: count.into(), n_vars: self.n_vars }.entropy().unwrap_or(f64::NEG_INFINITY)
    }
}

fn accept(rule: AcceptanceRule, beta: f64, s_old: f64, s_new: f64, u: f64) -> bool {
    match rule {
        AcceptanceRule::Metropolis => {
            let delta = s_new - s_old;
            delta <= 0.0 || u < (-beta * delta).exp()
        }
        AcceptanceRule::LiteralPrinted => true,
    }
}

/// Anneals the negations of `graph`. One MC step is `N` proposed flips of a
/// uniformly random edge; `β` starts at `beta0` and is multiplied by `rate`
/// every `steps_per_rate` steps. The run stops at the first unsatisfiable
/// configuration, or once `9 n0 + 50` steps pass without improving `s_min`.
pub fn anneal(graph: &FactorGraph, config: &AnnealConfig, seed: u64) -> Result<AnnealResult, AnnealError> {
    if !(config.rate >= 1.0) || !(config.beta0 > 0.0) || config.steps_per_rate == 0 {
        return Err(AnnealError::InvalidParameter("need rate >= 1, beta0 > 0, steps_per_rate >= 1".into()));
    }
    if graph.n_edges() == 0 {
        return Err(AnnealError::InvalidParameter("formula has no literals".into()));
    }
    let mut rng = rng::from_seed(rng::derive_seed(seed, 0));
    let mut j = assign_negations(graph, config.init, rng::derive_seed(seed, 1));
    let mut result = AnnealResult {
        best: j.clone(),
        s_min: f64::NAN,
        found_unsat: false,
        n0: 0,
        mc_steps_total: 0,
        trace: Vec::new(),
        aborted: false,
    };
    let mut eval = match Evaluator::new(graph, &j, config.limits) {
        Ok(ev) => ev,
        Err(CountError::Timeout { .. }) => {
            result.aborted = true;
            return Ok(result);
        }
        Err(e) => return Err(e.into()),
    };
    let mut s = eval.entropy(eval.count);
    result.s_min = s;
    let mut beta = config.beta0;
    let finite = |s: f64| s.is_finite().then_some(s);
    if config.record_trace {
        result.trace.push(TracePoint { step: 0, beta, s: finite(s), s_min: finite(s) });
    }

    let mut t = 0;
    while s != f64::NEG_INFINITY {
        if t - result.n0 >= 9 * result.n0 + 50 || config.max_mc_steps.is_some_and(|m| t >= m) {
            break;
        }
        t += 1;
        'step: for _ in 0..graph.n_vars() {
            let e = rng.gen_range(0..graph.n_edges());
            let c_new = match eval.propose(e) {
                Ok(c) => c,
                Err(CountError::Timeout { .. }) => {
                    result.aborted = true;
                    break 'step;
                }
                Err(err) => return Err(err.into()),
            };
            let s_new = eval.entropy(c_new);
            if accept(config.rule, beta, s, s_new, rng.gen::<f64>()) {
                eval.commit(e, c_new);
                s = s_new;
                j.flip(e);
                if s < result.s_min {
                    result.s_min = s;
                    result.best = j.clone();
                    result.n0 = t;
                }
                if s == f64::NEG_INFINITY {
                    break;
                }
            }
        }
        if config.record_trace {
            result.trace.push(TracePoint { step: t, beta, s: finite(s), s_min: finite(result.s_min) });
        }
        if result.aborted {
            break;
        }
        if t % config.steps_per_rate == 0 {
            beta *= config.rate;
        }
    }
    result.found_unsat = result.s_min == f64::NEG_INFINITY;
    result.mc_steps_total = t;
    Ok(result)
}

/// Outcome of one instance in a p_s experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsInstance {
    pub graph_seed: u64,
    pub anneal_seed: u64,
    pub found_unsat: bool,
    pub aborted: bool,
    pub s_min: Option<f64>,
    pub n0: usize,
    pub mc_steps_total: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsReport {
    pub degree: usize,
    pub n_vars: usize,
    pub instances: usize,
    pub rate: f64,
    pub found: usize,
    pub not_found: usize,
    pub aborted: usize,
    /// Fraction of completed instances where annealing found no
    /// unsatisfiable configuration.
    pub p_s: f64,
    /// Binomial standard error `sqrt(p(1−p)/n)`.
    pub stderr: f64,
    pub runs: Vec<PsInstance>,
}

/// Anneals `instances` random `(L, 3)`-regular formulas of `n_vars`
/// variables; instance `k` uses graph seed `derive(seed, 2k)` and anneal
/// seed `derive(seed, 2k+1)`.
pub fn ps_experiment(
    degree: usize,
    n_vars: usize,
    instances: usize,
    config: &AnnealConfig,
    seed: u64,
) -> Result<PsReport, AnnealError> {
    if instances == 0 {
        return Err(AnnealError::InvalidParameter("need at least one instance".into()));
    }
    let runs: Vec<PsInstance> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let graph_seed = rng::derive_seed(seed, 2 * k as u64);
            let anneal_seed = rng::derive_seed(seed, 2 * k as u64 + 1);
            let g = generate_regular(n_vars, degree, 3, graph_seed)?;
            let mut cfg = *config;
            cfg.record_trace = false;
            let r = anneal(&g, &cfg, anneal_seed)?;
            Ok(PsInstance {
                graph_seed,
                anneal_seed,
                found_unsat: r.found_unsat,
                aborted: r.aborted && !r.found_unsat,
                s_min: r.s_min.is_finite().then_some(r.s_min),
                n0: r.n0,
                mc_steps_total: r.mc_steps_total,
            })
        })
        .collect::<Result<_, AnnealError>>()?;
    let found = runs.iter().filter(|r| r.found_unsat).count();
    let aborted = runs.iter().filter(|r| r.aborted).count();
    let not_found = instances - found - aborted;
    let done = found + not_found;
    let p_s = if done == 0 { f64::NAN } else { not_found as f64 / done as f64 };
    let stderr = if done == 0 { f64::NAN } else { (p_s * (1.0 - p_s) / done as f64).sqrt() };
    Ok(PsReport { degree, n_vars, instances, rate: config.rate, found, not_found, aborted, p_s, stderr, runs })
}
