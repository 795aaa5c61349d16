//! Exact model counting and empirical large-deviation histograms.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{assign_negations, EdgeId, FactorGraph, NegationMode, Negations};
use crate::rng;

/// Widest formula the bitmask counter handles.
pub const MAX_COUNT_VARS: usize = 127;
/// Widest formula the enumeration oracle accepts.
pub const MAX_BRUTE_FORCE_VARS: usize = 25;

const CACHE_LIMIT: usize = 1 << 21;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountError {
    #[error("counter gave up after {nodes} search nodes ({elapsed:?})")]
    Timeout { nodes: u64, elapsed: Duration },
    #[error("{n} variables exceed the supported {max}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CountLimits {
    pub max_nodes: Option<u64>,
    pub timeout: Option<Duration>,
}

/// Number of satisfying assignments `𝒩(𝒥)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelCount {
    pub count: BigUint,
    pub n_vars: usize,
}

impl ModelCount {
    /// `log(𝒩)/N`; `None` for an unsatisfiable formula (or `N = 0`).
    pub fn entropy(&self) -> Option<f64> {
        if self.n_vars == 0 || self.count == BigUint::from(0u8) {
            return None;
        }
        let bits = self.count.bits();
        // Shift large counts into f64 range before taking the log.
        let ln = if bits > 1000 {
            let shift = bits - 900;
            (&self.count >> shift).to_f64()?.ln() + shift as f64 * std::f64::consts::LN_2
        } else {
            self.count.to_f64()?.ln()
        };
        Some(ln / self.n_vars as f64)
    }

    pub fn is_unsat(&self) -> bool {
        self.count == BigUint::from(0u8)
    }
}

#[derive(Debug, Clone, Copy)]
struct ClauseMask {
    vars: u128,
    /// Bits whose literal is negated (`J = 1`).
    neg: u128,
}

/// CNF in bitmask form, addressable by edge id for single-literal flips.
#[derive(Debug, Clone)]
pub struct Cnf {
    n_vars: usize,
    clause_size: usize,
    clauses: Vec<ClauseMask>,
    edge_var_bit: Vec<u128>,
}

impl Cnf {
    pub fn new(graph: &FactorGraph, negations: &Negations) -> Result<Self, CountError> {
        let n = graph.n_vars();
        if n > MAX_COUNT_VARS {
            return Err(CountError::TooLarge { n, max: MAX_COUNT_VARS });
        }
        let edge_var_bit: Vec<u128> = graph.edges().iter().map(|e| 1u128 << e.var).collect();
        let clauses = (0..graph.n_clauses())
            .map(|a| {
                graph.clause_edges(a).fold(ClauseMask { vars: 0, neg: 0 }, |mut c, e| {
                    c.vars |= edge_var_bit[e];
                    if negations.get(e) == 1 {
                        c.neg |= edge_var_bit[e];
                    }
                    c
                })
            })
            .collect();
        Ok(Self { n_vars: n, clause_size: graph.clause_size(), clauses, edge_var_bit })
    }

    /// Toggles `J` on one edge.
    pub fn flip(&mut self, e: EdgeId) {
        self.clauses[e / self.clause_size].neg ^= self.edge_var_bit[e];
    }

    pub fn count(&self, limits: &CountLimits) -> Result<ModelCount, CountError> {
        Ok(ModelCount { count: BigUint::from(self.count_raw(limits)?), n_vars: self.n_vars })
    }

    fn all_vars(&self) -> u128 {
        if self.n_vars == 0 {
            0
        } else {
            u128::MAX >> (128 - self.n_vars)
        }
    }

    fn counter(&self, limits: &CountLimits) -> Counter<'_> {
        Counter { clauses: &self.clauses, cache: HashMap::new(), nodes: 0, limits: *limits, start: Instant::now() }
    }

    pub(crate) fn count_raw(&self, limits: &CountLimits) -> Result<u128, CountError> {
        let active: Vec<u32> = (0..self.clauses.len() as u32).collect();
        self.counter(limits).count(self.all_vars(), active, 0, 0)
    }

    /// Models of all clauses but `a` that violate `a` under negation mask `neg`.
    fn count_violating(&self, a: usize, neg: u128, limits: &CountLimits) -> Result<u128, CountError> {
        let active: Vec<u32> = (0..self.clauses.len() as u32).filter(|&c| c as usize != a).collect();
        let vars = self.clauses[a].vars;
        self.counter(limits).count(self.all_vars(), active, vars, neg)
    }

    /// Count after flipping edge `e`, given the current count. Only the
    /// assignments violating the old or the new version of the clause change
    /// status, so two searches with the clause variables pinned suffice.
    pub(crate) fn count_after_flip(&self, e: EdgeId, current: u128, limits: &CountLimits) -> Result<u128, CountError> {
        let a = e / self.clause_size;
        let neg = self.clauses[a].neg;
        let gained = self.count_violating(a, neg, limits)?;
        let lost = self.count_violating(a, neg ^ self.edge_var_bit[e], limits)?;
        Ok(current + gained - lost)
    }
}

struct Counter<'a> {
    clauses: &'a [ClauseMask],
    cache: HashMap<(u128, Vec<u32>), u128>,
    nodes: u64,
    limits: CountLimits,
    start: Instant,
}

impl Counter<'_> {
    fn tick(&mut self) -> Result<(), CountError> {
        self.nodes += 1;
        let over_nodes = self.limits.max_nodes.is_some_and(|m| self.nodes > m);
        let over_time =
            self.nodes.is_multiple_of(1024) && self.limits.timeout.is_some_and(|t| self.start.elapsed() > t);
        if over_nodes || over_time {
            return Err(CountError::Timeout { nodes: self.nodes, elapsed: self.start.elapsed() });
        }
        Ok(())
    }

    /// Models over the unassigned variables in `vars`, given that the clauses
    /// in `active` are the only unsatisfied ones touching them.
    fn count(
        &mut self,
        mut vars: u128,
        mut active: Vec<u32>,
        mut assigned: u128,
        mut values: u128,
    ) -> Result<u128, CountError> {
        self.tick()?;
        // Unit propagation.
        loop {
            let mut changed = false;
            let mut conflict = false;
            active.retain(|&c| {
                let cl = self.clauses[c as usize];
                if conflict || (values ^ cl.neg) & cl.vars & assigned != 0 {
                    return false;
                }
                let free = cl.vars & !assigned;
                match free.count_ones() {
                    0 => {
                        conflict = true;
                        false
                    }
                    1 => {
                        assigned |= free;
                        if cl.neg & free == 0 {
                            values |= free;
                        } else {
                            values &= !free;
                        }
                        changed = true;
                        false
                    }
                    _ => true,
                }
            });
            if conflict {
                return Ok(0);
            }
            if !changed {
                break;
            }
        }
        vars &= !assigned;
        let occurring = active.iter().fold(0u128, |acc, &c| acc | (self.clauses[c as usize].vars & !assigned));
        let free_vars = (vars & !occurring).count_ones();
        let mut total: u128 = 1u128 << free_vars;
        if active.is_empty() {
            return Ok(total);
        }

        for (comp_vars, comp_clauses) in self.components(&active, assigned) {
            let c = self.count_component(comp_vars, comp_clauses, assigned, values)?;
            if c == 0 {
                return Ok(0);
            }
            total *= c;
        }
        Ok(total)
    }

    fn components(&self, active: &[u32], assigned: u128) -> Vec<(u128, Vec<u32>)> {
        let free = |c: u32| self.clauses[c as usize].vars & !assigned;
        let mut masks: Vec<u128> = Vec::new();
        for &c in active {
            let mut f = free(c);
            masks.retain(|&m| {
                if m & f != 0 {
                    f |= m;
                    false
                } else {
                    true
                }
            });
            masks.push(f);
        }
        if masks.len() == 1 {
            return vec![(masks[0], active.to_vec())];
        }
        let mut out: Vec<(u128, Vec<u32>)> = masks.into_iter().map(|m| (m, Vec::new())).collect();
        for &c in active {
            let f = free(c);
            let comp = out.iter_mut().find(|(m, _)| m & f != 0).expect("clause outside every component");
            comp.1.push(c);
        }
        out
    }

    fn count_component(
        &mut self,
        vars: u128,
        clauses: Vec<u32>,
        assigned: u128,
        values: u128,
    ) -> Result<u128, CountError> {
        let key = (vars, clauses);
        if let Some(&c) = self.cache.get(&key) {
            return Ok(c);
        }
        let (vars, clauses) = key;
        let branch = self.pick_branch_var(&clauses, assigned);
        let bit = 1u128 << branch;
        let rest = vars & !bit;
        let c0 = self.count(rest, clauses.clone(), assigned | bit, values & !bit)?;
        let c1 = self.count(rest, clauses.clone(), assigned | bit, values | bit)?;
        let total = c0 + c1;
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert((vars, clauses), total);
        Ok(total)
    }

    /// Variable with the largest weighted occurrence, shorter clauses counting more.
    fn pick_branch_var(&self, clauses: &[u32], assigned: u128) -> u32 {
        let mut score = [0u32; 128];
        for &c in clauses {
            let mut f = self.clauses[c as usize].vars & !assigned;
            let w = 1u32 << (8 - f.count_ones().min(8));
            while f != 0 {
                score[f.trailing_zeros() as usize] += w;
                f &= f - 1;
            }
        }
        let mut best = 0;
        for v in 0..128 {
            if score[v] > score[best] {
                best = v;
            }
        }
        best as u32
    }
}

/// Exact count by search with unit propagation and component decomposition.
pub fn count_models(
    graph: &FactorGraph,
    negations: &Negations,
    limits: &CountLimits,
) -> Result<ModelCount, CountError> {
    Cnf::new(graph, negations)?.count(limits)
}

/// Enumerates all `2^N` assignments. Test oracle for [`count_models`].
pub fn brute_force_count(graph: &FactorGraph, negations: &Negations) -> Result<ModelCount, CountError> {
    let n = graph.n_vars();
    if n > MAX_BRUTE_FORCE_VARS {
        return Err(CountError::TooLarge { n, max: MAX_BRUTE_FORCE_VARS });
    }
    let masks: Vec<(u32, u32)> = (0..graph.n_clauses())
        .map(|a| {
            graph.clause_edges(a).fold((0u32, 0u32), |(v, j), e| {
                let bit = 1u32 << graph.edge(e).var;
                (v | bit, if negations.get(e) == 1 { j | bit } else { j })
            })
        })
        .collect();
    // A clause is violated iff x_i = J_ia on all its variables.
    let count = (0u32..(1u32 << n)).filter(|&x| masks.iter().all(|&(v, j)| (x ^ j) & v != 0)).count();
    Ok(ModelCount { count: BigUint::from(count), n_vars: n })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EldfOptions {
    /// Sample only balanced negation-configurations.
    pub balanced: bool,
    pub limits: CountLimits,
}

/// Histogram of `s(𝒥)` over sampled negation-configurations of one graph.
///
/// Satisfiable samples are binned; unsatisfiable ones (`s = −∞`) and
/// counter timeouts are tallied separately, so
/// `Σ bins + unsat + skipped = samples`.
#[derive(Debug, Clone, Serialize)]
pub struct LdfHistogram {
    pub n_vars: usize,
    pub bin_width: f64,
    /// Bin index `k` covers `[kΔs, (k+1)Δs)`.
    pub bins: BTreeMap<i64, u64>,
    pub samples: usize,
    pub unsat: usize,
    pub skipped: usize,
    /// Entropies of the satisfiable samples, in sample order.
    pub entropies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramRow {
    /// Left edge of the bin.
    pub s_bin: f64,
    pub count: u64,
    /// `(log P_N(s) − log max_s P_N(s)) / N`.
    pub l_n: f64,
}

impl LdfHistogram {
    pub fn curve(&self) -> Vec<HistogramRow> {
        let Some(&max) = self.bins.values().max() else {
            return Vec::new();
        };
        let n = self.n_vars as f64;
        self.bins
            .iter()
            .map(|(&k, &c)| HistogramRow {
                s_bin: k as f64 * self.bin_width,
                count: c,
                l_n: ((c as f64).ln() - (max as f64).ln()) / n,
            })
            .collect()
    }

    /// Centre of the most populated bin (lowest on ties).
    pub fn mode(&self) -> Option<f64> {
        let max = *self.bins.values().max()?;
        let k = self.bins.iter().find(|(_, &c)| c == max).map(|(&k, _)| k)?;
        Some((k as f64 + 0.5) * self.bin_width)
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.entropies.is_empty()).then(|| self.entropies.iter().sum::<f64>() / self.entropies.len() as f64)
    }

    /// Unbiased sample variance of the satisfiable entropies.
    pub fn variance(&self) -> Option<f64> {
        let m = self.mean()?;
        let n = self.entropies.len();
        (n > 1).then(|| self.entropies.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1) as f64)
    }
}

/// Samples `samples` negation-configurations (seeded per sample from
/// `seed`), counts each exactly and bins the entropies.
pub fn empirical_ldf(
    graph: &FactorGraph,
    samples: usize,
    bin_width: f64,
    seed: u64,
    options: &EldfOptions,
) -> Result<LdfHistogram, CountError> {
    if samples == 0 {
        return Err(CountError::InvalidParameter("need at least one sample".into()));
    }
    if !(bin_width > 0.0) {
        return Err(CountError::InvalidParameter(format!("bin width must be > 0, got {bin_width}")));
    }
    if graph.n_vars() > MAX_COUNT_VARS {
        return Err(CountError::TooLarge { n: graph.n_vars(), max: MAX_COUNT_VARS });
    }
    let mode = if options.balanced { NegationMode::Balanced } else { NegationMode::Random };
    let outcomes: Vec<Result<ModelCount, CountError>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let j = assign_negations(graph, mode, rng::derive_seed(seed, k as u64));
            count_models(graph, &j, &options.limits)
        })
        .collect();

    let mut hist = LdfHistogram {
        n_vars: graph.n_vars(),
        bin_width,
        bins: BTreeMap::new(),
        samples,
        unsat: 0,
        skipped: 0,
        entropies: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            Ok(mc) => match mc.entropy() {
                Some(s) => {
                    *hist.bins.entry((s / bin_width).floor() as i64).or_default() += 1;
                    hist.entropies.push(s);
                }
                None => hist.unsat += 1,
            },
            Err(CountError::Timeout { .. }) => hist.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(hist)
}

/// `N_c = exp(L'/c₁)`: size above which a set of `e^{N L'}` configurations
/// stops masking events of probability `e^{−c₁ N log N}`.
pub fn crossover_size(l_prime: f64, c1: f64) -> Result<f64, CountError> {
    if !(c1 > 0.0) {
        return Err(CountError::InvalidParameter(format!("c1 must be > 0, got {c1}")));
    }
    Ok((l_prime / c1).exp())
}
