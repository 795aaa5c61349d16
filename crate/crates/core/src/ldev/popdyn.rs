//! Reweighted population dynamics on the auxiliary (negation) factor graph.
//!
//! Every directed edge owns two populations of base messages, one per value of
//! the edge's negation `J`, so the `J`-marginal is exactly 1/2. A sweep
//! rebuilds all variable-to-clause populations from the clause-to-variable
//! ones and then the reverse. Each rebuilt population is drawn from
//! `candidates · P` cavity updates weighted by `z^x` with systematic
//! resampling.

use rand::Rng as _;
use rayon::prelude::*;

use super::base::CavityBase;
use super::Ensemble;
use crate::formula::{balanced_completion, FactorGraph};
use crate::rng::{self, Rng};

/// Wiring of population slots. Instance mode has one slot per edge; the
/// regular ensemble collapses to a single up slot and a single down slot.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    n_slots: usize,
    /// Per variable node, the `(up slot, down slot)` of each of its edges.
    var_nodes: Vec<Vec<(usize, usize)>>,
    clause_nodes: Vec<Vec<(usize, usize)>>,
    /// Node and position that rebuild each up (resp. down) slot.
    up_source: Vec<(usize, usize)>,
    down_source: Vec<(usize, usize)>,
    /// `(up slot, down slot)` of every edge entering the edge terms.
    edges: Vec<(usize, usize)>,
    clause_weight: f64,
    var_weight: f64,
    edge_weight: f64,
}

impl Topology {
    pub(crate) fn regular(degree: usize, clause_size: usize) -> Self {
        Self {
            n_slots: 1,
            var_nodes: vec![vec![(0, 0); degree]],
            clause_nodes: vec![vec![(0, 0); clause_size]],
            up_source: vec![(0, 0)],
            down_source: vec![(0, 0)],
            edges: vec![(0, 0)],
            clause_weight: degree as f64 / clause_size as f64,
            var_weight: 1.0,
            edge_weight: degree as f64,
        }
    }

    pub(crate) fn instance(graph: &FactorGraph) -> Self {
        let n = graph.n_vars().max(1) as f64;
        let k = graph.clause_size();
        let mut up_source = vec![(0, 0); graph.n_edges()];
        let var_nodes = (0..graph.n_vars())
            .map(|i| {
                graph
                    .var_edges(i)
                    .iter()
                    .enumerate()
                    .map(|(pos, &e)| {
                        up_source[e] = (i, pos);
                        (e, e)
                    })
                    .collect()
            })
            .collect();
        let clause_nodes = (0..graph.n_clauses()).map(|a| graph.clause_edges(a).map(|e| (e, e)).collect()).collect();
        let down_source = (0..graph.n_edges()).map(|e| (e / k, e % k)).collect();
        Self {
            n_slots: graph.n_edges(),
            var_nodes,
            clause_nodes,
            up_source,
            down_source,
            edges: (0..graph.n_edges()).map(|e| (e, e)).collect(),
            clause_weight: 1.0 / n,
            var_weight: 1.0 / n,
            edge_weight: 1.0 / n,
        }
    }

    pub(crate) fn for_ensemble(ensemble: &Ensemble) -> Self {
        match ensemble {
            Ensemble::Regular { degree, clause_size } => Self::regular(*degree, *clause_size),
            Ensemble::Instance(g) => Self::instance(g),
        }
    }
}

/// Bookkeeping of one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    /// Candidates with a zero normalizer (given weight 0).
    pub contradictions: u64,
    /// Populations left unchanged because every candidate had weight 0.
    pub wipeouts: u64,
}

impl std::ops::AddAssign for SweepStats {
    fn add_assign(&mut self, o: Self) {
        self.contradictions += o.contradictions;
        self.wipeouts += o.wipeouts;
    }
}

/// Monte-Carlo estimate of `Φ(x)`, `s(x)` and `L = Φ − x s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub phi: f64,
    pub s: f64,
    pub l: f64,
    /// Smallest effective-sample-size fraction over all node estimates.
    pub min_ess_fraction: f64,
    /// Sampled local terms that were `−∞` (contradictory tuples).
    pub excluded: u64,
}

/// Population state of one large-deviation run.
pub struct PopDyn<B: CavityBase> {
    topo: Topology,
    population: usize,
    candidates: usize,
    balanced: bool,
    seed: u64,
    sweeps: u64,
    up: Vec<B::Up>,
    down: Vec<B::Down>,
}

#[inline]
fn idx(p: usize, slot: usize, j: u8, k: usize) -> usize {
    (slot * 2 + j as usize) * p + k
}

/// Systematic resampling of `out.len()` members from `cands` with log-weights
/// `logw`. Returns `false` (leaving `out` untouched) if all weights vanish.
fn resample<T: Copy>(rng: &mut Rng, cands: &[T], logw: &[f64], out: &mut [T]) -> bool {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return false;
    }
    if max == f64::INFINITY {
        // Keep only the infinite-weight candidates, uniformly.
        let inf: Vec<usize> = (0..cands.len()).filter(|&c| logw[c] == f64::INFINITY).collect();
        for o in out.iter_mut() {
            *o = cands[inf[rng.gen_range(0..inf.len())]];
        }
        return true;
    }
    let w: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let step = total / out.len() as f64;
    let mut u = rng.gen::<f64>() * step;
    let mut c = 0;
    let mut acc = w[0];
    for o in out.iter_mut() {
        while acc < u && c + 1 < cands.len() {
            c += 1;
            acc += w[c];
        }
        *o = cands[c];
        u += step;
    }
    true
}

/// Negations of all `degree` edges of a variable node given `J = j_pos` on
/// position `pos`: independent fair bits, or a uniform balanced completion.
fn draw_var_negations(rng: &mut Rng, balanced: bool, pos: usize, j_pos: u8, degree: usize, js: &mut Vec<u8>) {
    js.clear();
    if balanced {
        js.resize(degree - 1, 0);
        balanced_completion(rng, j_pos, js);
    } else {
        js.extend((0..degree - 1).map(|_| rng.gen_range(0..2u8)));
    }
    js.insert(pos, j_pos);
}

/// Running log-sum-exp together with the weighted mean of the terms.
#[derive(Default)]
struct WeightedTerm {
    n: usize,
    excluded: u64,
    terms: Vec<f64>,
}

impl WeightedTerm {
    fn push(&mut self, s: f64) {
        self.n += 1;
        if s.is_finite() {
            self.terms.push(s);
        } else {
            self.excluded += 1;
        }
    }

    /// `(log mean e^{xS}, reweighted mean of S, ESS / n)`. Excluded terms
    /// count in the mean with weight zero.
    fn finish(&self, x: f64) -> (f64, f64, f64) {
        if self.terms.is_empty() {
            return (f64::NAN, f64::NAN, 0.0);
        }
        let max = self.terms.iter().map(|&s| x * s).fold(f64::NEG_INFINITY, f64::max);
        let (mut sw, mut sw2, mut sws) = (0.0, 0.0, 0.0);
        for &s in &self.terms {
            let w = (x * s - max).exp();
            sw += w;
            sw2 += w * w;
            sws += w * s;
        }
        let lme = max + (sw / self.n as f64).ln();
        (lme, sws / sw, sw * sw / sw2 / self.n as f64)
    }
}

impl<B: CavityBase> PopDyn<B> {
    pub(crate) fn new(topo: Topology, population: usize, candidates: usize, balanced: bool, seed: u64) -> Self {
        let mut rng = rng::from_seed(rng::derive_seed(seed, u64::MAX));
        let size = topo.n_slots * 2 * population;
        let up = (0..size).map(|_| B::random_up(&mut rng)).collect();
        let down = (0..size).map(|_| B::random_down(&mut rng)).collect();
        Self { topo, population, candidates: candidates.max(1), balanced, seed, sweeps: 0, up, down }
    }

    pub fn population_size(&self) -> usize {
        self.population
    }

    pub fn n_slots(&self) -> usize {
        self.topo.n_slots
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// Members of the variable-to-clause population of `slot` given `J = j`.
    pub fn up_population(&self, slot: usize, j: u8) -> &[B::Up] {
        let p = self.population;
        &self.up[idx(p, slot, j, 0)..idx(p, slot, j, p)]
    }

    pub fn down_population(&self, slot: usize, j: u8) -> &[B::Down] {
        let p = self.population;
        &self.down[idx(p, slot, j, 0)..idx(p, slot, j, p)]
    }

    /// Sets every member of every up population for `J = j` to `m`.
    pub fn fill_up(&mut self, j: u8, m: B::Up) {
        for slot in 0..self.topo.n_slots {
            let p = self.population;
            self.up[idx(p, slot, j, 0)..idx(p, slot, j, p)].fill(m);
        }
    }

    pub fn fill_down(&mut self, j: u8, m: B::Down) {
        for slot in 0..self.topo.n_slots {
            let p = self.population;
            self.down[idx(p, slot, j, 0)..idx(p, slot, j, p)].fill(m);
        }
    }

    /// Rebuilds all variable-to-clause populations.
    pub fn var_phase(&mut self, x: f64) -> SweepStats {
        let p = self.population;
        let n_cand = self.candidates * p;
        let seed = rng::derive_seed_path(self.seed, &[self.sweeps, 0]);
        let (topo, down, balanced) = (&self.topo, &self.down, self.balanced);
        let stats: Vec<SweepStats> = self
            .up
            .par_chunks_mut(p)
            .enumerate()
            .map(|(t, out)| {
                let (slot, j_t) = (t / 2, (t % 2) as u8);
                let mut rng = rng::from_seed(rng::derive_seed(seed, t as u64));
                let (node, pos) = topo.up_source[slot];
                let edges = &topo.var_nodes[node];
                let mut js = Vec::with_capacity(edges.len());
                let mut incoming = Vec::with_capacity(edges.len());
                let mut cands = Vec::with_capacity(n_cand);
                let mut logw = Vec::with_capacity(n_cand);
                let mut st = SweepStats::default();
                for _ in 0..n_cand {
                    draw_var_negations(&mut rng, balanced, pos, j_t, edges.len(), &mut js);
                    incoming.clear();
                    for (q, &(_, d)) in edges.iter().enumerate() {
                        if q != pos {
                            let k = rng.gen_range(0..p);
                            incoming.push((down[idx(p, d, js[q], k)], js[q]));
                        }
                    }
                    match B::var_update(&incoming, j_t) {
                        Some((m, logz)) => {
                            cands.push(m);
                            logw.push(if x == 0.0 { 0.0 } else { x * logz });
                        }
                        None => st.contradictions += 1,
                    }
                }
                if !resample(&mut rng, &cands, &logw, out) {
                    st.wipeouts += 1;
                }
                st
            })
            .collect();
        stats.into_iter().fold(SweepStats::default(), |mut a, b| {
            a += b;
            a
        })
    }

    /// Rebuilds all clause-to-variable populations.
    pub fn clause_phase(&mut self, x: f64) -> SweepStats {
        let p = self.population;
        let n_cand = self.candidates * p;
        let seed = rng::derive_seed_path(self.seed, &[self.sweeps, 1]);
        let (topo, up) = (&self.topo, &self.up);
        let stats: Vec<SweepStats> = self
            .down
            .par_chunks_mut(p)
            .enumerate()
            .map(|(t, out)| {
                let (slot, j_t) = (t / 2, (t % 2) as u8);
                let mut rng = rng::from_seed(rng::derive_seed(seed, t as u64));
                let (node, pos) = topo.down_source[slot];
                let edges = &topo.clause_nodes[node];
                let mut incoming = Vec::with_capacity(edges.len());
                let mut cands = Vec::with_capacity(n_cand);
                let mut logw = Vec::with_capacity(n_cand);
                let mut st = SweepStats::default();
                for _ in 0..n_cand {
                    incoming.clear();
                    for (q, &(u, _)) in edges.iter().enumerate() {
                        if q != pos {
                            let j = rng.gen_range(0..2u8);
                            let k = rng.gen_range(0..p);
                            incoming.push((up[idx(p, u, j, k)], j));
                        }
                    }
                    let (m, logz) = B::clause_update(&incoming, j_t);
                    cands.push(m);
                    logw.push(if x == 0.0 { 0.0 } else { x * logz });
                }
                if !resample(&mut rng, &cands, &logw, out) {
                    st.wipeouts += 1;
                }
                st
            })
            .collect();
        stats.into_iter().fold(SweepStats::default(), |mut a, b| {
            a += b;
            a
        })
    }

    /// One full sweep (variable side, then clause side).
    pub fn sweep(&mut self, x: f64) -> SweepStats {
        let mut st = self.var_phase(x);
        st += self.clause_phase(x);
        self.sweeps += 1;
        st
    }

    /// Estimates `Φ(x)`, `s(x)` and `L(x)` from `samples` random tuples per
    /// node and edge.
    pub fn estimate(&self, x: f64, samples: usize, seed: u64) -> Estimate {
        let p = self.population;
        let topo = &self.topo;
        let (up, down) = (&self.up, &self.down);
        let samples = samples.max(1);

        // (F, s, ess, excluded) per node, folded into weighted sums.
        type Acc = (f64, f64, f64, u64);
        let fold = |a: Acc, b: Acc| (a.0 + b.0, a.1 + b.1, a.2.min(b.2), a.3 + b.3);
        let zero: Acc = (0.0, 0.0, f64::INFINITY, 0);

        let clause: Acc = topo
            .clause_nodes
            .par_iter()
            .enumerate()
            .map(|(a, edges)| {
                let mut rng = rng::from_seed(rng::derive_seed_path(seed, &[0, a as u64]));
                let mut acc = WeightedTerm::default();
                let mut buf = Vec::with_capacity(edges.len());
                for _ in 0..samples {
                    buf.clear();
                    for &(u, _) in edges {
                        let j = rng.gen_range(0..2u8);
                        buf.push((up[idx(p, u, j, rng.gen_range(0..p))], j));
                    }
                    acc.push(B::clause_term(&buf));
                }
                let (f, s, ess) = acc.finish(x);
                (f, s, ess, acc.excluded)
            })
            .reduce(|| zero, fold);

        let var: Acc = topo
            .var_nodes
            .par_iter()
            .enumerate()
            .map(|(i, edges)| {
                let d = edges.len();
                if d == 0 {
                    // Isolated variable: contributes log 2 to the entropy.
                    return (x * std::f64::consts::LN_2, std::f64::consts::LN_2, 1.0, 0);
                }
                let mut rng = rng::from_seed(rng::derive_seed_path(seed, &[1, i as u64]));
                let mut acc = WeightedTerm::default();
                let mut js = Vec::with_capacity(d);
                let mut buf = Vec::with_capacity(d);
                for _ in 0..samples {
                    let j0 = rng.gen_range(0..2u8);
                    draw_var_negations(&mut rng, self.balanced, 0, j0, d, &mut js);
                    buf.clear();
                    for (q, &(_, dn)) in edges.iter().enumerate() {
                        buf.push((down[idx(p, dn, js[q], rng.gen_range(0..p))], js[q]));
                    }
                    acc.push(B::var_term(&buf));
                }
                let (f, s, ess) = acc.finish(x);
                let prefactor =
                    if self.balanced { super::log_balanced_count(d) - d as f64 * std::f64::consts::LN_2 } else { 0.0 };
                (f + prefactor, s, ess, acc.excluded)
            })
            .reduce(|| zero, fold);

        let edge: Acc = topo
            .edges
            .par_iter()
            .enumerate()
            .map(|(e, &(u, dn))| {
                let mut rng = rng::from_seed(rng::derive_seed_path(seed, &[2, e as u64]));
                let mut acc = WeightedTerm::default();
                for _ in 0..samples {
                    let j = rng.gen_range(0..2u8);
                    let m = up[idx(p, u, j, rng.gen_range(0..p))];
                    let h = down[idx(p, dn, j, rng.gen_range(0..p))];
                    acc.push(B::edge_term(m, h));
                }
                let (f, s, ess) = acc.finish(x);
                (f - std::f64::consts::LN_2, s, ess, acc.excluded)
            })
            .reduce(|| zero, fold);

        let (cw, vw, ew) = (topo.clause_weight, topo.var_weight, topo.edge_weight);
        let phi = cw * clause.0 + vw * var.0 - ew * edge.0;
        let s = cw * clause.1 + vw * var.1 - ew * edge.1;
        Estimate {
            phi,
            s,
            l: phi - x * s,
            min_ess_fraction: clause.2.min(var.2).min(edge.2),
            excluded: clause.3 + var.3 + edge.3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling_is_proportional() {
        let mut rng = rng::from_seed(1);
        let cands = [0u8, 1, 2, 3];
        let logw = [f64::NEG_INFINITY, 0.0, 3f64.ln(), f64::NEG_INFINITY];
        let mut out = [9u8; 400];
        assert!(resample(&mut rng, &cands, &logw, &mut out));
        let ones = out.iter().filter(|&&c| c == 1).count();
        let twos = out.iter().filter(|&&c| c == 2).count();
        assert_eq!(ones + twos, 400);
        assert!((ones as i64 - 100).abs() <= 1, "{ones}");

        let dead = [f64::NEG_INFINITY; 4];
        assert!(!resample(&mut rng, &cands, &dead, &mut out));
    }
}
