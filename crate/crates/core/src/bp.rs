//! Belief propagation for the zero-energy (solution-counting) measure.
//!
//! Messages are pairs `(ν⁰, ν¹)`; the variable-to-clause message `ν_ia` is the
//! cavity marginal of `x_i`, the clause-to-variable message `ν̂_ai` is the
//! clause's vote. The three local functionals [`clause_term`], [`var_term`]
//! and [`edge_term`] combine into the Bethe entropy and are reused by the
//! large-deviation population dynamics.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;
use thiserror::Error;

use crate::formula::{FactorGraph, Negations};
use crate::rng;
use crate::Status;

/// Zero normalizer in a variable update: the incoming messages force both
/// values of the variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("zero normalizer (contradiction)")]
pub struct Contradiction;

#[derive(Debug, Error, PartialEq)]
pub enum BpError {
    #[error("entropy undefined: {0}")]
    Undefined(&'static str),
    #[error("factorized iteration did not converge after {iterations} iterations")]
    FactorizedNotConverged { iterations: usize, last: FactorizedBp },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Normalized pair `(ν⁰, ν¹)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BpMessage {
    pub p: [f64; 2],
}

impl BpMessage {
    pub const UNIFORM: BpMessage = BpMessage { p: [0.5, 0.5] };

    /// Normalizes `(w0, w1)`; `None` when both vanish.
    #[inline]
    pub fn from_weights(w0: f64, w1: f64) -> Option<Self> {
        let z = w0 + w1;
        (z > 0.0).then(|| BpMessage { p: [w0 / z, w1 / z] })
    }

    /// Message with `ν⁰ = p0`.
    #[inline]
    pub fn with_p0(p0: f64) -> Self {
        BpMessage { p: [p0, 1.0 - p0] }
    }

    #[inline]
    pub fn nu0(&self) -> f64 {
        self.p[0]
    }

    #[inline]
    pub fn nu1(&self) -> f64 {
        self.p[1]
    }

    #[inline]
    pub fn get(&self, r: u8) -> f64 {
        self.p[r as usize]
    }

    /// Swaps the two components.
    pub fn flipped(&self) -> Self {
        BpMessage { p: [self.p[1], self.p[0]] }
    }

    fn max_diff(&self, other: &Self) -> f64 {
        (self.p[0] - other.p[0]).abs().max((self.p[1] - other.p[1]).abs())
    }
}

/// `ν̂_ai` from the messages `(ν_ja, J_ja)` of `∂a∖i`, together with
/// `log ẑ_ai = log(2 − Π)` where `Π = ∏_j ν_ja^{J_ja}`.
#[inline]
pub fn clause_update<I>(incoming: I, j_out: u8) -> (BpMessage, f64)
where
    I: IntoIterator<Item = (BpMessage, u8)>,
{
    let prod: f64 = incoming.into_iter().map(|(m, j)| m.get(j)).product();
    let norm = 2.0 - prod;
    let mut p = [1.0 / norm; 2];
    p[j_out as usize] = (1.0 - prod) / norm;
    (BpMessage { p }, norm.ln())
}

/// `ν_ia ∝ ∏_b ν̂_bi` over `∂i∖a`, with `log z_ia` the log of the normalizer.
/// An empty neighbourhood yields the uniform message.
#[inline]
pub fn var_update<I>(incoming: I) -> Result<(BpMessage, f64), Contradiction>
where
    I: IntoIterator<Item = BpMessage>,
{
    let (w0, w1) = incoming.into_iter().fold((1.0, 1.0), |(a, b), m| (a * m.p[0], b * m.p[1]));
    let z = w0 + w1;
    if z > 0.0 {
        Ok((BpMessage { p: [w0 / z, w1 / z] }, z.ln()))
    } else {
        Err(Contradiction)
    }
}

/// `log(1 − ∏_{i∈∂a} ν_ia^{J_ia})`.
#[inline]
pub fn clause_term<I>(all: I) -> f64
where
    I: IntoIterator<Item = (BpMessage, u8)>,
{
    let prod: f64 = all.into_iter().map(|(m, j)| m.get(j)).product();
    (1.0 - prod).ln()
}

/// `log(∏_{b∈∂i} ν̂⁰_bi + ∏_{b∈∂i} ν̂¹_bi)`.
#[inline]
pub fn var_term<I>(all: I) -> f64
where
    I: IntoIterator<Item = BpMessage>,
{
    let (w0, w1) = all.into_iter().fold((1.0, 1.0), |(a, b), m| (a * m.p[0], b * m.p[1]));
    (w0 + w1).ln()
}

/// `log(ν⁰_ia ν̂⁰_ai + ν¹_ia ν̂¹_ai)`.
#[inline]
pub fn edge_term(nu: BpMessage, nu_hat: BpMessage) -> f64 {
    (nu.p[0] * nu_hat.p[0] + nu.p[1] * nu_hat.p[1]).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BpConfig {
    /// Weight of the old clause message in `ν̂ ← (1−d)·ν̂_new + d·ν̂_old`.
    pub damping: f64,
    /// Convergence threshold on the largest absolute change of a `ν̂` in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    /// When set, the entropy is also averaged over the last `W` sweeps (used
    /// for runs that do not converge).
    pub average_window: Option<usize>,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self { damping: 0.2, tol: 1e-10, max_sweeps: 10_000, seed: 0, average_window: None }
    }
}

/// Messages per edge id (`var_to_clause[e]` is `ν_ia`, `clause_to_var[e]` is
/// `ν̂_ai` for `e = (i, a)`).
#[derive(Debug, Clone, Serialize)]
pub struct BpState {
    pub var_to_clause: Vec<BpMessage>,
    pub clause_to_var: Vec<BpMessage>,
    pub sweeps: usize,
    pub status: Status,
    /// Largest `ν̂` change in the last sweep.
    pub max_change: f64,
    /// Entropy averaged over the trailing window, if requested and defined.
    pub averaged_entropy: Option<f64>,
}

fn refresh_var_message(graph: &FactorGraph, clause_to_var: &[BpMessage], e: usize) -> Result<BpMessage, Contradiction> {
    let i = graph.edge(e).var;
    var_update(graph.var_edges(i).iter().filter(|&&b| b != e).map(|&b| clause_to_var[b])).map(|r| r.0)
}

/// Random-order asynchronous BP. Each sweep visits the clauses in a fresh
/// random order; a visit refreshes `ν_ia` for the clause's variables and then
/// its outgoing `ν̂_ai` with damping.
pub fn run_bp(graph: &FactorGraph, negations: &Negations, config: &BpConfig) -> BpState {
    let mut rng = rng::from_seed(config.seed);
    let n_edges = graph.n_edges();
    let clause_to_var: Vec<BpMessage> = (0..n_edges).map(|_| BpMessage::with_p0(rng.gen_range(0.0..1.0))).collect();
    let mut state = BpState {
        var_to_clause: vec![BpMessage::UNIFORM; n_edges],
        clause_to_var,
        sweeps: 0,
        status: Status::NotConverged,
        max_change: f64::INFINITY,
        averaged_entropy: None,
    };
    for e in 0..n_edges {
        state.var_to_clause[e] =
            refresh_var_message(graph, &state.clause_to_var, e).expect("interior initial messages cannot contradict");
    }

    let mut order: Vec<usize> = (0..graph.n_clauses()).collect();
    let k = graph.clause_size();
    let window_start = config.average_window.map(|w| config.max_sweeps.saturating_sub(w));
    let (mut ent_sum, mut ent_n) = (0.0, 0usize);
    let mut incoming = Vec::with_capacity(k);

    for sweep in 1..=config.max_sweeps {
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &a in &order {
            let edges = graph.clause_edges(a);
            for e in edges.clone() {
                match refresh_var_message(graph, &state.clause_to_var, e) {
                    Ok(m) => state.var_to_clause[e] = m,
                    Err(Contradiction) => {
                        state.sweeps = sweep;
                        state.status = Status::Contradiction;
                        return state;
                    }
                }
            }
            incoming.clear();
            incoming.extend(edges.clone().map(|e| (state.var_to_clause[e], negations.get(e))));
            for (p, e) in edges.enumerate() {
                let others = incoming.iter().enumerate().filter(|&(q, _)| q != p).map(|(_, &m)| m);
                let (cand, _) = clause_update(others, negations.get(e));
                let old = state.clause_to_var[e];
                let d = config.damping;
                let new =
                    BpMessage::from_weights((1.0 - d) * cand.p[0] + d * old.p[0], (1.0 - d) * cand.p[1] + d * old.p[1])
                        .expect("convex combination of normalized messages");
                max_change = max_change.max(new.max_diff(&old));
                state.clause_to_var[e] = new;
            }
        }
        state.sweeps = sweep;
        state.max_change = max_change;
        if max_change < config.tol {
            state.status = Status::Converged;
            break;
        }
        if window_start.is_some_and(|w| sweep > w) {
            if let Ok(s) = entropy_terms(graph, negations, &state) {
                ent_sum += s;
                ent_n += 1;
            }
        }
    }

    for e in 0..n_edges {
        match refresh_var_message(graph, &state.clause_to_var, e) {
            Ok(m) => state.var_to_clause[e] = m,
            Err(Contradiction) => {
                state.status = Status::Contradiction;
                return state;
            }
        }
    }
    if ent_n > 0 {
        state.averaged_entropy = Some(ent_sum / ent_n as f64);
    }
    state
}

fn entropy_terms(graph: &FactorGraph, negations: &Negations, state: &BpState) -> Result<f64, BpError> {
    let n = graph.n_vars();
    if n == 0 {
        return Err(BpError::Undefined("formula has no variables"));
    }
    let mut total = 0.0;
    for a in 0..graph.n_clauses() {
        total += clause_term(graph.clause_edges(a).map(|e| (state.var_to_clause[e], negations.get(e))));
    }
    for i in 0..n {
        total += var_term(graph.var_edges(i).iter().map(|&e| state.clause_to_var[e]));
    }
    for e in 0..graph.n_edges() {
        total -= edge_term(state.var_to_clause[e], state.clause_to_var[e]);
    }
    let s = total / n as f64;
    if s.is_finite() {
        Ok(s)
    } else {
        Err(BpError::Undefined("non-finite Bethe functional"))
    }
}

/// Bethe entropy per variable, `(Σ_a S_a + Σ_i S_i − Σ_(ai) S_ai)/N`.
///
/// Undefined after a contradiction. For `NotConverged` states the value is
/// computed from the current messages and callers should check the status.
pub fn bethe_entropy(graph: &FactorGraph, negations: &Negations, state: &BpState) -> Result<f64, BpError> {
    if state.status == Status::Contradiction {
        return Err(BpError::Undefined("BP reached a contradiction"));
    }
    entropy_terms(graph, negations, state)
}

/// Negation pattern of a factorized regular fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorizedPattern {
    /// `J ≡ 0` (equivalently any polarized configuration).
    Uniform,
    /// Every variable negated in exactly `L/2` of its clauses; even `L` only.
    BalancedEven,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct FactorizedConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FactorizedConfig {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-14, max_iterations: 1_000_000 }
    }
}

/// Edge-independent fixed point. Both scalars are probabilities of the value
/// that violates the edge's literal: `var_msg = ν_ia^{J_ia}` and
/// `clause_msg = ν̂_ai^{J_ia}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct FactorizedBp {
    pub var_msg: f64,
    pub clause_msg: f64,
    pub entropy: f64,
    pub iterations: usize,
}

/// Solves the factorized BP equations of a `(L, K)`-regular formula and
/// returns the entropy density.
pub fn factorized_regular_bp(
    degree: usize,
    k: usize,
    pattern: FactorizedPattern,
    config: &FactorizedConfig,
) -> Result<FactorizedBp, BpError> {
    if degree == 0 || k < 2 {
        return Err(BpError::InvalidParameter(format!("need L >= 1 and K >= 2, got L={degree} K={k}")));
    }
    // Same-literal and opposite-literal neighbours of an edge, and the J=0/J=1
    // split of a full neighbourhood.
    let (same, opposite, n0, n1) = match pattern {
        FactorizedPattern::Uniform => (degree - 1, 0, degree, 0),
        FactorizedPattern::BalancedEven => {
            if !degree.is_multiple_of(2) {
                return Err(BpError::InvalidParameter(format!("balanced_even needs even L, got {degree}")));
            }
            (degree / 2 - 1, degree / 2, degree / 2, degree / 2)
        }
    };
    let clause_of = |nu: f64| {
        let prod = nu.powi(k as i32 - 1);
        (1.0 - prod) / (2.0 - prod)
    };
    let var_of = |h: f64| {
        let w_viol = h.powi(same as i32) * (1.0 - h).powi(opposite as i32);
        let w_sat = (1.0 - h).powi(same as i32) * h.powi(opposite as i32);
        w_viol / (w_viol + w_sat)
    };
    let entropy_of = |nu: f64, h: f64| {
        let alpha = degree as f64 / k as f64;
        let s_a = (1.0 - nu.powi(k as i32)).ln();
        let s_i = (h.powi(n0 as i32) * (1.0 - h).powi(n1 as i32) + (1.0 - h).powi(n0 as i32) * h.powi(n1 as i32)).ln();
        let s_ai = (nu * h + (1.0 - nu) * (1.0 - h)).ln();
        alpha * s_a + s_i - degree as f64 * s_ai
    };

    let mut nu = 0.5;
    for it in 1..=config.max_iterations {
        let new = (1.0 - config.damping) * var_of(clause_of(nu)) + config.damping * nu;
        let delta = (new - nu).abs();
        nu = new;
        if delta < config.tol {
            let h = clause_of(nu);
            return Ok(FactorizedBp { var_msg: nu, clause_msg: h, entropy: entropy_of(nu, h), iterations: it });
        }
    }
    let h = clause_of(nu);
    Err(BpError::FactorizedNotConverged {
        iterations: config.max_iterations,
        last: FactorizedBp {
            var_msg: nu,
            clause_msg: h,
            entropy: entropy_of(nu, h),
            iterations: config.max_iterations,
        },
    })
}
