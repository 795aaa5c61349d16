//! Survey propagation and the complexity (log number of clusters per variable).

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::bp::Contradiction;
use crate::formula::{assign_negations, generate_poisson, FactorGraph, FormulaError, NegationMode, Negations};
use crate::rng;
use crate::Status;

#[derive(Debug, Error, PartialEq)]
pub enum SpError {
    #[error("complexity undefined: {0}")]
    Undefined(&'static str),
    #[error("no sign change of the complexity on the grid")]
    NoCrossing,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Survey from variable to clause: probabilities that `i` is frozen to satisfy
/// `a` (`q_s`), frozen to violate it (`q_u`), or free (`q_star`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpVarMessage {
    pub q_s: f64,
    pub q_u: f64,
    pub q_star: f64,
}

impl SpVarMessage {
    pub const FREE: SpVarMessage = SpVarMessage { q_s: 0.0, q_u: 0.0, q_star: 1.0 };
}

/// Probability that the clause warns its variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpClauseMessage {
    pub q_hat: f64,
}

/// `Q̂_ai = ∏_{j∈∂a∖i} Q_ja^U`.
#[inline]
pub fn clause_update<I>(incoming: I) -> SpClauseMessage
where
    I: IntoIterator<Item = SpVarMessage>,
{
    SpClauseMessage { q_hat: incoming.into_iter().map(|m| m.q_u).product() }
}

/// Variable update from the products over the same-sign set `𝒮_ia` and the
/// opposite-sign set `𝒰_ia` of `(1 − Q̂)`. Returns the message and `log z`
/// where `z = 1/C` is the unnormalized total.
#[inline]
pub fn var_update_from_products(prod_same: f64, prod_opposite: f64) -> Result<(SpVarMessage, f64), Contradiction> {
    let w_star = prod_same * prod_opposite;
    let w_s = prod_opposite * (1.0 - prod_same);
    let w_u = prod_same * (1.0 - prod_opposite);
    let z = w_star + w_s + w_u;
    if z > 0.0 {
        Ok((SpVarMessage { q_s: w_s / z, q_u: w_u / z, q_star: w_star / z }, z.ln()))
    } else {
        Err(Contradiction)
    }
}

/// `Q_ia` from the surveys `(Q̂_bi, J_ib)` of `∂i∖a`; `j_out = J_ia` decides
/// which incoming surveys are same-sign.
#[inline]
pub fn var_update<I>(incoming: I, j_out: u8) -> Result<(SpVarMessage, f64), Contradiction>
where
    I: IntoIterator<Item = (SpClauseMessage, u8)>,
{
    let (mut same, mut opposite) = (1.0, 1.0);
    for (m, j) in incoming {
        if j == j_out {
            same *= 1.0 - m.q_hat;
        } else {
            opposite *= 1.0 - m.q_hat;
        }
    }
    var_update_from_products(same, opposite)
}

/// `log(1 − ∏_{j∈∂a} Q_ja^U)`.
#[inline]
pub fn clause_term<I>(all: I) -> f64
where
    I: IntoIterator<Item = SpVarMessage>,
{
    (1.0 - all.into_iter().map(|m| m.q_u).product::<f64>()).ln()
}

/// `log[∏_{∂₀i}(1−Q̂) + ∏_{∂₁i}(1−Q̂) − ∏_{∂i}(1−Q̂)]`.
#[inline]
pub fn var_term<I>(all: I) -> f64
where
    I: IntoIterator<Item = (SpClauseMessage, u8)>,
{
    let mut p = [1.0, 1.0];
    for (m, j) in all {
        p[j as usize] *= 1.0 - m.q_hat;
    }
    (p[0] + p[1] - p[0] * p[1]).ln()
}

/// `log(1 − Q_ia^U Q̂_ai)`.
#[inline]
pub fn edge_term(q: SpVarMessage, q_hat: SpClauseMessage) -> f64 {
    (1.0 - q.q_u * q_hat.q_hat).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpInit {
    /// Surveys drawn uniformly in (0, 1).
    Random,
    /// All surveys zero (the trivial fixed point).
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    pub init: SpInit,
    /// Sweeps over which the complexity is time-averaged when SP does not
    /// converge.
    pub average_window: Option<usize>,
}

impl Default for SpConfig {
    fn default() -> Self {
        Self { damping: 0.2, tol: 1e-10, max_sweeps: 10_000, seed: 0, init: SpInit::Random, average_window: Some(100) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpState {
    pub var_to_clause: Vec<SpVarMessage>,
    pub clause_to_var: Vec<SpClauseMessage>,
    pub sweeps: usize,
    pub status: Status,
    pub max_change: f64,
    pub averaged_complexity: Option<f64>,
}

/// Surveys below this are treated as zero when classifying a fixed point.
pub const TRIVIAL_THRESHOLD: f64 = 1e-6;

impl SpState {
    pub fn max_survey(&self) -> f64 {
        self.clause_to_var.iter().map(|m| m.q_hat).fold(0.0, f64::max)
    }

    pub fn is_trivial(&self) -> bool {
        self.status != Status::Contradiction && self.max_survey() < TRIVIAL_THRESHOLD
    }
}

fn refresh_var_message(
    graph: &FactorGraph,
    negations: &Negations,
    clause_to_var: &[SpClauseMessage],
    e: usize,
) -> Result<SpVarMessage, Contradiction> {
    let i = graph.edge(e).var;
    var_update(
        graph.var_edges(i).iter().filter(|&&b| b != e).map(|&b| (clause_to_var[b], negations.get(b))),
        negations.get(e),
    )
    .map(|r| r.0)
}

/// Random-order asynchronous SP with damping on `Q̂`, same sweep structure as
/// [`crate::bp::run_bp`].
pub fn run_sp(graph: &FactorGraph, negations: &Negations, config: &SpConfig) -> SpState {
    let mut rng = rng::from_seed(config.seed);
    let n_edges = graph.n_edges();
    let clause_to_var: Vec<SpClauseMessage> = match config.init {
        SpInit::Random => (0..n_edges).map(|_| SpClauseMessage { q_hat: rng.gen_range(0.0..1.0) }).collect(),
        SpInit::Zero => vec![SpClauseMessage { q_hat: 0.0 }; n_edges],
    };
    let mut state = SpState {
        var_to_clause: vec![SpVarMessage::FREE; n_edges],
        clause_to_var,
        sweeps: 0,
        status: Status::NotConverged,
        max_change: f64::INFINITY,
        averaged_complexity: None,
    };
    for e in 0..n_edges {
        match refresh_var_message(graph, negations, &state.clause_to_var, e) {
            Ok(m) => state.var_to_clause[e] = m,
            Err(Contradiction) => {
                state.status = Status::Contradiction;
                return state;
            }
        }
    }

    let mut order: Vec<usize> = (0..graph.n_clauses()).collect();
    let window_start = config.average_window.map(|w| config.max_sweeps.saturating_sub(w));
    let (mut sum, mut count) = (0.0, 0usize);
    let mut incoming: Vec<SpVarMessage> = Vec::with_capacity(graph.clause_size());

    for sweep in 1..=config.max_sweeps {
        order.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &a in &order {
            let edges = graph.clause_edges(a);
            for e in edges.clone() {
                match refresh_var_message(graph, negations, &state.clause_to_var, e) {
                    Ok(m) => state.var_to_clause[e] = m,
                    Err(Contradiction) => {
                        state.sweeps = sweep;
                        state.status = Status::Contradiction;
                        return state;
                    }
                }
            }
            incoming.clear();
            incoming.extend(edges.clone().map(|e| state.var_to_clause[e]));
            for (p, e) in edges.enumerate() {
                let cand = clause_update(incoming.iter().enumerate().filter(|&(q, _)| q != p).map(|(_, &m)| m));
                let old = state.clause_to_var[e].q_hat;
                let new = (1.0 - config.damping) * cand.q_hat + config.damping * old;
                max_change = max_change.max((new - old).abs());
                state.clause_to_var[e].q_hat = new;
            }
        }
        state.sweeps = sweep;
        state.max_change = max_change;
        if max_change < config.tol {
            state.status = Status::Converged;
            break;
        }
        if window_start.is_some_and(|w| sweep > w) {
            if let Ok(c) = complexity_terms(graph, negations, &state) {
                sum += c;
                count += 1;
            }
        }
    }
    for e in 0..n_edges {
        match refresh_var_message(graph, negations, &state.clause_to_var, e) {
            Ok(m) => state.var_to_clause[e] = m,
            Err(Contradiction) => {
                state.status = Status::Contradiction;
                return state;
            }
        }
    }
    if count > 0 {
        state.averaged_complexity = Some(sum / count as f64);
    }
    state
}

/// Runs SP from a random start and from the all-zero start.
#[derive(Debug, Clone, Serialize)]
pub struct SpDualRun {
    pub random: SpState,
    pub zero: SpState,
    /// The random start fell into the trivial fixed point.
    pub trivial: bool,
}

pub fn run_sp_dual(graph: &FactorGraph, negations: &Negations, config: &SpConfig) -> SpDualRun {
    let random = run_sp(graph, negations, &SpConfig { init: SpInit::Random, ..*config });
    let zero = run_sp(graph, negations, &SpConfig { init: SpInit::Zero, ..*config });
    let trivial = random.is_trivial();
    SpDualRun { random, zero, trivial }
}

fn complexity_terms(graph: &FactorGraph, negations: &Negations, state: &SpState) -> Result<f64, SpError> {
    let n = graph.n_vars();
    if n == 0 {
        return Err(SpError::Undefined("formula has no variables"));
    }
    let mut total = 0.0;
    for a in 0..graph.n_clauses() {
        total += clause_term(graph.clause_edges(a).map(|e| state.var_to_clause[e]));
    }
    for i in 0..n {
        total += var_term(graph.var_edges(i).iter().map(|&e| (state.clause_to_var[e], negations.get(e))));
    }
    for e in 0..graph.n_edges() {
        total -= edge_term(state.var_to_clause[e], state.clause_to_var[e]);
    }
    let c = total / n as f64;
    if c.is_finite() {
        Ok(c)
    } else {
        Err(SpError::Undefined("non-finite SP functional"))
    }
}

/// Complexity per variable from the three SP functionals.
pub fn complexity(graph: &FactorGraph, negations: &Negations, state: &SpState) -> Result<f64, SpError> {
    if state.status == Status::Contradiction {
        return Err(SpError::Undefined("SP reached a contradiction"));
    }
    complexity_terms(graph, negations, state)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub alpha: f64,
    /// `0` for the trivial fixed point, the time average when SP did not
    /// converge, `None` after a contradiction.
    pub complexity: Option<f64>,
    pub status: Status,
    pub trivial: bool,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdScan {
    pub points: Vec<ScanPoint>,
    pub crossing: Option<f64>,
}

/// Evaluates the complexity of one balanced Poisson instance at `alpha`.
pub fn balanced_scan_point(
    n_vars: usize,
    alpha: f64,
    k: usize,
    seed: u64,
    config: &SpConfig,
) -> Result<ScanPoint, SpError> {
    let graph = generate_poisson(n_vars, alpha, k, rng::derive_seed(seed, 0))?;
    let negations = assign_negations(&graph, NegationMode::Balanced, rng::derive_seed(seed, 1));
    let state = run_sp(&graph, &negations, &SpConfig { seed: rng::derive_seed(seed, 2), ..*config });
    let trivial = state.is_trivial();
    let complexity = match state.status {
        Status::Contradiction => None,
        _ if trivial => Some(0.0),
        Status::Converged => complexity(&graph, &negations, &state).ok(),
        Status::NotConverged => state.averaged_complexity.or_else(|| complexity(&graph, &negations, &state).ok()),
    };
    Ok(ScanPoint { alpha, complexity, status: state.status, trivial, sweeps: state.sweeps })
}

/// First `>0 → <0` change of the complexity along the grid, linearly
/// interpolated. Trivial and undefined points are skipped.
pub fn locate_crossing(points: &[ScanPoint]) -> Option<f64> {
    let usable: Vec<(f64, f64)> =
        points.iter().filter(|p| !p.trivial).filter_map(|p| p.complexity.map(|c| (p.alpha, c))).collect();
    usable.windows(2).find_map(|w| {
        let ((a0, c0), (a1, c1)) = (w[0], w[1]);
        (c0 > 0.0 && c1 <= 0.0).then(|| a0 + (a1 - a0) * c0 / (c0 - c1))
    })
}

/// Complexity of single balanced Poisson instances along an `alpha` grid and
/// the zero crossing.
pub fn threshold_scan_balanced(
    alphas: &[f64],
    n_vars: usize,
    k: usize,
    seed: u64,
    config: &SpConfig,
) -> Result<ThresholdScan, SpError> {
    if alphas.len() < 2 {
        return Err(SpError::InvalidGrid("need at least two alpha values".into()));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpError::InvalidGrid("alpha grid must be increasing".into()));
    }
    let points = alphas
        .iter()
        .enumerate()
        .map(|(idx, &alpha)| balanced_scan_point(n_vars, alpha, k, rng::derive_seed(seed, idx as u64), config))
        .collect::<Result<Vec<_>, _>>()?;
    let crossing = locate_crossing(&points);
    if crossing.is_none() {
        return Err(SpError::NoCrossing);
    }
    Ok(ThresholdScan { points, crossing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::generate_regular;
    use approx::assert_abs_diff_eq;

    fn q(u: f64) -> SpVarMessage {
        SpVarMessage { q_s: 0.0, q_u: u, q_star: 1.0 - u }
    }

    #[test]
    fn clause_update_values() {
        assert_eq!(clause_update([q(0.0), q(0.7)]).q_hat, 0.0);
        assert_eq!(clause_update([q(1.0), q(1.0)]).q_hat, 1.0);
        assert_abs_diff_eq!(clause_update([q(0.5), q(0.5)]).q_hat, 0.25);
    }

    #[test]
    fn var_update_values() {
        let zero = SpClauseMessage { q_hat: 0.0 };
        let (m, _) = var_update([(zero, 0), (zero, 1), (zero, 1)], 0).unwrap();
        assert_eq!(m, SpVarMessage::FREE);

        let half = SpClauseMessage { q_hat: 0.5 };
        let (m, _) = var_update([(half, 0), (half, 1)], 0).unwrap();
        for v in [m.q_s, m.q_u, m.q_star] {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }

        let one = SpClauseMessage { q_hat: 1.0 };
        assert_eq!(var_update([(one, 1), (one, 0)], 1), Err(Contradiction));
    }

    #[test]
    fn trivial_fixed_point_is_exact() {
        let g = generate_regular(600, 9, 3, 4).unwrap();
        let j = assign_negations(&g, NegationMode::Random, 1);
        let st = run_sp(&g, &j, &SpConfig { init: SpInit::Zero, ..Default::default() });
        assert_eq!(st.status, Status::Converged);
        assert_eq!(st.sweeps, 1);
        assert!(st.clause_to_var.iter().all(|m| m.q_hat == 0.0));
        assert!(st.var_to_clause.iter().all(|m| *m == SpVarMessage::FREE));
        assert_eq!(complexity(&g, &j, &st).unwrap(), 0.0);
    }

    #[test]
    fn surveys_normalized() {
        let g = generate_regular(300, 13, 3, 2).unwrap();
        let j = assign_negations(&g, NegationMode::Random, 2);
        let st = run_sp(&g, &j, &SpConfig { max_sweeps: 20, ..Default::default() });
        for m in &st.var_to_clause {
            assert!((m.q_s + m.q_u + m.q_star - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crossing_interpolation() {
        let mk = |alpha, c: Option<f64>, trivial| ScanPoint {
            alpha,
            complexity: c,
            status: Status::Converged,
            trivial,
            sweeps: 1,
        };
        let pts = vec![
            mk(3.1, Some(0.0), true),
            mk(3.3, Some(0.02), false),
            mk(3.4, Some(0.01), false),
            mk(3.5, Some(-0.01), false),
        ];
        assert_abs_diff_eq!(locate_crossing(&pts).unwrap(), 3.45, epsilon = 1e-12);
        assert_eq!(locate_crossing(&pts[..1]), None);
    }

    #[test]
    fn scan_without_sign_change_errors() {
        let cfg = SpConfig { max_sweeps: 300, tol: 1e-6, ..Default::default() };
        let r = threshold_scan_balanced(&[2.0, 2.5, 3.0], 2000, 3, 1, &cfg);
        assert_eq!(r.unwrap_err(), SpError::NoCrossing);
    }
}
