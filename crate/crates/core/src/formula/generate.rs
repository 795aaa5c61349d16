use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::{FactorGraph, FormulaError};
use crate::rng;

/// Failed local stub swaps tolerated before the configuration model restarts.
pub const MAX_LOCAL_REPAIRS: usize = 10_000;
/// Restarts before the regular generator gives up.
pub const MAX_REGULAR_RESTARTS: usize = 100;

/// Uniform configuration-model sample of an `L`-regular K-SAT graph.
///
/// Variable stubs are shuffled and cut into clauses of `K`; clauses that
/// repeat a variable are repaired by swapping the offending stub with a random
/// stub elsewhere, rejecting swaps that create a new repetition.
pub fn generate_regular(
    n_vars: usize,
    degree: usize,
    clause_size: usize,
    seed: u64,
) -> Result<FactorGraph, FormulaError> {
    if degree < 1 {
        return Err(FormulaError::InvalidParameter("degree L must be >= 1".into()));
    }
    if clause_size < 2 {
        return Err(FormulaError::InvalidParameter("clause size K must be >= 2".into()));
    }
    let product = degree * n_vars;
    if !product.is_multiple_of(clause_size) {
        return Err(FormulaError::Divisibility { product, k: clause_size });
    }
    if clause_size > n_vars {
        return Err(FormulaError::ClauseLargerThanFormula { k: clause_size, n: n_vars });
    }
    let mut rng = rng::from_seed(seed);
    let k = clause_size;
    let n_clauses = product / k;

    for _ in 0..MAX_REGULAR_RESTARTS {
        let mut stubs: Vec<usize> = (0..n_vars).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
        stubs.shuffle(&mut rng);
        if repair(&mut stubs, k, &mut rng) {
            let clauses: Vec<Vec<usize>> = stubs.chunks(k).map(|c| c.to_vec()).collect();
            debug_assert_eq!(clauses.len(), n_clauses);
            return FactorGraph::from_clauses(n_vars, k, &clauses);
        }
    }
    Err(FormulaError::CollisionsUnresolved { restarts: MAX_REGULAR_RESTARTS })
}

/// Position of a stub whose variable already occurs earlier in its clause.
fn first_collision(stubs: &[usize], k: usize) -> Option<usize> {
    stubs
        .chunks(k)
        .enumerate()
        .find_map(|(c, clause)| (1..k).find(|&p| clause[..p].contains(&clause[p])).map(|p| c * k + p))
}

fn occurs_elsewhere(stubs: &[usize], k: usize, pos: usize, var: usize) -> bool {
    let start = pos / k * k;
    (start..start + k).any(|q| q != pos && stubs[q] == var)
}

fn repair(stubs: &mut [usize], k: usize, rng: &mut rng::Rng) -> bool {
    let mut failures = 0;
    while let Some(p) = first_collision(stubs, k) {
        let q = rng.gen_range(0..stubs.len());
        let (vp, vq) = (stubs[p], stubs[q]);
        let ok = p / k != q / k && !occurs_elsewhere(stubs, k, p, vq) && !occurs_elsewhere(stubs, k, q, vp);
        if ok {
            stubs.swap(p, q);
        } else {
            failures += 1;
            if failures >= MAX_LOCAL_REPAIRS {
                return false;
            }
        }
    }
    true
}

/// Poisson ensemble: `round(alpha*N)` clauses, each on `K` distinct uniform
/// variables. Identical clauses may occur more than once.
pub fn generate_poisson(n_vars: usize, alpha: f64, clause_size: usize, seed: u64) -> Result<FactorGraph, FormulaError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(FormulaError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if clause_size < 1 {
        return Err(FormulaError::InvalidParameter("clause size K must be >= 1".into()));
    }
    if clause_size > n_vars {
        return Err(FormulaError::ClauseLargerThanFormula { k: clause_size, n: n_vars });
    }
    let mut rng = rng::from_seed(seed);
    let n_clauses = (alpha * n_vars as f64).round() as usize;
    let clauses: Vec<Vec<usize>> =
        (0..n_clauses).map(|_| index::sample(&mut rng, n_vars, clause_size).into_vec()).collect();
    FactorGraph::from_clauses(n_vars, clause_size, &clauses)
}
