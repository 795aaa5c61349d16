use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EdgeId, FactorGraph, FormulaError, VarId};
use crate::rng::{self, Rng};

/// Per-edge negation bits: `J_ia = 1` when variable `i` appears negated in
/// clause `a`. A clause is violated iff `x_i = J_ia` for all its variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Negations(Vec<u8>);

impl Negations {
    pub fn zeros(n_edges: usize) -> Self {
        Self(vec![0; n_edges])
    }

    pub fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self(bits)
    }

    /// Checks the domain against a graph.
    pub fn for_graph(graph: &FactorGraph, bits: Vec<u8>) -> Result<Self, FormulaError> {
        if bits.len() != graph.n_edges() {
            return Err(FormulaError::NegationLength { got: bits.len(), expected: graph.n_edges() });
        }
        Ok(Self(bits.into_iter().map(|b| b & 1).collect()))
    }

    #[inline]
    pub fn get(&self, e: EdgeId) -> u8 {
        self.0[e]
    }

    pub fn set(&mut self, e: EdgeId, j: u8) {
        self.0[e] = j & 1;
    }

    pub fn flip(&mut self, e: EdgeId) {
        self.0[e] ^= 1;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// `(#J=0, #J=1)` among the edges of variable `i`.
    pub fn split(&self, graph: &FactorGraph, i: VarId) -> (usize, usize) {
        let ones = graph.var_edges(i).iter().filter(|&&e| self.0[e] == 1).count();
        (graph.degree(i) - ones, ones)
    }

    /// Every variable negated in half its clauses (one off for odd degree).
    pub fn is_balanced(&self, graph: &FactorGraph) -> bool {
        (0..graph.n_vars()).all(|i| {
            let (z, o) = self.split(graph, i);
            z.abs_diff(o) <= 1
        })
    }

    /// Every variable has the same bit on all its edges.
    pub fn is_polarized(&self, graph: &FactorGraph) -> bool {
        (0..graph.n_vars()).all(|i| {
            let e = graph.var_edges(i);
            e.iter().all(|&x| self.0[x] == self.0[e[0]])
        })
    }

    /// Complement the bits of every edge of variable `i`.
    pub fn gauge_flip(&mut self, graph: &FactorGraph, i: VarId) {
        for &e in graph.var_edges(i) {
            self.0[e] ^= 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationMode {
    Random,
    Balanced,
    Polarized,
    AllZero,
}

impl fmt::Display for NegationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegationMode::Random => "random",
            NegationMode::Balanced => "balanced",
            NegationMode::Polarized => "polarized",
            NegationMode::AllZero => "all_zero",
        })
    }
}

impl FromStr for NegationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "balanced" => Ok(Self::Balanced),
            "polarized" => Ok(Self::Polarized),
            "all_zero" | "all-zero" | "zero" => Ok(Self::AllZero),
            _ => Err(format!("unknown negation mode '{s}' (random|balanced|polarized|all_zero)")),
        }
    }
}

pub fn assign_negations(graph: &FactorGraph, mode: NegationMode, seed: u64) -> Negations {
    let mut rng = rng::from_seed(seed);
    let mut bits = vec![0u8; graph.n_edges()];
    match mode {
        NegationMode::AllZero => {}
        NegationMode::Random => bits.iter_mut().for_each(|b| *b = rng.gen_range(0..2)),
        NegationMode::Polarized => {
            for i in 0..graph.n_vars() {
                let c = rng.gen_range(0..2);
                for &e in graph.var_edges(i) {
                    bits[e] = c;
                }
            }
        }
        NegationMode::Balanced => {
            for i in 0..graph.n_vars() {
                let edges = graph.var_edges(i);
                let d = edges.len();
                let ones = if d.is_multiple_of(2) { d / 2 } else { d / 2 + rng.gen_range(0..2) };
                let mut pattern: Vec<u8> = (0..d).map(|p| u8::from(p < ones)).collect();
                pattern.shuffle(&mut rng);
                for (&e, b) in edges.iter().zip(pattern) {
                    bits[e] = b;
                }
            }
        }
    }
    Negations(bits)
}

/// Fills `out` (the other `d-1` edges of a degree-`d` variable) with a
/// uniformly random completion such that, together with `j_fixed`, the
/// variable is balanced. Every balanced pattern of the full neighbourhood
/// that agrees with `j_fixed` is equally likely.
pub fn balanced_completion(rng: &mut Rng, j_fixed: u8, out: &mut [u8]) {
    let others = out.len();
    let d = others + 1;
    let fixed = j_fixed as usize;
    let ones_rest = if d.is_multiple_of(2) {
        d / 2 - fixed
    } else {
        // total ones is (d-1)/2 or (d+1)/2; weight each by its number of
        // completions C(d-1, total - fixed).
        let hi = d / 2 + 1 - fixed;
        match (d / 2).checked_sub(fixed) {
            None => hi,
            Some(lo) => {
                let w_lo = binomial(others, lo);
                let w_hi = binomial(others, hi);
                if rng.gen::<f64>() * (w_lo + w_hi) < w_lo {
                    lo
                } else {
                    hi
                }
            }
        }
    };
    for (p, b) in out.iter_mut().enumerate() {
        *b = u8::from(p < ones_rest);
    }
    out.shuffle(rng);
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{generate_poisson, generate_regular};
    use proptest::prelude::*;

    #[test]
    fn all_zero_mode() {
        let g = generate_regular(12, 4, 3, 1).unwrap();
        let j = assign_negations(&g, NegationMode::AllZero, 3);
        assert!(j.as_slice().iter().all(|&b| b == 0));
    }

    #[test]
    fn balanced_even_degree_split() {
        let g = generate_regular(12, 4, 3, 1).unwrap();
        let j = assign_negations(&g, NegationMode::Balanced, 3);
        for i in 0..12 {
            assert_eq!(j.split(&g, i), (2, 2));
        }
    }

    #[test]
    fn polarized_mode() {
        let g = generate_regular(12, 5, 3, 1).unwrap();
        let j = assign_negations(&g, NegationMode::Polarized, 9);
        assert!(j.is_polarized(&g));
    }

    #[test]
    fn completion_frequencies_odd_degree() {
        // d = 3 with J fixed to 0: balanced patterns of the other two are
        // {01, 10} (one 1 in total) and {11} (two in total): 3 equally likely.
        let mut rng = rng::from_seed(1);
        let mut counts = [0usize; 3];
        let mut out = [0u8; 2];
        for _ in 0..30_000 {
            balanced_completion(&mut rng, 0, &mut out);
            let ones = out.iter().filter(|&&b| b == 1).count();
            counts[ones] += 1;
        }
        assert_eq!(counts[0], 0);
        let f1 = counts[1] as f64 / 30_000.0;
        assert!((f1 - 2.0 / 3.0).abs() < 0.02, "{f1}");
    }

    #[test]
    fn completion_even_degree() {
        let mut rng = rng::from_seed(2);
        let mut out = [0u8; 3];
        for j in 0..2u8 {
            balanced_completion(&mut rng, j, &mut out);
            let ones = out.iter().filter(|&&b| b == 1).count() + j as usize;
            assert_eq!(ones, 2);
        }
    }

    proptest! {
        #[test]
        fn balanced_assignment_imbalance(seed in any::<u64>(), alpha in 0.5f64..5.0) {
            let g = generate_poisson(60, alpha, 3, seed).unwrap();
            let j = assign_negations(&g, NegationMode::Balanced, seed ^ 1);
            for i in 0..g.n_vars() {
                let (z, o) = j.split(&g, i);
                prop_assert!(z.abs_diff(o) <= 1);
                if g.degree(i).is_multiple_of(2) {
                    prop_assert_eq!(z, o);
                }
            }
        }

        #[test]
        fn completion_always_balanced(seed in any::<u64>(), d in 1usize..12, j in 0u8..2) {
            let mut rng = rng::from_seed(seed);
            let mut out = vec![0u8; d - 1];
            balanced_completion(&mut rng, j, &mut out);
            let ones = out.iter().filter(|&&b| b == 1).count() + j as usize;
            prop_assert!((2 * ones).abs_diff(d) <= 1);
        }
    }
}
