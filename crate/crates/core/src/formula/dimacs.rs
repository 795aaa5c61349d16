//! DIMACS CNF with the negation encoding `J_ia = 0` for a positive literal and
//! `J_ia = 1` for a negative one.

use std::fmt::Write as _;

use thiserror::Error;

use super::{FactorGraph, Negations};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct DimacsError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> DimacsError {
    DimacsError { line, message: message.into() }
}

pub fn to_dimacs(graph: &FactorGraph, negations: &Negations) -> String {
    let mut out = String::new();
    writeln!(out, "p cnf {} {}", graph.n_vars(), graph.n_clauses()).unwrap();
    for a in 0..graph.n_clauses() {
        for e in graph.clause_edges(a) {
            let v = graph.edge(e).var + 1;
            if negations.get(e) == 1 {
                write!(out, "-{v} ").unwrap();
            } else {
                write!(out, "{v} ").unwrap();
            }
        }
        out.push_str("0\n");
    }
    out
}

pub fn from_dimacs(text: &str) -> Result<(FactorGraph, Negations), DimacsError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<usize>> = Vec::new();
    let mut bits: Vec<u8> = Vec::new();
    let mut current: Vec<(usize, u8)> = Vec::new();
    let mut clause_size: Option<usize> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(err(line_no, "duplicate header"));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(err(line_no, format!("malformed header '{line}'")));
            }
            let n = parts[2].parse().map_err(|_| err(line_no, "bad variable count"))?;
            let m = parts[3].parse().map_err(|_| err(line_no, "bad clause count"))?;
            header = Some((n, m));
            continue;
        }
        let (n_vars, n_clauses) = header.ok_or_else(|| err(line_no, "clause before 'p cnf' header"))?;
        for tok in line.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| err(line_no, format!("bad literal '{tok}'")))?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(err(line_no, "empty clause"));
                }
                let k = *clause_size.get_or_insert(current.len());
                if current.len() != k {
                    return Err(err(line_no, format!("clause has {} literals, expected {k}", current.len())));
                }
                if clauses.len() == n_clauses {
                    return Err(err(line_no, format!("more than the {n_clauses} clauses declared")));
                }
                clauses.push(current.iter().map(|&(v, _)| v).collect());
                bits.extend(current.iter().map(|&(_, j)| j));
                current.clear();
                continue;
            }
            let v = lit.unsigned_abs() as usize;
            if v > n_vars {
                return Err(err(line_no, format!("variable {v} exceeds declared {n_vars}")));
            }
            if current.iter().any(|&(u, _)| u == v - 1) {
                return Err(err(line_no, format!("variable {v} repeated in clause")));
            }
            current.push((v - 1, u8::from(lit < 0)));
        }
    }
    let (n_vars, n_clauses) = header.ok_or_else(|| err(last_line.max(1), "missing 'p cnf' header"))?;
    if !current.is_empty() {
        return Err(err(last_line, "unterminated clause"));
    }
    if clauses.len() != n_clauses {
        return Err(err(last_line, format!("header declares {n_clauses} clauses, found {}", clauses.len())));
    }
    // An empty formula has no clause size; 0 keeps the edge arithmetic valid.
    let k = clause_size.unwrap_or(0);
    let graph = FactorGraph::from_clauses(n_vars, k, &clauses).map_err(|e| err(last_line, e.to_string()))?;
    Ok((graph, Negations::from_bits(bits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{assign_negations, generate_poisson, generate_regular, NegationMode};
    use proptest::prelude::*;

    #[test]
    fn encodes_negation_as_sign() {
        let g = FactorGraph::from_clauses(3, 3, &[vec![0, 1, 2]]).unwrap();
        let j = Negations::from_bits(vec![0, 1, 0]);
        assert_eq!(to_dimacs(&g, &j), "p cnf 3 1\n1 -2 3 0\n");
    }

    #[test]
    fn header_mismatch_is_reported() {
        let e = from_dimacs("p cnf 3 2\n1 2 3 0\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("declares 2"));
        let e = from_dimacs("p cnf 3 1\n1 2 3 0\n-1 2 3 0\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = from_dimacs("c hi\np cnf 2 1\n1 2 3 0\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(from_dimacs("1 2 0\n").unwrap_err().line, 1);
        assert_eq!(from_dimacs("p cnf 3 1\n1 x 0\n").unwrap_err().line, 2);
        assert_eq!(from_dimacs("p cnf 3 1\n\n1 1 2 0\n").unwrap_err().line, 3);
        assert_eq!(from_dimacs("p cnf 3 2\n1 2 3 0\n1 2 0\n").unwrap_err().line, 3);
        assert!(from_dimacs("p cnf 3 1\n1 2 3\n").is_err());
    }

    #[test]
    fn clauses_may_span_lines_and_comments() {
        let (g, j) = from_dimacs("c x\np cnf 4 2\n1 -2\n 3 0 -4 1 2 0\n%\n0\n").unwrap();
        assert_eq!(g.n_clauses(), 2);
        assert_eq!(g.clauses(), vec![vec![0, 1, 2], vec![3, 0, 1]]);
        assert_eq!(j.as_slice(), &[0, 1, 0, 1, 0, 0]);
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(seed in any::<u64>(), regular in any::<bool>()) {
            let g = if regular {
                generate_regular(12, 5, 3, seed).unwrap()
            } else {
                generate_poisson(20, 2.5, 3, seed).unwrap()
            };
            let j = assign_negations(&g, NegationMode::Random, seed);
            let (g2, j2) = from_dimacs(&to_dimacs(&g, &j)).unwrap();
            prop_assert_eq!(&g2, &g);
            prop_assert_eq!(&j2, &j);
        }
    }
}
