//! Self-describing JSON container for an instance: graph, negations and the
//! parameters that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FactorGraph, FormulaError, NegationMode, Negations};

pub const INSTANCE_FORMAT: &str = "adsat-instance";
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not an instance file (format '{0}')")]
    Format(String),
    #[error("unsupported instance format version {0}")]
    Version(u32),
    #[error("invalid instance: {0}")]
    Formula(#[from] FormulaError),
    #[error("dimacs: {0}")]
    Dimacs(#[from] super::DimacsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Regular {
        n_vars: usize,
        degree: usize,
        clause_size: usize,
    },
    Poisson {
        n_vars: usize,
        alpha: f64,
        clause_size: usize,
    },
    /// Loaded from an external file; no generator parameters.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: FactorGraph,
    pub negations: Negations,
    pub generator: GeneratorSpec,
    pub negation_mode: Option<NegationMode>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format: String,
    format_version: u32,
    generator: GeneratorSpec,
    #[serde(default)]
    negation_mode: Option<NegationMode>,
    #[serde(default)]
    seed: Option<u64>,
    n_vars: usize,
    n_clauses: usize,
    clause_size: usize,
    /// 0-based variable lists.
    clauses: Vec<Vec<usize>>,
    /// Per clause, the J bit of each listed variable.
    negations: Vec<Vec<u8>>,
}

impl Instance {
    pub fn to_json(&self) -> String {
        let g = &self.graph;
        let file = InstanceFile {
            format: INSTANCE_FORMAT.into(),
            format_version: INSTANCE_FORMAT_VERSION,
            generator: self.generator.clone(),
            negation_mode: self.negation_mode,
            seed: self.seed,
            n_vars: g.n_vars(),
            n_clauses: g.n_clauses(),
            clause_size: g.clause_size(),
            clauses: g.clauses(),
            negations: (0..g.n_clauses()).map(|a| g.clause_edges(a).map(|e| self.negations.get(e)).collect()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.format != INSTANCE_FORMAT {
            return Err(InstanceError::Format(file.format));
        }
        if file.format_version != INSTANCE_FORMAT_VERSION {
            return Err(InstanceError::Version(file.format_version));
        }
        if file.clauses.len() != file.n_clauses || file.negations.len() != file.n_clauses {
            return Err(FormulaError::InvalidParameter(format!(
                "n_clauses = {} but {} clause lists and {} negation lists",
                file.n_clauses,
                file.clauses.len(),
                file.negations.len()
            ))
            .into());
        }
        let graph = FactorGraph::from_clauses(file.n_vars, file.clause_size, &file.clauses)?;
        let bits: Vec<u8> = file.negations.into_iter().flatten().collect();
        let negations = Negations::for_graph(&graph, bits)?;
        Ok(Self { graph, negations, generator: file.generator, negation_mode: file.negation_mode, seed: file.seed })
    }

    /// Reads either the JSON container or, for `.cnf`/`.dimacs` files, DIMACS.
    pub fn load(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path)?;
        let is_dimacs = matches!(path.extension().and_then(|e| e.to_str()), Some("cnf") | Some("dimacs"));
        if is_dimacs {
            let (graph, negations) = super::from_dimacs(&text)?;
            Ok(Self { graph, negations, generator: GeneratorSpec::External, negation_mode: None, seed: None })
        } else {
            Self::from_json(&text)
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
