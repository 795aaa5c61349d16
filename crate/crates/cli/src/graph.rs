//! Instance selection shared by the per-instance subcommands.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use adsat_core::formula::{assign_negations, generate_poisson, generate_regular, GeneratorSpec};
use adsat_core::rng::derive_seed;
use adsat_core::{Instance, NegationMode};

use crate::CliError;

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    /// Instance file: the JSON container, or DIMACS for `.cnf`/`.dimacs`.
    #[arg(long, conflicts_with_all = ["regular", "poisson"])]
    pub instance: Option<PathBuf>,
    /// Random regular formula with clause size K and variable degree L.
    #[arg(long, num_args = 2, value_names = ["K", "L"], conflicts_with = "poisson")]
    pub regular: Option<Vec<usize>>,
    /// Random Poisson formula with clause size K and density ALPHA.
    #[arg(long, num_args = 2, value_names = ["K", "ALPHA"])]
    pub poisson: Option<Vec<f64>>,
    /// Number of variables of a generated formula.
    #[arg(long)]
    pub n: Option<usize>,
    /// Negation pattern of a generated formula.
    #[arg(long, default_value = "random")]
    pub negations: NegationMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GraphArgs {
    /// Loads or generates the instance. Generated graphs use the seed stream
    /// `derive(seed, 0)`, their negations `derive(seed, 1)`.
    pub fn resolve(&self) -> Result<Instance, CliError> {
        if let Some(path) = &self.instance {
            return Instance::load(path).map_err(|e| CliError::Config(format!("--instance {}: {e}", path.display())));
        }
        let n = || self.n.ok_or_else(|| CliError::Config("--n is required when generating a formula".into()));
        let (graph, generator) = if let Some(kl) = &self.regular {
            let (k, l, n) = (kl[0], kl[1], n()?);
            let g = generate_regular(n, l, k, derive_seed(self.seed, 0))
                .map_err(|e| CliError::Config(format!("--regular: {e}")))?;
            (g, GeneratorSpec::Regular { n_vars: n, degree: l, clause_size: k })
        } else if let Some(ka) = &self.poisson {
            let (k, alpha, n) = (ka[0], ka[1], n()?);
            if k.fract() != 0.0 || k < 2.0 {
                return Err(CliError::Config(format!("--poisson: clause size must be an integer >= 2, got {k}")));
            }
            let k = k as usize;
            let g = generate_poisson(n, alpha, k, derive_seed(self.seed, 0))
                .map_err(|e| CliError::Config(format!("--poisson: {e}")))?;
            (g, GeneratorSpec::Poisson { n_vars: n, alpha, clause_size: k })
        } else {
            return Err(CliError::Config("one of --instance, --regular or --poisson is required".into()));
        };
        let negations = assign_negations(&graph, self.negations, derive_seed(self.seed, 1));
        Ok(Instance { graph, negations, generator, negation_mode: Some(self.negations), seed: Some(self.seed) })
    }
}
