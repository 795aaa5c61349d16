//! Large deviations of the Bethe entropy (BP base) or of the complexity
//! (SP base) over negation-configurations.
//!
//! For each Legendre parameter `x` the populations are equilibrated under
//! the reweighted cavity equations, after which `Φ(x)` and the conjugate
//! entropy `s(x)` are estimated and `L(s) = Φ − x s` follows.

mod base;
mod popdyn;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use base::{BpBase, CavityBase, SpBase};
pub use popdyn::{Estimate, PopDyn, SweepStats};

use crate::formula::{generate_poisson, FactorGraph, FormulaError};
use crate::rng;
use popdyn::Topology;

#[derive(Debug, Error, PartialEq)]
pub enum LdevError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Base message-passing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    Bp,
    Sp,
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Base::Bp => "bp",
            Base::Sp => "sp",
        })
    }
}

impl FromStr for Base {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bp" => Ok(Base::Bp),
            "sp" => Ok(Base::Sp),
            _ => Err(format!("unknown base '{s}' (expected bp or sp)")),
        }
    }
}

/// Graph the large deviations are computed on.
#[derive(Debug, Clone)]
pub enum Ensemble {
    /// `(L, K)`-regular ensemble in the thermodynamic limit: a single pair
    /// of populations.
    Regular { degree: usize, clause_size: usize },
    /// A fixed graph with one pair of populations per directed edge.
    Instance(FactorGraph),
}

impl Ensemble {
    /// A Poisson graph with `n_vars` variables used as the instance.
    pub fn poisson(n_vars: usize, alpha: f64, clause_size: usize, seed: u64) -> Result<Self, LdevError> {
        Ok(Ensemble::Instance(generate_poisson(n_vars, alpha, clause_size, seed)?))
    }

    fn validate(&self) -> Result<(), LdevError> {
        match self {
            Ensemble::Regular { degree, clause_size } if *degree == 0 || *clause_size < 2 => {
                Err(LdevError::InvalidParameter(format!("need L >= 1 and K >= 2, got L={degree} K={clause_size}")))
            }
            Ensemble::Instance(g) if g.n_vars() == 0 => Err(LdevError::InvalidParameter("empty instance".into())),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Ensemble::Regular { degree, clause_size } => format!("regular L={degree} K={clause_size}"),
            Ensemble::Instance(g) => {
                format!("instance N={} M={} K={}", g.n_vars(), g.n_clauses(), g.clause_size())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopDynConfig {
    /// Population size `P` per (directed edge, `J`).
    pub population: usize,
    /// Candidate updates drawn per population member before resampling.
    pub candidates: usize,
    pub burn_in: usize,
    pub measure_sweeps: usize,
    /// Sweeps between two estimates during measurement.
    pub measure_every: usize,
    /// Sampled tuples per node and edge in each estimate; 0 means `P`.
    pub samples: usize,
    /// How many times the measurement window may double when the `Φ`
    /// estimates drift by more than their standard error.
    pub max_doublings: usize,
    /// Restrict the negations to balanced configurations.
    pub restrict_balanced: bool,
    pub seed: u64,
}

impl Default for PopDynConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            candidates: 2,
            burn_in: 1000,
            measure_sweeps: 1000,
            measure_every: 10,
            samples: 0,
            max_doublings: 2,
            restrict_balanced: false,
            seed: 0,
        }
    }
}

impl PopDynConfig {
    fn validate(&self) -> Result<(), LdevError> {
        if self.population == 0 || self.candidates == 0 || self.measure_sweeps == 0 || self.measure_every == 0 {
            return Err(LdevError::InvalidParameter(
                "population, candidates, measure_sweeps and measure_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Default Legendre grid `±{0, 1, 2, 5, 10, 20, 50, 100}`.
pub fn default_x_grid() -> Vec<f64> {
    let mags = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
    let mut g: Vec<f64> = mags.iter().rev().map(|m| -m).collect();
    g.push(0.0);
    g.extend(mags);
    g
}

/// One point of the large-deviation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdfPoint {
    pub x: f64,
    pub phi: f64,
    pub phi_se: f64,
    pub s: f64,
    pub s_se: f64,
    /// `L = Φ − x s`.
    pub l: f64,
    pub physical: bool,
    /// Effective sample size below 1% of the samples, or undefined estimate.
    pub degenerate: bool,
    pub min_ess_fraction: f64,
    /// `|Φ drift|` between the two halves of the final measurement window
    /// exceeded its standard error even after the allowed doublings.
    pub drifting: bool,
    pub sweeps: usize,
    pub contradictions: u64,
    pub wipeouts: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LdfCurve {
    pub ensemble: String,
    pub base: Base,
    pub restrict_balanced: bool,
    pub config: PopDynConfig,
    /// Sorted by `x`.
    pub points: Vec<LdfPoint>,
}

impl LdfCurve {
    pub fn point(&self, x: f64) -> Option<&LdfPoint> {
        self.points.iter().find(|p| p.x == x)
    }

    /// Smallest `x` still on the physical branch.
    pub fn x0(&self) -> Option<f64> {
        self.points.iter().find(|p| p.physical).map(|p| p.x)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,phi,s,l,physical,phi_se,s_se,degenerate\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                p.x, p.phi, p.s, p.l, p.physical as u8, p.phi_se, p.s_se, p.degenerate as u8
            ));
        }
        out
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `|mean(first half) − mean(second half)| > SE` of that difference.
fn drifts(v: &[f64]) -> bool {
    if v.len() < 4 {
        return false;
    }
    let (a, b) = v.split_at(v.len() / 2);
    let (ma, sa) = mean_se(a);
    let (mb, sb) = mean_se(b);
    (ma - mb).abs() > (sa * sa + sb * sb).sqrt()
}

/// Seed of the run at parameter `x`; independent of the rest of the grid.
fn point_seed(seed: u64, x: f64) -> u64 {
    rng::derive_seed(seed, x.to_bits())
}

fn run_point_with<B: CavityBase>(topo: Topology, x: f64, cfg: &PopDynConfig) -> LdfPoint {
    let seed = point_seed(cfg.seed, x);
    let samples = if cfg.samples == 0 { cfg.population } else { cfg.samples };
    let mut pd = PopDyn::<B>::new(topo, cfg.population, cfg.candidates, cfg.restrict_balanced, seed);
    let mut stats = SweepStats::default();
    for _ in 0..cfg.burn_in {
        stats += pd.sweep(x);
    }
    let mut window = cfg.measure_sweeps;
    let mut doublings = 0;
    loop {
        let mut ests = Vec::new();
        for t in 0..window {
            stats += pd.sweep(x);
            if (t + 1) % cfg.measure_every == 0 || t + 1 == window {
                ests.push(pd.estimate(x, samples, rng::derive_seed(seed, pd.sweeps())));
            }
        }
        let phis: Vec<f64> = ests.iter().map(|e| e.phi).collect();
        let drifting = drifts(&phis);
        if drifting && doublings < cfg.max_doublings {
            doublings += 1;
            window *= 2;
            continue;
        }
        let ss: Vec<f64> = ests.iter().map(|e| e.s).collect();
        let ls: Vec<f64> = ests.iter().map(|e| e.l).collect();
        let (phi, phi_se) = mean_se(&phis);
        let (s, s_se) = mean_se(&ss);
        let (l, _) = mean_se(&ls);
        let min_ess = ests.iter().map(|e| e.min_ess_fraction).fold(f64::INFINITY, f64::min);
        return LdfPoint {
            x,
            phi,
            phi_se,
            s,
            s_se,
            l,
            physical: true,
            degenerate: !(min_ess >= 0.01) || !phi.is_finite() || !s.is_finite(),
            min_ess_fraction: min_ess,
            drifting,
            sweeps: pd.sweeps() as usize,
            contradictions: stats.contradictions,
            wipeouts: stats.wipeouts,
        };
    }
}

fn run_point(ensemble: &Ensemble, base: Base, x: f64, cfg: &PopDynConfig) -> LdfPoint {
    let topo = Topology::for_ensemble(ensemble);
    match base {
        Base::Bp => run_point_with::<BpBase>(topo, x, cfg),
        Base::Sp => run_point_with::<SpBase>(topo, x, cfg),
    }
}

/// Population state for direct stepping (tests, diagnostics).
pub fn popdyn<B: CavityBase>(ensemble: &Ensemble, cfg: &PopDynConfig) -> PopDyn<B> {
    PopDyn::new(Topology::for_ensemble(ensemble), cfg.population, cfg.candidates, cfg.restrict_balanced, cfg.seed)
}

/// Ensemble-level population dynamics of the `(L, K)`-regular ensemble at a
/// single `x`.
pub fn regular_factorized_popdyn(
    degree: usize,
    clause_size: usize,
    base: Base,
    x: f64,
    cfg: &PopDynConfig,
) -> Result<LdfPoint, LdevError> {
    let ens = Ensemble::Regular { degree, clause_size };
    ens.validate()?;
    cfg.validate()?;
    let mut p = run_point(&ens, base, x, cfg);
    p.physical = true;
    Ok(p)
}

/// `L(s)` over the grid `xs`. Points are computed independently (and in
/// parallel) and then tagged physical or not.
pub fn ldf_curve(ensemble: &Ensemble, base: Base, xs: &[f64], cfg: &PopDynConfig) -> Result<LdfCurve, LdevError> {
    ensemble.validate()?;
    cfg.validate()?;
    if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
        return Err(LdevError::InvalidParameter("x grid must be non-empty and finite".into()));
    }
    let mut grid = xs.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut points: Vec<LdfPoint> = grid.par_iter().map(|&x| run_point(ensemble, base, x, cfg)).collect();
    mark_physical(&mut points, PHYSICAL_TOL);
    Ok(LdfCurve { ensemble: ensemble.describe(), base, restrict_balanced: cfg.restrict_balanced, config: *cfg, points })
}

/// Absolute slack of the monotonicity and concavity tests.
pub const PHYSICAL_TOL: f64 = 1e-4;

/// Flags the physical branch: starting from the point closest to `x = 0`
/// and walking outwards on each side, a point stays physical while `s(x)`
/// keeps its monotonicity and `L(s)` its concavity over the last three
/// points (each within `tol` plus three standard errors). Points must be
/// sorted by `x`.
pub fn mark_physical(points: &mut [LdfPoint], tol: f64) {
    if points.is_empty() {
        return;
    }
    let n = points.len();
    let centre = (0..n).min_by(|&a, &b| points[a].x.abs().total_cmp(&points[b].x.abs())).unwrap();
    for p in points.iter_mut() {
        p.physical = false;
    }
    points[centre].physical = true;
    let slack = |a: &LdfPoint, b: &LdfPoint| tol + 3.0 * (a.s_se.powi(2) + b.s_se.powi(2)).sqrt();
    // (s, L) of three consecutive points in increasing x: concave iff the
    // cross product of the two chords is non-positive.
    let concave = |a: &LdfPoint, b: &LdfPoint, c: &LdfPoint| {
        let cross = (b.s - a.s) * (c.l - b.l) - (c.s - b.s) * (b.l - a.l);
        cross <= slack(a, c) * ((c.l - a.l).abs() + (c.s - a.s).abs()).max(tol)
    };
    let mut k = centre;
    while k > 0 {
        let (lo, hi) = (&points[k - 1], &points[k]);
        let mono = lo.s <= hi.s + slack(lo, hi);
        let conc = k + 1 >= n || concave(lo, hi, &points[k + 1]);
        if !(mono && conc && lo.s.is_finite()) {
            break;
        }
        points[k - 1].physical = true;
        k -= 1;
    }
    let mut k = centre;
    while k + 1 < n {
        let (lo, hi) = (&points[k], &points[k + 1]);
        let mono = hi.s + slack(lo, hi) >= lo.s;
        let conc = k == 0 || concave(&points[k - 1], lo, hi);
        if !(mono && conc && hi.s.is_finite()) {
            break;
        }
        points[k + 1].physical = true;
        k += 1;
    }
}

/// `s(x_k) − (Φ(x_{k+1}) − Φ(x_{k−1}))/(x_{k+1} − x_{k−1})` for interior
/// points whose neighbours are physical, with the largest adjacent grid step.
pub fn finite_difference_residuals(curve: &LdfCurve) -> Vec<(f64, f64, f64)> {
    let p = &curve.points;
    (1..p.len().saturating_sub(1))
        .filter(|&k| p[k - 1].physical && p[k].physical && p[k + 1].physical)
        .map(|k| {
            let fd = (p[k + 1].phi - p[k - 1].phi) / (p[k + 1].x - p[k - 1].x);
            let step = (p[k + 1].x - p[k].x).max(p[k].x - p[k - 1].x);
            (p[k].x, p[k].s - fd, step)
        })
        .collect()
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|t| ((n - t) as f64 / (t + 1) as f64).ln()).sum()
}

/// Log of the number of balanced negation patterns of a degree-`d` variable.
pub fn log_balanced_count(d: usize) -> f64 {
    if d.is_multiple_of(2) {
        ln_binomial(d, d / 2)
    } else {
        std::f64::consts::LN_2 + ln_binomial(d, (d - 1) / 2)
    }
}

/// `L_B` for the `L`-regular ensemble.
pub fn balanced_logcount_regular(degree: usize) -> f64 {
    log_balanced_count(degree)
}

/// `L_B = E[log #balanced(d)]` with `d ~ Poisson(Kα)`, summed until the
/// remaining terms fall below `1e-12` of the total.
pub fn balanced_logcount_poisson(alpha: f64, clause_size: usize) -> f64 {
    let lambda = alpha * clause_size as f64;
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut log_pmf = -lambda;
    let mut total = 0.0;
    let mut d = 0usize;
    loop {
        let term = log_pmf.exp() * log_balanced_count(d);
        total += term;
        // Beyond the mode the tail is bounded by a geometric series.
        let ratio = lambda / (d + 1) as f64;
        if d as f64 > lambda
            && ratio < 0.5
            && 2.0 * log_pmf.exp() * (d as f64 + 2.0) <= 1e-12 * total.max(f64::MIN_POSITIVE)
        {
            break;
        }
        d += 1;
        log_pmf += lambda.ln() - (d as f64).ln();
        if d > 100_000 {
            break;
        }
    }
    total
}

/// `L_B` of an ensemble; for an instance, `(1/N) Σ_i log #balanced(d_i)`.
pub fn balanced_logcount(ensemble: &Ensemble) -> f64 {
    match ensemble {
        Ensemble::Regular { degree, .. } => balanced_logcount_regular(*degree),
        Ensemble::Instance(g) => {
            (0..g.n_vars()).map(|i| log_balanced_count(g.degree(i))).sum::<f64>() / g.n_vars().max(1) as f64
        }
    }
}

#[cfg(test)]
mod tests;
