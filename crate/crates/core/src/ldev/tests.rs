use super::*;
use crate::bp::{factorized_regular_bp, BpMessage, FactorizedConfig, FactorizedPattern};
use crate::formula::FactorGraph;
use crate::sp::{SpClauseMessage, SpVarMessage};
use approx::assert_abs_diff_eq;
use rand::Rng as _;

const LN2: f64 = std::f64::consts::LN_2;

fn quick(population: usize, seed: u64) -> PopDynConfig {
    PopDynConfig {
        population,
        burn_in: 30,
        measure_sweeps: 40,
        measure_every: 5,
        max_doublings: 0,
        seed,
        ..PopDynConfig::default()
    }
}

#[test]
fn zero_x_counts_all_negations() {
    let p = regular_factorized_popdyn(4, 3, Base::Bp, 0.0, &quick(500, 1)).unwrap();
    assert_abs_diff_eq!(p.phi, 4.0 * LN2, epsilon = 1e-12);
    assert_abs_diff_eq!(p.l, 4.0 * LN2, epsilon = 1e-12);
    assert!((p.s - 0.5134).abs() < 0.01, "s = {}", p.s);
}

#[test]
fn unit_x_is_annealed_count() {
    let p = regular_factorized_popdyn(4, 3, Base::Bp, 1.0, &quick(1000, 2)).unwrap();
    let exact = LN2 + 4.0 / 3.0 * 7f64.ln();
    assert!((p.phi - exact).abs() < 0.01 * exact, "phi = {} vs {exact}", p.phi);
}

#[test]
fn sp_trivial_fixed_point_is_stationary() {
    let ens = Ensemble::Regular { degree: 6, clause_size: 3 };
    let mut pd = popdyn::<SpBase>(&ens, &quick(50, 3));
    for j in 0..2 {
        pd.fill_up(j, SpVarMessage::FREE);
        pd.fill_down(j, SpClauseMessage { q_hat: 0.0 });
    }
    for x in [-20.0, 0.0, 7.0] {
        pd.sweep(x);
        for j in 0..2 {
            assert!(pd.down_population(0, j).iter().all(|m| m.q_hat == 0.0));
            assert!(pd.up_population(0, j).iter().all(|m| *m == SpVarMessage::FREE));
        }
        let e = pd.estimate(x, 100, 9);
        assert_abs_diff_eq!(e.phi, 6.0 * LN2, epsilon = 1e-12);
        assert_abs_diff_eq!(e.s, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn balanced_factorized_fixed_point_is_stationary() {
    for degree in [4usize, 6] {
        let fp =
            factorized_regular_bp(degree, 3, FactorizedPattern::BalancedEven, &FactorizedConfig::default()).unwrap();
        let ens = Ensemble::Regular { degree, clause_size: 3 };
        let mut cfg = quick(64, 4);
        cfg.restrict_balanced = true;
        let mut pd = popdyn::<BpBase>(&ens, &cfg);
        let at = |j: u8, v: f64| {
            if j == 0 {
                BpMessage::with_p0(v)
            } else {
                BpMessage::with_p0(1.0 - v)
            }
        };
        for j in 0..2 {
            pd.fill_up(j, at(j, fp.var_msg));
            pd.fill_down(j, at(j, fp.clause_msg));
        }
        for x in [-50.0, 3.0] {
            pd.sweep(x);
            for j in 0..2 {
                for m in pd.up_population(0, j) {
                    assert_abs_diff_eq!(m.get(j), fp.var_msg, epsilon = 1e-12);
                }
                for m in pd.down_population(0, j) {
                    assert_abs_diff_eq!(m.get(j), fp.clause_msg, epsilon = 1e-12);
                }
            }
            let e = pd.estimate(x, 200, 5);
            assert_abs_diff_eq!(e.s, fp.entropy, epsilon = 1e-10);
            assert_abs_diff_eq!(e.l, balanced_logcount_regular(degree), epsilon = 1e-10);
        }
    }
}

#[test]
fn leaf_variable_sends_uniform_message() {
    // Variable 3 appears in a single clause.
    let g = FactorGraph::from_clauses(5, 3, &[vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 4], vec![1, 2, 4]]).unwrap();
    let leaf_edge = g.var_edges(3)[0];
    let mut pd = popdyn::<BpBase>(&Ensemble::Instance(g), &quick(30, 6));
    pd.sweep(4.0);
    for j in 0..2 {
        assert!(pd.up_population(leaf_edge, j).iter().all(|m| *m == BpMessage::UNIFORM));
    }
}

#[test]
fn reruns_are_identical() {
    let ens = Ensemble::poisson(40, 2.0, 3, 7).unwrap();
    let cfg = quick(40, 8);
    let a = ldf_curve(&ens, Base::Bp, &[-3.0, 0.0, 2.0], &cfg).unwrap();
    let b = ldf_curve(&ens, Base::Bp, &[2.0, -3.0, 0.0], &cfg).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv().lines().count(), 4);
}

#[test]
fn legendre_identity_holds_pointwise() {
    let ens = Ensemble::Regular { degree: 5, clause_size: 3 };
    let c = ldf_curve(&ens, Base::Bp, &[-5.0, -1.0, 0.0, 1.0, 5.0], &quick(300, 9)).unwrap();
    for p in &c.points {
        assert!((p.l + p.x * p.s - p.phi).abs() < 1e-9 * (1.0 + p.x.abs()), "{p:?}");
    }
}

#[test]
fn poisson_zero_x() {
    let ens = Ensemble::poisson(60, 1.5, 3, 10).unwrap();
    let p = ldf_curve(&ens, Base::Bp, &[0.0], &quick(50, 11)).unwrap().points[0];
    let Ensemble::Instance(g) = &ens else { unreachable!() };
    assert_abs_diff_eq!(p.phi, g.n_edges() as f64 / 60.0 * LN2, epsilon = 1e-12);
}

#[test]
fn balanced_counts() {
    assert_abs_diff_eq!(balanced_logcount_regular(4), 6f64.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(balanced_logcount_regular(3), 6f64.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(balanced_logcount_regular(1), LN2, epsilon = 1e-12);
    assert_eq!(balanced_logcount_poisson(0.0, 3), 0.0);
    assert!(balanced_logcount_poisson(1e-9, 3) < 1e-8);
}

#[test]
fn poisson_balanced_count_matches_sampling() {
    let lambda = 3.0f64;
    let mut rng = crate::rng::from_seed(12);
    let n = 1_000_000;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        // Inversion sampling of Poisson(λ).
        let u: f64 = rng.gen();
        let (mut d, mut p) = (0usize, (-lambda).exp());
        let mut cdf = p;
        while u > cdf {
            d += 1;
            p *= lambda / d as f64;
            cdf += p;
        }
        let v = log_balanced_count(d);
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
    let series = balanced_logcount_poisson(1.0, 3);
    assert!((series - mean).abs() < 3.0 * se, "series {series} vs MC {mean} ± {se}");
}

fn pt(x: f64, s: f64, l: f64) -> LdfPoint {
    LdfPoint {
        x,
        phi: l + x * s,
        phi_se: 0.0,
        s,
        s_se: 0.0,
        l,
        physical: false,
        degenerate: false,
        min_ess_fraction: 1.0,
        drifting: false,
        sweeps: 0,
        contradictions: 0,
        wipeouts: 0,
    }
}

#[test]
fn physical_branch_stops_at_concavity_loss() {
    // L(s) = 2 − 50 (s − 1/2)², so s(x) = 1/2 + x/100 on the physical branch;
    // the x = −50 point turns back.
    let l = |s: f64| 2.0 - 50.0 * (s - 0.5) * (s - 0.5);
    let mut pts: Vec<LdfPoint> =
        [(-50.0, 0.35), (-20.0, 0.3), (-10.0, 0.4), (-1.0, 0.49), (0.0, 0.5), (1.0, 0.51), (10.0, 0.6)]
            .iter()
            .map(|&(x, s)| pt(x, s, l(s)))
            .collect();
    mark_physical(&mut pts, 1e-6);
    let flags: Vec<bool> = pts.iter().map(|p| p.physical).collect();
    assert_eq!(flags, [false, true, true, true, true, true, true]);

    // A kink that breaks concavity without breaking monotonicity.
    pts[1] = pt(-20.0, 0.3, 1.49);
    mark_physical(&mut pts, 1e-6);
    assert!(!pts[1].physical && pts[2].physical);
}

/// On a tree formula the auxiliary problem is a tree too, so the population
/// dynamics must reproduce `Φ(x)` obtained by enumerating every negation
/// configuration and counting its models.
#[test]
fn tree_instance_matches_enumeration() {
    use crate::exact::{count_models, CountLimits};
    use crate::formula::Negations;
    use num_traits::ToPrimitive;

    let clauses = vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 6], vec![1, 7, 8]];
    let g = FactorGraph::from_clauses(9, 3, &clauses).unwrap();
    let ne = g.n_edges();
    let log_counts: Vec<f64> = (0u32..1 << ne)
        .map(|bits| {
            let j = Negations::from_bits((0..ne).map(|e| ((bits >> e) & 1) as u8).collect());
            count_models(&g, &j, &CountLimits::default()).unwrap().count.to_f64().unwrap().ln()
        })
        .collect();
    let cfg =
        PopDynConfig { population: 1000, burn_in: 20, measure_sweeps: 30, max_doublings: 0, ..PopDynConfig::default() };
    let xs = [-20.0, 0.0, 3.0, 20.0];
    let curve = ldf_curve(&Ensemble::Instance(g), Base::Bp, &xs, &cfg).unwrap();
    for p in &curve.points {
        let x = p.x;
        let m = log_counts.iter().map(|l| x * l).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_counts.iter().map(|l| (x * l - m).exp()).sum();
        let s = log_counts.iter().map(|l| (x * l - m).exp() * l).sum::<f64>() / z / 9.0;
        let phi = (m + z.ln()) / 9.0;
        assert!((p.s - s).abs() < 2e-3, "x={x}: s {} vs {s}", p.s);
        assert!((p.l - (phi - x * s)).abs() < 1e-2, "x={x}: L {} vs {}", p.l, phi - x * s);
    }
}
