//! Correlation metrics against brute-force oracles.

use itm_core::metrics::{
    binomial, kendall_tau, spearman_rho, stability_subsample, weighted_kendall_tau, RankResult, SubsetMode,
};
use itm_core::rng;
use proptest::prelude::*;
use rand::Rng;

/// Reduced fraction p/q with q > 0.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Ratio(i128, i128);

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    fn new(p: i128, q: i128) -> Self {
        let g = gcd(p, q).max(1) * q.signum();
        Ratio(p / g, q / g)
    }
    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn div(self, o: Ratio) -> Ratio {
        Ratio::new(self.0 * o.1, self.1 * o.0)
    }
    fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// Doubled descending ranks: the largest value gets 2, ties share the mean
/// position, so every entry is an integer.
fn doubled_ranks(v: &[f64]) -> Vec<i128> {
    v.iter()
        .map(|&x| {
            let above = v.iter().filter(|&&y| y > x).count() as i128;
            let equal = v.iter().filter(|&&y| y == x).count() as i128;
            2 * above + equal + 1
        })
        .collect()
}

fn oracle_tau_w(t: &[f64], p: &[f64]) -> f64 {
    let (g, r) = (doubled_ranks(t), doubled_ranks(p));
    let (mut num, mut den) = (Ratio(0, 1), Ratio(0, 1));
    for i in 0..t.len() {
        for j in 0..t.len() {
            if i < j {
                // w = 1/(G_i + G_j) = 2/(g_i + g_j)
                let w = Ratio::new(2, g[i] + g[j]);
                let s = ((g[i] - g[j]) * (r[i] - r[j])).signum();
                num = num.add(Ratio::new(s * w.0, w.1));
                den = den.add(w);
            }
        }
    }
    num.div(den).to_f64()
}

fn oracle_tau(t: &[f64], p: &[f64]) -> f64 {
    let (g, r) = (doubled_ranks(t), doubled_ranks(p));
    let m = t.len() as i128;
    let mut s = 0;
    for i in 0..t.len() {
        for j in (i + 1)..t.len() {
            s += ((g[i] - g[j]) * (r[i] - r[j])).signum();
        }
    }
    Ratio::new(s, m * (m - 1) / 2).to_f64()
}

fn oracle_rho(t: &[f64], p: &[f64]) -> f64 {
    let (g, r) = (doubled_ranks(t), doubled_ranks(p));
    let mean = |v: &[i128]| v.iter().sum::<i128>() as f64 / v.len() as f64;
    let (mg, mr) = (mean(&g), mean(&r));
    let cov: f64 = g.iter().zip(&r).map(|(&a, &b)| (a as f64 - mg) * (b as f64 - mr)).sum();
    let vg: f64 = g.iter().map(|&a| (a as f64 - mg).powi(2)).sum();
    let vr: f64 = r.iter().map(|&b| (b as f64 - mr).powi(2)).sum();
    cov / (vg * vr).sqrt()
}

/// Values drawn from a small grid so ties are common.
fn random_vector(m: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..m).map(|_| r.random_range(0..6) as f64 / 5.0).collect()
}

#[test]
fn metrics_equal_brute_force_oracles() {
    let mut r = rng::seeded(11, 0);
    let mut checked = 0;
    while checked < 1500 {
        let m = r.random_range(2..=10);
        let t = random_vector(m, &mut r);
        let p = random_vector(m, &mut r);
        if t.windows(2).all(|w| w[0] == w[1]) || p.windows(2).all(|w| w[0] == w[1]) {
            continue;
        }
        assert_eq!(weighted_kendall_tau(&t, &p).unwrap().value, oracle_tau_w(&t, &p), "{t:?} {p:?}");
        assert_eq!(kendall_tau(&t, &p).unwrap().value, oracle_tau(&t, &p), "{t:?} {p:?}");
        let rho = spearman_rho(&t, &p).unwrap().value;
        assert!((rho - oracle_rho(&t, &p)).abs() <= 1e-12, "{t:?} {p:?}");
        checked += 1;
    }
}

#[test]
fn worked_three_model_case() {
    // ground-truth ranks [1, 2, 3], predicted ranks [2, 1, 3]
    let (t, p) = ([0.9, 0.5, 0.1], [0.6, 0.7, 0.2]);
    assert_eq!(weighted_kendall_tau(&t, &p).unwrap().value, 7.0 / 47.0);
    assert_eq!(oracle_tau_w(&t, &p), 7.0 / 47.0);
}

#[test]
fn rank_result_echoes_inputs() {
    let r = RankResult::compute(vec!["a".into(), "b".into(), "c".into()], vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 3.0]).unwrap();
    assert_eq!((r.tau_w, r.tau, r.rho, r.degenerate), (1.0, 1.0, 1.0, false));
    assert!(RankResult::compute(vec!["a".into()], vec![0.1, 0.2], vec![1.0, 2.0]).is_err());
}

#[test]
fn stability_pool_of_fourteen() {
    let truth: Vec<f64> = (0..14).map(|i| 0.3 + 0.04 * i as f64).collect();
    let noisy: Vec<f64> = truth.iter().enumerate().map(|(i, t)| t + if i % 3 == 0 { 0.07 } else { 0.0 }).collect();
    let methods = vec![("perfect".to_string(), truth.clone()), ("noisy".to_string(), noisy)];
    let res = stability_subsample(&truth, &methods, 10, SubsetMode::Exhaustive).unwrap();
    assert_eq!(binomial(14, 10), Some(1001));
    assert_eq!(res.subsets.len(), 1001);
    assert!(res.methods[0].1.iter().all(|&v| v == 1.0));
    assert_eq!(res.methods[1].1.len(), 1001);
    assert_eq!(stability_subsample(&truth, &methods, 14, SubsetMode::Exhaustive).unwrap().subsets.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Reordering the pool permutes subsets but keeps the multiset of values.
    #[test]
    fn stability_is_pool_order_invariant(seed in any::<u64>(), k in 2usize..7) {
        let mut r = rng::seeded(seed, 0);
        let truth = random_vector(8, &mut r);
        let pred = random_vector(8, &mut r);
        let order: Vec<usize> = {
            use rand::seq::SliceRandom;
            let mut o: Vec<usize> = (0..8).collect();
            o.shuffle(&mut r);
            o
        };
        let reorder = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let a = stability_subsample(&truth, &[("m".into(), pred.clone())], k, SubsetMode::Exhaustive);
        let b = stability_subsample(&reorder(&truth), &[("m".into(), reorder(&pred))], k, SubsetMode::Exhaustive);
        let sorted = |mut v: Vec<f64>| { v.sort_by(f64::total_cmp); v };
        prop_assert_eq!(sorted(a.unwrap().methods[0].1.clone()), sorted(b.unwrap().methods[0].1.clone()));
    }

    #[test]
    fn correlations_lie_in_unit_interval(seed in any::<u64>(), m in 2usize..12) {
        let mut r = rng::seeded(seed, 0);
        let t: Vec<f64> = (0..m).map(|_| r.random()).collect();
        let p: Vec<f64> = (0..m).map(|_| r.random()).collect();
        for f in [weighted_kendall_tau, kendall_tau, spearman_rho] {
            let v = f(&t, &p).unwrap().value;
            prop_assert!((-1.0..=1.0).contains(&v));
        }
        prop_assert_eq!(weighted_kendall_tau(&t, &t).unwrap().value, 1.0);
    }
}
