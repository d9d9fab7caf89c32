//! CVaR forms against a golden-section search over y and an LP over the
//! capped simplex; SCVaR on hand-built archives.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use peakshave::lp::{solve_dense, LpBuilder, LpStatus};
use peakshave::risk::{cvar, cvar_min_form, risk_envelope_weights, scvar, stratum_count, LossArchive};

fn golden_section_cvar(losses: &[f64], alpha: f64) -> f64 {
    let n = losses.len() as f64;
    let f = |y: f64| y + losses.iter().map(|l| (l - y).max(0.0)).sum::<f64>() / ((1.0 - alpha) * n);
    let (mut a, mut b) = (
        losses.iter().copied().fold(f64::INFINITY, f64::min),
        losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

/// max w.l subject to sum w = 1, 0 <= w <= 1/k, solved as an LP.
fn capped_simplex_lp(losses: &[f64], k: f64) -> f64 {
    let mut b = LpBuilder::new();
    let vars: Vec<usize> = losses.iter().map(|&l| b.add_var(0.0, 1.0 / k, -l)).collect();
    let ones: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
    b.add_eq(&ones, 1.0);
    let sol = solve_dense(&b.build().unwrap(), 1e-12).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    -sol.objective
}

fn sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = LogNormal::new(0.0, 0.75).unwrap();
    let v: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.into_iter().map(|x| x / mean).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_form_equals_golden_section(seed in any::<u64>(), n in 5usize..300, ai in 0usize..3) {
        let alpha = [0.5, 0.9, 0.95][ai];
        let l = sample(seed, n);
        let exact = cvar_min_form(&l, alpha).unwrap();
        prop_assert!((exact - golden_section_cvar(&l, alpha)).abs() <= 1e-9);
    }

    #[test]
    fn three_forms_agree_when_the_tail_is_whole(seed in any::<u64>(), blocks in 1usize..25, ai in 0usize..3) {
        let alpha = [0.5, 0.9, 0.95][ai];
        let l = sample(seed, 20 * blocks);
        let top = cvar(&l, alpha).unwrap();
        let w = risk_envelope_weights(&l, alpha).unwrap();
        let dual: f64 = w.iter().zip(&l).map(|(w, l)| w * l).sum();
        prop_assert!((top - cvar_min_form(&l, alpha).unwrap()).abs() <= 1e-9);
        prop_assert!((top - dual).abs() <= 1e-9);
        prop_assert!((top - golden_section_cvar(&l, alpha)).abs() <= 1e-9);
    }

    #[test]
    fn envelope_weights_are_lp_optimal(seed in any::<u64>(), n in 4usize..60, ai in 0usize..3) {
        let alpha = [0.5, 0.9, 0.95][ai];
        let l = sample(seed, n);
        let w = risk_envelope_weights(&l, alpha).unwrap();
        let cap = w.iter().copied().fold(0.0, f64::max);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let k = (1.0 / cap).round();
        let dual: f64 = w.iter().zip(&l).map(|(w, l)| w * l).sum();
        prop_assert!((dual - capped_simplex_lp(&l, k)).abs() <= 1e-9);
        prop_assert!((dual - cvar(&l, alpha).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn cvar_bounds(seed in any::<u64>(), n in 1usize..200, alpha in 0.0f64..0.99) {
        let l = sample(seed, n);
        let c = cvar(&l, alpha).unwrap();
        let mean = l.iter().sum::<f64>() / n as f64;
        let max = l.iter().copied().fold(f64::MIN, f64::max);
        prop_assert!(c >= mean - 1e-12 && c <= max + 1e-12);
    }
}

#[test]
fn scvar_half_year_uses_monthly_maxima() {
    // 182 days over 6 months at alpha 0.95: one day per month.
    let months: Vec<usize> = (0..182).map(|d| (d * 6 / 182).min(5)).collect();
    let losses: Vec<f64> = (0..182).map(|d| ((d * 37) % 101) as f64 + 0.5).collect();
    let archive = LossArchive::new(losses.clone(), months.clone()).unwrap();
    assert_eq!(stratum_count(0.95, 182, 6), 1);
    let mut maxima = [f64::MIN; 6];
    for (l, m) in losses.iter().zip(&months) {
        maxima[*m] = maxima[*m].max(*l);
    }
    let expected = maxima.iter().sum::<f64>() / 6.0;
    assert_eq!(scvar(&archive, 0.95).unwrap(), expected);
}

#[test]
fn scvar_with_two_per_month() {
    // 120 days, 2 months, alpha 0.95: k_m = floor(6 / 2) = 3.
    let months: Vec<usize> = (0..120).map(|d| d / 60).collect();
    let losses: Vec<f64> = (0..120).map(|d| d as f64).collect();
    let archive = LossArchive::new(losses, months).unwrap();
    let expected = ((59.0 + 58.0 + 57.0) / 3.0 + (119.0 + 118.0 + 117.0) / 3.0) / 2.0;
    assert_eq!(scvar(&archive, 0.95).unwrap(), expected);
}
