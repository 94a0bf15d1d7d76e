mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use unirate_core::harris::{block_functionals, crossing_record};
use unirate_core::processes::{gen_arch, gen_errors, gen_mixing_ar, gen_random_walk, gen_split_chain, gen_tar, GaussianAr1Chain};
use unirate_core::regression::{bias_bound, error_decomposition, nw_fit};
use unirate_core::rng::{derive_seed, rng_from_seed};
use unirate_core::stats::{ks_two_sample, mean, variance};
use unirate_core::sums::{martingale_sum, sup_stat, variance_sum, KernelSums};
use unirate_core::{ErrorSpec, Grid, InnovationDist, KernelId, ProcessSpec, RegressionFunction};

const COMPACT: [KernelId; 3] = [KernelId::Epanechnikov, KernelId::Triangular, KernelId::Quartic];

fn walk(n: usize, seed: u64) -> Vec<f64> {
    gen_random_walk(n, InnovationDist::Gaussian, seed).unwrap().values
}

#[test]
fn refining_grid_moves_sup_by_at_most_lipschitz_bound() {
    for (i, id) in COMPACT.into_iter().enumerate() {
        let k = id.kernel();
        let x = walk(5000, 10 + i as u64);
        let h = 0.4;
        let grid = Grid::covering(30.0, 0.05).unwrap();
        let fine = grid.refined();
        let sup = sup_stat(&variance_sum(&x, &k, h, &grid).unwrap()).unwrap().value;
        let sup_fine = sup_stat(&variance_sum(&x, &k, h, &fine).unwrap()).unwrap().value;
        // every fine point lies within step/2 of a coarse one
        let bound = k.squared_lipschitz_const * x.len() as f64 * (grid.step() / 2.0) / h;
        assert!(sup_fine >= sup, "{id:?}: fine grid contains the coarse one");
        assert!(sup_fine - sup <= bound, "{id:?}: {sup_fine} - {sup} > {bound}");
    }
}

#[test]
fn sub_grid_sup_and_inf_are_monotone() {
    let k = KernelId::Epanechnikov.kernel();
    let x = walk(3000, 3);
    let grid = Grid::covering(20.0, 0.03).unwrap();
    let full = variance_sum(&x, &k, 0.3, &grid).unwrap();
    let sub = variance_sum(&x, &k, 0.3, &grid.coarsened()).unwrap();
    let max = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max(&sub) <= max(&full));
    assert!(min(&sub) >= min(&full));
}

#[test]
fn martingale_sum_scales_exactly_with_powers_of_two() {
    let x = walk(4000, 5);
    let mut rng = rng_from_seed(6);
    let u: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let k = KernelId::Quartic.kernel();
    let grid = Grid::covering(15.0, 0.02).unwrap();
    let s = martingale_sum(&x, &u, &k, 0.5, &grid).unwrap();
    for lambda in [0.25, 2.0, 1024.0] {
        let scaled: Vec<f64> = u.iter().map(|v| v * lambda).collect();
        let s2 = martingale_sum(&x, &scaled, &k, 0.5, &grid).unwrap();
        assert!(s.iter().zip(&s2).all(|(a, b)| a * lambda == *b));
    }
}

#[test]
fn evaluation_order_does_not_change_values() {
    let x = walk(2000, 8);
    let sums = KernelSums::squared(&x, KernelId::Triangular.kernel(), 0.7).unwrap();
    let mut pts = Grid::covering(10.0, 0.1).unwrap().points();
    let forward = sums.over_points(&pts);
    pts.reverse();
    let mut backward = sums.over_points(&pts);
    backward.reverse();
    assert_eq!(forward, backward);
}

#[test]
fn nw_denominator_matches_plain_kernel_sum() {
    let x = walk(6000, 12);
    let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let k = KernelId::Epanechnikov.kernel();
    let h = 0.35;
    let grid = Grid::covering(25.0, 0.07).unwrap();
    let fit = nw_fit(&x, &y, &k, h, &grid).unwrap();
    let plain = KernelSums::plain(&x, k, h).unwrap();
    for (&p, &den) in fit.points.iter().zip(&fit.denominators) {
        // the NW window at p is the sum at shift -p
        let direct = plain.at(-p) / h;
        assert!((den - direct).abs() <= 1e-12 * (1.0 + direct), "{p}: {den} vs {direct}");
        let (_, _, oracle) = common::nw(&x, &y, KernelId::Epanechnikov, h, p);
        assert!((den - oracle).abs() <= 1e-10 * (1.0 + oracle));
    }
}

#[test]
fn nw_is_shift_equivariant() {
    let x = walk(5000, 14);
    let mut rng = rng_from_seed(15);
    let y: Vec<f64> = x.iter().map(|v| v.tanh() + rng.random_range(-0.5..0.5)).collect();
    let k = KernelId::Quartic.kernel();
    let grid = Grid::covering(20.0, 0.05).unwrap();
    let base = nw_fit(&x, &y, &k, 0.4, &grid).unwrap();
    for c in [-3.0, 0.5, 100.0] {
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let fit = nw_fit(&x, &shifted, &k, 0.4, &grid).unwrap();
        for (a, b) in base.estimates.iter().zip(&fit.estimates) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((b - a - c).abs() <= 1e-12 * (1.0 + c.abs() + a.abs())),
                (None, None) => {}
                _ => panic!("definedness changed under a shift"),
            }
        }
    }
}

#[test]
fn gaussian_kernel_has_no_bias_bound() {
    let m = RegressionFunction::Logistic { alpha: 0.0, beta: 1.0 };
    let err = bias_bound(&m, &KernelId::Gaussian.kernel(), 0.1, 0.0).unwrap_err();
    assert!(err.to_string().contains("compact"));
    assert!(bias_bound(&m, &KernelId::Epanechnikov.kernel(), 0.6, 0.0).is_err());
}

#[test]
fn smoothing_bias_respects_holder_bound_and_is_local() {
    let truths = [
        RegressionFunction::Logistic { alpha: -1.0, beta: 2.0 },
        RegressionFunction::Power { alpha: 0.0, beta: 1.0, gamma: 0.5 },
        RegressionFunction::Rational { theta: 0.7 },
        RegressionFunction::Polynomial { coefficients: vec![1.0, -0.5, 0.1] },
    ];
    let n = 8000;
    let path = gen_random_walk(n, InnovationDist::Gaussian, 21).unwrap();
    let x = &path.values;
    let u = gen_errors(&path, &ErrorSpec::exogenous(4, InnovationDist::Gaussian), 22).unwrap();
    let h = 0.3;
    let grid = Grid::covering(0.2 * (n as f64).sqrt(), 0.05).unwrap();
    for id in COMPACT {
        let k = id.kernel();
        for m in &truths {
            let y: Vec<f64> = x.iter().zip(&u).map(|(&a, e)| m.eval(a) + e).collect();
            let d = error_decomposition(x, &y, &u, m, &k, h, &grid).unwrap();
            for (&p, t2) in d.points.iter().zip(&d.theta2) {
                if let Some(t2) = t2 {
                    let bound = bias_bound(m, &k, h, p).unwrap();
                    assert!(t2.abs() <= bound * (1.0 + 1e-9) + 1e-12, "{id:?} {m:?} at {p}: {t2} > {bound}");
                }
            }
        }
    }

    // observations outside the window do not touch the estimate
    let m = &truths[0];
    let k = KernelId::Epanechnikov.kernel();
    let y: Vec<f64> = x.iter().zip(&u).map(|(&a, e)| m.eval(a) + e).collect();
    let p = 1.3;
    let full = nw_fit(x, &y, &k, h, &Grid::single(p)).unwrap().estimates[0].unwrap();
    let masked: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(&a, &b)| if (a - p).abs() <= h { b } else { 1e6 })
        .collect();
    let local = nw_fit(x, &masked, &k, h, &Grid::single(p)).unwrap().estimates[0].unwrap();
    assert!((full - local).abs() <= 1e-9, "{full} vs {local}");
}

#[test]
fn regeneration_counts_are_nondecreasing() {
    let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
    let (_, rec) = gen_split_chain(20_000, &chain, 31).unwrap();
    let counts: Vec<usize> = (0..=rec.n()).step_by(97).map(|m| rec.count_up_to(m)).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    let walk_rec = crossing_record(&walk(20_000, 32));
    let counts: Vec<usize> = (0..=walk_rec.n()).step_by(97).map(|m| walk_rec.count_up_to(m)).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn regeneration_rate_concentrates() {
    let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
    let cv = |n: usize| {
        let ratios: Vec<f64> = (0..60u64)
            .map(|r| gen_split_chain(n, &chain, derive_seed(33, &[n as u64, r])).unwrap().1.count() as f64 / n as f64)
            .collect();
        variance(&ratios).sqrt() / mean(&ratios)
    };
    let (small, large) = (cv(2_000), cv(32_000));
    assert!(large < small, "cv {large} at 32000 vs {small} at 2000");
}

#[test]
fn blocks_are_exchangeable() {
    let chain = GaussianAr1Chain::new(0.5, 1.0).unwrap();
    let (path, rec) = gen_split_chain(100_000, &chain, 41).unwrap();
    let z = block_functionals(&path, &rec, &KernelId::Epanechnikov.kernel(), 0.5, 0.2).unwrap().complete;
    assert!(z.len() > 1000);
    let lag1 = |v: &[f64]| {
        let m = mean(v);
        v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / v.len() as f64
    };
    // permutation test: neighbouring blocks look no more alike than random pairs
    let observed = lag1(&z).abs();
    let mut rng = rng_from_seed(42);
    let mut perm = z.clone();
    let exceed = (0..400)
        .filter(|_| {
            perm.shuffle(&mut rng);
            lag1(&perm).abs() >= observed
        })
        .count();
    let p = (exceed + 1) as f64 / 401.0;
    assert!(p >= 0.01, "lag-one permutation p {p}");
}

#[test]
fn generators_are_deterministic_per_seed() {
    let d = InnovationDist::Gaussian;
    let gens: Vec<(&str, Box<dyn Fn(u64) -> Vec<f64>>)> = vec![
        ("walk", Box::new(move |s| gen_random_walk(500, d, s).unwrap().values)),
        ("tar", Box::new(move |s| gen_tar(500, 0.3, -0.6, d, s).unwrap().values)),
        ("arch", Box::new(move |s| gen_arch(500, 1.0, 0.5, d, s).unwrap().values)),
        ("ar", Box::new(move |s| gen_mixing_ar(500, 0.5, d, s).unwrap().values)),
        ("split", Box::new(|s| gen_split_chain(500, &GaussianAr1Chain::new(0.5, 1.0).unwrap(), s).unwrap().0.values)),
        ("full", Box::new(|s| ProcessSpec::FullRegeneration.generate(500, s).unwrap().values)),
    ];
    for (name, g) in gens {
        assert_eq!(g(9), g(9), "{name}");
        assert_ne!(g(9), g(10), "{name}");
    }
}

#[test]
fn full_regeneration_chain_is_standard_normal() {
    let x = ProcessSpec::FullRegeneration.generate(20_000, 51).unwrap().values;
    let mut rng = rng_from_seed(52);
    let z: Vec<f64> = (0..20_000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    assert!(ks_two_sample(&x, &z).unwrap().p_value >= 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sums_match_naive_oracle(
        xs in prop::collection::vec(-20.0f64..20.0, 1..300),
        h in 0.05f64..3.0,
        y in -25.0f64..25.0,
        k in 0usize..4,
    ) {
        let id = [KernelId::Epanechnikov, KernelId::Triangular, KernelId::Quartic, KernelId::Gaussian][k];
        let w: Vec<f64> = xs.iter().map(|v| (v * 7.3).sin()).collect();
        let fast = KernelSums::weighted(&xs, &w, id.kernel(), h).unwrap().at(y);
        let (slow, abs) = common::weighted_sum(&xs, Some(&w), id, h, y, false);
        prop_assert!((fast - slow).abs() <= 1e-10 * (1.0 + abs));
        let fast = KernelSums::squared(&xs, id.kernel(), h).unwrap().at(y);
        let (slow, abs) = common::weighted_sum(&xs, None, id, h, y, true);
        prop_assert!((fast - slow).abs() <= 1e-10 * (1.0 + abs));
    }

    #[test]
    fn nw_matches_naive_oracle(
        xs in prop::collection::vec(-5.0f64..5.0, 2..200),
        h in 0.1f64..2.0,
        p in -6.0f64..6.0,
    ) {
        let ys: Vec<f64> = xs.iter().map(|v| v.cos() * 3.0).collect();
        let (oracle, scale, _) = common::nw(&xs, &ys, KernelId::Quartic, h, p);
        if let Ok(fit) = nw_fit(&xs, &ys, &KernelId::Quartic.kernel(), h, &Grid::single(p)) {
            match (fit.estimates[0], oracle) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-10 * (1.0 + scale)),
                (None, None) => {}
                (a, b) => prop_assert!(false, "definedness differs: {a:?} vs {b:?}"),
            }
        } else {
            prop_assert!(oracle.is_none());
        }
    }
}
