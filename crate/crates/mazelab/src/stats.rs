//! Separability and significance statistics shared by layer selection,
//! tracking, and the evaluation suites.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Rank-based AUROC: the probability that a positive projection exceedsued
/// a negative one, ties counting one half.
pub fn auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&v| (v, true))
        .chain(neg.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite projections"));
    // midranks over tie groups
    let n = all.len();
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for item in all.iter().take(j + 1).skip(i) {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Cohen's d with the Bessel-corrected pooled standard deviation.
/// Returns None when the pooled variance vanishes.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let va = variance(a);
    let vb = variance(b);
    let pooled = ((a.len() - 1) as f64 * va + (b.len() - 1) as f64 * vb)
        / (a.len() + b.len() - 2) as f64;
    if pooled <= 0.0 {
        return None;
    }
    Some((mean(a) - mean(b)) / pooled.sqrt())
}

/// Histogram overlap sum(min(p_a, p_b)) over `bins` equal-width bins
/// spanning the joint range of both samples.
pub fn histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let lo = a
        .iter()
        .chain(b)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = a
        .iter()
        .chain(b)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        // all mass in one point: total overlap
        return 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut ha = vec![0.0; bins];
    let mut hb = vec![0.0; bins];
    let fill = |h: &mut [f64], xs: &[f64]| {
        for &x in xs {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            h[k] += 1.0 / xs.len() as f64;
        }
    };
    fill(&mut ha, a);
    fill(&mut hb, b);
    ha.iter().zip(&hb).map(|(x, y)| x.min(*y)).sum()
}

/// One-sided Welch test p-value for mean(a) > mean(b), normal
/// approximation (sample sizes here are hundreds).
pub fn welch_p_greater(a: &[f64], b: &[f64]) -> f64 {
    let se = (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    if se == 0.0 {
        return if mean(a) > mean(b) { 0.0 } else { 1.0 };
    }
    let z = (mean(a) - mean(b)) / se;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    1.0 - normal.cdf(z)
}

/// One-sided two-proportion z-test p-value for p_a > p_b.
pub fn two_proportion_p_greater(hits_a: usize, n_a: usize, hits_b: usize, n_b: usize) -> f64 {
    let pa = hits_a as f64 / n_a as f64;
    let pb = hits_b as f64 / n_b as f64;
    let pool = (hits_a + hits_b) as f64 / (n_a + n_b) as f64;
    let se = (pool * (1.0 - pool) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        return if pa > pb { 0.0 } else { 1.0 };
    }
    let z = (pa - pb) / se;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    1.0 - normal.cdf(z)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = midrank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..x.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx).powi(2);
        dy += (ry[i] - my).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

/// Exact one-sided permutation p-value for Spearman's rho on small n
/// (enumerates all orderings; n <= 8): probability under the null of a
/// correlation at least as extreme in the requested direction.
pub fn spearman_exact_p(x: &[f64], y: &[f64], positive: bool) -> f64 {
    let n = x.len();
    assert!(n <= 8, "exact test is for small n");
    let observed = spearman_rho(x, y);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut count = 0usize;
    let mut total = 0usize;
    // Heap's algorithm, iterative
    let mut c = vec![0usize; n];
    let eval = |perm: &[usize]| {
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let rho = spearman_rho(x, &yp);
        let extreme = if positive {
            rho >= observed - 1e-12
        } else {
            rho <= observed + 1e-12
        };
        (extreme, ())
    };
    let (e, ()) = eval(&perm);
    count += e as usize;
    total += 1;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let (e, ()) = eval(&perm);
            count += e as usize;
            total += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    count as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn auroc_on_separated_samples_is_one() {
        let pos = [5.0, 6.0, 7.0];
        let neg = [1.0, 2.0, 3.0];
        assert_eq!(auroc(&pos, &neg), 1.0);
        assert_eq!(auroc(&neg, &pos), 0.0);
    }

    #[test]
    fn auroc_of_identical_samples_is_half() {
        let xs = [1.0, 1.0, 2.0, 3.0];
        assert!((auroc(&xs, &xs) - 0.5).abs() < 1e-12);
    }

    fn auroc_quadratic(pos: &[f64], neg: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &p in pos {
            for &n in neg {
                acc += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        acc / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auroc_matches_quadratic_oracle_with_ties() {
        let mut rng = crate::rng::stream_rng(9, 60);
        for _ in 0..50 {
            let np = rng.gen_range(2..40);
            let nn = rng.gen_range(2..40);
            // quantized values force ties
            let pos: Vec<f64> = (0..np).map(|_| f64::from(rng.gen_range(0..10)) / 2.0).collect();
            let neg: Vec<f64> = (0..nn).map(|_| f64::from(rng.gen_range(0..10)) / 2.0).collect();
            let fast = auroc(&pos, &neg);
            let slow = auroc_quadratic(&pos, &neg);
            assert!((fast - slow).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn auroc_invariant_under_monotone_transform(
            pos in proptest::collection::vec(-10.0f64..10.0, 2..20),
            neg in proptest::collection::vec(-10.0f64..10.0, 2..20),
        ) {
            let f = |v: f64| (v * 0.3).exp() + 2.0 * v; // strictly increasing
            let tp: Vec<f64> = pos.iter().map(|&v| f(v)).collect();
            let tn: Vec<f64> = neg.iter().map(|&v| f(v)).collect();
            prop_assert!((auroc(&pos, &neg) - auroc(&tp, &tn)).abs() < 1e-9);
        }

        #[test]
        fn cohens_d_antisymmetric(
            a in proptest::collection::vec(-5.0f64..5.0, 3..20),
            b in proptest::collection::vec(-5.0f64..5.0, 3..20),
        ) {
            if let (Some(d1), Some(d2)) = (cohens_d(&a, &b), cohens_d(&b, &a)) {
                prop_assert!((d1 + d2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cohens_d_hand_value() {
        // means 2 and 0, both variances 1 -> d = 2
        let a = [1.0, 2.0, 3.0];
        let b = [-1.0, 0.0, 1.0];
        let d = cohens_d(&a, &b).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_extremes() {
        let a = [0.0, 0.1, 0.2, 0.3];
        let b = [10.0, 10.1, 10.2];
        assert!(histogram_overlap(&a, &b, 50) < 1e-12);
        assert!((histogram_overlap(&a, &a, 50) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_exact_p_for_perfect_monotone_five_points() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.1, 0.2, 0.4, 0.8, 0.9];
        assert!((spearman_rho(&x, &y) - 1.0).abs() < 1e-12);
        let p = spearman_exact_p(&x, &y, true);
        assert!((p - 1.0 / 120.0).abs() < 1e-9, "p = {p}");
        let y_rev: Vec<f64> = y.iter().rev().cloned().collect();
        let p_neg = spearman_exact_p(&x, &y_rev, false);
        assert!((p_neg - 1.0 / 120.0).abs() < 1e-9);
    }

    #[test]
    fn welch_p_small_for_separated_means() {
        let a: Vec<f64> = (0..200).map(|i| 10.0 + (i % 7) as f64 * 0.1).collect();
        let b: Vec<f64> = (0..200).map(|i| 9.0 + (i % 5) as f64 * 0.1).collect();
        assert!(welch_p_greater(&a, &b) < 1e-6);
        assert!(welch_p_greater(&b, &a) > 0.999);
    }

    #[test]
    fn two_proportion_p_behaves() {
        assert!(two_proportion_p_greater(80, 100, 20, 100) < 1e-6);
        assert!(two_proportion_p_greater(20, 100, 80, 100) > 0.999);
        assert!((two_proportion_p_greater(50, 100, 50, 100) - 0.5).abs() < 1e-9);
    }
}
