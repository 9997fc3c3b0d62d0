//! Statistics kit: quantile discretization, conditional variance
//! decomposition, Welch's t-test and Cohen's d.

mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use special::{incomplete_beta, ln_gamma, student_t_two_sided};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divide by n).
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (divide by n - 1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinal bin labels for one continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedColumn {
    pub name: String,
    /// Interior cut points, strictly increasing. Bin `i` holds values in
    /// `(cuts[i-1], cuts[i]]`.
    pub cuts: Vec<f64>,
    pub labels: Vec<usize>,
}

impl DiscretizedColumn {
    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn bin_of(&self, value: f64) -> usize {
        self.cuts.partition_point(|&c| c < value)
    }

    /// Wraps already-categorical labels (e.g. a binary indicator).
    pub fn categorical(name: &str, labels: Vec<usize>) -> Self {
        DiscretizedColumn {
            name: name.to_string(),
            cuts: Vec::new(),
            labels,
        }
    }
}

/// Equal-frequency binning. Duplicate quantile edges collapse, so heavily
/// tied columns get fewer than `n_bins` bins.
pub fn discretize(name: &str, values: &[f64], n_bins: usize) -> Result<DiscretizedColumn> {
    if n_bins < 2 {
        return Err(Error::config("n_bins must be >= 2"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data(format!("column {name} has non-finite values")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return Err(Error::data(format!("column {name} is empty")));
    };
    if lo == hi {
        return Err(Error::data(format!("column {name}: zero variance, cannot bin")));
    }
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..n_bins)
        .map(|i| sorted[((i * n).div_ceil(n_bins)).saturating_sub(1)])
        .collect();
    cuts.dedup();
    cuts.retain(|&c| c < hi);
    if cuts.is_empty() {
        // everything above the first cut tied with the maximum
        let below_max = sorted.iter().rev().find(|&&v| v < hi).copied().unwrap_or(lo);
        cuts.push(below_max);
    }
    let mut col = DiscretizedColumn {
        name: name.to_string(),
        cuts,
        labels: Vec::new(),
    };
    col.labels = values.iter().map(|&v| col.bin_of(v)).collect();
    Ok(col)
}

/// Result of one conditional variance decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub target: String,
    pub factor: String,
    pub conditioning: Vec<String>,
    pub score: f64,
    pub n: usize,
    /// Population variance of the group-mean column over the joint (P, Q) groups.
    pub explained_joint: f64,
    /// Same over the Q groups alone.
    pub explained_conditioning: f64,
    pub total_variance: f64,
    /// Row count of every non-empty joint group.
    pub group_counts: Vec<usize>,
}

/// Additional fraction of `Var(y)` explained by factors `p` beyond `q`:
/// `[Var(E[y|p,q]) - Var(E[y|q])] / Var(y)` with population variances and
/// size-weighted group means. An empty `q` conditions on nothing.
///
/// The numerator is accumulated as `sum n_pq (mean_pq - mean_q)^2 / n`,
/// which equals the difference of the two variances and is non-negative
/// term by term.
pub fn c_var(y: &[f64], p: &[&[usize]], q: &[&[usize]]) -> Result<VarianceReport> {
    let n = y.len();
    if n < 2 {
        return Err(Error::data("variance decomposition needs at least 2 rows"));
    }
    if p.iter().chain(q).any(|c| c.len() != n) {
        return Err(Error::data("factor columns differ in length from the target"));
    }
    let total_variance = population_variance(y);
    if !(total_variance > 0.0) {
        return Err(Error::data("target has zero variance"));
    }

    let key = |cols: &[&[usize]], i: usize| -> Vec<usize> { cols.iter().map(|c| c[i]).collect() };
    let mut joint: BTreeMap<(Vec<usize>, Vec<usize>), (f64, usize)> = BTreeMap::new();
    let mut cond: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
    for (i, &yi) in y.iter().enumerate() {
        let qk = key(q, i);
        let e = joint.entry((key(p, i), qk.clone())).or_insert((0.0, 0));
        e.0 += yi;
        e.1 += 1;
        let e = cond.entry(qk).or_insert((0.0, 0));
        e.0 += yi;
        e.1 += 1;
    }
    let grand = mean(y);
    let cond_mean: BTreeMap<&Vec<usize>, f64> = cond.iter().map(|(k, (s, c))| (k, s / *c as f64)).collect();

    let nf = n as f64;
    let mut numerator = 0.0;
    let mut explained_joint = 0.0;
    for ((_, qk), (s, c)) in &joint {
        let m = s / *c as f64;
        let d = m - cond_mean[qk];
        numerator += *c as f64 * d * d;
        explained_joint += *c as f64 * (m - grand) * (m - grand);
    }
    let explained_conditioning = cond
        .values()
        .map(|(s, c)| {
            let d = s / *c as f64 - grand;
            *c as f64 * d * d
        })
        .sum::<f64>()
        / nf;

    Ok(VarianceReport {
        target: String::new(),
        factor: String::new(),
        conditioning: Vec::new(),
        score: (numerator / nf / total_variance).min(1.0),
        n,
        explained_joint: explained_joint / nf,
        explained_conditioning,
        total_variance,
        group_counts: joint.values().map(|(_, c)| *c).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn check_two_samples(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::data("each sample needs at least 2 values"));
    }
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if !(va > 0.0 && vb > 0.0) {
        return Err(Error::data("degenerate variance in a sample"));
    }
    Ok((va, vb))
}

/// Unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    let (va, vb) = check_two_samples(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// Standardized mean difference with the (n-1)-weighted pooled deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    let (va, vb) = check_two_samples(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    Ok((mean(a) - mean(b)) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive oracle: for each row, recompute the group mean by scanning all rows.
    fn naive_c_var(y: &[f64], p: &[Vec<usize>], q: &[Vec<usize>]) -> f64 {
        let n = y.len();
        let same = |cols: &[Vec<usize>], i: usize, j: usize| cols.iter().all(|c| c[i] == c[j]);
        let group_mean_col = |cols: &[Vec<usize>]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let members: Vec<f64> = (0..n).filter(|&j| same(cols, i, j)).map(|j| y[j]).collect();
                    members.iter().sum::<f64>() / members.len() as f64
                })
                .collect()
        };
        let pq: Vec<Vec<usize>> = p.iter().chain(q).cloned().collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        (var(&group_mean_col(&pq)) - var(&group_mean_col(q))) / var(y)
    }

    fn refs(cols: &[Vec<usize>]) -> Vec<&[usize]> {
        cols.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn hand_table_six_rows() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let p = vec![0, 0, 1, 1, 2, 2];
        let r = c_var(&y, &[&p], &[]).unwrap();
        assert!((r.score - 32.0 / 35.0).abs() < 1e-15);
        assert!((naive_c_var(&y, &[p], &[]) - 32.0 / 35.0).abs() < 1e-15);
    }

    #[test]
    fn determined_and_constant_factors() {
        let p = vec![0, 1, 2, 0, 1, 2, 3];
        let y: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        assert!((c_var(&y, &[&p], &[]).unwrap().score - 1.0).abs() < 1e-15);
        let constant = vec![0; 7];
        assert_eq!(c_var(&y, &[&constant], &[]).unwrap().score, 0.0);
    }

    #[test]
    fn zero_variance_target_errors() {
        assert!(c_var(&[2.0, 2.0], &[&[0, 1]], &[]).is_err());
    }

    #[test]
    fn discretize_quartiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let col = discretize("x", &v, 4).unwrap();
        assert_eq!(col.n_bins(), 4);
        let mut counts = [0; 4];
        for &l in &col.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [25; 4]);
    }

    #[test]
    fn discretize_collapses_duplicates() {
        let col = discretize("x", &[1.0, 1.0, 1.0, 2.0], 4).unwrap();
        assert_eq!(col.n_bins(), 2);
        assert_eq!(col.labels, vec![0, 0, 0, 1]);
        let col = discretize("x", &[1.0, 2.0, 2.0, 2.0, 2.0, 2.0], 2).unwrap();
        assert_eq!(col.n_bins(), 2);
        assert_eq!(col.labels, vec![0, 1, 1, 1, 1, 1]);
        assert!(discretize("x", &[3.0; 5], 4).is_err());
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let w = welch_t(&a, &a).unwrap();
        assert_eq!(w.t, 0.0);
        assert_eq!(w.p, 1.0);
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
        assert!(welch_t(&[1.0, 1.0], &a).is_err());
        assert!(cohens_d(&[1.0], &a).is_err());
    }

    #[test]
    fn cohens_d_unit_shift() {
        let a = [-1.0, 1.0, -1.0, 1.0];
        let b = [0.0, 2.0, 0.0, 2.0];
        // both samples have variance 4/3; shift of 1
        let d = cohens_d(&b, &a).unwrap();
        assert!((d - 1.0 / (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    fn small_table() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<usize>>, Vec<Vec<usize>>)> {
        (2usize..=12).prop_flat_map(|n| {
            (
                proptest::collection::vec(-50.0f64..50.0, n),
                proptest::collection::vec(proptest::collection::vec(0usize..3, n), 1..=2),
                proptest::collection::vec(proptest::collection::vec(0usize..3, n), 0..=1),
            )
        })
    }

    proptest! {
        #[test]
        fn oracle_equivalence_and_bounds((y, p, q) in small_table()) {
            prop_assume!(population_variance(&y) > 1e-9);
            let r = c_var(&y, &refs(&p), &refs(&q)).unwrap();
            prop_assert!((r.score - naive_c_var(&y, &p, &q)).abs() < 1e-12);
            prop_assert!(r.score >= 0.0 && r.score <= 1.0);
            prop_assert!(r.explained_joint + 1e-12 >= r.explained_conditioning);
        }

        #[test]
        fn affine_and_permutation_invariance((y, p, q) in small_table(), a in 0.1f64..10.0, b in -100.0f64..100.0, rot in 0usize..12) {
            prop_assume!(population_variance(&y) > 1e-6);
            let base = c_var(&y, &refs(&p), &refs(&q)).unwrap().score;
            let ys: Vec<f64> = y.iter().map(|v| -a * v + b).collect();
            prop_assert!((c_var(&ys, &refs(&p), &refs(&q)).unwrap().score - base).abs() < 1e-9);
            let n = y.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let pp: Vec<Vec<usize>> = p.iter().map(|c| perm.iter().map(|&i| c[i]).collect()).collect();
            let qp: Vec<Vec<usize>> = q.iter().map(|c| perm.iter().map(|&i| c[i]).collect()).collect();
            prop_assert!((c_var(&yp, &refs(&pp), &refs(&qp)).unwrap().score - base).abs() < 1e-12);
        }

        #[test]
        fn welch_antisymmetric(a in proptest::collection::vec(-10.0f64..10.0, 3..20), b in proptest::collection::vec(-10.0f64..10.0, 3..20)) {
            prop_assume!(sample_variance(&a) > 1e-6 && sample_variance(&b) > 1e-6);
            let ab = welch_t(&a, &b).unwrap();
            let ba = welch_t(&b, &a).unwrap();
            prop_assert_eq!(ab.t, -ba.t);
            prop_assert!((ab.p - ba.p).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }

        #[test]
        fn discretize_every_value_in_one_bin(v in proptest::collection::vec(-100.0f64..100.0, 5..60), k in 2usize..7) {
            prop_assume!(v.iter().any(|x| *x != v[0]));
            let col = discretize("x", &v, k).unwrap();
            prop_assert!(col.n_bins() >= 2 && col.n_bins() <= k);
            prop_assert!(col.cuts.windows(2).all(|w| w[0] < w[1]));
            let mut seen = vec![0usize; col.n_bins()];
            for (&x, &l) in v.iter().zip(&col.labels) {
                prop_assert!(l < col.n_bins());
                if l > 0 { prop_assert!(x > col.cuts[l - 1]); }
                if l < col.cuts.len() { prop_assert!(x <= col.cuts[l]); }
                seen[l] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c > 0));
        }
    }
}
