use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest sample size for which the exact null distribution is enumerated.
pub const EXACT_MAX_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("Mann-Whitney needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("Mann-Whitney sample contains NaN".into()));
    }
    Ok(())
}

fn u_statistic(a: &[f64], ranks: &[f64]) -> f64 {
    let n1 = a.len() as f64;
    ranks[..a.len()].iter().sum::<f64>() - n1 * (n1 + 1.0) / 2.0
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    let (ranks, ties) = midranks(a, b);
    let u = u_statistic(a, &ranks);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - n1 * n2 / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_value,
        method: PValueMethod::Normal,
    })
}

/// Every way of choosing which `k` of the ranks `1..=n` belong to the first
/// sample, visited through the running rank sum.
fn enumerate_rank_sums(n: usize, k: usize, next: usize, sum: usize, out: &mut Vec<usize>) {
    if k == 0 {
        out.push(sum);
        return;
    }
    for r in next..=(n - k + 1) {
        enumerate_rank_sums(n, k - 1, r + 1, sum + r, out);
    }
}

/// Exact two-sided p-value by enumerating all rank assignments. Requires
/// both samples of size at most [`EXACT_MAX_SIZE`] and no ties.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    if a.len().max(b.len()) > EXACT_MAX_SIZE {
        return Err(Error::InvalidInput(format!(
            "exact Mann-Whitney limited to samples of size <= {EXACT_MAX_SIZE}"
        )));
    }
    let (ranks, ties) = midranks(a, b);
    if !ties.is_empty() {
        return Err(Error::InvalidInput("exact Mann-Whitney requires untied samples".into()));
    }
    let u = u_statistic(a, &ranks);
    let (n1, n) = (a.len(), a.len() + b.len());
    let mut sums = Vec::new();
    enumerate_rank_sums(n, n1, 1, 0, &mut sums);
    let offset = n1 * (n1 + 1) / 2;
    let total = sums.len() as f64;
    let le = sums.iter().filter(|&&s| ((s - offset) as f64) <= u).count() as f64;
    let ge = sums.iter().filter(|&&s| ((s - offset) as f64) >= u).count() as f64;
    let p_value = (2.0 * le.min(ge) / total).min(1.0);
    Ok(MannWhitney {
        u,
        p_value,
        method: PValueMethod::Exact,
    })
}

/// Rank-sum test: exact when both samples are small and untied, otherwise
/// the normal approximation.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check(a, b)?;
    if a.len().max(b.len()) <= EXACT_MAX_SIZE && midranks(a, b).1.is_empty() {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples() {
        let a = [0.3, 0.1, 0.9, 0.5, 0.7];
        let r = mann_whitney(&a, &a).unwrap();
        assert_eq!(r.u, 12.5);
        assert!(r.p_value >= 0.9);
    }

    #[test]
    fn separated_samples() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(r.method, PValueMethod::Exact);
        assert_eq!(r.u, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn midranks_average_ties() {
        let (r, t) = midranks(&[1.0, 2.0, 2.0], &[2.0, 5.0]);
        assert_eq!(r, vec![1.0, 3.0, 3.0, 3.0, 5.0]);
        assert_eq!(t, vec![3]);
    }

    #[test]
    fn all_tied_gives_one() {
        let r = mann_whitney(&[1.0; 10], &[1.0; 12]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn errors() {
        assert!(mann_whitney(&[], &[1.0]).is_err());
        assert!(mann_whitney_exact(&[1.0; 9], &[2.0]).is_err());
        assert!(mann_whitney_exact(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn normal_matches_exact_at_eight_by_eight() {
        // balanced and interleaved splits of 0..16
        let mut worst: f64 = 0.0;
        let pool: Vec<f64> = (0..16).map(f64::from).collect();
        for mask in [0x00ffu32, 0x0f0f, 0x3333, 0x5555, 0x0ff0, 0x1e1e, 0xf00f, 0xaa55] {
            let a: Vec<f64> = pool.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|p| *p.1).collect();
            let b: Vec<f64> = pool.iter().enumerate().filter(|(i, _)| mask & (1 << i) == 0).map(|p| *p.1).collect();
            let e = mann_whitney_exact(&a, &b).unwrap();
            let n = mann_whitney_normal(&a, &b).unwrap();
            worst = worst.max((e.p_value - n.p_value).abs());
        }
        assert!(worst <= 0.03, "{worst}");
    }

    proptest! {
        #[test]
        fn swapping_samples(a in proptest::collection::vec(-5.0..5.0_f64, 1..15),
                            b in proptest::collection::vec(-5.0..5.0_f64, 1..15)) {
            let ab = mann_whitney(&a, &b).unwrap();
            let ba = mann_whitney(&b, &a).unwrap();
            prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
        }
    }
}
