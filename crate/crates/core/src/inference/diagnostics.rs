//! Split-chain potential scale reduction and multi-chain effective sample size.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Between- and within-chain variance over equal-length chains.
fn between_within(chains: &[&[f64]]) -> (f64, f64, usize) {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let grand = mean(&means);
    let b = n as f64 * sample_var(&means, grand);
    let w = chains.iter().zip(&means).map(|(c, m)| sample_var(&c[..n], *m)).sum::<f64>() / chains.len() as f64;
    (b, w, n)
}

/// Split-R-hat. Each chain is cut into halves (odd middle draw dropped).
/// Returns 1.0 when all draws are identical, and NaN when fewer than four
/// draws per chain are available.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.is_empty() || n < 4 {
        return f64::NAN;
    }
    let half = n / 2;
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[n - half..n]]).collect();
    let (b, w, n) = between_within(&halves);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator applied to the combined autocorrelation. Constant draws report
/// the total draw count.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.is_empty() || n < 4 {
        return f64::NAN;
    }
    let views: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let total = (chains.len() * n) as f64;
    let (b, w, _) = between_within(&views);
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    if var_plus == 0.0 || w == 0.0 {
        return total;
    }
    let means: Vec<f64> = views.iter().map(|c| mean(c)).collect();
    // Chain variances in the autocovariance normalization (divide by n).
    let acov0: Vec<f64> = views.iter().zip(&means).map(|(c, m)| autocov(c, *m, 0)).collect();
    let rho = |lag: usize| -> f64 {
        let acov_mean = views
            .iter()
            .zip(&means)
            .zip(&acov0)
            .map(|((c, m), a0)| if lag == 0 { *a0 } else { autocov(c, *m, lag) })
            .sum::<f64>()
            / views.len() as f64;
        // Convert the biased lag-0 average to the unbiased W scale.
        1.0 - (w - acov_mean * nf / (nf - 1.0)) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(seed: u64, chains: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed);
        (0..chains).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn constant_chains() {
        let chains = vec![vec![2.0; 100]; 4];
        assert_eq!(split_rhat(&chains), 1.0);
        assert_eq!(effective_sample_size(&chains), 400.0);
        assert!(split_rhat(&[vec![1.0; 3]]).is_nan());
    }

    #[test]
    fn white_noise_chains() {
        let chains = white(9, 4, 1000);
        let r = split_rhat(&chains);
        assert!((0.999..=1.01).contains(&r), "rhat {r}");
        let ess = effective_sample_size(&chains);
        assert!((3000.0..=5000.0).contains(&ess), "ess {ess}");
    }

    #[test]
    fn ar1_ess() {
        let rho = 0.9;
        let mut rng = seeded_rng(21);
        let n = 20_000;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..n)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = rho * x + e * (1.0 - rho * rho as f64).sqrt();
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = effective_sample_size(&chains);
        let want = 4.0 * n as f64 * (1.0 - rho) / (1.0 + rho);
        assert!((ess / want - 1.0).abs() < 0.3, "ess {ess}, want {want}");
    }

    #[test]
    fn shifted_chain_inflates_rhat() {
        let mut chains = white(2, 4, 500);
        chains[0].iter_mut().for_each(|v| *v += 3.0);
        assert!(split_rhat(&chains) > 1.1);
    }
}
