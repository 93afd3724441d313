use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::static_fit::fit_gamma_mle;
use super::{check_matrix, column, mean_var};
use crate::dist::{self, GammaLaw};
use crate::error::{Error, Result};
use crate::evalkit::RouteLaw;
use crate::route::empirical_quantile;

/// Smallest eigenvalue kept when repairing a correlation matrix.
pub const MIN_EIGENVALUE: f64 = 1e-6;
/// Default Monte Carlo size for the copula route law.
pub const DEFAULT_COPULA_DRAWS: usize = 50_000;

/// A time-invariant route law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StaticRouteLaw {
    Gamma(GammaLaw),
    Normal { mean: f64, sd: f64 },
    /// Sorted Monte Carlo draws.
    Empirical(Vec<f64>),
}

impl StaticRouteLaw {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Gamma(g) => g.mean(),
            Self::Normal { mean, .. } => *mean,
            Self::Empirical(d) => d.iter().sum::<f64>() / d.len() as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gamma(g) => g.variance(),
            Self::Normal { sd, .. } => sd * sd,
            Self::Empirical(d) => mean_var(d).1,
        }
    }
}

impl RouteLaw for StaticRouteLaw {
    fn cdf(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Self::Gamma(_) if x <= 0.0 => 0.0,
            Self::Gamma(g) => dist::inc_gamma_pair(g.shape, g.rate * x).0,
            Self::Normal { mean, sd } => dist::normal_cdf((x - mean) / sd),
            Self::Empirical(d) => d.partition_point(|v| *v <= x) as f64 / d.len() as f64,
        })
    }

    fn quantile(&self, q: f64) -> Result<f64> {
        dist::check_level("StaticRouteLaw::quantile", q)?;
        match self {
            Self::Gamma(g) => dist::gamma_quantile(g, q),
            Self::Normal { mean, sd } => Ok(mean + sd * dist::normal_quantile(q)?),
            Self::Empirical(d) => Ok(empirical_quantile(d, q)),
        }
    }

    /// For the empirical law, a Gaussian kernel estimate with Silverman's bandwidth.
    fn log_density(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Self::Gamma(g) if x > 0.0 => dist::gamma_logpdf_unchecked(g.shape, g.rate, x),
            Self::Gamma(_) => f64::NEG_INFINITY,
            Self::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Self::Empirical(d) => {
                let n = d.len() as f64;
                let sd = mean_var(d).1.sqrt();
                let iqr = empirical_quantile(d, 0.75) - empirical_quantile(d, 0.25);
                let h = 0.9 * sd.min(iqr / 1.34) * n.powf(-0.2);
                let lo = d.partition_point(|v| *v < x - 8.0 * h);
                let hi = d.partition_point(|v| *v <= x + 8.0 * h);
                let s: f64 = d[lo..hi].iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
                (s / (n * h * (2.0 * std::f64::consts::PI).sqrt())).ln()
            }
        })
    }
}

/// Gamma with the mean and variance of a sum of independent Gammas.
pub fn indep_gamma_sum(laws: &[GammaLaw]) -> Result<GammaLaw> {
    let mean = laws.iter().map(GammaLaw::mean).sum();
    let var = laws.iter().map(GammaLaw::variance).sum();
    GammaLaw::from_moments(mean, var)
}

/// Gamma MLE per segment, summed as if independent.
pub fn route_indep_gamma(segment_tt: &[Vec<f64>]) -> Result<StaticRouteLaw> {
    let m = check_matrix(segment_tt)?;
    let laws = (0..m).map(|j| fit_gamma_mle(&column(segment_tt, j))).collect::<Result<Vec<_>>>()?;
    Ok(StaticRouteLaw::Gamma(indep_gamma_sum(&laws)?))
}

/// Normal with the summed segment sample means and variances.
pub fn route_indep_normal(segment_tt: &[Vec<f64>]) -> Result<StaticRouteLaw> {
    let m = check_matrix(segment_tt)?;
    if segment_tt.len() < 2 {
        return Err(Error::Data("need at least 2 rows for a variance".into()));
    }
    let (mean, var) = (0..m).map(|j| mean_var(&column(segment_tt, j))).fold((0.0, 0.0), |(a, b), (m, v)| (a + m, b + v));
    Ok(StaticRouteLaw::Normal { mean, sd: var.sqrt() })
}

/// `Var(sum_j y_j) / sum_j Var(y_j)` from sample moments.
pub fn variance_underestimation_ratio(segment_tt: &[Vec<f64>]) -> Result<f64> {
    let m = check_matrix(segment_tt)?;
    if segment_tt.len() < 2 {
        return Err(Error::Data("need at least 2 rows for a variance".into()));
    }
    let totals: Vec<f64> = segment_tt.iter().map(|r| r.iter().sum()).collect();
    let sum_var: f64 = (0..m).map(|j| mean_var(&column(segment_tt, j)).1).sum();
    if sum_var == 0.0 {
        return Err(Error::Numeric("segment variances are all zero".into()));
    }
    Ok(mean_var(&totals).1 / sum_var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    /// Pearson correlation of the normal scores.
    #[default]
    Pearson,
    /// Spearman rank correlation mapped by `2 sin(pi rho / 6)`.
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaConfig {
    pub n_draws: usize,
    pub correlation: CorrelationKind,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        Self {
            n_draws: DEFAULT_COPULA_DRAWS,
            correlation: CorrelationKind::Pearson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    pub law: StaticRouteLaw,
    pub marginals: Vec<GammaLaw>,
    /// Correlation actually used, row-major `m x m`.
    pub correlation: Vec<f64>,
    /// Whether eigenvalue clipping was needed.
    pub repaired: bool,
}

fn pearson(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let m = cols.len();
    let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_var(c)).collect();
    let n = cols[0].len() as f64;
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            return 1.0;
        }
        let cov = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - stats[i].0) * (b - stats[j].0)).sum::<f64>() / (n - 1.0);
        let denom = (stats[i].1 * stats[j].1).sqrt();
        if denom > 0.0 {
            (cov / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    })
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Clip eigenvalues below [`MIN_EIGENVALUE`] and rescale to unit diagonal.
fn repair_correlation(c: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(c.clone());
    if eig.eigenvalues.iter().all(|v| *v >= MIN_EIGENVALUE) {
        return (c, false);
    }
    let clipped = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| v.max(MIN_EIGENVALUE)));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..rebuilt.nrows()).map(|i| rebuilt[(i, i)].sqrt()).collect();
    let m = rebuilt.nrows();
    (DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rebuilt[(i, j)] / (d[i] * d[j]) }), true)
}

/// Gaussian copula with Gamma marginals. Route travel time is simulated by
/// drawing correlated normal scores, mapping them through the marginal
/// quantiles and summing.
pub fn route_copula_mc<R: Rng + ?Sized>(segment_tt: &[Vec<f64>], config: &CopulaConfig, rng: &mut R) -> Result<CopulaFit> {
    let m = check_matrix(segment_tt)?;
    if segment_tt.len() < m + 2 {
        return Err(Error::Data(format!("need at least {} rows to estimate a {m}x{m} correlation", m + 2)));
    }
    if config.n_draws == 0 {
        return Err(Error::Config("copula needs at least one draw".into()));
    }
    let cols: Vec<Vec<f64>> = (0..m).map(|j| column(segment_tt, j)).collect();
    let marginals = cols.iter().map(|c| fit_gamma_mle(c)).collect::<Result<Vec<_>>>()?;
    let corr = match config.correlation {
        CorrelationKind::Pearson => {
            let scores = cols
                .iter()
                .zip(&marginals)
                .map(|(c, g)| {
                    c.iter()
                        .map(|&x| dist::normal_quantile(dist::inc_gamma_pair(g.shape, g.rate * x).0.clamp(1e-12, 1.0 - 1e-12)))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            pearson(&scores)
        }
        CorrelationKind::Spearman => {
            let r: Vec<Vec<f64>> = cols.iter().map(|c| ranks(c)).collect();
            pearson(&r).map(|rho| (2.0 * (std::f64::consts::PI * rho / 6.0).sin()).clamp(-1.0, 1.0))
        }
    };
    let (corr, repaired) = repair_correlation(corr);
    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("copula correlation is not positive definite after repair".into()))?;
    let l = chol.l();
    let mut eps = DVector::<f64>::zeros(m);
    let mut draws = Vec::with_capacity(config.n_draws);
    for _ in 0..config.n_draws {
        eps.iter_mut().for_each(|e| *e = StandardNormal.sample(rng));
        let z = &l * &eps;
        let mut total = 0.0;
        for (zj, g) in z.iter().zip(&marginals) {
            let u = dist::normal_cdf(*zj).clamp(1e-15, 1.0 - 1e-15);
            total += dist::gamma_quantile(g, u)?;
        }
        draws.push(total);
    }
    draws.sort_by(f64::total_cmp);
    Ok(CopulaFit {
        law: StaticRouteLaw::Empirical(draws),
        marginals,
        correlation: corr.transpose().iter().copied().collect(),
        repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::gamma_draw;
    use crate::evalkit::ks_statistic_sorted;
    use crate::seeded_rng;

    fn matrix(n: usize, m: usize, rho: f64, seed: u64) -> Vec<Vec<f64>> {
        // Shared normal factor plus noise, exponentiated.
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                let f: f64 = StandardNormal.sample(&mut rng);
                (0..m)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        (0.3 * (rho.sqrt() * f + (1.0 - rho).sqrt() * e)).exp()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn iid_gamma_segments_sum_exactly() {
        let g = GammaLaw::new(2.0, 1.0).unwrap();
        let s = indep_gamma_sum(&[g, g]).unwrap();
        assert!((s.shape - 4.0).abs() < 1e-12 && (s.rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_segment_is_its_own_fit() {
        let rows: Vec<Vec<f64>> = (1..=30).map(|i| vec![1.0 + (i % 7) as f64]).collect();
        let col: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let StaticRouteLaw::Gamma(g) = route_indep_gamma(&rows).unwrap() else { panic!() };
        let direct = fit_gamma_mle(&col).unwrap();
        assert!((g.shape - direct.shape).abs() < 1e-9 && (g.rate - direct.rate).abs() < 1e-9);
        let StaticRouteLaw::Normal { mean, sd } = route_indep_normal(&rows).unwrap() else { panic!() };
        let (m, v) = mean_var(&col);
        assert!((mean - m).abs() < 1e-12 && (sd * sd - v).abs() < 1e-12);
    }

    #[test]
    fn normal_variance_is_sum_of_segment_variances() {
        let rows = matrix(100, 4, 0.6, 1);
        let StaticRouteLaw::Normal { sd, .. } = route_indep_normal(&rows).unwrap() else { panic!() };
        let total: f64 = (0..4).map(|j| mean_var(&column(&rows, j)).1).sum();
        assert!((sd * sd - total).abs() < 1e-12);
    }

    #[test]
    fn variance_ratio_tracks_equicorrelation() {
        let rows = matrix(20_000, 6, 0.0, 2);
        assert!((variance_underestimation_ratio(&rows).unwrap() - 1.0).abs() < 0.05);
        // Equal variances and correlation rho give 1 + (m - 1) rho.
        let mut rng = seeded_rng(3);
        let rho: f64 = 0.4;
        let rows: Vec<Vec<f64>> = (0..40_000)
            .map(|_| {
                let f: f64 = StandardNormal.sample(&mut rng);
                (0..6)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        10.0 + rho.sqrt() * f + (1.0 - rho).sqrt() * e
                    })
                    .collect()
            })
            .collect();
        let r = variance_underestimation_ratio(&rows).unwrap();
        assert!((r - 3.0).abs() < 0.1, "ratio {r}");
    }

    #[test]
    fn identity_copula_matches_independent_sum() {
        let mut rng = seeded_rng(10);
        let rows: Vec<Vec<f64>> = (0..3000).map(|_| vec![gamma_draw(3.0, 1.0, &mut rng), gamma_draw(5.0, 2.0, &mut rng)]).collect();
        let fit = route_copula_mc(&rows, &CopulaConfig { n_draws: 20_000, ..CopulaConfig::default() }, &mut rng).unwrap();
        assert!(fit.correlation[1].abs() < 0.06);
        let mut indep: Vec<f64> = (0..20_000)
            .map(|_| gamma_draw(fit.marginals[0].shape, fit.marginals[0].rate, &mut rng) + gamma_draw(fit.marginals[1].shape, fit.marginals[1].rate, &mut rng))
            .collect();
        indep.sort_by(f64::total_cmp);
        let StaticRouteLaw::Empirical(d) = &fit.law else { panic!() };
        let stat = ks_statistic_sorted(&indep, |x| d.partition_point(|v| *v <= x) as f64 / d.len() as f64);
        let n_eff = (20_000.0 * 20_000.0 / 40_000.0f64).sqrt();
        assert!(dist::kolmogorov_sf(n_eff * stat) > 0.001, "D {stat}");
    }

    #[test]
    fn comonotone_copula_variance() {
        // Columns are monotone transforms of one variable: normal scores are
        // perfectly correlated and the route variance is (sum sd_j)^2.
        let mut rng = seeded_rng(12);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let x = gamma_draw(4.0, 1.0, &mut rng);
                vec![x, 2.0 * x, 0.5 * x]
            })
            .collect();
        let fit = route_copula_mc(&rows, &CopulaConfig::default(), &mut rng).unwrap();
        assert!(fit.repaired);
        let want: f64 = fit.marginals.iter().map(|g| g.variance().sqrt()).sum::<f64>().powi(2);
        let got = fit.law.variance();
        assert!((got / want - 1.0).abs() < 0.03, "got {got}, want {want}");
    }

    #[test]
    fn copula_reproduces_rank_correlation() {
        let rows = matrix(4000, 3, 0.5, 7);
        let mut rng = seeded_rng(8);
        let fit = route_copula_mc(&rows, &CopulaConfig { correlation: CorrelationKind::Spearman, ..CopulaConfig::default() }, &mut rng).unwrap();
        let target = fit.correlation[1];
        // Regenerate scores with the fitted matrix and compare Spearman.
        let c = DMatrix::from_row_slice(3, 3, &fit.correlation);
        let l = c.cholesky().unwrap().l();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..50_000 {
            let e = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let z = &l * e;
            a.push(z[0]);
            b.push(z[1]);
        }
        let rs = pearson(&[ranks(&a), ranks(&b)])[(0, 1)];
        let mapped = 2.0 * (std::f64::consts::PI * rs / 6.0).sin();
        assert!((mapped - target).abs() < 0.02);
    }

    #[test]
    fn static_laws_are_time_invariant() {
        let rows = matrix(200, 3, 0.3, 9);
        let law = route_indep_gamma(&rows).unwrap();
        let a: Vec<f64> = (0..5).map(|_| law.cdf(3.0).unwrap()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn copula_needs_enough_rows() {
        let rows = matrix(4, 3, 0.3, 9);
        let mut rng = seeded_rng(0);
        assert!(route_copula_mc(&rows, &CopulaConfig::default(), &mut rng).is_err());
    }
}
