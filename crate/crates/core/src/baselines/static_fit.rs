use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{self, digamma, trigamma, GammaLaw};
use crate::error::{Error, Result};
use crate::evalkit::{ks_statistic_sorted, RouteLaw};

/// Minimum sample size for a static fit.
pub const MIN_FIT_OBS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gamma,
    Lognormal,
    InverseGaussian,
    Weibull,
    Normal,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Gamma, Family::Lognormal, Family::InverseGaussian, Family::Weibull, Family::Normal];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gamma => "gamma",
            Family::Lognormal => "lognormal",
            Family::InverseGaussian => "inverse-gaussian",
            Family::Weibull => "weibull",
            Family::Normal => "normal",
        }
    }

    pub fn param_names(self) -> [&'static str; 2] {
        match self {
            Family::Gamma => ["shape", "rate"],
            Family::Lognormal => ["mu", "sigma"],
            Family::InverseGaussian => ["mean", "lambda"],
            Family::Weibull => ["shape", "scale"],
            Family::Normal => ["mean", "sd"],
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown family '{s}'")))
    }
}

/// A maximum-likelihood fit of a two-parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFit {
    pub family: Family,
    pub params: Vec<f64>,
    pub n: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub ks_stat: f64,
    pub ks_p: f64,
}

/// Gamma shape from `s = ln(mean) - mean(ln x)`: Minka's starting value, then
/// Newton on `ln k - digamma(k) = s`.
pub(crate) fn gamma_shape_from_s(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Numeric(format!("gamma shape equation has no solution for s = {s}")));
    }
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let g = k.ln() - digamma(k) - s;
        let dg = 1.0 / k - trigamma(k);
        let next = 1.0 / (1.0 / k + g / (k * k * dg));
        let next = if next > 0.0 && next.is_finite() { next } else { 0.5 * k };
        if (next - k).abs() <= 1e-14 * k {
            return Ok(next);
        }
        k = next;
    }
    Ok(k)
}

/// Gamma MLE.
pub fn fit_gamma_mle(data: &[f64]) -> Result<GammaLaw> {
    check_positive_data(data)?;
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let mlog = data.iter().map(|v| v.ln()).sum::<f64>() / n;
    let k = gamma_shape_from_s(mean.ln() - mlog)?;
    GammaLaw::new(k, k / mean)
}

fn check_positive_data(data: &[f64]) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Data(format!("positive-support family needs positive data, got {v}")));
    }
    Ok(())
}

fn ig_cdf(mu: f64, lam: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let r = (lam / x).sqrt();
    let a = dist::normal_cdf(r * (x / mu - 1.0));
    let b = (2.0 * lam / mu + dist::ln_normal_cdf(-r * (x / mu + 1.0))).exp();
    (a + b).clamp(0.0, 1.0)
}

fn weibull_profile(data: &[f64]) -> Result<(f64, f64)> {
    // Scale by the maximum so x^k cannot overflow.
    let xmax = data.iter().copied().fold(0.0, f64::max);
    let logs: Vec<f64> = data.iter().map(|v| (v / xmax).ln()).collect();
    let n = data.len() as f64;
    let mlog = logs.iter().sum::<f64>() / n;
    // g(k) = sum x^k ln x / sum x^k - 1/k - mean ln x, increasing in k.
    let g = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for l in &logs {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let r = s1 / s0;
        (r - 1.0 / k - mlog, s2 / s0 - r * r + 1.0 / (k * k))
    };
    let sd = (logs.iter().map(|l| (l - mlog).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Err(Error::Numeric("Weibull fit needs non-constant data".into()));
    }
    let (mut lo, mut hi) = (1e-3, 1e3);
    let mut k = (1.2 / sd).clamp(lo * 2.0, hi / 2.0);
    for _ in 0..200 {
        let (v, dv) = g(k);
        if v.abs() < 1e-13 {
            break;
        }
        if v > 0.0 {
            hi = k;
        } else {
            lo = k;
        }
        let next = k - v / dv;
        k = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-14 * k {
            break;
        }
    }
    let scale = xmax * (logs.iter().map(|l| (k * l).exp()).sum::<f64>() / n).powf(1.0 / k);
    Ok((k, scale))
}

/// Fit a family by maximum likelihood and score it; two parameters for every family.
pub fn fit_static(data: &[f64], family: Family) -> Result<StaticFit> {
    if data.len() < MIN_FIT_OBS {
        return Err(Error::Data(format!("need at least {MIN_FIT_OBS} observations, got {}", data.len())));
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite observation {v}")));
    }
    let n = data.len() as f64;
    let params = match family {
        Family::Gamma => {
            let g = fit_gamma_mle(data)?;
            vec![g.shape, g.rate]
        }
        Family::Lognormal => {
            check_positive_data(data)?;
            let mu = data.iter().map(|v| v.ln()).sum::<f64>() / n;
            let var = data.iter().map(|v| (v.ln() - mu).powi(2)).sum::<f64>() / n;
            vec![mu, var.sqrt()]
        }
        Family::InverseGaussian => {
            check_positive_data(data)?;
            let mu = data.iter().sum::<f64>() / n;
            let inv = data.iter().map(|v| 1.0 / v - 1.0 / mu).sum::<f64>() / n;
            vec![mu, 1.0 / inv]
        }
        Family::Weibull => {
            check_positive_data(data)?;
            let (k, scale) = weibull_profile(data)?;
            vec![k, scale]
        }
        Family::Normal => {
            let mu = data.iter().sum::<f64>() / n;
            let var = data.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            vec![mu, var.sqrt()]
        }
    };
    let location = matches!(family, Family::Lognormal | Family::Normal);
    if params.iter().any(|p| !p.is_finite()) || (!location && params[0] <= 0.0) {
        return Err(Error::Numeric(format!("{} fit produced invalid parameters {params:?}", family.name())));
    }
    if params[1] <= 0.0 {
        return Err(Error::Numeric(format!("{} fit is degenerate (constant data)", family.name())));
    }
    let mut fit = StaticFit {
        family,
        params,
        n: data.len(),
        loglik: 0.0,
        aic: 0.0,
        bic: 0.0,
        ks_stat: 0.0,
        ks_p: 0.0,
    };
    fit.loglik = data.iter().map(|&x| fit.logpdf(x)).sum();
    let k = 2.0;
    fit.aic = 2.0 * k - 2.0 * fit.loglik;
    fit.bic = k * n.ln() - 2.0 * fit.loglik;
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    fit.ks_stat = ks_statistic_sorted(&sorted, |x| fit.cdf_value(x));
    fit.ks_p = dist::kolmogorov_sf(n.sqrt() * fit.ks_stat);
    Ok(fit)
}

/// Fit every family, in [`Family::ALL`] order.
pub fn fit_all_static(data: &[f64]) -> Result<Vec<StaticFit>> {
    Family::ALL.par_iter().map(|f| fit_static(data, *f)).collect()
}

impl StaticFit {
    pub fn logpdf(&self, x: f64) -> f64 {
        let (p0, p1) = (self.params[0], self.params[1]);
        let positive = x > 0.0;
        match self.family {
            Family::Gamma if positive => dist::gamma_logpdf_unchecked(p0, p1, x),
            Family::Lognormal if positive => {
                let z = (x.ln() - p0) / p1;
                -0.5 * z * z - x.ln() - p1.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Family::InverseGaussian if positive => {
                0.5 * (p1 / (2.0 * std::f64::consts::PI * x.powi(3))).ln() - p1 * (x - p0).powi(2) / (2.0 * p0 * p0 * x)
            }
            Family::Weibull if positive => {
                let z = x / p1;
                (p0 / p1).ln() + (p0 - 1.0) * z.ln() - z.powf(p0)
            }
            Family::Normal => {
                let z = (x - p0) / p1;
                -0.5 * z * z - p1.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            _ => f64::NEG_INFINITY,
        }
    }

    fn cdf_value(&self, x: f64) -> f64 {
        let (p0, p1) = (self.params[0], self.params[1]);
        if x <= 0.0 && self.family != Family::Normal {
            return 0.0;
        }
        match self.family {
            Family::Gamma => dist::inc_gamma_pair(p0, p1 * x).0,
            Family::Lognormal => dist::normal_cdf((x.ln() - p0) / p1),
            Family::InverseGaussian => ig_cdf(p0, p1, x),
            Family::Weibull => -(-(x / p1).powf(p0)).exp_m1(),
            Family::Normal => dist::normal_cdf((x - p0) / p1),
        }
    }

    fn quantile_value(&self, q: f64) -> Result<f64> {
        dist::check_level("StaticFit::quantile", q)?;
        let (p0, p1) = (self.params[0], self.params[1]);
        match self.family {
            Family::Gamma => dist::gamma_quantile(&GammaLaw::new(p0, p1)?, q),
            Family::Lognormal => Ok((p0 + p1 * dist::normal_quantile(q)?).exp()),
            Family::InverseGaussian => dist::solve_monotone("StaticFit::quantile", q, p0, |x| {
                let c = ig_cdf(p0, p1, x);
                (c, 1.0 - c, self.logpdf(x))
            }),
            Family::Weibull => Ok(p1 * (-(-q).ln_1p()).powf(1.0 / p0)),
            Family::Normal => Ok(p0 + p1 * dist::normal_quantile(q)?),
        }
    }
}

impl RouteLaw for StaticFit {
    fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_value(x))
    }
    fn quantile(&self, q: f64) -> Result<f64> {
        self.quantile_value(q)
    }
    fn log_density(&self, x: f64) -> Result<f64> {
        Ok(self.logpdf(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn gamma_data(shape: f64, rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| dist::gamma_draw(shape, rate, &mut rng)).collect()
    }

    #[test]
    fn exponential_data_gives_unit_shape() {
        let data = gamma_data(1.0, 0.5, 5000, 3);
        let g = fit_gamma_mle(&data).unwrap();
        // SE of the shape MLE is about sqrt(1 / (n (trigamma(k) - 1/k))).
        let se = (1.0 / (5000.0 * (trigamma(1.0) - 1.0))).sqrt();
        assert!((g.shape - 1.0).abs() < 3.0 * se, "shape {}", g.shape);
    }

    #[test]
    fn gamma_score_equations_hold() {
        let data = gamma_data(3.5, 2.0, 400, 9);
        let fit = fit_static(&data, Family::Gamma).unwrap();
        let (k, r) = (fit.params[0], fit.params[1]);
        let n = data.len() as f64;
        let d_rate = n * k / r - data.iter().sum::<f64>();
        let d_shape = n * (r.ln() - digamma(k)) + data.iter().map(|v| v.ln()).sum::<f64>();
        assert!(d_rate.abs() < 1e-8 * n && d_shape.abs() < 1e-8 * n);
        assert!((fit.aic - (4.0 - 2.0 * fit.loglik)).abs() < 1e-9);
        assert!((fit.bic - (2.0 * n.ln() - 2.0 * fit.loglik)).abs() < 1e-9);
    }

    #[test]
    fn weibull_score_equation_holds() {
        let data = gamma_data(2.0, 1.0, 300, 4);
        let fit = fit_static(&data, Family::Weibull).unwrap();
        let (k, lam) = (fit.params[0], fit.params[1]);
        // Perturbing either parameter lowers the likelihood.
        for (dk, dl) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
            let other = StaticFit {
                params: vec![k + dk, lam + dl],
                ..fit.clone()
            };
            assert!(data.iter().map(|&x| other.logpdf(x)).sum::<f64>() < fit.loglik);
        }
    }

    #[test]
    fn quantile_inverts_cdf_for_every_family() {
        let data = gamma_data(4.0, 0.2, 300, 12);
        for fit in fit_all_static(&data).unwrap() {
            for q in [0.01, 0.25, 0.5, 0.9, 0.99] {
                let x = fit.quantile(q).unwrap();
                assert!((fit.cdf(x).unwrap() - q).abs() < 1e-8, "{:?} at {q}", fit.family);
            }
        }
    }

    #[test]
    fn normal_is_worst_on_skewed_data() {
        let data = gamma_data(6.0, 0.2, 2000, 21);
        let fits = fit_all_static(&data).unwrap();
        let normal = fits.iter().find(|f| f.family == Family::Normal).unwrap();
        assert!(fits.iter().all(|f| f.ks_stat <= normal.ks_stat));
    }

    #[test]
    fn rejects_bad_data() {
        assert!(matches!(fit_static(&[1.0; 5], Family::Gamma), Err(Error::Data(_))));
        let mut d = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 0.0];
        assert!(matches!(fit_static(&d, Family::Weibull), Err(Error::Data(_))));
        assert!(fit_static(&d, Family::Normal).is_ok());
        d[9] = -1.0;
        assert!(matches!(fit_static(&d, Family::Lognormal), Err(Error::Data(_))));
        assert_eq!("inverse-gaussian".parse::<Family>().unwrap(), Family::InverseGaussian);
    }
}
