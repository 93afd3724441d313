use dyngamma::corridor::run_filter_mv;
use dyngamma::dataio::simulate_corridor;
use dyngamma::dist::{gamma_cdf, kolmogorov_sf};
use dyngamma::evalkit::ks_statistic_sorted;
use dyngamma::inference::{
    draw_lambdas, ffbs_sample, log_marginal_likelihood, run_gibbs, run_particle_filter, GammaStepConfig, GibbsConfig,
    LambdaPrior, PfConfig,
};
use dyngamma::{seeded_rng, CorridorModel, GammaState, HyperParams};
use rand_distr::{Distribution, Gamma};

fn ks_p(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let d = ks_statistic_sorted(&draws, cdf);
    kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d)
}

#[test]
fn ffbs_final_draw_follows_the_filtering_posterior() {
    let hyper = HyperParams::new(1.5, 0.8).unwrap();
    let model = CorridorModel::from_lambdas(vec![0.6, 1.0, 1.4]).unwrap();
    let init = GammaState::new(2.5, 2.5).unwrap();
    let sim = simulate_corridor(&hyper, &model, 40, &init, &mut seeded_rng(3)).unwrap();
    let last = run_filter_mv(&sim.series, &hyper, &model, &init).unwrap().last().unwrap().posterior;
    let mut rng = seeded_rng(4);
    let draws: Vec<f64> = (0..4000).map(|_| *ffbs_sample(&sim.series, &hyper, &model, &init, &mut rng).unwrap().last().unwrap()).collect();
    let p = ks_p(draws, |x| gamma_cdf(&last.law(), x).unwrap());
    assert!(p > 1e-3, "KS p {p}");
}

// Successive-conditional check: start from a joint prior draw of
// (lambda, eta, y), apply one sweep of the two conditional kernels, and
// compare test functions of (lambda, eta) before and after.
#[test]
fn one_sweep_preserves_the_joint_prior() {
    let hyper = HyperParams::new(1.0, 0.8).unwrap();
    let init = GammaState::new(4.0, 4.0).unwrap();
    let prior = LambdaPrior::new(vec![6.0; 3], vec![6.0; 3]).unwrap();
    let reps = 3000;
    let mut rng = seeded_rng(11);
    let lambda_law = Gamma::new(6.0, 1.0 / 6.0).unwrap();
    let funcs = |l: &[f64], e: &[f64]| {
        [
            l[0],
            l[2].ln(),
            *e.last().unwrap(),
            e.iter().map(|v| v.ln()).sum::<f64>() / e.len() as f64,
            l[1] * e[0],
        ]
    };
    let (mut before, mut after) = (vec![Vec::new(); 5], vec![Vec::new(); 5]);
    for _ in 0..reps {
        let lambdas: Vec<f64> = (0..3).map(|_| lambda_law.sample(&mut rng)).collect();
        let model = CorridorModel::unnormalized(lambdas.clone(), vec![], (1..=3).map(|j| format!("seg{j}")).collect()).unwrap();
        let sim = simulate_corridor(&hyper, &model, 15, &init, &mut rng).unwrap();
        for (k, v) in funcs(&lambdas, &sim.eta_path).into_iter().enumerate() {
            before[k].push(v);
        }
        let eta = ffbs_sample(&sim.series, &hyper, &model, &init, &mut rng).unwrap();
        let new_l = draw_lambdas(&eta, &sim.series, &hyper, &prior, &mut rng).unwrap();
        for (k, v) in funcs(&new_l, &eta).into_iter().enumerate() {
            after[k].push(v);
        }
    }
    let mean_var = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    };
    for k in 0..5 {
        let (m0, v0) = mean_var(&before[k]);
        let (m1, v1) = mean_var(&after[k]);
        let z = (m1 - m0) / ((v0 + v1) / reps as f64).sqrt();
        assert!(z.abs() < 4.0, "test function {k}: z = {z}");
    }
}

#[test]
fn particle_evidence_converges_to_exact() {
    let hyper = HyperParams::new(1.0, 0.75).unwrap();
    let model = CorridorModel::from_lambdas(vec![0.7, 1.0, 1.3, 0.9]).unwrap();
    let init = GammaState::new(2.5, 2.5).unwrap();
    let sim = simulate_corridor(&hyper, &model, 60, &init, &mut seeded_rng(21)).unwrap();
    let exact = log_marginal_likelihood(&sim.series, &hyper, &model, &init).unwrap();
    let err = |n: usize| {
        (0..20u64)
            .map(|seed| {
                let out = run_particle_filter(&sim.series, &hyper, &model, &init, n, &PfConfig::default(), &mut seeded_rng(100 + seed)).unwrap();
                (out.log_evidence - exact).abs()
            })
            .sum::<f64>()
            / 20.0
    };
    let (small, large) = (err(500), err(5000));
    assert!(large < small, "mean |error| {small} at N=500 vs {large} at N=5000");
    assert!(large < 0.1, "mean |error| at N=5000 is {large}");
}

// 90% posterior intervals for the discount factor should cover the truth in
// at least 80 of 100 replicate data sets.
#[test]
fn discount_interval_coverage() {
    let truth = 0.7;
    let hyper = HyperParams::new(2.0, truth).unwrap();
    let model = CorridorModel::from_lambdas(vec![0.8, 1.0, 1.2]).unwrap();
    let init = GammaState::new(2.5, 2.5).unwrap();
    let mut covered = 0;
    for rep in 0..100u64 {
        let sim = simulate_corridor(&hyper, &model, 150, &init, &mut seeded_rng(500 + rep)).unwrap();
        let config = GibbsConfig {
            chains: 1,
            iters: 1500,
            burn_in: 300,
            thin: 1,
            seed: rep,
            gamma_step: Some(GammaStepConfig::default()),
            ..GibbsConfig::default()
        };
        let start = HyperParams::new(2.0, 0.5).unwrap();
        let out = run_gibbs(&sim.series, &start, &LambdaPrior::diffuse(3).unwrap(), &config).unwrap();
        let mut g: Vec<f64> = out.chains[0].iter().map(|d| d.gamma).collect();
        g.sort_by(f64::total_cmp);
        let lo = g[(0.05 * g.len() as f64) as usize];
        let hi = g[(0.95 * g.len() as f64) as usize];
        if (lo..=hi).contains(&truth) {
            covered += 1;
        }
    }
    assert!(covered >= 80, "covered {covered} of 100");
}
