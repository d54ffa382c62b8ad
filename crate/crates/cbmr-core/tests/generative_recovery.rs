//! Recovery of planted truth from synthetic data: uniform intensity stays
//! uniform, a planted hotspot comes back at its planted height, dispersion
//! parameters are recovered from their own generative models, and the Pearson
//! dispersion statistic is calibrated.

use cbmr_core::counts::CountData;
use cbmr_core::linalg::DMat;
use cbmr_core::mask::BrainMask;
use cbmr_core::model::{ModelData, ModelKind, ModelParams};
use cbmr_core::optim::{fit, fit_fisher_scoring, FitConfig, InitStrategy};
use cbmr_core::rng::SeedPlan;
use cbmr_core::sparse::{CsrBuilder, CsrMatrix};
use cbmr_core::spline::build_design;
use rand_chacha::rand_core::RngCore;
use rand_distr::{Distribution, Gamma, Poisson};

fn unif(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_mask(side: usize) -> BrainMask {
    let half = side as f64 - 1.0;
    BrainMask::new(
        [side, side, side],
        [2.0, 2.0, 2.0],
        [
            [2.0, 0.0, 0.0, -half],
            [0.0, 2.0, 0.0, -half],
            [0.0, 0.0, 2.0, -half],
            [0.0, 0.0, 0.0, 1.0],
        ],
        vec![true; side * side * side],
    )
    .unwrap()
}

/// Single all-ones design column: every voxel shares one intensity level.
fn flat_design(n: usize) -> CsrMatrix {
    let mut b = CsrBuilder::new(1);
    for _ in 0..n {
        b.push_row([(0u32, 1.0)].into_iter());
    }
    b.finish()
}

/// Split per-voxel totals into `m` studies round-robin; which study a focus
/// lands in is irrelevant for models driven by voxel sums and factor sums.
fn spread_counts(sums: &[u64], n_voxels: usize, m: usize) -> CountData {
    let mut studies: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut t = 0usize;
    for (j, &k) in sums.iter().enumerate() {
        for _ in 0..k {
            studies[t % m].push(j as u32);
            t += 1;
        }
    }
    CountData::from_study_ranks(n_voxels, &studies, false)
}

#[test]
fn uniform_foci_fit_back_to_a_uniform_intensity() {
    // 10k uniform foci over two one-hot intensity levels: each fitted
    // level must sit within a few percent of the pooled rate. Estimation
    // noise per basis direction scales like sqrt(P/T), so a per-voxel
    // max-deviation bound this tight requires a deliberately small P; the
    // hotspot test below exercises the full spline design instead.
    let n = 4096usize;
    let n_levels = 2usize;
    let mut b = CsrBuilder::new(n_levels);
    for j in 0..n {
        b.push_row([(((j * n_levels) / n) as u32, 1.0)].into_iter());
    }
    let x = b.finish();
    let mut rng = SeedPlan::new(21).stream("recovery-test", 0);
    let n_studies = 20usize;
    let mut studies: Vec<Vec<u32>> = Vec::new();
    for _ in 0..n_studies {
        studies.push((0..500).map(|_| (rng.next_u64() % n as u64) as u32).collect());
    }
    let counts = CountData::from_study_ranks(n, &studies, false);
    let z = DMat::zeros(n_studies, 0);
    let data = ModelData::new(&x, &z, &counts).unwrap();
    let fit = fit(&data, ModelKind::Poisson, &FitConfig::default()).unwrap();
    assert!(fit.converged, "n_iter={} grad={}", fit.n_iter, fit.grad_sup_norm);

    let f = data.factors(&fit.params).unwrap();
    let mu0 = counts.total / (n_studies * n) as f64;
    let worst = f
        .mu_x
        .iter()
        .map(|mu| (mu / mu0 - 1.0).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 0.05, "max relative deviation {worst}");
}

#[test]
fn planted_hotspot_is_recovered_at_its_planted_height() {
    // background plus a Gaussian bump of height ratio 3 at the box center;
    // the fitted intensity must reproduce that ratio within 20%
    let mask = box_mask(16);
    let n = mask.n_voxels();
    let design = build_design(&mask, 8.0, 0.1).unwrap();
    let mut rng = SeedPlan::new(22).stream("recovery-test", 1);
    let sigma_mm = 6.0;
    let amp = 2.0; // peak intensity is (1 + amp) × background

    // per-voxel rates on the planted surface, then Poisson counts
    let base = 2.5f64;
    let mut rates = vec![0.0f64; n];
    let mut total_rate = 0.0;
    for rank in 0..n {
        let vox = mask.voxel_at_rank(rank);
        let mm = mask.voxel_center_mm(vox);
        let d2 = mm.iter().map(|c| c * c).sum::<f64>();
        rates[rank] = base * (1.0 + amp * (-d2 / (2.0 * sigma_mm * sigma_mm)).exp());
        total_rate += rates[rank];
    }
    let mut sums = vec![0u64; n];
    for (j, &lam) in rates.iter().enumerate() {
        sums[j] = Poisson::new(lam).unwrap().sample(&mut rng) as u64;
    }
    let _ = total_rate;
    let counts = spread_counts(&sums, n, 20);
    let z = DMat::zeros(20, 0);
    let data = ModelData::new(&design.x, &z, &counts).unwrap();
    let cfg = FitConfig { tol_grad: 1e-4, ..Default::default() };
    let fit = fit(&data, ModelKind::Poisson, &cfg).unwrap();
    assert!(fit.converged, "n_iter={} grad={}", fit.n_iter, fit.grad_sup_norm);

    let f = data.factors(&fit.params).unwrap();
    let center = mask.in_mask_rank(7, 7, 7).unwrap();
    // background read far from the bump: corner shell voxels (> 3σ away)
    let mut bg = Vec::new();
    for rank in 0..n {
        let mm = mask.voxel_center_mm(mask.voxel_at_rank(rank));
        if mm.iter().map(|c| c * c).sum::<f64>() > (3.0 * sigma_mm) * (3.0 * sigma_mm) {
            bg.push(f.mu_x[rank]);
        }
    }
    assert!(bg.len() > 100, "background shell too small: {}", bg.len());
    let bg_mean = bg.iter().sum::<f64>() / bg.len() as f64;
    let ratio = f.mu_x[center] / bg_mean;
    let planted = 1.0 + amp;
    assert!(
        (ratio - planted).abs() / planted <= 0.20,
        "fitted ratio {ratio} vs planted {planted}"
    );
}

#[test]
fn dispersion_recovered_from_its_own_generative_model() {
    // voxel sums drawn from the matched family itself (gamma–Poisson with
    // r = M/α, scale q = αμ): α̂ lands within ±0.1 of the truth. The
    // dispersion signal is the excess variance ratio αμ, so the per-study
    // rate must be high enough for the data to carry it.
    let alpha = 0.5f64;
    let m = 500usize;
    let n = 2000usize;
    let mu = 1.0f64;
    let r = m as f64 / alpha;
    let q = alpha * mu;
    let mut rng = SeedPlan::new(23).stream("recovery-test", 2);
    let gamma = Gamma::new(r, q).unwrap();
    let mut sums = vec![0u64; n];
    for s in sums.iter_mut() {
        let lam: f64 = gamma.sample(&mut rng);
        *s = Poisson::new(lam.max(1e-12)).unwrap().sample(&mut rng) as u64;
    }
    let x = flat_design(n);
    let counts = spread_counts(&sums, n, m);
    let z = DMat::zeros(m, 0);
    let data = ModelData::new(&x, &z, &counts).unwrap();
    let fit = fit(&data, ModelKind::NegBinomial, &FitConfig::default()).unwrap();
    assert!(fit.converged, "n_iter={} grad={} loglik={}", fit.n_iter, fit.grad_sup_norm, fit.loglik);
    let alpha_hat = fit.params.alpha().unwrap();
    assert!((alpha_hat - alpha).abs() <= 0.1, "alpha_hat {alpha_hat}");
    // the mean comes back too
    let mu_hat = fit.params.beta[0].exp();
    assert!((mu_hat / mu - 1.0).abs() < 0.05, "mu_hat {mu_hat}");
}

#[test]
fn simulated_frailty_covariance_matches_the_closed_form() {
    // two-stage draws (shared gamma frailty, then Poisson per voxel): the
    // sample covariance between two voxels of one study estimates α·μ₁·μ₂
    let alpha = 0.8f64;
    let (mu1, mu2) = (1.3f64, 0.7f64);
    let n_studies = 200_000usize;
    let mut rng = SeedPlan::new(24).stream("recovery-test", 3);
    let gamma = Gamma::new(1.0 / alpha, alpha).unwrap();
    let mut prods = Vec::with_capacity(n_studies);
    let (mut sum1, mut sum2) = (0.0f64, 0.0f64);
    let mut draws = Vec::with_capacity(n_studies);
    for _ in 0..n_studies {
        let g: f64 = gamma.sample(&mut rng);
        let y1 = Poisson::new((g * mu1).max(1e-12)).unwrap().sample(&mut rng);
        let y2 = Poisson::new((g * mu2).max(1e-12)).unwrap().sample(&mut rng);
        sum1 += y1;
        sum2 += y2;
        draws.push((y1, y2));
    }
    let (m1, m2) = (sum1 / n_studies as f64, sum2 / n_studies as f64);
    for &(y1, y2) in &draws {
        prods.push((y1 - m1) * (y2 - m2));
    }
    let cov = prods.iter().sum::<f64>() / (n_studies as f64 - 1.0);
    let var_prod = prods.iter().map(|p| (p - cov) * (p - cov)).sum::<f64>()
        / (n_studies as f64 - 1.0);
    let mc_se = (var_prod / n_studies as f64).sqrt();

    // the closed form, read through the model op on a two-voxel design
    let mut b = CsrBuilder::new(2);
    b.push_row([(0u32, 1.0)].into_iter());
    b.push_row([(1u32, 1.0)].into_iter());
    let x = b.finish();
    let z = DMat::zeros(1, 0);
    let counts = CountData::from_study_ranks(2, &[vec![0u32]], false);
    let data = ModelData::new(&x, &z, &counts).unwrap();
    let params = ModelParams {
        beta: vec![mu1.ln(), mu2.ln()],
        gamma: vec![],
        log_alpha: Some(alpha.ln()),
    };
    let closed = data.clustered_pair_covariance(&params, 0, 0, 1).unwrap();
    assert!((closed - alpha * mu1 * mu2).abs() < 1e-12);
    assert!(
        (cov - closed).abs() <= 3.0 * mc_se,
        "sample covariance {cov} vs closed form {closed} (3·SE = {})",
        3.0 * mc_se
    );
}

#[test]
fn pearson_dispersion_is_calibrated_on_poisson_data() {
    let n = 5000usize;
    let m = 100usize;
    let cell_mu = 0.05f64;
    let mut rng = SeedPlan::new(25).stream("recovery-test", 4);
    let pois = Poisson::new(cell_mu * m as f64).unwrap();
    let sums: Vec<u64> = (0..n).map(|_| pois.sample(&mut rng) as u64).collect();
    let x = flat_design(n);
    let counts = spread_counts(&sums, n, m);
    let z = DMat::zeros(m, 0);
    let data = ModelData::new(&x, &z, &counts).unwrap();
    let fit = fit(&data, ModelKind::QuasiPoisson, &FitConfig::default()).unwrap();
    let theta = fit.dispersion.unwrap();
    assert!((0.9..=1.1).contains(&theta), "theta {theta}");
}

#[test]
fn pearson_dispersion_detects_overdispersion() {
    // α=1 at per-cell mean 0.02 inflates θ to 1 + αμ = 1.02; with 20k voxels
    // that excess clears the sampling noise in at least 19 of 20 replicates
    let alpha = 1.0f64;
    let m = 500usize;
    let n = 20_000usize;
    let mu = 0.02f64;
    let plan = SeedPlan::new(26);
    let mut hits = 0usize;
    for rep in 0..20u64 {
        let mut rng = plan.stream("recovery-test", 100 + rep);
        let gamma = Gamma::new(m as f64 / alpha, alpha * mu).unwrap();
        let mut sums = vec![0u64; n];
        for s in sums.iter_mut() {
            let lam: f64 = gamma.sample(&mut rng);
            *s = Poisson::new(lam.max(1e-12)).unwrap().sample(&mut rng) as u64;
        }
        let x = flat_design(n);
        let counts = spread_counts(&sums, n, m);
        let z = DMat::zeros(m, 0);
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let fit = fit(&data, ModelKind::QuasiPoisson, &FitConfig::default()).unwrap();
        if fit.dispersion.unwrap() > 1.0 {
            hits += 1;
        }
    }
    assert!(hits >= 19, "overdispersion detected in only {hits}/20 replicates");
}

#[test]
fn scoring_converges_superlinearly() {
    // truncating the same deterministic run after k iterations exposes the
    // iterates: the gap to the optimum must shrink faster than geometrically
    let n = 50usize;
    let mut rng = SeedPlan::new(27).stream("recovery-test", 5);
    let mut b = CsrBuilder::new(2);
    for _ in 0..n {
        let w = 0.2 + 0.6 * unif(&mut rng);
        b.push_row([(0u32, w), (1u32, 1.0 - w)].into_iter());
    }
    let x = b.finish();
    let pois = Poisson::new(3.0).unwrap();
    let sums: Vec<u64> = (0..n).map(|_| pois.sample(&mut rng) as u64).collect();
    let counts = spread_counts(&sums, n, 10);
    let z = DMat::zeros(10, 0);
    let data = ModelData::new(&x, &z, &counts).unwrap();

    let full = fit_fisher_scoring(&data, ModelKind::Poisson, &FitConfig::default()).unwrap();
    assert!(full.converged);
    let mut gaps = Vec::new();
    for k in 1..=6usize {
        let cfg = FitConfig {
            max_iter: k,
            tol_grad: 1e-15,
            tol_loglik: 1e-300,
            init: InitStrategy::Default,
            ..Default::default()
        };
        let part = fit_fisher_scoring(&data, ModelKind::Poisson, &cfg).unwrap();
        gaps.push(full.loglik - part.loglik);
    }
    let mut prev_ratio = 1.0f64;
    for w in gaps.windows(2) {
        if w[1] < 1e-12 {
            break; // at numerical exactness; ratios are noise beyond here
        }
        let ratio = w[1] / w[0];
        assert!(
            ratio < 0.8 * prev_ratio || ratio < 1e-3,
            "gap ratios stopped shrinking: {gaps:?}"
        );
        prev_ratio = ratio;
    }
    assert!(gaps[0] > 0.0 && gaps[3] < 1e-6 * gaps[0], "not superlinear: {gaps:?}");
}
