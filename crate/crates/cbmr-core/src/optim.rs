//! Maximum-likelihood fitting.
//!
//! Poisson and quasi-Poisson use Fisher scoring with step halving — for the
//! log link this is IRLS on the margin sums, and the quasi dispersion cancels
//! from the step exactly, so both families share one code path up to the
//! final dispersion estimate. The negative-binomial families use L-BFGS with
//! a strong Wolfe line search on the analytic gradient, since their
//! information matrices have no cheap closed form; the observed information
//! at the optimum comes from symmetrized central differences of the gradient.
//!
//! Both searches accept steps whose log-likelihood gain rounds to zero
//! (scoring non-strictly, the Wolfe search with a relative 1e-12 slack):
//! near the optimum the gain falls below the loglik's floating-point
//! resolution long before the analytic gradient loses precision, and the
//! gradient criterion — the only one the `converged` flag reports — can
//! still be met by such steps. A long run of flat steps stops the search.
//!
//! Ill-conditioning is reported, never papered over: no ridge terms, no
//! dropped columns. A fit is marked singular when the information matrix
//! fails its Cholesky factorization or its condition estimate exceeds 1e12;
//! downstream standard errors refuse to use such a matrix.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::linalg::{sup_norm, sym_condition_estimate, Cholesky, DMat};
use crate::model::{Evaluation, ModelData, ModelKind, ModelParams};

pub const SINGULAR_CONDITION_LIMIT: f64 = 1e12;

/// Consecutive sub-`tol_loglik` gains tolerated before stopping. Near an
/// optimum the per-step gain shrinks much faster than the gradient, so a
/// short run of flat steps is normal; a long one means the objective has
/// genuinely stopped improving.
const STALL_LIMIT: usize = 25;

#[derive(Debug, Clone)]
pub enum InitStrategy {
    /// Flat field matching the total count (see `ModelParams::init`).
    Default,
    /// The flat start plus a uniform ±0.5 perturbation of every coordinate,
    /// drawn from `FitConfig::seed`; for probing init sensitivity.
    Random,
    Warm(ModelParams),
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Stop when the gradient sup-norm falls below this. The `converged`
    /// flag reports this criterion and nothing else.
    pub tol_grad: f64,
    /// ... or when a long run of accepted steps each improves the
    /// log-likelihood by less than this (early stop, usually unconverged).
    pub tol_loglik: f64,
    pub init: InitStrategy,
    pub lbfgs_memory: usize,
    /// Drives `InitStrategy::Random`; `None` means seed 0.
    pub seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 1000,
            tol_grad: 1e-6,
            tol_loglik: 1e-8,
            init: InitStrategy::Default,
            lbfgs_memory: 10,
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub loglik: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub grad_sup_norm: f64,
    /// Information matrix at the optimum, order [β…, γ…, (ln α)]: expected
    /// (Fisher) for Poisson families, observed (−Hessian) for the rest.
    pub info: DMat,
    pub info_condition: f64,
    /// Information matrix unusable: Cholesky breakdown or condition above
    /// `SINGULAR_CONDITION_LIMIT`.
    pub singular: bool,
    /// Linear predictors clamped in the final evaluation.
    pub n_clamped: usize,
    /// Fisher scoring handed over to L-BFGS (singular scoring step).
    pub fallback_used: bool,
    /// Pearson dispersion θ̂ (quasi-Poisson only).
    pub dispersion: Option<f64>,
    pub pearson_x2: Option<f64>,
    /// Fewer than 200 foci in total: a sparse-data regime where the
    /// information matrix is frequently near-singular and estimates are
    /// unstable. Worth a warning to the user; nothing downstream refuses it.
    pub low_foci: bool,
}

fn initial_params(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
) -> Result<ModelParams, CoreError> {
    match &config.init {
        InitStrategy::Default => {
            ModelParams::init(kind, data.n_beta(), data.n_gamma(), data.counts)
        }
        InitStrategy::Random => {
            use rand_chacha::rand_core::RngCore;
            let mut p = ModelParams::init(kind, data.n_beta(), data.n_gamma(), data.counts)?;
            let mut rng = crate::rng::SeedPlan::new(config.seed.unwrap_or(0))
                .stream("optimizer-init", 0);
            let mut jitter =
                || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) - 0.5;
            for b in p.beta.iter_mut() {
                *b += jitter();
            }
            for g in p.gamma.iter_mut() {
                *g += jitter();
            }
            if let Some(la) = p.log_alpha.as_mut() {
                *la += jitter();
            }
            Ok(p)
        }
        InitStrategy::Warm(p) => Ok(p.clone()),
    }
}

/// Fit by the method the family calls for: Fisher scoring for Poisson,
/// alternating IRLS for quasi-Poisson, L-BFGS for the dispersion families.
pub fn fit(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
) -> Result<FitResult, CoreError> {
    let start = initial_params(data, kind, config)?;
    let mut result = match kind {
        ModelKind::Poisson => fisher_scoring(data, kind, config, start)?,
        ModelKind::QuasiPoisson => irls_quasi(data, config, start)?,
        ModelKind::NegBinomial | ModelKind::ClusteredNegBinomial => {
            lbfgs(data, kind, config, start, 0, false)?
        }
    };
    if kind == ModelKind::QuasiPoisson {
        let f = data.factors(&result.params)?;
        let (theta, x2, _) = data.pearson_dispersion(&f)?;
        result.dispersion = Some(theta);
        result.pearson_x2 = Some(x2);
    }
    Ok(result)
}

/// Force the Fisher-scoring path; only the Poisson mean structure has the
/// closed-form information it needs.
pub fn fit_fisher_scoring(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
) -> Result<FitResult, CoreError> {
    if !matches!(kind, ModelKind::Poisson | ModelKind::QuasiPoisson) {
        return Err(CoreError::Invalid(
            "Fisher scoring needs the Poisson or quasi-Poisson family".into(),
        ));
    }
    let start = initial_params(data, kind, config)?;
    let mut result = fisher_scoring(data, kind, config, start)?;
    if kind == ModelKind::QuasiPoisson {
        let f = data.factors(&result.params)?;
        let (theta, x2, _) = data.pearson_dispersion(&f)?;
        result.dispersion = Some(theta);
        result.pearson_x2 = Some(x2);
    }
    Ok(result)
}

/// Force the L-BFGS path, e.g. to cross-check a scoring fit. Quasi-Poisson
/// is refused: it has score equations but no likelihood objective.
pub fn fit_lbfgs(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
) -> Result<FitResult, CoreError> {
    if kind == ModelKind::QuasiPoisson {
        return Err(CoreError::Invalid(
            "quasi-Poisson has no likelihood objective for L-BFGS".into(),
        ));
    }
    let start = initial_params(data, kind, config)?;
    lbfgs(data, kind, config, start, 0, false)
}

fn finish(
    data: &ModelData<'_>,
    kind: ModelKind,
    params: ModelParams,
    ev: Evaluation,
    n_iter: usize,
    converged: bool,
    fallback_used: bool,
) -> Result<FitResult, CoreError> {
    let info = match kind {
        ModelKind::Poisson | ModelKind::QuasiPoisson => data.poisson_fisher(&ev.factors),
        _ => numeric_observed_info(data, kind, &params, 1e-5)?,
    };
    let (info_condition, singular) = match Cholesky::new(&info) {
        Ok(_) => {
            let cond = sym_condition_estimate(&info).unwrap_or(f64::INFINITY);
            (cond, cond > SINGULAR_CONDITION_LIMIT)
        }
        Err(_) => (f64::INFINITY, true),
    };
    Ok(FitResult {
        kind,
        params,
        loglik: ev.loglik,
        n_iter,
        converged,
        grad_sup_norm: sup_norm(&ev.grad),
        info,
        info_condition,
        singular,
        n_clamped: ev.factors.n_clamped,
        fallback_used,
        dispersion: None,
        pearson_x2: None,
        low_foci: data.counts.total < 200.0,
    })
}

/// One alternating quasi-Poisson update: β from the per-voxel margin, then
/// γ from the per-study margin at the refreshed β. The dispersion divides
/// both the weights and the residuals, so it cancels from each block's
/// step — it is still taken as an argument to keep that cancellation
/// checkable.
pub fn quasi_poisson_irls_step(
    data: &ModelData<'_>,
    params: &ModelParams,
    theta: f64,
) -> Result<ModelParams, CoreError> {
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(CoreError::Invalid(
            "quasi-Poisson dispersion must be a finite θ ≥ 1".into(),
        ));
    }
    let c = data.counts;
    let r = data.n_gamma();
    let f = data.factors(params)?;
    // β block: weighted scoring on the per-voxel sums
    let w: Vec<f64> = f.mu_x.iter().map(|m_| m_ * f.s1z / theta).collect();
    let resid: Vec<f64> = (0..c.n_voxels)
        .map(|j| (c.y_per_voxel[j] - f.mu_x[j] * f.s1z) / theta)
        .collect();
    let gram = data.x.weighted_gram(&w);
    let rhs = data.x.t_matvec(&resid);
    let delta_b = Cholesky::new(&gram)?.solve(&rhs);
    let beta: Vec<f64> = params.beta.iter().zip(&delta_b).map(|(b, d)| b + d).collect();
    let mut gamma = params.gamma.clone();
    if r > 0 {
        let refreshed = ModelParams {
            beta: beta.clone(),
            gamma: gamma.clone(),
            log_alpha: params.log_alpha,
        };
        let f2 = data.factors(&refreshed)?;
        let mut v_gram = DMat::zeros(r, r);
        let mut rhs_g = vec![0.0; r];
        for i in 0..c.n_studies {
            let wv = f2.mu_z[i] * f2.s1x / theta;
            let res = (c.y_per_study[i] - f2.mu_z[i] * f2.s1x) / theta;
            for s in 0..r {
                rhs_g[s] += data.z[(i, s)] * res;
                for t in 0..r {
                    v_gram[(s, t)] += data.z[(i, s)] * wv * data.z[(i, t)];
                }
            }
        }
        let delta_g = Cholesky::new(&v_gram)?.solve(&rhs_g);
        for (g, d) in gamma.iter_mut().zip(&delta_g) {
            *g += d;
        }
    }
    Ok(ModelParams { beta, gamma, log_alpha: params.log_alpha })
}

fn fisher_scoring(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
    start: ModelParams,
) -> Result<FitResult, CoreError> {
    scoring_loop(data, kind, config, start, false)
}

fn irls_quasi(
    data: &ModelData<'_>,
    config: &FitConfig,
    start: ModelParams,
) -> Result<FitResult, CoreError> {
    scoring_loop(data, ModelKind::QuasiPoisson, config, start, true)
}

/// Shared safeguarded ascent on the (working) log-likelihood. The proposal
/// is either the joint Fisher solve or the alternating quasi-Poisson block
/// update; either way the step is halved until the loglik does not
/// decrease, and a singular proposal hands the current point to L-BFGS.
fn scoring_loop(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
    start: ModelParams,
    block_steps: bool,
) -> Result<FitResult, CoreError> {
    let (p, r) = (data.n_beta(), data.n_gamma());
    let mut params = start;
    let mut ev = data.loglik_grad(kind, &params)?;
    let mut converged = false;
    let mut n_iter = 0;
    let mut stalls = 0usize;
    while n_iter < config.max_iter {
        if sup_norm(&ev.grad) <= config.tol_grad {
            converged = true;
            break;
        }
        let base = params.to_vec();
        let proposal = if block_steps {
            quasi_poisson_irls_step(data, &params, 1.0).map(|q| {
                q.to_vec().iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<f64>>()
            })
        } else {
            let info = data.poisson_fisher(&ev.factors);
            Cholesky::new(&info).map(|ch| ch.solve(&ev.grad))
        };
        let delta = match proposal {
            Ok(d) => d,
            Err(CoreError::SingularInformation { .. }) => {
                // scoring cannot proceed; hand the current point to L-BFGS
                return lbfgs(data, kind, config, params, n_iter, true);
            }
            Err(e) => return Err(e),
        };
        n_iter += 1;
        let mut step = 1.0f64;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = base.clone();
            for (t, d) in trial.iter_mut().zip(&delta) {
                *t += step * d;
            }
            let cand = ModelParams::from_vec(kind, p, r, &trial)?;
            match data.loglik_grad(kind, &cand) {
                // non-strict: near the optimum real gains round to zero in
                // the loglik while the analytic gradient keeps full relative
                // precision, so flat steps still make progress; the stall
                // counter bounds how many are taken
                Ok(cand_ev) if cand_ev.loglik >= ev.loglik => {
                    accepted = Some((cand, cand_ev));
                    break;
                }
                Ok(_) | Err(CoreError::Overflow { .. }) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((cand, cand_ev)) => {
                let gain = cand_ev.loglik - ev.loglik;
                params = cand;
                ev = cand_ev;
                if gain <= config.tol_loglik {
                    stalls += 1;
                    if stalls >= STALL_LIMIT {
                        converged = sup_norm(&ev.grad) <= config.tol_grad;
                        break;
                    }
                } else {
                    stalls = 0;
                }
            }
            None => {
                // no uphill step along the proposed direction: the
                // likelihood is flat to machine precision here
                converged = sup_norm(&ev.grad) <= config.tol_grad;
                break;
            }
        }
    }
    if !converged && sup_norm(&ev.grad) <= config.tol_grad {
        converged = true;
    }
    finish(data, kind, params, ev, n_iter, converged, false)
}
/// Result of a generic L-BFGS minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub n_iter: usize,
    /// The gradient sup-norm fell below `tol_grad`.
    pub converged: bool,
}

/// A line-search trial point.
struct LinePoint {
    x: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    slope: f64,
}

fn line_eval<F>(objective: &mut F, base: &[f64], dir: &[f64], t: f64) -> Option<LinePoint>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let x: Vec<f64> = base.iter().zip(dir).map(|(b, d)| b + t * d).collect();
    let mut grad = vec![0.0; x.len()];
    let f = objective(&x, &mut grad);
    if !f.is_finite() {
        return None;
    }
    let slope = grad.iter().zip(dir).map(|(g, d)| g * d).sum::<f64>();
    Some(LinePoint { x, f, grad, slope })
}

/// Strong Wolfe line search (Nocedal–Wright alg. 3.5/3.6) for minimizing
/// along `dir`; `g0` is the directional derivative at 0 and must be < 0.
fn wolfe_search<F>(
    objective: &mut F,
    base: &[f64],
    dir: &[f64],
    f0: f64,
    g0: f64,
) -> Option<LinePoint>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    // approximate acceptance: once real gains fall below the objective's
    // own rounding noise, the strict sufficient-decrease test cannot be met
    // by any step; allow that much slack so the search keeps moving on
    // gradient information instead of failing outright
    let slack = 1e-12 * (1.0 + f0.abs());

    // bracketing phase: grow the trial step until the minimum is bracketed
    let mut t_prev = 0.0f64;
    let mut f_prev = f0;
    let mut prev: Option<LinePoint> = None;
    let mut t = 1.0f64;
    let mut bracket: Option<((f64, f64, Option<LinePoint>), f64)> = None;
    for it in 0..20 {
        match line_eval(objective, base, dir, t) {
            None => {
                // out of domain: the admissible region ends inside (t_prev, t)
                bracket = Some(((t_prev, f_prev, prev.take()), t));
                break;
            }
            Some(pt) => {
                if pt.f > f0 + C1 * t * g0 + slack || (it > 0 && pt.f >= f_prev - slack) {
                    bracket = Some(((t_prev, f_prev, prev.take()), t));
                    break;
                }
                if pt.slope.abs() <= -C2 * g0 {
                    return Some(pt);
                }
                if pt.slope > 0.0 {
                    let f_here = pt.f;
                    bracket = Some(((t, f_here, Some(pt)), t_prev));
                    break;
                }
                t_prev = t;
                f_prev = pt.f;
                prev = Some(pt);
                t *= 2.5;
            }
        }
    }
    let (mut lo, mut hi) = match bracket {
        Some(b) => b,
        // never bracketed: settle for the last sufficient-decrease point
        None => return prev.filter(|p| p.f < f0 + slack),
    };

    // zoom phase: bisect the bracket. The curvature test comes first: when
    // every candidate's gain is within `slack` of zero, the comparison
    // against `lo` can no longer order the points, but a flat slope still
    // marks the minimizer.
    for _ in 0..30 {
        let t_mid = 0.5 * (lo.0 + hi);
        match line_eval(objective, base, dir, t_mid) {
            None => hi = t_mid,
            Some(pt) => {
                let armijo = pt.f <= f0 + C1 * t_mid * g0 + slack;
                if armijo && pt.slope.abs() <= -C2 * g0 {
                    return Some(pt);
                }
                if !armijo || pt.f >= lo.1 - slack {
                    hi = t_mid;
                } else {
                    if pt.slope * (hi - lo.0) >= 0.0 {
                        hi = lo.0;
                    }
                    let f_here = pt.f;
                    lo = (t_mid, f_here, Some(pt));
                }
            }
        }
    }
    lo.2.filter(|p| p.f < f0 + slack)
}

/// Limited-memory BFGS minimization with a strong Wolfe line search.
///
/// `objective` writes the gradient into its second argument and returns the
/// value; a non-finite return marks the point as out of the domain and the
/// line search backs away from it. On a direction gone uphill or a failed
/// search the memory is dropped and the iteration restarts from steepest
/// descent once before giving up. `converged` reports the gradient
/// criterion only; a long run of sub-`tol_loglik` gains stops the search
/// early (see the module notes on flat-gain acceptance).
pub fn lbfgs_minimize<F>(mut objective: F, x0: &[f64], config: &FitConfig) -> MinimizeResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut f = objective(&x, &mut grad);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut restarted = false;
    let mut converged = false;
    let mut n_iter = 0;
    let mut stalls = 0usize;
    while n_iter < config.max_iter && f.is_finite() {
        if sup_norm(&grad) <= config.tol_grad {
            converged = true;
            break;
        }
        // two-loop recursion for the search direction −H·∇f
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho =
                1.0 / s_hist[i].iter().zip(&y_hist[i]).map(|(s, y)| s * y).sum::<f64>();
            let a = rho * s_hist[i].iter().zip(&dir).map(|(s, d)| s * d).sum::<f64>();
            alphas[i] = a;
            for (d, y) in dir.iter_mut().zip(&y_hist[i]) {
                *d -= a * y;
            }
        }
        if k > 0 {
            let sy: f64 =
                s_hist[k - 1].iter().zip(&y_hist[k - 1]).map(|(s, y)| s * y).sum();
            let yy: f64 = y_hist[k - 1].iter().map(|y| y * y).sum();
            let scale = sy / yy;
            for d in dir.iter_mut() {
                *d *= scale;
            }
        }
        for i in 0..k {
            let rho =
                1.0 / s_hist[i].iter().zip(&y_hist[i]).map(|(s, y)| s * y).sum::<f64>();
            let b = rho * y_hist[i].iter().zip(&dir).map(|(y, d)| y * d).sum::<f64>();
            for (d, s) in dir.iter_mut().zip(&s_hist[i]) {
                *d += (alphas[i] - b) * s;
            }
        }
        let g0: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(g0 < 0.0) {
            // stale curvature turned the direction uphill: restart clean
            if restarted {
                break;
            }
            restarted = true;
            s_hist.clear();
            y_hist.clear();
            continue;
        }
        n_iter += 1;
        match wolfe_search(&mut objective, &x, &dir, f, g0) {
            Some(pt) => {
                let gain = f - pt.f;
                let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> =
                    pt.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum::<f64>();
                let yy: f64 = y.iter().map(|a| a * a).sum::<f64>();
                // keep only pairs with meaningful positive curvature
                if sy > 1e-10 * crate::math::sqrt(ss * yy) {
                    if s_hist.len() == config.lbfgs_memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                }
                x = pt.x;
                f = pt.f;
                grad = pt.grad;
                if gain.abs() <= config.tol_loglik {
                    stalls += 1;
                    if stalls >= STALL_LIMIT {
                        converged = sup_norm(&grad) <= config.tol_grad;
                        break;
                    }
                } else {
                    stalls = 0;
                }
            }
            None => {
                if restarted {
                    break;
                }
                // one steepest-descent restart before giving up
                restarted = true;
                s_hist.clear();
                y_hist.clear();
            }
        }
    }
    if !converged && sup_norm(&grad) <= config.tol_grad {
        converged = true;
    }
    MinimizeResult { x, f, grad, n_iter, converged }
}

/// Model fitting through the generic minimizer: maximize the loglik by
/// minimizing its negation, treating overflow as out-of-domain.
fn lbfgs(
    data: &ModelData<'_>,
    kind: ModelKind,
    config: &FitConfig,
    start: ModelParams,
    iter_offset: usize,
    fallback_used: bool,
) -> Result<FitResult, CoreError> {
    let (p, r) = (data.n_beta(), data.n_gamma());
    let x0 = start.to_vec();
    let budget =
        FitConfig { max_iter: config.max_iter.saturating_sub(iter_offset), ..config.clone() };
    let mut hard_err: Option<CoreError> = None;
    let out = lbfgs_minimize(
        |v, g| {
            if hard_err.is_some() {
                return f64::INFINITY;
            }
            let params = match ModelParams::from_vec(kind, p, r, v) {
                Ok(q) => q,
                Err(e) => {
                    hard_err = Some(e);
                    return f64::INFINITY;
                }
            };
            match data.loglik_grad(kind, &params) {
                Ok(ev) => {
                    for (gi, gv) in g.iter_mut().zip(&ev.grad) {
                        *gi = -gv;
                    }
                    -ev.loglik
                }
                Err(CoreError::Overflow { .. }) => f64::INFINITY,
                Err(e) => {
                    hard_err = Some(e);
                    f64::INFINITY
                }
            }
        },
        &x0,
        &budget,
    );
    if let Some(e) = hard_err {
        return Err(e);
    }
    let params = ModelParams::from_vec(kind, p, r, &out.x)?;
    let ev = data.loglik_grad(kind, &params)?;
    finish(data, kind, params, ev, iter_offset + out.n_iter, out.converged, fallback_used)
}

/// Observed information −∂²ℓ/∂θ∂θᵀ via central differences of the analytic
/// gradient, symmetrized. `rel_step` scales with each coordinate's size.
pub fn numeric_observed_info(
    data: &ModelData<'_>,
    kind: ModelKind,
    params: &ModelParams,
    rel_step: f64,
) -> Result<DMat, CoreError> {
    let (p, r) = (data.n_beta(), data.n_gamma());
    let v = params.to_vec();
    let n = v.len();
    let mut h = DMat::zeros(n, n);
    for d in 0..n {
        let step = rel_step * crate::math::abs(v[d]).max(1.0);
        let mut hi = v.clone();
        let mut lo = v.clone();
        hi[d] += step;
        lo[d] -= step;
        let g_hi = data.loglik_grad(kind, &ModelParams::from_vec(kind, p, r, &hi)?)?.grad;
        let g_lo = data.loglik_grad(kind, &ModelParams::from_vec(kind, p, r, &lo)?)?.grad;
        for a in 0..n {
            h[(a, d)] = (g_hi[a] - g_lo[a]) / (2.0 * step);
        }
    }
    // observed info is the negated, symmetrized Hessian
    let mut info = DMat::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            info[(a, b)] = -0.5 * (h[(a, b)] + h[(b, a)]);
        }
    }
    Ok(info)
}
