//! The count models on the factorized intensity μ_ij = μˣ_j · μᶻ_i.
//!
//! All four families share the intensity factorization: a spatial factor
//! μˣ = exp(Xβ) over voxels and a study factor μᶻ = exp(Zγ) over studies
//! (μᶻ ≡ 1 without moderators). They differ in what they treat as random:
//!
//! * `Poisson` — independent cell counts; the likelihood collapses onto the
//!   margins (Y·j, Yi·) and the factor sums, so no M × N matrix is formed.
//! * `QuasiPoisson` — same mean structure and score equations; a Pearson
//!   dispersion scales the covariance afterwards.
//! * `NegBinomial` — voxel sums Y·j get a negative-binomial law matched to
//!   the first two moments of the aggregated model: E = μˣ_j S₁ᶻ,
//!   Var = E + α μˣ_j² S₂ᶻ. This is an approximation (only two moments are
//!   matched); its α → 0 limit is the Poisson law of the voxel sums.
//! * `ClusteredNegBinomial` — an exact gamma frailty per study: y_ij | g_i ~
//!   Poisson(g_i μ_ij), g_i ~ Gamma(1/α, 1/α). Marginalizing gives a
//!   closed-form study-sum likelihood whose α → 0 limit is exactly the
//!   factorized Poisson model.
//!
//! Gradients are analytic; log-gamma and digamma differences at integer
//! offsets go through the stable ratio forms in `special`.

use alloc::vec;
use alloc::vec::Vec;

use crate::counts::CountData;
use crate::error::{invalid, CoreError};
use crate::linalg::DMat;
use crate::math as m;
use crate::sparse::CsrMatrix;
use crate::special;

/// Linear predictors below this are clamped (and counted) instead of
/// underflowing the intensity to zero.
pub const ETA_CLAMP_MIN: f64 = -30.0;
/// Linear predictors above this abort the evaluation: exp would overflow.
pub const ETA_OVERFLOW: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Poisson,
    QuasiPoisson,
    NegBinomial,
    ClusteredNegBinomial,
}

impl ModelKind {
    pub fn has_dispersion(self) -> bool {
        matches!(self, ModelKind::NegBinomial | ModelKind::ClusteredNegBinomial)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::QuasiPoisson => "quasi_poisson",
            ModelKind::NegBinomial => "negative_binomial",
            ModelKind::ClusteredNegBinomial => "clustered_negative_binomial",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "poisson" => Some(ModelKind::Poisson),
            "quasi_poisson" | "quasipoisson" => Some(ModelKind::QuasiPoisson),
            "negative_binomial" | "nb" => Some(ModelKind::NegBinomial),
            "clustered_negative_binomial" | "clustered_nb" => {
                Some(ModelKind::ClusteredNegBinomial)
            }
            _ => None,
        }
    }

    /// Number of free likelihood parameters (the quasi-Poisson dispersion is
    /// a moment estimate, not a likelihood parameter).
    pub fn n_params(self, n_beta: usize, n_gamma: usize) -> usize {
        n_beta + n_gamma + usize::from(self.has_dispersion())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// ln α for the two negative-binomial families, None otherwise.
    pub log_alpha: Option<f64>,
}

impl ModelParams {
    /// Default start: a flat spatial field matching the observed total
    /// (exact because design rows sum to one), no study effects, α = 0.01.
    pub fn init(
        kind: ModelKind,
        n_beta: usize,
        n_gamma: usize,
        counts: &CountData,
    ) -> Result<Self, CoreError> {
        if counts.total <= 0.0 {
            return Err(invalid("no foci: nothing to fit"));
        }
        let level = m::ln(counts.total / (counts.n_studies as f64 * counts.n_voxels as f64));
        Ok(ModelParams {
            beta: vec![level; n_beta],
            gamma: vec![0.0; n_gamma],
            log_alpha: kind.has_dispersion().then(|| m::ln(0.01)),
        })
    }

    pub fn alpha(&self) -> Option<f64> {
        self.log_alpha.map(m::exp)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + self.gamma.len() + 1);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.gamma);
        if let Some(la) = self.log_alpha {
            v.push(la);
        }
        v
    }

    pub fn from_vec(
        kind: ModelKind,
        n_beta: usize,
        n_gamma: usize,
        v: &[f64],
    ) -> Result<Self, CoreError> {
        if v.len() != kind.n_params(n_beta, n_gamma) {
            return Err(invalid(alloc::format!(
                "parameter vector has {} entries, model needs {}",
                v.len(),
                kind.n_params(n_beta, n_gamma)
            )));
        }
        Ok(ModelParams {
            beta: v[..n_beta].to_vec(),
            gamma: v[n_beta..n_beta + n_gamma].to_vec(),
            log_alpha: kind.has_dispersion().then(|| v[n_beta + n_gamma]),
        })
    }
}

/// Everything derived from the linear predictors that the likelihoods share.
#[derive(Debug, Clone)]
pub struct Factors {
    /// ln μˣ per voxel (after clamping).
    pub eta_x: Vec<f64>,
    pub mu_x: Vec<f64>,
    /// ln μᶻ per study (after clamping).
    pub eta_z: Vec<f64>,
    pub mu_z: Vec<f64>,
    /// Σ_j μˣ_j
    pub s1x: f64,
    /// Σ_i μᶻ_i
    pub s1z: f64,
    /// Σ_i (μᶻ_i)²
    pub s2z: f64,
    /// Linear predictors clamped at the lower bound in this evaluation.
    pub n_clamped: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loglik: f64,
    /// Layout: [β…, γ…, (ln α)].
    pub grad: Vec<f64>,
    pub factors: Factors,
}

/// Borrowed view tying a design, a moderator matrix and the counts together.
#[derive(Clone, Copy)]
pub struct ModelData<'a> {
    pub x: &'a CsrMatrix,
    pub z: &'a DMat,
    pub counts: &'a CountData,
}

impl<'a> ModelData<'a> {
    pub fn new(x: &'a CsrMatrix, z: &'a DMat, counts: &'a CountData) -> Result<Self, CoreError> {
        if x.n_rows != counts.n_voxels {
            return Err(invalid(alloc::format!(
                "design has {} rows but counts cover {} voxels",
                x.n_rows,
                counts.n_voxels
            )));
        }
        if z.n_rows != counts.n_studies {
            return Err(invalid(alloc::format!(
                "moderator matrix has {} rows but counts cover {} studies",
                z.n_rows,
                counts.n_studies
            )));
        }
        Ok(ModelData { x, z, counts })
    }

    pub fn n_beta(&self) -> usize {
        self.x.n_cols
    }

    pub fn n_gamma(&self) -> usize {
        self.z.n_cols
    }

    fn check_params(&self, params: &ModelParams) -> Result<(), CoreError> {
        if params.beta.len() != self.n_beta() || params.gamma.len() != self.n_gamma() {
            return Err(invalid(alloc::format!(
                "parameter shape ({}, {}) does not match data ({}, {})",
                params.beta.len(),
                params.gamma.len(),
                self.n_beta(),
                self.n_gamma()
            )));
        }
        Ok(())
    }

    pub fn factors(&self, params: &ModelParams) -> Result<Factors, CoreError> {
        self.check_params(params)?;
        let mut n_clamped = 0usize;
        let mut clamp_exp = |eta: f64| -> Result<(f64, f64), CoreError> {
            if !eta.is_finite() || eta > ETA_OVERFLOW {
                return Err(CoreError::Overflow { linear_predictor: eta });
            }
            if eta < ETA_CLAMP_MIN {
                n_clamped += 1;
                Ok((ETA_CLAMP_MIN, m::exp(ETA_CLAMP_MIN)))
            } else {
                Ok((eta, m::exp(eta)))
            }
        };
        let n = self.x.n_rows;
        let mut eta_x = self.x.matvec(&params.beta);
        let mut mu_x = vec![0.0; n];
        let mut s1x = 0.0;
        for j in 0..n {
            let (e, mu) = clamp_exp(eta_x[j])?;
            eta_x[j] = e;
            mu_x[j] = mu;
            s1x += mu;
        }
        let m_st = self.z.n_rows;
        let mut eta_z = vec![0.0; m_st];
        for i in 0..m_st {
            let mut acc = 0.0;
            for (s, &g) in params.gamma.iter().enumerate() {
                acc += self.z[(i, s)] * g;
            }
            eta_z[i] = acc;
        }
        let mut mu_z = vec![0.0; m_st];
        let mut s1z = 0.0;
        let mut s2z = 0.0;
        for i in 0..m_st {
            let (e, mu) = clamp_exp(eta_z[i])?;
            eta_z[i] = e;
            mu_z[i] = mu;
            s1z += mu;
            s2z += mu * mu;
        }
        Ok(Factors { eta_x, mu_x, eta_z, mu_z, s1x, s1z, s2z, n_clamped })
    }

    pub fn loglik_grad(
        &self,
        kind: ModelKind,
        params: &ModelParams,
    ) -> Result<Evaluation, CoreError> {
        if kind.has_dispersion() != params.log_alpha.is_some() {
            return Err(invalid("dispersion parameter does not match model family"));
        }
        let f = self.factors(params)?;
        match kind {
            ModelKind::Poisson | ModelKind::QuasiPoisson => Ok(self.poisson_eval(f)),
            ModelKind::NegBinomial => {
                Ok(self.neg_binomial_eval(f, params.log_alpha.expect("checked")))
            }
            ModelKind::ClusteredNegBinomial => {
                Ok(self.clustered_eval(f, params.log_alpha.expect("checked")))
            }
        }
    }

    pub fn loglik(&self, kind: ModelKind, params: &ModelParams) -> Result<f64, CoreError> {
        Ok(self.loglik_grad(kind, params)?.loglik)
    }

    fn poisson_eval(&self, f: Factors) -> Evaluation {
        let c = self.counts;
        let mut loglik = -f.s1x * f.s1z - c.ln_y_factorial_sum;
        for j in 0..c.n_voxels {
            if c.y_per_voxel[j] != 0.0 {
                loglik += c.y_per_voxel[j] * f.eta_x[j];
            }
        }
        for i in 0..c.n_studies {
            loglik += c.y_per_study[i] * f.eta_z[i];
        }
        let mut resid_v = vec![0.0; c.n_voxels];
        for j in 0..c.n_voxels {
            resid_v[j] = c.y_per_voxel[j] - f.s1z * f.mu_x[j];
        }
        let mut grad = self.x.t_matvec(&resid_v);
        for s in 0..self.n_gamma() {
            let mut acc = 0.0;
            for i in 0..c.n_studies {
                acc += self.z[(i, s)] * (c.y_per_study[i] - f.s1x * f.mu_z[i]);
            }
            grad.push(acc);
        }
        Evaluation { loglik, grad, factors: f }
    }

    fn neg_binomial_eval(&self, f: Factors, log_alpha: f64) -> Evaluation {
        let c = self.counts;
        let alpha = m::exp(log_alpha);
        let (s1, s2) = (f.s1z, f.s2z);
        let r = s1 * s1 / (alpha * s2);
        let scale = alpha * s2 / s1;
        let mut loglik = 0.0;
        let mut t1 = 0.0; // Σ_j ψ(r + Y·j) − ψ(r) + ln(1 − p_j)
        let mut t2 = 0.0; // Σ_j w_j
        let mut w = vec![0.0; c.n_voxels];
        for j in 0..c.n_voxels {
            let y = c.y_per_voxel[j];
            let q = scale * f.mu_x[j]; // odds: p_j / (1 − p_j)
            let ln_1m_p = -m::ln_1p(q);
            let mean = s1 * f.mu_x[j]; // r·q: Poisson mean of the voxel sum
            let wj = (y - mean) / (1.0 + q);
            w[j] = wj;
            t2 += wj;
            loglik += r * ln_1m_p;
            let yi = integer_count(y);
            t1 += ln_1m_p;
            if yi > 0 {
                loglik += special::ln_gamma_ratio(r, yi) - special::ln_gamma(y + 1.0)
                    + y * (m::ln(q) + ln_1m_p);
                t1 += special::digamma_ratio(r, yi);
            }
        }
        let mut grad = self.x.t_matvec(&w);
        // A_s = ∂S₁/∂γ_s, B_s = ∂S₂/∂γ_s
        for s in 0..self.n_gamma() {
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..c.n_studies {
                let zm = self.z[(i, s)] * f.mu_z[i];
                a += zm;
                b += 2.0 * zm * f.mu_z[i];
            }
            grad.push(r * t1 * (2.0 * a / s1 - b / s2) + t2 * (b / s2 - a / s1));
        }
        grad.push(-r * t1 + t2);
        Evaluation { loglik, grad, factors: f }
    }

    fn clustered_eval(&self, f: Factors, log_alpha: f64) -> Evaluation {
        let c = self.counts;
        let alpha = m::exp(log_alpha);
        let v = 1.0 / alpha;
        let mut loglik = -c.ln_y_factorial_sum;
        for j in 0..c.n_voxels {
            if c.y_per_voxel[j] != 0.0 {
                loglik += c.y_per_voxel[j] * f.eta_x[j];
            }
        }
        let mut c1 = 0.0; // Σ_i c_i μᶻ_i
        let mut g_la_sum = 0.0;
        let mut study_resid = vec![0.0; c.n_studies];
        for i in 0..c.n_studies {
            let y = c.y_per_study[i];
            let mu_i = f.s1x * f.mu_z[i];
            let a_i = alpha * mu_i;
            let ln1p_a = m::ln_1p(a_i);
            let yi = integer_count(y);
            loglik += y * f.eta_z[i] - v * ln1p_a;
            let mut gpsi = 0.0;
            if yi > 0 {
                loglik += special::ln_gamma_ratio(v, yi) - y * m::ln(v + mu_i);
                gpsi = special::digamma_ratio(v, yi);
            }
            let c_i = (y + v) / (v + mu_i);
            c1 += c_i * f.mu_z[i];
            g_la_sum += gpsi - ln1p_a + 1.0 - c_i;
            study_resid[i] = y - f.s1x * c_i * f.mu_z[i];
        }
        let mut resid_v = vec![0.0; c.n_voxels];
        for j in 0..c.n_voxels {
            resid_v[j] = c.y_per_voxel[j] - c1 * f.mu_x[j];
        }
        let mut grad = self.x.t_matvec(&resid_v);
        for s in 0..self.n_gamma() {
            let mut acc = 0.0;
            for i in 0..c.n_studies {
                acc += self.z[(i, s)] * study_resid[i];
            }
            grad.push(acc);
        }
        grad.push(-v * g_la_sum);
        Evaluation { loglik, grad, factors: f }
    }

    /// Expected information of the factorized Poisson model, order [β…, γ…].
    /// Cell-level derivation collapses to the factor sums:
    /// I_ββ = S₁ᶻ Xᵀdiag(μˣ)X, I_βγ = (Xᵀμˣ)(Zᵀμᶻ)ᵀ, I_γγ = S₁ˣ Zᵀdiag(μᶻ)Z.
    pub fn poisson_fisher(&self, f: &Factors) -> DMat {
        let p = self.n_beta();
        let r = self.n_gamma();
        let mut info = DMat::zeros(p + r, p + r);
        let gram = self.x.weighted_gram(&f.mu_x);
        for a in 0..p {
            for b in 0..p {
                info[(a, b)] = f.s1z * gram[(a, b)];
            }
        }
        if r > 0 {
            let xt_mu = self.x.t_matvec(&f.mu_x);
            let mut zt_mu = vec![0.0; r];
            for s in 0..r {
                for i in 0..self.z.n_rows {
                    zt_mu[s] += self.z[(i, s)] * f.mu_z[i];
                }
            }
            for a in 0..p {
                for s in 0..r {
                    let val = xt_mu[a] * zt_mu[s];
                    info[(a, p + s)] = val;
                    info[(p + s, a)] = val;
                }
            }
            for s in 0..r {
                for t in 0..r {
                    let mut acc = 0.0;
                    for i in 0..self.z.n_rows {
                        acc += self.z[(i, s)] * self.z[(i, t)] * f.mu_z[i];
                    }
                    info[(p + s, p + t)] = f.s1x * acc;
                }
            }
        }
        info
    }

    /// Poisson log-likelihood of the voxel sums Y·j with means μˣ_j S₁ᶻ:
    /// the α → 0 member of the moment-matched negative-binomial family, and
    /// the null value for tests against it. At the factorized Poisson ML the
    /// score of this reduced likelihood is also zero.
    pub fn voxel_sum_poisson_loglik(&self, f: &Factors) -> f64 {
        let c = self.counts;
        let ln_s1z = m::ln(f.s1z);
        let mut loglik = -f.s1x * f.s1z;
        for j in 0..c.n_voxels {
            let y = c.y_per_voxel[j];
            if y != 0.0 {
                loglik += y * (f.eta_x[j] + ln_s1z) - special::ln_gamma(y + 1.0);
            }
        }
        loglik
    }

    /// Pearson dispersion of the voxel sums around the fitted means:
    /// X² = Σ_j (Y·j − m_j)²/m_j, θ̂ = X²/(N − n_params). Returns
    /// (θ̂, X², dof).
    pub fn pearson_dispersion(&self, f: &Factors) -> Result<(f64, f64, usize), CoreError> {
        let c = self.counts;
        let n_par = self.n_beta() + self.n_gamma();
        if c.n_voxels <= n_par {
            return Err(invalid(alloc::format!(
                "dispersion needs more voxels ({}) than parameters ({n_par})",
                c.n_voxels
            )));
        }
        let mut x2 = 0.0;
        for j in 0..c.n_voxels {
            let mj = f.s1z * f.mu_x[j];
            let d = c.y_per_voxel[j] - mj;
            x2 += d * d / mj;
        }
        let dof = c.n_voxels - n_par;
        Ok((x2 / dof as f64, x2, dof))
    }

    fn check_expanded_size(&self) -> Result<(), CoreError> {
        let cells = self.counts.n_studies * self.counts.n_voxels;
        if cells > 10_000 {
            return Err(invalid(alloc::format!(
                "expanded evaluation is a small-instance cross-check; {cells} cells is too many"
            )));
        }
        Ok(())
    }

    /// Literal cell-by-cell Poisson log-likelihoood: Σ_ij y_ij ln μ_ij − μ_ij
    /// − ln(y_ij!). O(M·N) — a cross-check path for small problems, kept
    /// deliberately naive so it shares nothing with the factorized route.
    pub fn expanded_poisson_loglik(&self, params: &ModelParams) -> Result<f64, CoreError> {
        self.check_expanded_size()?;
        let f = self.factors(params)?;
        let c = self.counts;
        let mut loglik = 0.0;
        let mut y_row = vec![0.0f64; c.n_voxels];
        for i in 0..c.n_studies {
            for &rank in c.study_ranks(i) {
                y_row[rank as usize] += 1.0;
            }
            for j in 0..c.n_voxels {
                let mu_ij = f.mu_z[i] * f.mu_x[j];
                let y = y_row[j];
                loglik += y * m::ln(mu_ij) - mu_ij;
                if y > 1.0 {
                    loglik -= special::ln_gamma(y + 1.0);
                }
            }
            for &rank in c.study_ranks(i) {
                y_row[rank as usize] = 0.0;
            }
        }
        Ok(loglik)
    }

    /// Study-by-study joint log-likelihood of the clustered model, written
    /// straight from the gamma-mixture integral: with ν = 1/α and row totals
    /// y_i· and μ_i·,
    /// l_i = ν ln ν − lnΓ(ν) + lnΓ(ν + y_i·) − (ν + y_i·) ln(ν + μ_i·)
    ///       + Σ_j (y_ij ln μ_ij − lnΓ(y_ij + 1)).
    /// The factorized form must reproduce this exactly; keeping this route
    /// naive and cell-wise makes it an independent cross-check.
    pub fn expanded_clustered_loglik(&self, params: &ModelParams) -> Result<f64, CoreError> {
        self.check_expanded_size()?;
        let log_alpha = params
            .log_alpha
            .ok_or_else(|| invalid("the clustered model needs a dispersion parameter"))?;
        let nu = m::exp(-log_alpha);
        let f = self.factors(params)?;
        let c = self.counts;
        let mut loglik = 0.0;
        let mut y_row = vec![0.0f64; c.n_voxels];
        for i in 0..c.n_studies {
            for &rank in c.study_ranks(i) {
                y_row[rank as usize] += 1.0;
            }
            let mut y_tot = 0.0;
            let mut mu_tot = 0.0;
            let mut cell_terms = 0.0;
            for j in 0..c.n_voxels {
                let mu_ij = f.mu_z[i] * f.mu_x[j];
                mu_tot += mu_ij;
                let y = y_row[j];
                if y > 0.0 {
                    y_tot += y;
                    cell_terms += y * m::ln(mu_ij) - special::ln_gamma(y + 1.0);
                }
            }
            loglik += nu * m::ln(nu) - special::ln_gamma(nu) + special::ln_gamma(nu + y_tot)
                - (nu + y_tot) * m::ln(nu + mu_tot)
                + cell_terms;
            for &rank in c.study_ranks(i) {
                y_row[rank as usize] = 0.0;
            }
        }
        Ok(loglik)
    }

    /// Within-study covariance the shared frailty induces between two voxel
    /// counts: C(Y_ij, Y_ij′) = α μ_ij μ_ij′ for j ≠ j′ (zero across
    /// studies). The j = j′ case is the variance μ_ij + α μ_ij² and is
    /// rejected here so callers don't silently get the wrong quantity.
    pub fn clustered_pair_covariance(
        &self,
        params: &ModelParams,
        study: usize,
        voxel_a: usize,
        voxel_b: usize,
    ) -> Result<f64, CoreError> {
        if voxel_a == voxel_b {
            return Err(invalid("same voxel twice: that is the variance mu + alpha*mu^2, not a covariance"));
        }
        let n = self.counts.n_voxels;
        if study >= self.counts.n_studies || voxel_a >= n || voxel_b >= n {
            return Err(invalid(alloc::format!(
                "covariance index (study {study}, voxels {voxel_a}/{voxel_b}) out of range"
            )));
        }
        let alpha = params
            .alpha()
            .ok_or_else(|| invalid("the clustered model needs a dispersion parameter"))?;
        let f = self.factors(params)?;
        let mu_a = f.mu_z[study] * f.mu_x[voxel_a];
        let mu_b = f.mu_z[study] * f.mu_x[voxel_b];
        Ok(alpha * mu_a * mu_b)
    }
}

#[inline]
fn integer_count(y: f64) -> u64 {
    debug_assert!(y >= 0.0 && y == m::floor(y), "counts must be nonnegative integers: {y}");
    y as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrBuilder;

    /// M = 3 studies, N = 4 voxels, P = 2, R = 1; y binary.
    fn tiny() -> (CsrMatrix, DMat, CountData) {
        let rows: [&[(u32, f64)]; 4] =
            [&[(0, 0.7), (1, 0.3)], &[(0, 0.2), (1, 0.8)], &[(0, 0.5), (1, 0.5)], &[(0, 1.0)]];
        let mut b = CsrBuilder::new(2);
        for row in rows {
            b.push_row(row.iter().copied());
        }
        let x = b.finish();
        let z = DMat::from_rows(&[&[0.5], &[-0.25], &[-0.25]]);
        // y = [[1,0,0,1],[0,1,0,0],[1,1,0,0]]
        let counts =
            CountData::from_study_ranks(4, &[vec![0u32, 3], vec![1], vec![0, 1]], true);
        (x, z, counts)
    }

    fn tiny_params(alpha: Option<f64>) -> ModelParams {
        ModelParams {
            beta: vec![0.2, -0.4],
            gamma: vec![0.3],
            log_alpha: alpha.map(m::ln),
        }
    }

    #[test]
    fn poisson_loglik_matches_expanded_and_pinned_value() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = tiny_params(None);
        let ev = data.loglik_grad(ModelKind::Poisson, &params).unwrap();
        assert!((ev.loglik - -12.019267057206388).abs() < 1e-12);
        let expanded = data.expanded_poisson_loglik(&params).unwrap();
        assert!((ev.loglik - expanded).abs() < 1e-12);
        // quasi-Poisson shares the likelihood and score
        let qp = data.loglik_grad(ModelKind::QuasiPoisson, &params).unwrap();
        assert_eq!(qp.loglik, ev.loglik);
        assert_eq!(qp.grad, ev.grad);
    }

    #[test]
    fn neg_binomial_loglik_matches_pinned_value() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let ev = data.loglik_grad(ModelKind::NegBinomial, &tiny_params(Some(0.7))).unwrap();
        assert!((ev.loglik - -7.2371508344452842).abs() < 1e-12, "got {}", ev.loglik);
    }

    #[test]
    fn clustered_loglik_matches_pinned_value() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let ev =
            data.loglik_grad(ModelKind::ClusteredNegBinomial, &tiny_params(Some(0.7))).unwrap();
        assert!((ev.loglik - -11.476969827745378).abs() < 1e-12, "got {}", ev.loglik);
    }

    #[test]
    fn clustered_loglik_hand_value() {
        // One study, two voxels, y = [1, 0], μˣ = [1, 1], no moderators,
        // α = 1: l = ln Γ(2) − ln 3 − ln 3 = −2 ln 3.
        let mut b = CsrBuilder::new(2);
        b.push_row([(0u32, 1.0)].into_iter());
        b.push_row([(1u32, 1.0)].into_iter());
        let x = b.finish();
        let z = DMat::zeros(1, 0);
        let counts = CountData::from_study_ranks(2, &[vec![0u32]], true);
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = ModelParams { beta: vec![0.0, 0.0], gamma: vec![], log_alpha: Some(0.0) };
        let l = data.loglik(ModelKind::ClusteredNegBinomial, &params).unwrap();
        assert!((l - (-2.0 * m::ln(3.0))).abs() < 1e-14);
        assert!((l - -2.1972245773362196).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        for (kind, alpha) in [
            (ModelKind::Poisson, None),
            (ModelKind::NegBinomial, Some(0.7)),
            (ModelKind::ClusteredNegBinomial, Some(0.7)),
        ] {
            let params = tiny_params(alpha);
            let ev = data.loglik_grad(kind, &params).unwrap();
            let v = params.to_vec();
            let h = 1e-6;
            for d in 0..v.len() {
                let mut hi = v.clone();
                let mut lo = v.clone();
                hi[d] += h;
                lo[d] -= h;
                let lh = data
                    .loglik(kind, &ModelParams::from_vec(kind, 2, 1, &hi).unwrap())
                    .unwrap();
                let ll = data
                    .loglik(kind, &ModelParams::from_vec(kind, 2, 1, &lo).unwrap())
                    .unwrap();
                let fd = (lh - ll) / (2.0 * h);
                let scale = 1.0f64.max(m::abs(ev.grad[d]));
                assert!(
                    m::abs(fd - ev.grad[d]) / scale < 1e-6,
                    "{}: coord {d}: analytic {} vs fd {fd}",
                    kind.name(),
                    ev.grad[d]
                );
            }
        }
    }

    #[test]
    fn poisson_fisher_matches_expanded_cell_sum() {
        // Σ_ij μ_ij u uᵀ with u = [x_j, z_i], computed independently.
        let pinned = [
            [5.9674832540404203, 1.6938548361703825, 0.29719216161452716],
            [1.6938548361703825, 2.419074130825202, 0.15954526949153197],
            [0.29719216161452716, 0.15954526949153197, 1.5859677399273131],
        ];
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let f = data.factors(&tiny_params(None)).unwrap();
        let info = data.poisson_fisher(&f);
        for a in 0..3 {
            for b in 0..3 {
                assert!(
                    (info[(a, b)] - pinned[a][b]).abs() < 1e-12,
                    "({a},{b}): {} vs {}",
                    info[(a, b)],
                    pinned[a][b]
                );
            }
        }
    }

    #[test]
    fn both_dispersion_families_reach_poisson_at_tiny_alpha() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = tiny_params(Some(m::exp(-30.0)));
        let f = data.factors(&params).unwrap();

        let nb = data.loglik(ModelKind::NegBinomial, &params).unwrap();
        let sum_pois = data.voxel_sum_poisson_loglik(&f);
        assert!((nb - sum_pois).abs() < 1e-8, "nb {nb} vs voxel-sum poisson {sum_pois}");

        let cnb = data.loglik(ModelKind::ClusteredNegBinomial, &params).unwrap();
        let pois = data.loglik(ModelKind::Poisson, &tiny_params(None)).unwrap();
        assert!((cnb - pois).abs() < 1e-8, "cnb {cnb} vs poisson {pois}");
    }

    #[test]
    fn per_cell_negative_binomial_differs_from_matched_form() {
        // The matched family models voxel sums; it is NOT the per-cell NB
        // likelihood. Pinning both values documents the approximation.
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = tiny_params(Some(0.7));
        let matched = data.loglik(ModelKind::NegBinomial, &params).unwrap();
        let f = data.factors(&params).unwrap();
        let (r0, mut per_cell) = (1.0 / 0.7, 0.0);
        for i in 0..counts.n_studies {
            let mut y_row = vec![0.0; counts.n_voxels];
            for &rank in counts.study_ranks(i) {
                y_row[rank as usize] += 1.0;
            }
            for j in 0..counts.n_voxels {
                let mu = f.mu_z[i] * f.mu_x[j];
                let p0 = mu / (mu + r0);
                let y = y_row[j];
                per_cell += special::ln_gamma(y + r0) - special::ln_gamma(r0)
                    - special::ln_gamma(y + 1.0)
                    + r0 * m::ln_1p(-p0)
                    + y * m::ln(p0);
            }
        }
        assert!((per_cell - -11.749475850606181).abs() < 1e-12);
        assert!((matched - per_cell).abs() > 1.0);
    }

    #[test]
    fn expanded_clustered_route_agrees_with_the_factorized_one() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = tiny_params(Some(0.7));
        let fac = data.loglik(ModelKind::ClusteredNegBinomial, &params).unwrap();
        let exp = data.expanded_clustered_loglik(&params).unwrap();
        assert!((fac - exp).abs() < 1e-10, "{fac} vs {exp}");
    }

    #[test]
    fn expanded_routes_refuse_large_instances() {
        let mut b = CsrBuilder::new(1);
        for _ in 0..101 {
            b.push_row([(0u32, 1.0)].into_iter());
        }
        let x = b.finish();
        let z = DMat::zeros(101, 0);
        let counts = CountData::from_study_ranks(101, &vec![vec![]; 101], false);
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = ModelParams { beta: vec![0.0], gamma: vec![], log_alpha: None };
        assert!(data.expanded_poisson_loglik(&params).is_err());
    }

    #[test]
    fn pair_covariance_formula_and_guards() {
        let mut b = CsrBuilder::new(1);
        b.push_row([(0u32, 1.0)].into_iter());
        b.push_row([(0u32, 1.0)].into_iter());
        let x = b.finish();
        let z = DMat::zeros(1, 0);
        let counts = CountData::from_study_ranks(2, &[vec![0u32]], false);
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let at = |alpha: f64| ModelParams {
            beta: vec![m::ln(2.0)],
            gamma: vec![],
            log_alpha: Some(m::ln(alpha)),
        };
        // both voxel means are 2, so the coupling is α·2·2
        let c = data.clustered_pair_covariance(&at(0.5), 0, 0, 1).unwrap();
        assert!((c - 2.0).abs() < 1e-14);
        // a vanishing frailty variance removes the coupling entirely
        assert_eq!(data.clustered_pair_covariance(&at(0.0), 0, 0, 1).unwrap(), 0.0);
        assert!(data.clustered_pair_covariance(&at(0.5), 0, 1, 1).is_err());
        assert!(data.clustered_pair_covariance(&at(0.5), 1, 0, 1).is_err());
    }

    #[test]
    fn matched_family_reproduces_sum_moments_exactly_but_not_the_law() {
        // One voxel, two studies. With equal study factors the voxel sum of
        // two iid NB(1/α, p) draws is exactly NB(2/α, p) and the matched
        // family lands on that law; with unequal factors it keeps the first
        // two moments but is intentionally no longer the convolution.
        let mut b = CsrBuilder::new(1);
        b.push_row([(0u32, 1.0)].into_iter());
        let x = b.finish();
        let alpha = 0.5;
        let mu = 1.3f64;
        let beta = m::ln(mu);
        let r0 = 1.0 / alpha;
        let nb_pmf = |rr: f64, pp: f64, k: u64| -> f64 {
            m::exp(
                special::ln_gamma_ratio(rr, k) - special::ln_gamma(k as f64 + 1.0)
                    + rr * m::ln_1p(-pp)
                    + k as f64 * m::ln(pp),
            )
        };

        // equal studies: matched parameters are the exact convolution's
        let z0 = DMat::zeros(2, 0);
        let counts0 = CountData::from_study_ranks(1, &[vec![0u32], vec![]], true);
        let data = ModelData::new(&x, &z0, &counts0).unwrap();
        let params = ModelParams { beta: vec![beta], gamma: vec![], log_alpha: Some(m::ln(alpha)) };
        let f = data.factors(&params).unwrap();
        let r = f.s1z * f.s1z / (alpha * f.s2z);
        let q = alpha * f.s2z / f.s1z * mu;
        let p = q / (1.0 + q);
        let mean = r * q;
        let var = mean * (1.0 + q);
        assert!((mean - 2.0 * mu).abs() < 1e-12);
        assert!((var - (2.0 * mu + alpha * 2.0 * mu * mu)).abs() < 1e-12);
        assert!((r - 2.0 * r0).abs() < 1e-12);
        assert!((p - mu / (mu + r0)).abs() < 1e-14);

        // unequal study factors: moments still match...
        let z = DMat::from_rows(&[&[0.5], &[-0.5]]);
        let data2 = ModelData::new(&x, &z, &counts0).unwrap();
        let params2 =
            ModelParams { beta: vec![beta], gamma: vec![0.8], log_alpha: Some(m::ln(alpha)) };
        let f2 = data2.factors(&params2).unwrap();
        let r2 = f2.s1z * f2.s1z / (alpha * f2.s2z);
        let q2 = alpha * f2.s2z / f2.s1z * mu;
        let p2 = q2 / (1.0 + q2);
        assert!((r2 * q2 - mu * f2.s1z).abs() < 1e-12);
        assert!(
            (r2 * q2 * (1.0 + q2) - (mu * f2.s1z + alpha * mu * mu * f2.s2z)).abs() < 1e-12
        );

        // ...but the law is not the two-study convolution any more
        let p_i: Vec<f64> =
            f2.mu_z.iter().map(|mz| (mu * mz) / (mu * mz + r0)).collect();
        for k in [0u64, 1, 3, 6] {
            let exact: f64 =
                (0..=k).map(|j| nb_pmf(r0, p_i[0], j) * nb_pmf(r0, p_i[1], k - j)).sum();
            let matched = nb_pmf(r2, p2, k);
            assert!((exact - matched).abs() < 0.02, "k={k}: {exact} vs {matched}");
            if k == 1 {
                assert!((exact - matched).abs() > 1e-6, "laws should differ at k={k}");
            }
        }

        // the matched log-likelihood at an observed sum equals the pmf
        let counts =
            CountData::from_study_ranks(1, &[vec![0u32], vec![0u32]], false);
        let data_obs = ModelData::new(&x, &z, &counts).unwrap();
        let l = data_obs.loglik(ModelKind::NegBinomial, &params2).unwrap();
        assert!((m::exp(l) - nb_pmf(r2, p2, 2)).abs() < 1e-14);
    }

    #[test]
    fn overflow_and_clamp_guards() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let mut params = tiny_params(None);
        params.beta = vec![800.0, 800.0];
        assert!(matches!(
            data.loglik(ModelKind::Poisson, &params),
            Err(CoreError::Overflow { .. })
        ));
        params.beta = vec![-50.0, -50.0];
        let f = data.factors(&params).unwrap();
        assert_eq!(f.n_clamped, 4);
        assert!(f.eta_x.iter().all(|&e| e == ETA_CLAMP_MIN));
    }

    #[test]
    fn dispersion_estimate_matches_direct_formula() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = tiny_params(None);
        let f = data.factors(&params).unwrap();
        let (theta, x2, dof) = data.pearson_dispersion(&f).unwrap();
        let mut expect = 0.0;
        for j in 0..4 {
            let mj = f.s1z * f.mu_x[j];
            expect += (counts.y_per_voxel[j] - mj) * (counts.y_per_voxel[j] - mj) / mj;
        }
        assert_eq!(dof, 1); // 4 voxels − 3 parameters
        assert!((x2 - expect).abs() < 1e-14);
        assert!((theta - expect).abs() < 1e-14);
    }

    #[test]
    fn init_matches_total_exactly() {
        let (x, z, counts) = tiny();
        let data = ModelData::new(&x, &z, &counts).unwrap();
        let params = ModelParams::init(ModelKind::Poisson, 2, 1, &counts).unwrap();
        let f = data.factors(&params).unwrap();
        // rows sum to one, so a constant β gives a flat field whose total
        // intensity is exactly the observed count
        assert!((f.s1x * f.s1z - counts.total).abs() < 1e-10);
    }
}
