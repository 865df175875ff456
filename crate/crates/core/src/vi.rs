//! Variational inference for the binary-response models.
//!
//! Student-side latents (abilities, and the skill vectors of the interaction
//! variants) get independent Gaussian posteriors `N(μ, σ²)` against a fixed
//! `N(0, 1)` prior; question parameters stay point estimates. The ELBO is
//! estimated by Monte Carlo with reparameterized draws `μ + σ ε`, keeping the
//! Bernoulli likelihood exact, and the KL terms are closed form. σ is stored
//! as an unconstrained value through softplus.
//!
//! Randomness is organised so that every evaluation is reproducible: for a
//! given seed, student `s` draws from its own ChaCha stream, first `ε_s` and
//! then the `D` skill draws, for each of the `M` samples in turn. Objective
//! and gradient evaluations with the same seed therefore see the same noise.

use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StudentIndex};
use crate::error::{Error, Result};
use crate::models::{self, dot, log1p_exp, sigmoid, Matrix, ModelKind, PointParams};
use crate::optim::TrainReport;
use crate::rng;

/// Softplus, the positivity transform for σ.
#[inline]
pub fn softplus(x: f64) -> f64 {
    log1p_exp(x)
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// `KL(N(mu1, sigma1²) ‖ N(mu2, sigma2²))`.
pub fn kl_gaussian(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0) {
        return Err(Error::invalid(format!(
            "standard deviations must be positive (got {sigma1}, {sigma2})"
        )));
    }
    let d = mu1 - mu2;
    Ok((sigma2 / sigma1).ln() + (sigma1 * sigma1 + d * d) / (2.0 * sigma2 * sigma2) - 0.5)
}

/// KL against the standard normal prior.
#[inline]
fn kl_std(mu: f64, sigma: f64) -> f64 {
    -sigma.ln() + 0.5 * (sigma * sigma + mu * mu) - 0.5
}

/// Gaussian posterior over one scalar latent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianVariational {
    pub mu: f64,
    /// Unconstrained; `sigma = softplus(sigma_raw)`.
    pub sigma_raw: f64,
}

impl GaussianVariational {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(GaussianVariational {
            mu,
            sigma_raw: softplus_inv(sigma),
        })
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        softplus(self.sigma_raw)
    }

    /// dσ / dσ_raw.
    #[inline]
    fn dsigma(&self) -> f64 {
        sigmoid(self.sigma_raw)
    }

    pub fn kl_to_prior(&self) -> f64 {
        kl_std(self.mu, self.sigma())
    }
}

const ZERO_GV: GaussianVariational = GaussianVariational {
    mu: 0.0,
    sigma_raw: 0.0,
};

/// `μ + σ ε`.
#[inline]
pub fn reparameterize(v: &GaussianVariational, eps: f64) -> f64 {
    v.mu + v.sigma() * eps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViKind {
    RaschVi,
    InteractionVi,
    ClassInteractionVi,
}

impl ViKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViKind::RaschVi => "rasch-vi",
            ViKind::InteractionVi => "interaction-vi",
            ViKind::ClassInteractionVi => "class-interaction-vi",
        }
    }

    /// The point model with the same likelihood.
    pub fn point_kind(self) -> ModelKind {
        match self {
            ViKind::RaschVi => ModelKind::Rasch,
            ViKind::InteractionVi => ModelKind::Interaction,
            ViKind::ClassInteractionVi => ModelKind::ClassInteraction,
        }
    }
}

impl fmt::Display for ViKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rasch-vi" => Ok(ViKind::RaschVi),
            "interaction-vi" => Ok(ViKind::InteractionVi),
            "class-interaction-vi" => Ok(ViKind::ClassInteractionVi),
            other => Err(Error::invalid(format!("unknown variational model {other:?}"))),
        }
    }
}

/// Variational and point parameters of a VI model.
///
/// `skill` holds the posteriors over skill vectors, row-major with `dims`
/// columns: one row per student for [`ViKind::InteractionVi`], one per class
/// for [`ViKind::ClassInteractionVi`], none for [`ViKind::RaschVi`]. Also
/// used as the gradient container, with `mu`/`sigma_raw` holding partials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VIParams {
    pub kind: ViKind,
    pub student: Vec<GaussianVariational>,
    pub skill: Vec<GaussianVariational>,
    pub skill_rows: usize,
    pub dims: usize,
    pub b_q: Vec<f64>,
    /// Q x dims
    pub b_qd: Matrix,
}

impl VIParams {
    fn zeros_like(&self) -> VIParams {
        VIParams {
            kind: self.kind,
            student: vec![ZERO_GV; self.student.len()],
            skill: vec![ZERO_GV; self.skill.len()],
            skill_rows: self.skill_rows,
            dims: self.dims,
            b_q: vec![0.0; self.b_q.len()],
            b_qd: Matrix::zeros(self.b_qd.rows(), self.b_qd.cols()),
        }
    }

    /// Fresh parameters: means and question parameters ~ Normal(0, init_scale²),
    /// every σ set to `sigma_init`.
    pub fn init<R: Rng>(
        kind: ViKind,
        data: &Dataset,
        dims: usize,
        init_scale: f64,
        sigma_init: f64,
        rng: &mut R,
    ) -> Result<VIParams> {
        let dims = if kind == ViKind::RaschVi { 0 } else { dims };
        let raw = GaussianVariational::new(0.0, sigma_init)?.sigma_raw;
        let rows = skill_rows(kind, data);
        let gv = |mu: f64| GaussianVariational { mu, sigma_raw: raw };
        let student = models::normal_vec(data.num_students(), init_scale, rng)
            .into_iter()
            .map(gv)
            .collect();
        let b_q = models::normal_vec(data.num_questions(), init_scale, rng);
        let skill = models::normal_vec(rows * dims, init_scale, rng)
            .into_iter()
            .map(gv)
            .collect();
        let b_qd = Matrix::random(data.num_questions(), dims, init_scale, rng);
        Ok(VIParams {
            kind,
            student,
            skill,
            skill_rows: rows,
            dims,
            b_q,
            b_qd,
        })
    }

    /// Means and question parameters copied from a point model of the
    /// matching kind; every σ set to `sigma_init`.
    pub fn from_point(kind: ViKind, point: &PointParams, sigma_init: f64) -> Result<VIParams> {
        if point.kind() != kind.point_kind() {
            return Err(Error::Shape(format!(
                "{kind} cannot be warm-started from a {} model",
                point.kind()
            )));
        }
        let raw = GaussianVariational::new(0.0, sigma_init)?.sigma_raw;
        let gv = |&mu: &f64| GaussianVariational { mu, sigma_raw: raw };
        let (skill, rows, b_qd) = match point {
            PointParams::Rasch(_) => (Vec::new(), 0, Matrix::zeros(point.num_questions(), 0)),
            PointParams::Interaction(p) => (
                p.b_sd.as_slice().iter().map(gv).collect(),
                p.b_sd.rows(),
                p.b_qd.clone(),
            ),
            PointParams::ClassInteraction(p) => (
                p.b_cd.as_slice().iter().map(gv).collect(),
                p.b_cd.rows(),
                p.b_qd.clone(),
            ),
        };
        Ok(VIParams {
            kind,
            student: point.student_bias().iter().map(gv).collect(),
            skill,
            skill_rows: rows,
            dims: b_qd.cols(),
            b_q: point.question_bias().to_vec(),
            b_qd,
        })
    }

    /// Point model at the posterior means.
    pub fn mean_point(&self) -> PointParams {
        let mus: Vec<f64> = self.student.iter().map(|g| g.mu).collect();
        let skill =
            Matrix::from_vec(self.skill_rows, self.dims, self.skill.iter().map(|g| g.mu).collect())
                .expect("skill shape");
        match self.kind {
            ViKind::RaschVi => PointParams::Rasch(models::RaschParams {
                b_s: mus,
                b_q: self.b_q.clone(),
            }),
            ViKind::InteractionVi => PointParams::Interaction(models::InteractionParams {
                b_s0: mus,
                b_q0: self.b_q.clone(),
                b_sd: skill,
                b_qd: self.b_qd.clone(),
            }),
            ViKind::ClassInteractionVi => {
                PointParams::ClassInteraction(models::ClassInteractionParams {
                    b_s0: mus,
                    b_q0: self.b_q.clone(),
                    b_cd: skill,
                    b_qd: self.b_qd.clone(),
                })
            }
        }
    }

    #[inline]
    fn skill_row(&self, s: usize, class_of: &[usize]) -> usize {
        match self.kind {
            ViKind::ClassInteractionVi => class_of[s],
            _ => s,
        }
    }

    #[inline]
    pub fn skill_at(&self, row: usize, d: usize) -> &GaussianVariational {
        &self.skill[row * self.dims + d]
    }

    pub fn num_students(&self) -> usize {
        self.student.len()
    }

    pub fn num_questions(&self) -> usize {
        self.b_q.len()
    }

    /// Sum of every KL term against the prior.
    pub fn total_kl(&self) -> f64 {
        self.student.iter().chain(&self.skill).map(GaussianVariational::kl_to_prior).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.student
            .iter()
            .chain(&self.skill)
            .all(|g| g.mu.is_finite() && g.sigma_raw.is_finite())
            && self.b_q.iter().all(|v| v.is_finite())
            && self.b_qd.as_slice().iter().all(|v| v.is_finite())
    }

    /// Flat views over every trainable coordinate: student μ, student σ_raw,
    /// skill μ, skill σ_raw, b_q, b_qd.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.student.iter().map(|g| g.mu));
        v.extend(self.student.iter().map(|g| g.sigma_raw));
        v.extend(self.skill.iter().map(|g| g.mu));
        v.extend(self.skill.iter().map(|g| g.sigma_raw));
        v.extend_from_slice(&self.b_q);
        v.extend_from_slice(self.b_qd.as_slice());
        v
    }

    /// Mutable access to coordinate `k` in [`VIParams::coordinates`] order.
    pub fn coordinate_mut(&mut self, mut k: usize) -> &mut f64 {
        let (ns, nk, nq) = (self.student.len(), self.skill.len(), self.b_q.len());
        if k < ns {
            return &mut self.student[k].mu;
        }
        k -= ns;
        if k < ns {
            return &mut self.student[k].sigma_raw;
        }
        k -= ns;
        if k < nk {
            return &mut self.skill[k].mu;
        }
        k -= nk;
        if k < nk {
            return &mut self.skill[k].sigma_raw;
        }
        k -= nk;
        if k < nq {
            return &mut self.b_q[k];
        }
        k -= nq;
        &mut self.b_qd.as_mut_slice()[k]
    }

    pub fn check_shape(&self, data: &Dataset) -> Result<()> {
        if self.student.len() != data.num_students()
            || self.b_q.len() != data.num_questions()
            || self.skill_rows != skill_rows(self.kind, data)
        {
            return Err(Error::Shape(format!(
                "{} parameters ({} students, {} questions, {} skill rows) do not fit the data",
                self.kind,
                self.student.len(),
                self.b_q.len(),
                self.skill_rows
            )));
        }
        Ok(())
    }
}

fn skill_rows(kind: ViKind, data: &Dataset) -> usize {
    match kind {
        ViKind::RaschVi => 0,
        ViKind::InteractionVi => data.num_students(),
        ViKind::ClassInteractionVi => data.num_classes(),
    }
}

/// Scratch space for one student's samples.
struct Draws {
    eps_s: Vec<f64>,
    /// M x D
    eps_k: Vec<f64>,
}

fn draw<R: Rng>(rng: &mut R, m: usize, d: usize) -> Draws {
    let mut eps_s = Vec::with_capacity(m);
    let mut eps_k = Vec::with_capacity(m * d);
    for _ in 0..m {
        eps_s.push(rng.sample(StandardNormal));
        for _ in 0..d {
            eps_k.push(rng.sample(StandardNormal));
        }
    }
    Draws { eps_s, eps_k }
}

/// Gradient accumulator for one evaluation. Student rows are written in
/// place; the caller decides which rows to apply.
struct GradSink<'a> {
    grad: &'a mut VIParams,
}

/// Monte Carlo estimate of student `s`'s expected log-likelihood, optionally
/// accumulating its ascent gradient into `sink`.
fn student_loglik(
    p: &VIParams,
    data: &Dataset,
    cells: &[usize],
    s: usize,
    m_samples: usize,
    draws: &Draws,
    mut sink: Option<&mut GradSink<'_>>,
) -> f64 {
    let d = p.dims;
    let class_of = data.class_of();
    let row = p.skill_row(s, class_of);
    let gs = p.student[s];
    let (sigma_s, dsig_s) = (gs.sigma(), gs.dsigma());
    let inv_m = 1.0 / m_samples as f64;
    let skill = &p.skill[row * d..(row + 1) * d];
    let sigma_k: Vec<f64> = skill.iter().map(GaussianVariational::sigma).collect();
    let mut k = vec![0.0; d];
    let mut total = 0.0;
    for m in 0..m_samples {
        let eps = draws.eps_s[m];
        let eps_k = &draws.eps_k[m * d..(m + 1) * d];
        let b = gs.mu + sigma_s * eps;
        for j in 0..d {
            k[j] = skill[j].mu + sigma_k[j] * eps_k[j];
        }
        for &i in cells {
            let obs = data.responses()[i];
            let q = obs.question;
            let qd = p.b_qd.row(q);
            let z = b + p.b_q[q] + dot(&k, qd);
            let y = f64::from(obs.y);
            total += y * z - log1p_exp(z);
            if let Some(sink) = sink.as_deref_mut() {
                let g = (y - sigmoid(z)) * inv_m;
                let gr = &mut *sink.grad;
                gr.student[s].mu += g;
                gr.student[s].sigma_raw += g * eps * dsig_s;
                gr.b_q[q] += g;
                let gqd = gr.b_qd.row_mut(q);
                for j in 0..d {
                    gqd[j] += g * k[j];
                }
                for j in 0..d {
                    let gk = &mut gr.skill[row * d + j];
                    gk.mu += g * qd[j];
                    gk.sigma_raw += g * qd[j] * eps_k[j] * skill[j].dsigma();
                }
            }
        }
    }
    total * inv_m
}

/// Adds `-weight * ∇KL(q ‖ N(0,1))` for one posterior.
#[inline]
fn add_kl_grad(g: &mut GaussianVariational, v: &GaussianVariational, weight: f64) {
    let sigma = v.sigma();
    g.mu -= weight * v.mu;
    g.sigma_raw -= weight * (sigma - 1.0 / sigma) * v.dsigma();
}

fn student_draws(p: &VIParams, s: usize, seed: u64, m: usize) -> Draws {
    let mut r = rng::stream(seed, rng::offset::VI_SAMPLES, s as u64);
    draw(&mut r, m, p.dims)
}

fn evaluate(
    p: &VIParams,
    data: &Dataset,
    index: &StudentIndex,
    m_samples: usize,
    seed: u64,
    mut grad: Option<&mut VIParams>,
) -> f64 {
    let mut elbo = 0.0;
    for s in 0..p.num_students() {
        let cells = index.of(s);
        if !cells.is_empty() {
            let draws = student_draws(p, s, seed, m_samples);
            let mut sink = grad.as_deref_mut().map(|g| GradSink { grad: g });
            elbo += student_loglik(p, data, cells, s, m_samples, &draws, sink.as_mut());
        }
    }
    elbo -= p.total_kl();
    if let Some(g) = grad {
        for (gv, v) in g.student.iter_mut().zip(&p.student) {
            add_kl_grad(gv, v, 1.0);
        }
        for (gv, v) in g.skill.iter_mut().zip(&p.skill) {
            add_kl_grad(gv, v, 1.0);
        }
    }
    elbo
}

/// Monte Carlo ELBO estimate with `m_samples` draws per student.
///
/// Deterministic in `seed`; students with no responses contribute only
/// their KL terms.
pub fn elbo_mc(params: &VIParams, data: &Dataset, m_samples: usize, seed: u64) -> Result<f64> {
    if m_samples == 0 {
        return Err(Error::invalid("need at least one Monte Carlo sample"));
    }
    params.check_shape(data)?;
    Ok(evaluate(params, data, &data.by_student(), m_samples, seed, None))
}

/// ELBO estimate and its exact gradient for the same draws as
/// [`elbo_mc`] with the same seed. The gradient is returned in a
/// [`VIParams`]-shaped container (`sigma_raw` holds ∂/∂σ_raw).
pub fn elbo_grad(
    params: &VIParams,
    data: &Dataset,
    m_samples: usize,
    seed: u64,
) -> Result<(f64, VIParams)> {
    if m_samples == 0 {
        return Err(Error::invalid("need at least one Monte Carlo sample"));
    }
    params.check_shape(data)?;
    let mut grad = params.zeros_like();
    let elbo = evaluate(params, data, &data.by_student(), m_samples, seed, Some(&mut grad));
    Ok((elbo, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VIConfig {
    /// Monte Carlo samples per student per ELBO estimate.
    pub m_samples: usize,
    pub sigma_init: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Students per mini-batch.
    pub batch_students: usize,
    pub dims: usize,
    pub seed: u64,
    /// Std of the mean initialization when not warm-starting.
    pub init_scale: f64,
    /// Stop when the relative change of the epoch ELBO estimate falls below
    /// this. The estimate uses fixed draws across epochs.
    pub convergence_tol: f64,
}

impl Default for VIConfig {
    fn default() -> Self {
        VIConfig {
            m_samples: 5,
            sigma_init: 0.8,
            learning_rate: 0.02,
            epochs: 100,
            batch_students: 64,
            dims: 1,
            seed: 0,
            init_scale: 0.01,
            convergence_tol: 1e-5,
        }
    }
}

impl VIConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_samples == 0 {
            return Err(Error::invalid("m_samples must be at least 1"));
        }
        if !(self.sigma_init > 0.0) {
            return Err(Error::invalid("sigma_init must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_students == 0 {
            return Err(Error::invalid("batch_students must be at least 1"));
        }
        Ok(())
    }
}

/// Stochastic gradient ascent on the Monte Carlo ELBO.
///
/// Each epoch visits students in shuffled mini-batches. A batch draws fresh
/// samples for its students, ascends their expected log-likelihood minus
/// their own KL terms, and takes the share `|batch| / S` of the class-vector
/// KL. Question parameters and class posteriors move with every batch.
/// After each epoch the ELBO is re-estimated with fixed draws; the
/// parameters with the best estimate are returned, and the trace records its
/// negation.
pub fn train_vi(
    kind: ViKind,
    data: &Dataset,
    cfg: &VIConfig,
    warm_start: Option<&PointParams>,
) -> Result<(VIParams, TrainReport)> {
    cfg.validate()?;
    if kind == ViKind::ClassInteractionVi && data.num_classes() == 0 {
        return Err(Error::invalid("class model needs class labels"));
    }
    let mut params = match warm_start {
        Some(point) => {
            let p = VIParams::from_point(kind, point, cfg.sigma_init)?;
            p.check_shape(data)?;
            if kind != ViKind::RaschVi && p.dims != cfg.dims {
                return Err(Error::Shape(format!(
                    "warm start has D={}, config asks for D={}",
                    p.dims, cfg.dims
                )));
            }
            p
        }
        None => {
            let mut init_rng = rng::rng(cfg.seed, rng::offset::INIT);
            VIParams::init(kind, data, cfg.dims, cfg.init_scale, cfg.sigma_init, &mut init_rng)?
        }
    };

    let index = data.by_student();
    let eval_seed = cfg.seed.wrapping_add(rng::offset::VI_EVAL);
    let initial = evaluate(&params, data, &index, cfg.m_samples, eval_seed, None);
    if !initial.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            value: -initial,
        });
    }
    let mut best = (initial, params.clone());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut grad = params.zeros_like();
    let mut order: Vec<usize> = (0..data.num_students()).collect();
    let mut shuffle_rng = rng::rng(cfg.seed, rng::offset::SHUFFLE);
    let s_total = data.num_students().max(1) as f64;
    let lr = cfg.learning_rate;
    let mut prev = initial;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let epoch_seed = rng::mix(cfg.seed, epoch as u64);
        for batch in order.chunks(cfg.batch_students) {
            for &s in batch {
                let cells = index.of(s);
                if !cells.is_empty() {
                    let draws = student_draws(&params, s, epoch_seed, cfg.m_samples);
                    let mut sink = GradSink { grad: &mut grad };
                    student_loglik(&params, data, cells, s, cfg.m_samples, &draws, Some(&mut sink));
                }
                add_kl_grad(&mut grad.student[s], &params.student[s], 1.0);
                if kind == ViKind::InteractionVi {
                    for j in 0..params.dims {
                        let k = s * params.dims + j;
                        add_kl_grad(&mut grad.skill[k], &params.skill[k], 1.0);
                    }
                }
            }
            if kind == ViKind::ClassInteractionVi {
                let w = batch.len() as f64 / s_total;
                for (g, v) in grad.skill.iter_mut().zip(&params.skill) {
                    add_kl_grad(g, v, w);
                }
            }
            // ascent step on touched students, all question and class terms
            for &s in batch {
                let g = std::mem::replace(&mut grad.student[s], ZERO_GV);
                params.student[s].mu += lr * g.mu;
                params.student[s].sigma_raw += lr * g.sigma_raw;
                if kind == ViKind::InteractionVi {
                    for j in 0..params.dims {
                        let k = s * params.dims + j;
                        let g = std::mem::replace(&mut grad.skill[k], ZERO_GV);
                        params.skill[k].mu += lr * g.mu;
                        params.skill[k].sigma_raw += lr * g.sigma_raw;
                    }
                }
            }
            if kind == ViKind::ClassInteractionVi {
                for (p, g) in params.skill.iter_mut().zip(grad.skill.iter_mut()) {
                    p.mu += lr * g.mu;
                    p.sigma_raw += lr * g.sigma_raw;
                    *g = ZERO_GV;
                }
            }
            for (p, g) in params.b_q.iter_mut().zip(grad.b_q.iter_mut()) {
                *p += lr * *g;
                *g = 0.0;
            }
            for (p, g) in params
                .b_qd
                .as_mut_slice()
                .iter_mut()
                .zip(grad.b_qd.as_mut_slice().iter_mut())
            {
                *p += lr * *g;
                *g = 0.0;
            }
        }

        let value = evaluate(&params, data, &index, cfg.m_samples, eval_seed, None);
        epochs_run = epoch;
        if !value.is_finite() || !params.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                value: -value,
            });
        }
        trace.push(-value);
        if value > best.0 {
            best = (value, params.clone());
        }
        let rel = (prev - value).abs() / prev.abs().max(f64::MIN_POSITIVE);
        debug!("epoch {epoch}: elbo {value:.6} (rel change {rel:.3e})");
        if rel < cfg.convergence_tol {
            break;
        }
        prev = value;
    }

    let report = TrainReport {
        objective: "neg_elbo".into(),
        initial_nll: -initial,
        final_nll: -best.0,
        epochs_run,
        nll_trace: trace,
    };
    Ok((best.1, report))
}

/// Test-time rule for turning a posterior into a probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictMode {
    /// Logistic of the logit at the posterior means.
    PlugInMean,
    /// Average logistic over `samples` posterior draws.
    MonteCarlo { samples: usize, seed: u64 },
}

pub fn predict_prob_vi(
    params: &VIParams,
    s: usize,
    q: usize,
    class_of: &[usize],
    mode: PredictMode,
) -> Result<f64> {
    if s >= params.num_students() {
        return Err(Error::IndexOutOfRange {
            what: "student",
            index: s,
            len: params.num_students(),
        });
    }
    if q >= params.num_questions() {
        return Err(Error::IndexOutOfRange {
            what: "question",
            index: q,
            len: params.num_questions(),
        });
    }
    if params.kind == ViKind::ClassInteractionVi && class_of.get(s).is_none_or(|&c| c >= params.skill_rows) {
        return Err(Error::invalid(format!("student {s} has no valid class assignment")));
    }
    let d = params.dims;
    let row = params.skill_row(s, class_of);
    let skill = &params.skill[row * d..(row + 1) * d];
    let qd = params.b_qd.row(q);
    match mode {
        PredictMode::PlugInMean => {
            let inter: f64 = skill.iter().zip(qd).map(|(k, w)| k.mu * w).sum();
            Ok(sigmoid(params.student[s].mu + params.b_q[q] + inter))
        }
        PredictMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("need at least one Monte Carlo sample"));
            }
            let cell = (s as u64) * (params.num_questions() as u64) + q as u64;
            let mut r = rng::stream(seed, rng::offset::PREDICT, cell);
            let gs = params.student[s];
            let sigma_s = gs.sigma();
            let sigma_k: Vec<f64> = skill.iter().map(GaussianVariational::sigma).collect();
            let mut acc = 0.0;
            for _ in 0..samples {
                let mut z = gs.mu + sigma_s * r.sample::<f64, _>(StandardNormal) + params.b_q[q];
                for j in 0..d {
                    let e: f64 = r.sample(StandardNormal);
                    z += (skill[j].mu + sigma_k[j] * e) * qd[j];
                }
                acc += sigmoid(z);
            }
            Ok(acc / samples as f64)
        }
    }
}
