//! Maximum-likelihood training of the point models by mini-batch SGD on the
//! Bernoulli negative log-likelihood.

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{bernoulli_nll, sigmoid, ModelKind, ModelSpec, PointParams};
use crate::rng;

/// Gradients smaller than this are compared absolutely rather than relatively
/// in [`finite_diff_check`].
pub const FD_SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Observations per mini-batch.
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    /// Std of the Normal(0, std²) initialization.
    pub init_scale: f64,
    /// Stop when the relative change of the epoch NLL falls below this.
    pub convergence_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 1024,
            l2_penalty: 1e-4,
            seed: 0,
            init_scale: 0.01,
            convergence_tol: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.l2_penalty >= 0.0) || !(self.init_scale >= 0.0) || !(self.convergence_tol >= 0.0) {
            return Err(Error::invalid(
                "l2_penalty, init_scale and convergence_tol must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Outcome of a training run. `nll_trace` holds the objective after each
/// epoch: the training NLL for point models, the negative ELBO estimate for
/// variational ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: String,
    pub initial_nll: f64,
    pub final_nll: f64,
    pub epochs_run: usize,
    pub nll_trace: Vec<f64>,
}

/// Summed negative log-likelihood of `data` under `params`.
pub fn nll(params: &PointParams, data: &Dataset) -> f64 {
    let class_of = data.class_of();
    data.responses()
        .iter()
        .map(|r| bernoulli_nll(params.logit_fast(r.student, r.question, class_of), r.y))
        .sum()
}

/// Penalized objective `nll + l2/2 * |θ|²`.
pub fn penalized_nll(params: &PointParams, data: &Dataset, l2: f64) -> f64 {
    let sq: f64 = params
        .tensors()
        .iter()
        .flat_map(|t| t.2.iter())
        .map(|v| v * v)
        .sum();
    nll(params, data) + 0.5 * l2 * sq
}

/// Adds the NLL gradient of one observation with residual `r = σ(z) − y`.
#[inline]
fn add_residual(grad: &mut PointParams, params: &PointParams, s: usize, q: usize, c: usize, r: f64) {
    match (grad, params) {
        (PointParams::Rasch(g), PointParams::Rasch(_)) => {
            g.b_s[s] += r;
            g.b_q[q] += r;
        }
        (PointParams::Interaction(g), PointParams::Interaction(p)) => {
            g.b_s0[s] += r;
            g.b_q0[q] += r;
            let (ps, pq) = (p.b_sd.row(s), p.b_qd.row(q));
            for (gs, &v) in g.b_sd.row_mut(s).iter_mut().zip(pq) {
                *gs += r * v;
            }
            for (gq, &v) in g.b_qd.row_mut(q).iter_mut().zip(ps) {
                *gq += r * v;
            }
        }
        (PointParams::ClassInteraction(g), PointParams::ClassInteraction(p)) => {
            g.b_s0[s] += r;
            g.b_q0[q] += r;
            let (pc, pq) = (p.b_cd.row(c), p.b_qd.row(q));
            for (gc, &v) in g.b_cd.row_mut(c).iter_mut().zip(pq) {
                *gc += r * v;
            }
            for (gq, &v) in g.b_qd.row_mut(q).iter_mut().zip(pc) {
                *gq += r * v;
            }
        }
        _ => unreachable!("gradient container kind differs from parameters"),
    }
}

/// Analytic gradient of `nll` restricted to `batch` (indices into
/// `data.responses()`), plus `l2 * θ` for every parameter.
pub fn grad_nll(params: &PointParams, data: &Dataset, batch: &[usize], l2: f64) -> PointParams {
    let spec = params.spec();
    let mut grad = PointParams::zeros(
        spec,
        params.num_students(),
        params.num_questions(),
        params.num_classes().unwrap_or(0),
    );
    let class_of = data.class_of();
    for &i in batch {
        let obs = data.responses()[i];
        let z = params.logit_fast(obs.student, obs.question, class_of);
        let r = sigmoid(z) - f64::from(obs.y);
        let c = class_of[obs.student];
        add_residual(&mut grad, params, obs.student, obs.question, c, r);
    }
    if l2 != 0.0 {
        for (g, p) in grad.tensors_mut().into_iter().zip(params.tensors()) {
            for (gv, pv) in g.iter_mut().zip(p.2) {
                *gv += l2 * pv;
            }
        }
    }
    grad
}

/// Largest relative discrepancy between the analytic NLL gradient and central
/// differences with step `epsilon`, over every coordinate. The denominator is
/// `max(|analytic|, |numeric|, FD_SCALE_FLOOR)`.
pub fn finite_diff_check(params: &PointParams, data: &Dataset, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let analytic = grad_nll(params, data, &all, 0.0);
    let analytic: Vec<f64> = analytic
        .tensors()
        .iter()
        .flat_map(|t| t.2.iter().copied())
        .collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut k = 0;
    let tensor_count = probe.tensors().len();
    for t in 0..tensor_count {
        let n = probe.tensors()[t].2.len();
        for i in 0..n {
            let orig = probe.tensors_mut()[t][i];
            probe.tensors_mut()[t][i] = orig + epsilon;
            let plus = nll(&probe, data);
            probe.tensors_mut()[t][i] = orig - epsilon;
            let minus = nll(&probe, data);
            probe.tensors_mut()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[k];
            let denom = a.abs().max(numeric.abs()).max(FD_SCALE_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
            k += 1;
        }
    }
    Ok(worst)
}

/// Mini-batch SGD step state: a dense gradient buffer that is only touched
/// (and re-zeroed) at the rows a batch actually visits.
struct SparseStep {
    grad: PointParams,
    seen_s: Vec<bool>,
    seen_q: Vec<bool>,
    seen_c: Vec<bool>,
    touched_s: Vec<usize>,
    touched_q: Vec<usize>,
    touched_c: Vec<usize>,
}

impl SparseStep {
    fn new(params: &PointParams) -> Self {
        let (s, q, c) = (
            params.num_students(),
            params.num_questions(),
            params.num_classes().unwrap_or(0),
        );
        SparseStep {
            grad: PointParams::zeros(params.spec(), s, q, c),
            seen_s: vec![false; s],
            seen_q: vec![false; q],
            seen_c: vec![false; c],
            touched_s: Vec::new(),
            touched_q: Vec::new(),
            touched_c: Vec::new(),
        }
    }

    fn accumulate(&mut self, params: &PointParams, data: &Dataset, batch: &[usize]) {
        let class_of = data.class_of();
        for &i in batch {
            let obs = data.responses()[i];
            let (s, q) = (obs.student, obs.question);
            let c = class_of[s];
            let r = sigmoid(params.logit_fast(s, q, class_of)) - f64::from(obs.y);
            add_residual(&mut self.grad, params, s, q, c, r);
            if !self.seen_s[s] {
                self.seen_s[s] = true;
                self.touched_s.push(s);
            }
            if !self.seen_q[q] {
                self.seen_q[q] = true;
                self.touched_q.push(q);
            }
            if matches!(params, PointParams::ClassInteraction(_)) && !self.seen_c[c] {
                self.seen_c[c] = true;
                self.touched_c.push(c);
            }
        }
    }

    fn apply(&mut self, params: &mut PointParams, lr: f64) {
        fn step(p: &mut [f64], g: &mut [f64], lr: f64) {
            for (pv, gv) in p.iter_mut().zip(g.iter_mut()) {
                *pv -= lr * *gv;
                *gv = 0.0;
            }
        }
        match (params, &mut self.grad) {
            (PointParams::Rasch(p), PointParams::Rasch(g)) => {
                for &s in &self.touched_s {
                    p.b_s[s] -= lr * g.b_s[s];
                    g.b_s[s] = 0.0;
                }
                for &q in &self.touched_q {
                    p.b_q[q] -= lr * g.b_q[q];
                    g.b_q[q] = 0.0;
                }
            }
            (PointParams::Interaction(p), PointParams::Interaction(g)) => {
                for &s in &self.touched_s {
                    p.b_s0[s] -= lr * g.b_s0[s];
                    g.b_s0[s] = 0.0;
                    step(p.b_sd.row_mut(s), g.b_sd.row_mut(s), lr);
                }
                for &q in &self.touched_q {
                    p.b_q0[q] -= lr * g.b_q0[q];
                    g.b_q0[q] = 0.0;
                    step(p.b_qd.row_mut(q), g.b_qd.row_mut(q), lr);
                }
            }
            (PointParams::ClassInteraction(p), PointParams::ClassInteraction(g)) => {
                for &s in &self.touched_s {
                    p.b_s0[s] -= lr * g.b_s0[s];
                    g.b_s0[s] = 0.0;
                }
                for &c in &self.touched_c {
                    step(p.b_cd.row_mut(c), g.b_cd.row_mut(c), lr);
                }
                for &q in &self.touched_q {
                    p.b_q0[q] -= lr * g.b_q0[q];
                    g.b_q0[q] = 0.0;
                    step(p.b_qd.row_mut(q), g.b_qd.row_mut(q), lr);
                }
            }
            _ => unreachable!("gradient container kind differs from parameters"),
        }
        for &s in &self.touched_s {
            self.seen_s[s] = false;
        }
        for &q in &self.touched_q {
            self.seen_q[q] = false;
        }
        for &c in &self.touched_c {
            self.seen_c[c] = false;
        }
        self.touched_s.clear();
        self.touched_q.clear();
        self.touched_c.clear();
    }
}

/// Fits a point model by shuffled mini-batch SGD.
///
/// Parameters start from `warm_start` when given, else Normal(0,
/// init_scale²). Each batch takes a step along the summed NLL gradient of its
/// observations; the L2 penalty is applied as one weight-decay step of
/// `lr * l2` per epoch, so an epoch descends `nll + l2/2 |θ|²` to first
/// order. Returns the parameters with the lowest training NLL seen,
/// including the starting point.
pub fn sgd_train(
    spec: ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    warm_start: Option<&PointParams>,
) -> Result<(PointParams, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut params = match warm_start {
        Some(p) => {
            if p.kind() != spec.kind || (p.spec().dims != spec.dims && spec.kind != ModelKind::Rasch) {
                return Err(Error::Shape(format!(
                    "warm start is {} (D={}), requested {} (D={})",
                    p.kind(),
                    p.spec().dims,
                    spec.kind,
                    spec.dims
                )));
            }
            p.check_shape(data.num_students(), data.num_questions(), data.num_classes())?;
            p.clone()
        }
        None => {
            let mut init_rng = rng::rng(cfg.seed, rng::offset::INIT);
            PointParams::random(
                spec,
                data.num_students(),
                data.num_questions(),
                data.num_classes(),
                cfg.init_scale,
                &mut init_rng,
            )
        }
    };

    let initial = nll(&params, data);
    if !initial.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            value: initial,
        });
    }
    let mut best = (initial, params.clone());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::rng(cfg.seed, rng::offset::SHUFFLE);
    let mut step = SparseStep::new(&params);
    let decay = 1.0 - cfg.learning_rate * cfg.l2_penalty;
    let mut prev = initial;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            step.accumulate(&params, data, batch);
            step.apply(&mut params, cfg.learning_rate);
        }
        if cfg.l2_penalty > 0.0 {
            for t in params.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= decay);
            }
        }
        let value = nll(&params, data);
        epochs_run = epoch;
        if !value.is_finite() {
            return Err(Error::NonFinite { epoch, value });
        }
        trace.push(value);
        if value < best.0 {
            best = (value, params.clone());
        }
        let rel = (prev - value).abs() / prev.abs().max(f64::MIN_POSITIVE);
        debug!("epoch {epoch}: nll {value:.6} (rel change {rel:.3e})");
        if rel < cfg.convergence_tol {
            break;
        }
        prev = value;
    }

    let report = TrainReport {
        objective: "nll".into(),
        initial_nll: initial,
        final_nll: best.0,
        epochs_run,
        nll_trace: trace,
    };
    Ok((best.1, report))
}
