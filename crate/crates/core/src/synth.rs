//! Seeded synthetic response data.
//!
//! Responses follow `y ~ Bernoulli(σ(b_s + b_q + x_s·x_q + x_c·x_q))` where
//! the class term is present only when `num_classes > 0` and students are
//! assigned to classes round-robin.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{BinaryResponse, Dataset, IdTables, Interner, NO_CLASS};
use crate::error::{Error, Result};
use crate::models::{dot, sigmoid, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub students: usize,
    pub questions: usize,
    pub dims: usize,
    pub mean_bq: f64,
    pub std_bq: f64,
    pub std_bs: f64,
    pub std_xs: f64,
    pub std_xq: f64,
    /// 0 disables class structure.
    pub num_classes: usize,
    pub class_effect_std: f64,
    /// Probability that a cell is observed.
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            students: 40_000,
            questions: 24,
            dims: 1,
            mean_bq: -3.0,
            std_bq: 1.0,
            std_bs: 1.0,
            std_xs: 1.0,
            std_xq: 1.0,
            num_classes: 0,
            class_effect_std: 0.0,
            keep_prob: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.students == 0 || self.questions == 0 {
            return Err(Error::invalid("need at least one student and one question"));
        }
        for (name, v) in [
            ("std_bq", self.std_bq),
            ("std_bs", self.std_bs),
            ("std_xs", self.std_xs),
            ("std_xq", self.std_xq),
            ("class_effect_std", self.class_effect_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.mean_bq.is_finite() {
            return Err(Error::invalid("mean_bq must be finite"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid("keep_prob must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Every sampled latent behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub b_s: Vec<f64>,
    pub b_q: Vec<f64>,
    /// S x D
    pub x_s: Matrix,
    /// Q x D
    pub x_q: Matrix,
    /// C x D, empty without classes
    pub class_vectors: Matrix,
    pub class_of: Vec<usize>,
}

impl SynthTruth {
    pub fn logit(&self, s: usize, q: usize) -> f64 {
        let mut z = self.b_s[s] + self.b_q[q] + dot(self.x_s.row(s), self.x_q.row(q));
        if self.class_vectors.rows() > 0 {
            z += dot(self.class_vectors.row(self.class_of[s]), self.x_q.row(q));
        }
        z
    }

    pub fn prob(&self, s: usize, q: usize) -> f64 {
        sigmoid(self.logit(s, q))
    }
}

fn sample_vec<R: Rng>(n: usize, mean: f64, std: f64, rng: &mut R) -> Vec<f64> {
    if std == 0.0 {
        return vec![mean; n];
    }
    let dist = Normal::new(mean, std).expect("validated std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Dataset, SynthTruth)> {
    cfg.validate()?;
    let mut r = rng::rng(cfg.seed, rng::offset::SYNTH);
    let (s_n, q_n, d) = (cfg.students, cfg.questions, cfg.dims);
    let b_s = sample_vec(s_n, 0.0, cfg.std_bs, &mut r);
    let b_q = sample_vec(q_n, cfg.mean_bq, cfg.std_bq, &mut r);
    let x_s = Matrix::from_vec(s_n, d, sample_vec(s_n * d, 0.0, cfg.std_xs, &mut r))?;
    let x_q = Matrix::from_vec(q_n, d, sample_vec(q_n * d, 0.0, cfg.std_xq, &mut r))?;
    let c_n = cfg.num_classes;
    let class_vectors = Matrix::from_vec(c_n, d, sample_vec(c_n * d, 0.0, cfg.class_effect_std, &mut r))?;
    let class_of: Vec<usize> = if c_n > 0 {
        (0..s_n).map(|s| s % c_n).collect()
    } else {
        vec![0; s_n]
    };
    let truth = SynthTruth {
        config: cfg.clone(),
        b_s,
        b_q,
        x_s,
        x_q,
        class_vectors,
        class_of: class_of.clone(),
    };

    let mut responses = Vec::with_capacity(s_n * q_n);
    for s in 0..s_n {
        for q in 0..q_n {
            if cfg.keep_prob < 1.0 && !r.random_bool(cfg.keep_prob) {
                continue;
            }
            let p = truth.prob(s, q);
            let y = u8::from(r.random::<f64>() < p);
            responses.push(BinaryResponse {
                student: s,
                question: q,
                y,
            });
        }
    }

    let classes = if c_n > 0 {
        Interner::sequential("c", c_n)
    } else {
        Interner::from_names(vec![NO_CLASS.to_owned()])?
    };
    let ids = IdTables {
        students: Interner::sequential("s", s_n),
        questions: Interner::sequential("q", q_n),
        classes,
    };
    let n_classes = ids.classes.len();
    let data = Dataset::from_parts(responses, s_n, q_n, class_of, n_classes, Arc::new(ids))?;
    Ok((data, truth))
}
