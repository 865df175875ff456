//! Point-estimate likelihood heads: Rasch, interaction and class interaction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest double below 1.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, branch-on-sign form. Never overflows. The upper side
/// saturates at the largest double below 1, so the result stays strictly
/// inside (0, 1) for every logit in [-700, 700].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (1.0 / (1.0 + (-x).exp())).min(ONE_BELOW)
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow or cancellation.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Negative Bernoulli log-likelihood of one observation at logit `z`.
#[inline]
pub fn bernoulli_nll(z: f64, y: u8) -> f64 {
    log1p_exp(z) - f64::from(y) * z
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn random<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        Matrix {
            rows,
            cols,
            data: normal_vec(rows * cols, std, rng),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

pub(crate) fn normal_vec<R: Rng>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let dist = Normal::new(0.0, std).expect("finite non-negative std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        Err(Error::IndexOutOfRange { what, index, len })
    } else {
        Ok(())
    }
}

/// Student ability and question easiness, one scalar each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaschParams {
    pub b_s: Vec<f64>,
    /// Large positive means an easy question.
    pub b_q: Vec<f64>,
}

/// Per-student skill vectors interacting with per-question demand vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub b_s0: Vec<f64>,
    pub b_q0: Vec<f64>,
    /// S x D
    pub b_sd: Matrix,
    /// Q x D
    pub b_qd: Matrix,
}

/// Interaction model whose skill vectors are shared within a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInteractionParams {
    pub b_s0: Vec<f64>,
    pub b_q0: Vec<f64>,
    /// C x D
    pub b_cd: Matrix,
    /// Q x D
    pub b_qd: Matrix,
}

pub fn logit_rasch(p: &RaschParams, s: usize, q: usize) -> Result<f64> {
    check_index("student", s, p.b_s.len())?;
    check_index("question", q, p.b_q.len())?;
    Ok(p.b_s[s] + p.b_q[q])
}

pub fn logit_interaction(p: &InteractionParams, s: usize, q: usize) -> Result<f64> {
    check_index("student", s, p.b_s0.len())?;
    check_index("question", q, p.b_q0.len())?;
    Ok(p.b_s0[s] + p.b_q0[q] + dot(p.b_sd.row(s), p.b_qd.row(q)))
}

pub fn logit_class_interaction(
    p: &ClassInteractionParams,
    s: usize,
    q: usize,
    class_of: &[usize],
) -> Result<f64> {
    check_index("student", s, p.b_s0.len())?;
    check_index("question", q, p.b_q0.len())?;
    let c = *class_of.get(s).ok_or_else(|| {
        Error::invalid(format!("student {s} has no class assignment"))
    })?;
    check_index("class", c, p.b_cd.rows())?;
    Ok(p.b_s0[s] + p.b_q0[q] + dot(p.b_cd.row(c), p.b_qd.row(q)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Rasch,
    Interaction,
    ClassInteraction,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rasch => "rasch",
            ModelKind::Interaction => "interaction",
            ModelKind::ClassInteraction => "class-interaction",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rasch" => Ok(ModelKind::Rasch),
            "interaction" => Ok(ModelKind::Interaction),
            "class-interaction" => Ok(ModelKind::ClassInteraction),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ignored for Rasch.
    pub dims: usize,
}

impl ModelSpec {
    pub fn rasch() -> Self {
        ModelSpec {
            kind: ModelKind::Rasch,
            dims: 0,
        }
    }
    pub fn interaction(dims: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Interaction,
            dims,
        }
    }
    pub fn class_interaction(dims: usize) -> Self {
        ModelSpec {
            kind: ModelKind::ClassInteraction,
            dims,
        }
    }
}

/// Parameters of any point model. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PointParams {
    Rasch(RaschParams),
    Interaction(InteractionParams),
    ClassInteraction(ClassInteractionParams),
}

impl PointParams {
    /// All-zero parameters for the given shapes.
    pub fn zeros(spec: ModelSpec, students: usize, questions: usize, classes: usize) -> Self {
        Self::random(spec, students, questions, classes, 0.0, &mut crate::rng::rng(0, 0))
    }

    /// Entries drawn from Normal(0, std²), tensor by tensor in declaration order.
    pub fn random<R: Rng>(
        spec: ModelSpec,
        students: usize,
        questions: usize,
        classes: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let d = spec.dims;
        match spec.kind {
            ModelKind::Rasch => PointParams::Rasch(RaschParams {
                b_s: normal_vec(students, std, rng),
                b_q: normal_vec(questions, std, rng),
            }),
            ModelKind::Interaction => PointParams::Interaction(InteractionParams {
                b_s0: normal_vec(students, std, rng),
                b_q0: normal_vec(questions, std, rng),
                b_sd: Matrix::random(students, d, std, rng),
                b_qd: Matrix::random(questions, d, std, rng),
            }),
            ModelKind::ClassInteraction => PointParams::ClassInteraction(ClassInteractionParams {
                b_s0: normal_vec(students, std, rng),
                b_q0: normal_vec(questions, std, rng),
                b_cd: Matrix::random(classes, d, std, rng),
                b_qd: Matrix::random(questions, d, std, rng),
            }),
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            PointParams::Rasch(_) => ModelSpec::rasch(),
            PointParams::Interaction(p) => ModelSpec::interaction(p.b_qd.cols()),
            PointParams::ClassInteraction(p) => ModelSpec::class_interaction(p.b_qd.cols()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.spec().kind
    }

    pub fn num_students(&self) -> usize {
        match self {
            PointParams::Rasch(p) => p.b_s.len(),
            PointParams::Interaction(p) => p.b_s0.len(),
            PointParams::ClassInteraction(p) => p.b_s0.len(),
        }
    }

    pub fn num_questions(&self) -> usize {
        match self {
            PointParams::Rasch(p) => p.b_q.len(),
            PointParams::Interaction(p) => p.b_q0.len(),
            PointParams::ClassInteraction(p) => p.b_q0.len(),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            PointParams::ClassInteraction(p) => Some(p.b_cd.rows()),
            _ => None,
        }
    }

    pub fn student_bias(&self) -> &[f64] {
        match self {
            PointParams::Rasch(p) => &p.b_s,
            PointParams::Interaction(p) => &p.b_s0,
            PointParams::ClassInteraction(p) => &p.b_s0,
        }
    }

    pub fn question_bias(&self) -> &[f64] {
        match self {
            PointParams::Rasch(p) => &p.b_q,
            PointParams::Interaction(p) => &p.b_q0,
            PointParams::ClassInteraction(p) => &p.b_q0,
        }
    }

    /// Question demand vectors, when the model has them.
    pub fn question_vectors(&self) -> Option<&Matrix> {
        match self {
            PointParams::Rasch(_) => None,
            PointParams::Interaction(p) => Some(&p.b_qd),
            PointParams::ClassInteraction(p) => Some(&p.b_qd),
        }
    }

    /// Named tensors with shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        match self {
            PointParams::Rasch(p) => vec![
                ("b_s", vec![p.b_s.len()], &p.b_s[..]),
                ("b_q", vec![p.b_q.len()], &p.b_q[..]),
            ],
            PointParams::Interaction(p) => vec![
                ("b_s0", vec![p.b_s0.len()], &p.b_s0[..]),
                ("b_q0", vec![p.b_q0.len()], &p.b_q0[..]),
                ("b_sd", vec![p.b_sd.rows(), p.b_sd.cols()], p.b_sd.as_slice()),
                ("b_qd", vec![p.b_qd.rows(), p.b_qd.cols()], p.b_qd.as_slice()),
            ],
            PointParams::ClassInteraction(p) => vec![
                ("b_s0", vec![p.b_s0.len()], &p.b_s0[..]),
                ("b_q0", vec![p.b_q0.len()], &p.b_q0[..]),
                ("b_cd", vec![p.b_cd.rows(), p.b_cd.cols()], p.b_cd.as_slice()),
                ("b_qd", vec![p.b_qd.rows(), p.b_qd.cols()], p.b_qd.as_slice()),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            PointParams::Rasch(p) => vec![&mut p.b_s[..], &mut p.b_q[..]],
            PointParams::Interaction(p) => vec![
                &mut p.b_s0[..],
                &mut p.b_q0[..],
                p.b_sd.as_mut_slice(),
                p.b_qd.as_mut_slice(),
            ],
            PointParams::ClassInteraction(p) => vec![
                &mut p.b_s0[..],
                &mut p.b_q0[..],
                p.b_cd.as_mut_slice(),
                p.b_qd.as_mut_slice(),
            ],
        }
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    /// Logit for one cell. `class_of` is only consulted by the class model.
    pub fn logit(&self, s: usize, q: usize, class_of: &[usize]) -> Result<f64> {
        match self {
            PointParams::Rasch(p) => logit_rasch(p, s, q),
            PointParams::Interaction(p) => logit_interaction(p, s, q),
            PointParams::ClassInteraction(p) => logit_class_interaction(p, s, q, class_of),
        }
    }

    /// Unchecked logit for hot loops; indices must be valid.
    #[inline]
    pub(crate) fn logit_fast(&self, s: usize, q: usize, class_of: &[usize]) -> f64 {
        match self {
            PointParams::Rasch(p) => p.b_s[s] + p.b_q[q],
            PointParams::Interaction(p) => p.b_s0[s] + p.b_q0[q] + dot(p.b_sd.row(s), p.b_qd.row(q)),
            PointParams::ClassInteraction(p) => {
                p.b_s0[s] + p.b_q0[q] + dot(p.b_cd.row(class_of[s]), p.b_qd.row(q))
            }
        }
    }

    pub fn predict_prob(&self, s: usize, q: usize, class_of: &[usize]) -> Result<f64> {
        Ok(sigmoid(self.logit(s, q, class_of)?))
    }

    /// Checks that the parameters cover a dataset's index space.
    pub fn check_shape(&self, students: usize, questions: usize, classes: usize) -> Result<()> {
        if self.num_students() != students || self.num_questions() != questions {
            return Err(Error::Shape(format!(
                "parameters are {}x{}, data is {}x{}",
                self.num_students(),
                self.num_questions(),
                students,
                questions
            )));
        }
        if let Some(c) = self.num_classes() {
            if c != classes {
                return Err(Error::Shape(format!(
                    "parameters have {c} classes, data has {classes}"
                )));
            }
        }
        Ok(())
    }
}

/// Probability of a correct answer under any point model.
pub fn predict_prob(
    spec: ModelSpec,
    params: &PointParams,
    s: usize,
    q: usize,
    class_of: &[usize],
) -> Result<f64> {
    if params.kind() != spec.kind {
        return Err(Error::invalid(format!(
            "spec is {} but parameters are {}",
            spec.kind,
            params.kind()
        )));
    }
    params.predict_prob(s, q, class_of)
}

/// 1 iff `p >= threshold`; ties predict a correct answer.
#[inline]
pub fn predict_label(p: f64, threshold: f64) -> u8 {
    u8::from(p >= threshold)
}
