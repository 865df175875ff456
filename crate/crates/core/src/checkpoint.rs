//! Parameter checkpoints as JSON: one record per tensor (name, shape,
//! row-major values) alongside the model kind, dimension and id tables, so
//! any language can read them back.
//!
//! Variational checkpoints store `(mu, sigma)` tensor pairs. They also carry
//! the unconstrained `sigma_raw` so that Rust round-trips are bit-exact;
//! readers that only know `sigma` may ignore it.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{BinaryResponse, Dataset, IdTables, Interner, LabelledRow};
use crate::error::{Error, Result};
use crate::models::{
    ClassInteractionParams, InteractionParams, Matrix, ModelKind, PointParams, RaschParams,
};
use crate::vi::{softplus_inv, GaussianVariational, VIParams, ViKind};

pub const FORMAT: &str = "irtvi-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdRecord {
    pub students: Vec<String>,
    pub questions: Vec<String>,
    pub classes: Vec<String>,
    /// Class index per student.
    pub class_of: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    format: String,
    version: u32,
    model_kind: String,
    dims: usize,
    ids: IdRecord,
    tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Point(PointParams),
    Vi(VIParams),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Point(p) => p.kind().as_str(),
            Model::Vi(v) => v.kind.as_str(),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Model::Point(p) => p.spec().dims,
            Model::Vi(v) => v.dims,
        }
    }

    /// Point estimate used for prediction and interpretation; posterior
    /// means for variational models.
    pub fn point(&self) -> PointParams {
        match self {
            Model::Point(p) => p.clone(),
            Model::Vi(v) => v.mean_point(),
        }
    }
}

/// A model together with the id tables it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub ids: IdRecord,
}

fn tensor(name: &str, shape: Vec<usize>, values: Vec<f64>) -> Tensor {
    Tensor {
        name: name.to_owned(),
        shape,
        values,
    }
}

impl Checkpoint {
    /// Pairs a model with a dataset's id tables.
    pub fn new(model: Model, data: &Dataset) -> Result<Checkpoint> {
        let ids = data.ids();
        let ck = Checkpoint {
            model,
            ids: IdRecord {
                students: ids.students.names().to_vec(),
                questions: ids.questions.names().to_vec(),
                classes: ids.classes.names().to_vec(),
                class_of: data.class_of().to_vec(),
            },
        };
        ck.validate()?;
        Ok(ck)
    }

    fn tensors(&self) -> Vec<Tensor> {
        match &self.model {
            Model::Point(p) => p
                .tensors()
                .into_iter()
                .map(|(name, shape, values)| tensor(name, shape, values.to_vec()))
                .collect(),
            Model::Vi(v) => {
                let (s, rows, d, q) = (v.student.len(), v.skill_rows, v.dims, v.b_q.len());
                let col = |g: &[GaussianVariational], f: fn(&GaussianVariational) -> f64| {
                    g.iter().map(f).collect::<Vec<f64>>()
                };
                vec![
                    tensor("student_mu", vec![s], col(&v.student, |g| g.mu)),
                    tensor("student_sigma", vec![s], col(&v.student, |g| g.sigma())),
                    tensor("student_sigma_raw", vec![s], col(&v.student, |g| g.sigma_raw)),
                    tensor("skill_mu", vec![rows, d], col(&v.skill, |g| g.mu)),
                    tensor("skill_sigma", vec![rows, d], col(&v.skill, |g| g.sigma())),
                    tensor("skill_sigma_raw", vec![rows, d], col(&v.skill, |g| g.sigma_raw)),
                    tensor("b_q", vec![q], v.b_q.clone()),
                    tensor("b_qd", vec![q, d], v.b_qd.as_slice().to_vec()),
                ]
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let record = Record {
            format: FORMAT.to_owned(),
            version: VERSION,
            model_kind: self.model.kind_name().to_owned(),
            dims: self.model.dims(),
            ids: self.ids.clone(),
            tensors: self.tensors(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let record: Record = serde_json::from_str(text)?;
        if record.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", record.format)));
        }
        if record.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", record.version)));
        }
        let model = if let Ok(kind) = record.model_kind.parse::<ModelKind>() {
            Model::Point(point_from_tensors(kind, record.dims, &record.tensors)?)
        } else if let Ok(kind) = record.model_kind.parse::<ViKind>() {
            Model::Vi(vi_from_tensors(kind, record.dims, &record.tensors)?)
        } else {
            return Err(Error::Checkpoint(format!("unknown model kind {:?}", record.model_kind)));
        };
        let ck = Checkpoint {
            model,
            ids: record.ids,
        };
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    /// Tensor shapes agree with the id tables.
    pub fn validate(&self) -> Result<()> {
        let ids = &self.ids;
        let (s, q, c) = (ids.students.len(), ids.questions.len(), ids.classes.len());
        if ids.class_of.len() != s || ids.class_of.iter().any(|&k| k >= c) {
            return Err(Error::Checkpoint("class_of disagrees with the id tables".into()));
        }
        let ok = match &self.model {
            Model::Point(p) => p.check_shape(s, q, c).is_ok(),
            Model::Vi(v) => {
                let rows = match v.kind {
                    ViKind::RaschVi => 0,
                    ViKind::InteractionVi => s,
                    ViKind::ClassInteractionVi => c,
                };
                v.student.len() == s
                    && v.b_q.len() == q
                    && v.skill_rows == rows
                    && v.skill.len() == rows * v.dims
                    && v.b_qd.rows() == q
                    && v.b_qd.cols() == v.dims
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "{} tensors do not match {s} students, {q} questions, {c} classes",
                self.model.kind_name()
            )))
        }
    }

    /// Id tables as an index space for new data.
    pub fn id_tables(&self) -> Result<IdTables> {
        Ok(IdTables {
            students: Interner::from_names(self.ids.students.clone())?,
            questions: Interner::from_names(self.ids.questions.clone())?,
            classes: Interner::from_names(self.ids.classes.clone())?,
        })
    }

    /// Maps labelled rows into this checkpoint's index space. Rows naming a
    /// student or question the model has never seen are an error.
    pub fn align(&self, rows: &[LabelledRow]) -> Result<Dataset> {
        let ids = self.id_tables()?;
        let mut responses = Vec::with_capacity(rows.len());
        for row in rows {
            let s = ids.students.get(&row.student_id).ok_or_else(|| {
                Error::Dataset(format!("student {:?} is not in the checkpoint", row.student_id))
            })?;
            let q = ids.questions.get(&row.question_id).ok_or_else(|| {
                Error::Dataset(format!("question {:?} is not in the checkpoint", row.question_id))
            })?;
            responses.push(BinaryResponse {
                student: s,
                question: q,
                y: row.y,
            });
        }
        let (s, q, c) = (ids.students.len(), ids.questions.len(), ids.classes.len());
        Dataset::from_parts(responses, s, q, self.ids.class_of.clone(), c, Arc::new(ids))
    }
}

fn find<'a>(tensors: &'a [Tensor], name: &str, shape: &[usize]) -> Result<&'a [f64]> {
    let t = tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))?;
    let n: usize = t.shape.iter().product();
    if t.values.len() != n {
        return Err(Error::Checkpoint(format!(
            "tensor {name:?} has {} values for shape {:?}",
            t.values.len(),
            t.shape
        )));
    }
    if !shape.is_empty() && t.shape != shape {
        return Err(Error::Checkpoint(format!(
            "tensor {name:?} has shape {:?}, expected {shape:?}",
            t.shape
        )));
    }
    Ok(&t.values)
}

fn shape_of(tensors: &[Tensor], name: &str) -> Result<Vec<usize>> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .map(|t| t.shape.clone())
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
}

fn vector(tensors: &[Tensor], name: &str) -> Result<Vec<f64>> {
    let shape = shape_of(tensors, name)?;
    if shape.len() != 1 {
        return Err(Error::Checkpoint(format!("tensor {name:?} must be 1-D")));
    }
    Ok(find(tensors, name, &shape)?.to_vec())
}

fn matrix(tensors: &[Tensor], name: &str, dims: usize) -> Result<Matrix> {
    let shape = shape_of(tensors, name)?;
    if shape.len() != 2 || shape[1] != dims {
        return Err(Error::Checkpoint(format!(
            "tensor {name:?} has shape {shape:?}, expected [_, {dims}]"
        )));
    }
    Matrix::from_vec(shape[0], shape[1], find(tensors, name, &shape)?.to_vec())
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

fn point_from_tensors(kind: ModelKind, dims: usize, t: &[Tensor]) -> Result<PointParams> {
    Ok(match kind {
        ModelKind::Rasch => PointParams::Rasch(RaschParams {
            b_s: vector(t, "b_s")?,
            b_q: vector(t, "b_q")?,
        }),
        ModelKind::Interaction => PointParams::Interaction(InteractionParams {
            b_s0: vector(t, "b_s0")?,
            b_q0: vector(t, "b_q0")?,
            b_sd: matrix(t, "b_sd", dims)?,
            b_qd: matrix(t, "b_qd", dims)?,
        }),
        ModelKind::ClassInteraction => PointParams::ClassInteraction(ClassInteractionParams {
            b_s0: vector(t, "b_s0")?,
            b_q0: vector(t, "b_q0")?,
            b_cd: matrix(t, "b_cd", dims)?,
            b_qd: matrix(t, "b_qd", dims)?,
        }),
    })
}

/// `(mu, sigma)` pairs, preferring the exact `sigma_raw` when present.
fn gaussians(t: &[Tensor], prefix: &str, shape: &[usize]) -> Result<Vec<GaussianVariational>> {
    let mu = find(t, &format!("{prefix}_mu"), shape)?;
    let raw_name = format!("{prefix}_sigma_raw");
    let raw: Vec<f64> = if t.iter().any(|x| x.name == raw_name) {
        find(t, &raw_name, shape)?.to_vec()
    } else {
        let sigma = find(t, &format!("{prefix}_sigma"), shape)?;
        if let Some(bad) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Checkpoint(format!("{prefix}_sigma contains {bad}")));
        }
        sigma.iter().map(|&s| softplus_inv(s)).collect()
    };
    Ok(mu
        .iter()
        .zip(raw)
        .map(|(&mu, sigma_raw)| GaussianVariational { mu, sigma_raw })
        .collect())
}

fn vi_from_tensors(kind: ViKind, dims: usize, t: &[Tensor]) -> Result<VIParams> {
    let s = shape_of(t, "student_mu")?;
    let skill_shape = shape_of(t, "skill_mu")?;
    if s.len() != 1 || skill_shape.len() != 2 || skill_shape[1] != dims {
        return Err(Error::Checkpoint("malformed variational tensors".into()));
    }
    Ok(VIParams {
        kind,
        student: gaussians(t, "student", &s)?,
        skill: gaussians(t, "skill", &skill_shape)?,
        skill_rows: skill_shape[0],
        dims,
        b_q: vector(t, "b_q")?,
        b_qd: matrix(t, "b_qd", dims)?,
    })
}
