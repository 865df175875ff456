//! Pool-based active learning for new students.
//!
//! New students arrive with no answers. Each round reveals a few of their
//! answers per student, chosen either by uncertainty (the question whose
//! predicted probability is closest to 0.5) or uniformly at random, and the
//! ability–difficulty model is retrained warm on everything revealed so far.

use std::io::Write;

use log::{info, warn};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{BinaryResponse, Dataset};
use crate::error::{Error, Result};
use crate::models::{predict_label, sigmoid, ModelSpec, PointParams};
use crate::optim::{sgd_train, TrainConfig};
use crate::rng;

/// Candidates whose distance from 0.5 is within this of the best count as
/// tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Uncertainty,
    Random,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Uncertainty => "uncertainty",
            Policy::Random => "random",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty" => Ok(Policy::Uncertainty),
            "random" => Ok(Policy::Random),
            other => Err(Error::invalid(format!("unknown policy {other:?}"))),
        }
    }
}

/// The question whose probability is closest to 0.5 among those not yet
/// revealed; ties go to the lowest question index.
pub fn select_next(probabilities: &[(usize, f64)], already_revealed: &[usize]) -> Result<usize> {
    let open = || {
        probabilities
            .iter()
            .filter(|(q, _)| !already_revealed.contains(q))
    };
    let best = open()
        .map(|(_, p)| (p - 0.5).abs())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::invalid("no unrevealed question left to select"));
    }
    Ok(open()
        .filter(|(_, p)| (p - 0.5).abs() <= best + TIE_TOL)
        .map(|(q, _)| *q)
        .min()
        .expect("at least one candidate attains the minimum"))
}

/// Labelled base students plus a pool of new students whose answers are
/// split into revealed, hidden (still queryable) and held-out test cells.
#[derive(Debug, Clone)]
pub struct PoolState {
    pub base: Dataset,
    pub pool_students: Vec<usize>,
    pub revealed: Vec<Vec<(usize, u8)>>,
    pub hidden: Vec<Vec<(usize, u8)>>,
    pub test_holdout: Vec<Vec<(usize, u8)>>,
}

impl PoolState {
    /// Moves `pool_size` random students with at least two answers into
    /// the pool and reserves `round(holdout_fraction * n)` of each one's
    /// answers (at least one, at most n − 1) for evaluation.
    pub fn from_dataset(
        d: &Dataset,
        pool_size: usize,
        holdout_fraction: f64,
        seed: u64,
    ) -> Result<PoolState> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must be in (0, 1)"));
        }
        let index = d.by_student();
        let eligible: Vec<usize> = (0..d.num_students())
            .filter(|&s| index.of(s).len() >= 2)
            .collect();
        if pool_size == 0 || pool_size > eligible.len() {
            return Err(Error::invalid(format!(
                "pool of {pool_size} requested, {} students have at least two answers",
                eligible.len()
            )));
        }
        let mut r = rng::rng(seed, rng::offset::POOL);
        let mut pool: Vec<usize> = index::sample(&mut r, eligible.len(), pool_size)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        pool.sort_unstable();
        let mut in_pool = vec![false; d.num_students()];
        for &s in &pool {
            in_pool[s] = true;
        }

        let mut hidden = Vec::with_capacity(pool.len());
        let mut holdout = Vec::with_capacity(pool.len());
        for &s in &pool {
            let mut cells: Vec<(usize, u8)> = index
                .of(s)
                .iter()
                .map(|&i| (d.responses()[i].question, d.responses()[i].y))
                .collect();
            cells.sort_unstable();
            cells.shuffle(&mut r);
            let n = cells.len();
            let k = ((holdout_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut test = cells.split_off(n - k);
            cells.sort_unstable();
            test.sort_unstable();
            hidden.push(cells);
            holdout.push(test);
        }
        let base_idx: Vec<usize> = (0..d.len())
            .filter(|&i| !in_pool[d.responses()[i].student])
            .collect();
        Ok(PoolState {
            base: d.select(&base_idx),
            revealed: vec![Vec::new(); pool.len()],
            pool_students: pool,
            hidden,
            test_holdout: holdout,
        })
    }

    /// Base responses plus every revealed pool answer, sorted by cell.
    pub fn training_data(&self) -> Result<Dataset> {
        let extra: Vec<BinaryResponse> = self
            .pool_students
            .iter()
            .zip(&self.revealed)
            .flat_map(|(&s, cells)| {
                cells.iter().map(move |&(q, y)| BinaryResponse {
                    student: s,
                    question: q,
                    y,
                })
            })
            .collect();
        Ok(self.base.extend(&extra)?.sorted())
    }

    /// Per pool student accuracy on the held-out cells.
    pub fn holdout_accuracy(&self, params: &PointParams, threshold: f64) -> Vec<f64> {
        let class_of = self.base.class_of();
        self.pool_students
            .iter()
            .zip(&self.test_holdout)
            .map(|(&s, cells)| {
                let hits = cells
                    .iter()
                    .filter(|&&(q, y)| {
                        predict_label(sigmoid(params.logit_fast(s, q, class_of)), threshold) == y
                    })
                    .count();
                hits as f64 / cells.len() as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    pub policy: Policy,
    /// Questions revealed per student per round.
    pub batch_size: usize,
    pub rounds: usize,
    /// Warm retraining after each round.
    pub retrain: TrainConfig,
    /// Epochs for the initial fit on the base students.
    pub initial_epochs: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        ActiveConfig {
            policy: Policy::Uncertainty,
            batch_size: 1,
            rounds: 70,
            retrain: TrainConfig {
                epochs: 5,
                convergence_tol: 0.0,
                ..TrainConfig::default()
            },
            initial_epochs: 50,
            threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub questions_revealed: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub policy: Policy,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
    pub pool_students: Vec<usize>,
    /// `per_student[round][i]`: accuracy of pool student `i` after that round.
    pub per_student: Vec<Vec<f64>>,
}

impl LearningCurve {
    /// Accuracy at `questions_revealed`, if that round was recorded.
    pub fn at(&self, questions_revealed: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.questions_revealed == questions_revealed)
            .map(|p| p.accuracy)
    }

    /// `questions_revealed,accuracy,policy,seed` rows.
    pub fn write_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        if header {
            w.write_record(["questions_revealed", "accuracy", "policy", "seed"])?;
        }
        for p in &self.points {
            w.write_record([
                p.questions_revealed.to_string(),
                p.accuracy.to_string(),
                self.policy.as_str().to_owned(),
                self.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the reveal–retrain loop, recording mean held-out accuracy over pool
/// students after the initial fit and after every round.
pub fn run_active_loop(state: &PoolState, cfg: &ActiveConfig) -> Result<LearningCurve> {
    if state.pool_students.is_empty() {
        return Err(Error::invalid("empty pool"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut state = state.clone();
    let spec = ModelSpec::rasch();
    let initial_cfg = TrainConfig {
        epochs: cfg.initial_epochs,
        seed: cfg.retrain.seed,
        ..cfg.retrain.clone()
    };
    let (mut params, _) = sgd_train(spec, &state.training_data()?, &initial_cfg, None)?;
    if let PointParams::Rasch(p) = &mut params {
        for &s in &state.pool_students {
            p.b_s[s] = 0.0;
        }
    }

    let max_hidden = state.hidden.iter().map(Vec::len).max().unwrap_or(0);
    let available_rounds = max_hidden.div_ceil(cfg.batch_size);
    let rounds = if cfg.rounds > available_rounds {
        warn!(
            "{} rounds requested but only {available_rounds} can reveal new answers; truncating",
            cfg.rounds
        );
        available_rounds
    } else {
        cfg.rounds
    };

    let mut policy_rng = rng::rng(cfg.seed, rng::offset::POLICY);
    let first = state.holdout_accuracy(&params, cfg.threshold);
    let mut points = vec![CurvePoint {
        questions_revealed: 0,
        accuracy: mean(&first),
    }];
    let mut per_student = vec![first];
    let class_of = state.base.class_of().to_vec();

    for round in 1..=rounds {
        for i in 0..state.pool_students.len() {
            let s = state.pool_students[i];
            let take = cfg.batch_size.min(state.hidden[i].len());
            let mut chosen: Vec<usize> = Vec::with_capacity(take);
            match cfg.policy {
                Policy::Uncertainty => {
                    let probs: Vec<(usize, f64)> = state.hidden[i]
                        .iter()
                        .map(|&(q, _)| (q, sigmoid(params.logit_fast(s, q, &class_of))))
                        .collect();
                    for _ in 0..take {
                        chosen.push(select_next(&probs, &chosen)?);
                    }
                }
                Policy::Random => {
                    chosen.extend(
                        index::sample(&mut policy_rng, state.hidden[i].len(), take)
                            .into_iter()
                            .map(|k| state.hidden[i][k].0),
                    );
                }
            }
            let hidden = std::mem::take(&mut state.hidden[i]);
            let (picked, rest): (Vec<_>, Vec<_>) =
                hidden.into_iter().partition(|(q, _)| chosen.contains(q));
            state.hidden[i] = rest;
            state.revealed[i].extend(picked);
        }
        let round_cfg = TrainConfig {
            seed: rng::mix(cfg.retrain.seed, round as u64),
            ..cfg.retrain.clone()
        };
        params = sgd_train(spec, &state.training_data()?, &round_cfg, Some(&params))?.0;
        let acc = state.holdout_accuracy(&params, cfg.threshold);
        let revealed = round * cfg.batch_size;
        info!(
            "{} round {round}: {revealed} revealed, accuracy {:.4}",
            cfg.policy.as_str(),
            mean(&acc)
        );
        points.push(CurvePoint {
            questions_revealed: revealed,
            accuracy: mean(&acc),
        });
        per_student.push(acc);
    }

    Ok(LearningCurve {
        policy: cfg.policy,
        seed: cfg.seed,
        points,
        pool_students: state.pool_students.clone(),
        per_student,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCurve {
    /// Inclusive lower bound (`-inf` for the first bucket).
    pub lower: f64,
    /// Exclusive upper bound (`inf` for the last bucket).
    pub upper: f64,
    /// Indices into the curve's pool.
    pub members: Vec<usize>,
    /// `None` when no pool student falls in the bucket.
    pub points: Option<Vec<CurvePoint>>,
}

/// Splits pool students by ability at `cut_points` (ascending) and averages
/// each bucket's per-student accuracies.
pub fn ability_bucket_report(
    curve: &LearningCurve,
    abilities: &[f64],
    cut_points: &[f64],
) -> Result<Vec<BucketCurve>> {
    if abilities.len() != curve.pool_students.len() {
        return Err(Error::Shape(format!(
            "{} abilities for {} pool students",
            abilities.len(),
            curve.pool_students.len()
        )));
    }
    if cut_points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("cut points must be strictly increasing"));
    }
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(cut_points);
    bounds.push(f64::INFINITY);
    Ok(bounds
        .windows(2)
        .map(|w| {
            let members: Vec<usize> = abilities
                .iter()
                .enumerate()
                .filter(|(_, &a)| a >= w[0] && a < w[1])
                .map(|(i, _)| i)
                .collect();
            let points = (!members.is_empty()).then(|| {
                curve
                    .points
                    .iter()
                    .zip(&curve.per_student)
                    .map(|(p, accs)| CurvePoint {
                        questions_revealed: p.questions_revealed,
                        accuracy: members.iter().map(|&i| accs[i]).sum::<f64>()
                            / members.len() as f64,
                    })
                    .collect()
            });
            BucketCurve {
                lower: w[0],
                upper: w[1],
                members,
                points,
            }
        })
        .collect())
}

/// Cut points at the 1/3 and 2/3 empirical quantiles.
pub fn tertile_cuts(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return Vec::new();
    }
    let at = |f: f64| v[((f * v.len() as f64) as usize).min(v.len() - 1)];
    let (a, b) = (at(1.0 / 3.0), at(2.0 / 3.0));
    if a < b {
        vec![a, b]
    } else {
        vec![a]
    }
}

/// Pool students' abilities from a synthetic truth or a fitted model.
pub fn pool_abilities(curve: &LearningCurve, ability_of: &[f64]) -> Vec<f64> {
    curve.pool_students.iter().map(|&s| ability_of[s]).collect()
}
