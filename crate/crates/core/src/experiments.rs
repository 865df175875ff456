//! Multi-step experiment recipes on synthetic data.
//!
//! Each recipe fixes its seeds, runs every model on identical splits and
//! returns long-form rows (model, dataset, students, seed, accuracy) that
//! can be written as one comparison table.

use std::io::Write;

use log::info;
use serde::{Deserialize, Serialize};

use crate::active::{pool_abilities, run_active_loop, ActiveConfig, LearningCurve, Policy, PoolState};
use crate::data::{split_train_test, subsample_students, Dataset};
use crate::error::{Error, Result};
use crate::eval::{accuracy, evaluate_point, evaluate_vi, MetricsReport};
use crate::models::ModelSpec;
use crate::optim::{sgd_train, TrainConfig};
use crate::synth::{generate_synthetic, SynthConfig, SynthTruth};
use crate::vi::{train_vi, PredictMode, VIConfig, ViKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub dataset: String,
    pub students: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub n: usize,
}

impl TableRow {
    fn new(model: &str, dataset: &str, students: usize, seed: u64, m: &MetricsReport) -> Self {
        TableRow {
            model: model.to_owned(),
            dataset: dataset.to_owned(),
            students,
            seed,
            accuracy: m.accuracy,
            correct: m.correct,
            n: m.n,
        }
    }
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub dataset: String,
    pub students: usize,
    pub seeds: usize,
    pub mean_accuracy: f64,
}

/// Mean accuracy per (model, dataset) in first-appearance order.
pub fn summarize(rows: &[TableRow]) -> Vec<SummaryRow> {
    let mut out: Vec<(SummaryRow, f64)> = Vec::new();
    for r in rows {
        match out
            .iter_mut()
            .find(|(s, _)| s.model == r.model && s.dataset == r.dataset)
        {
            Some((s, sum)) => {
                s.seeds += 1;
                *sum += r.accuracy;
            }
            None => out.push((
                SummaryRow {
                    model: r.model.clone(),
                    dataset: r.dataset.clone(),
                    students: r.students,
                    seeds: 1,
                    mean_accuracy: 0.0,
                },
                r.accuracy,
            )),
        }
    }
    out.into_iter()
        .map(|(mut s, sum)| {
            s.mean_accuracy = sum / s.seeds as f64;
            s
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Accuracy of the generating probabilities on `data`: the best any model
/// can do in expectation.
pub fn truth_metrics(truth: &SynthTruth, data: &Dataset, threshold: f64) -> Result<MetricsReport> {
    let preds: Vec<f64> = data
        .responses()
        .iter()
        .map(|r| truth.prob(r.student, r.question))
        .collect();
    let labels: Vec<u8> = data.responses().iter().map(|r| r.y).collect();
    accuracy(&preds, &labels, threshold)
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.clone()
    }
}

/// Rasch and interaction models fitted to data drawn from the interaction
/// model, one fresh dataset and split per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub synth: SynthConfig,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub interaction_dims: usize,
    pub train: TrainConfig,
    pub threshold: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            synth: SynthConfig::default(),
            seeds: (0..5).collect(),
            test_fraction: 0.2,
            interaction_dims: 1,
            // MAP under the generating N(0, 1) prior on student latents.
            train: TrainConfig {
                l2_penalty: 1.0,
                ..TrainConfig::default()
            },
            threshold: 0.5,
        }
    }
}

/// Rows for `rasch`, `interaction` and `truth` per seed.
pub fn recovery(cfg: &RecoveryConfig) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    let dataset = format!("synthetic-{}", cfg.synth.students);
    for &seed in &cfg.seeds {
        let (data, truth) = generate_synthetic(&SynthConfig {
            seed,
            ..cfg.synth.clone()
        })?;
        let split = split_train_test(&data, cfg.test_fraction, seed)?;
        let s = data.num_students();
        let tc = with_seed(&cfg.train, seed);
        let (rasch, _) = sgd_train(ModelSpec::rasch(), &split.train, &tc, None)?;
        let m = evaluate_point(&rasch, &split.test, cfg.threshold)?;
        rows.push(TableRow::new("rasch", &dataset, s, seed, &m));
        let (inter, _) =
            sgd_train(ModelSpec::interaction(cfg.interaction_dims), &split.train, &tc, None)?;
        let m = evaluate_point(&inter, &split.test, cfg.threshold)?;
        rows.push(TableRow::new("interaction", &dataset, s, seed, &m));
        let m = truth_metrics(&truth, &split.test, cfg.threshold)?;
        rows.push(TableRow::new("truth", &dataset, s, seed, &m));
        info!(
            "recovery seed {seed}: rasch {:.4} interaction {:.4} truth {:.4}",
            rows[rows.len() - 3].accuracy,
            rows[rows.len() - 2].accuracy,
            m.accuracy
        );
    }
    Ok(rows)
}

/// Class interaction point model against its variational counterpart,
/// warm-started from it, on student subsamples of class-structured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowDataConfig {
    pub synth: SynthConfig,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub dims: usize,
    pub point: TrainConfig,
    pub vi: VIConfig,
    pub predict: PredictMode,
    pub threshold: f64,
}

impl Default for LowDataConfig {
    fn default() -> Self {
        LowDataConfig {
            synth: SynthConfig {
                students: 6000,
                questions: 24,
                dims: 4,
                mean_bq: 0.0,
                std_xs: 0.5,
                num_classes: 300,
                class_effect_std: 1.0,
                ..SynthConfig::default()
            },
            fractions: vec![1.0, 0.5, 0.25, 0.15],
            seeds: (0..5).collect(),
            test_fraction: 0.2,
            dims: 18,
            point: TrainConfig::default(),
            vi: VIConfig::default(),
            predict: PredictMode::PlugInMean,
            threshold: 0.5,
        }
    }
}

/// Rows for `class-interaction` and `class-interaction-vi` per fraction and
/// seed; the dataset column is the percentage kept.
///
/// With `data` the sweep runs on that dataset (subsample and split vary by
/// seed); otherwise each seed draws fresh synthetic data from `cfg.synth`.
pub fn low_data_sweep(cfg: &LowDataConfig, data: Option<&Dataset>) -> Result<Vec<TableRow>> {
    if data.is_none() && cfg.synth.num_classes == 0 {
        return Err(Error::invalid("the low-data sweep needs class-structured data"));
    }
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let full = match data {
            Some(d) => d.clone(),
            None => {
                generate_synthetic(&SynthConfig {
                    seed,
                    ..cfg.synth.clone()
                })?
                .0
            }
        };
        for &fraction in &cfg.fractions {
            let data = subsample_students(&full, fraction, seed)?;
            let split = split_train_test(&data, cfg.test_fraction, seed)?;
            let dataset = format!("{}%", (fraction * 100.0).round());
            let s = data.num_students();
            let (ci, _) = sgd_train(
                ModelSpec::class_interaction(cfg.dims),
                &split.train,
                &with_seed(&cfg.point, seed),
                None,
            )?;
            let m_ci = evaluate_point(&ci, &split.test, cfg.threshold)?;
            let vc = VIConfig {
                dims: cfg.dims,
                seed,
                ..cfg.vi.clone()
            };
            let (civi, _) = train_vi(ViKind::ClassInteractionVi, &split.train, &vc, Some(&ci))?;
            let m_vi = evaluate_vi(&civi, &split.test, cfg.predict, cfg.threshold)?;
            info!(
                "low-data {dataset} seed {seed}: class-interaction {:.4} class-interaction-vi {:.4}",
                m_ci.accuracy, m_vi.accuracy
            );
            rows.push(TableRow::new("class-interaction", &dataset, s, seed, &m_ci));
            rows.push(TableRow::new("class-interaction-vi", &dataset, s, seed, &m_vi));
        }
    }
    Ok(rows)
}

/// Uncertainty against random querying for a pool of new students.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveExperimentConfig {
    /// Base students plus pool students.
    pub synth: SynthConfig,
    pub pool_size: usize,
    pub holdout_fraction: f64,
    pub seeds: Vec<u64>,
    /// Policy and seed are set per run.
    pub active: ActiveConfig,
}

impl Default for ActiveExperimentConfig {
    fn default() -> Self {
        ActiveExperimentConfig {
            synth: SynthConfig {
                students: 3000,
                questions: 70,
                dims: 0,
                mean_bq: 0.0,
                std_bq: 1.5,
                ..SynthConfig::default()
            },
            pool_size: 2000,
            holdout_fraction: 0.2,
            seeds: (0..5).collect(),
            // 70 questions less the 14 held out per student
            active: ActiveConfig {
                rounds: 56,
                ..ActiveConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRun {
    pub seed: u64,
    pub uncertainty: LearningCurve,
    pub random: LearningCurve,
    /// True abilities of the pool students, in curve order.
    pub abilities: Vec<f64>,
}

pub fn active_vs_random(cfg: &ActiveExperimentConfig) -> Result<Vec<ActiveRun>> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let (data, truth) = generate_synthetic(&SynthConfig {
            seed,
            ..cfg.synth.clone()
        })?;
        let state = PoolState::from_dataset(&data, cfg.pool_size, cfg.holdout_fraction, seed)?;
        let run = |policy| {
            run_active_loop(
                &state,
                &ActiveConfig {
                    policy,
                    seed,
                    retrain: with_seed(&cfg.active.retrain, seed),
                    ..cfg.active.clone()
                },
            )
        };
        let uncertainty = run(Policy::Uncertainty)?;
        let random = run(Policy::Random)?;
        info!(
            "active seed {seed}: at 10 revealed uncertainty {:?} random {:?}",
            uncertainty.at(10),
            random.at(10)
        );
        let abilities = pool_abilities(&uncertainty, &truth.b_s);
        runs.push(ActiveRun {
            seed,
            uncertainty,
            random,
            abilities,
        });
    }
    Ok(runs)
}

/// Both curves of every run, one CSV.
pub fn write_curves_csv<W: Write>(runs: &[ActiveRun], mut writer: W) -> Result<()> {
    let mut first = true;
    for run in runs {
        for curve in [&run.uncertainty, &run.random] {
            curve.write_csv(&mut writer, first)?;
            first = false;
        }
    }
    Ok(())
}
