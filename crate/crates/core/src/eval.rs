//! Classification metrics, the two-proportion z-test and cosine similarity
//! of question embeddings.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{predict_label, Matrix, PointParams};
use crate::vi::{predict_prob_vi, PredictMode, VIParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `tp / (tp + fp)`; 0 when nothing is predicted positive.
    pub precision: f64,
    /// `tp / (tp + fn)`; 0 when there are no positive labels.
    pub recall: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub threshold: f64,
}

/// Thresholded accuracy with precision and recall at the same threshold.
pub fn accuracy(preds: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        match (predict_label(p, threshold), y) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let n = preds.len();
    Ok(MetricsReport {
        n,
        correct: tp + tn,
        accuracy: ratio(tp + tn, n),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        true_positive: tp,
        false_positive: fp,
        true_negative: tn,
        false_negative: fneg,
        threshold,
    })
}

fn labels(data: &Dataset) -> Vec<u8> {
    data.responses().iter().map(|r| r.y).collect()
}

/// Metrics of a point model on every response in `data`.
pub fn evaluate_point(params: &PointParams, data: &Dataset, threshold: f64) -> Result<MetricsReport> {
    let preds = data
        .responses()
        .iter()
        .map(|r| params.predict_prob(r.student, r.question, data.class_of()))
        .collect::<Result<Vec<f64>>>()?;
    accuracy(&preds, &labels(data), threshold)
}

/// Metrics of a variational model on every response in `data`.
pub fn evaluate_vi(
    params: &VIParams,
    data: &Dataset,
    mode: PredictMode,
    threshold: f64,
) -> Result<MetricsReport> {
    let preds = data
        .responses()
        .iter()
        .map(|r| predict_prob_vi(params, r.student, r.question, data.class_of(), mode))
        .collect::<Result<Vec<f64>>>()?;
    accuracy(&preds, &labels(data), threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTestResult {
    pub p1: f64,
    pub p2: f64,
    /// Pooled proportion.
    pub p_hat: f64,
    pub se: f64,
    /// `(p2 - p1) / se`
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
    pub alphas: Vec<f64>,
    /// The subset of `alphas` at which the difference is significant.
    pub significant_at: Vec<f64>,
}

/// Standard normal upper-tail probability doubled.
fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Pooled two-proportion z-test of `x2/n2` against `x1/n1`.
pub fn two_proportion_z_test(x1: u64, n1: u64, x2: u64, n2: u64, alphas: &[f64]) -> Result<ZTestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("sample sizes must be at least 1"));
    }
    if x1 > n1 || x2 > n2 {
        return Err(Error::invalid("successes exceed sample size"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::invalid(format!("alpha {a} outside (0, 1)")));
    }
    let (x1f, n1f, x2f, n2f) = (x1 as f64, n1 as f64, x2 as f64, n2 as f64);
    let p_hat = (x1f + x2f) / (n1f + n2f);
    if p_hat <= 0.0 || p_hat >= 1.0 {
        return Err(Error::invalid(
            "pooled proportion is 0 or 1; the standard error is degenerate",
        ));
    }
    let se = (p_hat * (1.0 - p_hat) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let (p1, p2) = (x1f / n1f, x2f / n2f);
    let z = (p2 - p1) / se;
    let p_value = two_sided_p(z);
    let significant_at = alphas.iter().copied().filter(|&a| p_value < a).collect();
    Ok(ZTestResult {
        p1,
        p2,
        p_hat,
        se,
        z,
        p_value,
        alphas: alphas.to_vec(),
        significant_at,
    })
}

/// Pairwise cosine similarity between question vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    /// Q x Q
    pub values: Matrix,
    pub question_ids: Vec<String>,
    /// Rows that were all zero; their off-diagonal similarities are 0.
    pub zero_rows: Vec<usize>,
    /// True once the off-diagonal range has been min–max rescaled for display.
    pub display_rescaled: bool,
}

pub fn cosine_similarity_matrix(vectors: &Matrix, question_ids: &[String]) -> Result<SimilarityMatrix> {
    let q = vectors.rows();
    if question_ids.len() != q {
        return Err(Error::Shape(format!("{} ids for {} vectors", question_ids.len(), q)));
    }
    let mut unit = Vec::with_capacity(q);
    let mut zero_rows = Vec::new();
    for i in 0..q {
        let row = vectors.row(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
            unit.push(None);
        } else {
            unit.push(Some(row.iter().map(|v| v / norm).collect::<Vec<f64>>()));
        }
    }
    if !zero_rows.is_empty() {
        warn!("{} all-zero question vectors; their similarities are set to 0", zero_rows.len());
    }
    let mut values = Matrix::zeros(q, q);
    for i in 0..q {
        values.row_mut(i)[i] = 1.0;
        for j in (i + 1)..q {
            let v = match (&unit[i], &unit[j]) {
                (Some(a), Some(b)) => crate::models::dot(a, b).clamp(-1.0, 1.0),
                _ => 0.0,
            };
            values.row_mut(i)[j] = v;
            values.row_mut(j)[i] = v;
        }
    }
    Ok(SimilarityMatrix {
        values,
        question_ids: question_ids.to_vec(),
        zero_rows,
        display_rescaled: false,
    })
}

impl SimilarityMatrix {
    /// Copy with off-diagonal entries min–max mapped onto [0, 1]. For
    /// heatmaps only.
    pub fn display_rescale(&self) -> SimilarityMatrix {
        let q = self.values.rows();
        let off: Vec<f64> = (0..q)
            .flat_map(|i| (0..q).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.values.row(i)[j])
            .collect();
        let lo = off.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = self.clone();
        out.display_rescaled = true;
        if off.is_empty() {
            return out;
        }
        let span = hi - lo;
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    let v = self.values.row(i)[j];
                    out.values.row_mut(i)[j] = if span > 0.0 { (v - lo) / span } else { 0.0 };
                }
            }
        }
        out
    }

    /// Q x Q CSV with a question-id header row and first column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["question_id".to_owned()];
        header.extend(self.question_ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.question_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("q{i}")).collect()
    }

    #[test]
    fn accuracy_examples() {
        let r = accuracy(&[0.6, 0.4, 0.7], &[1, 0, 0], 0.5).unwrap();
        assert_eq!(r.correct, 2);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);

        let r = accuracy(&[0.9, 0.1, 0.8], &[1, 0, 1], 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);

        let r = accuracy(&[0.9; 4], &[1; 4], 0.5).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 1.0));

        assert!(accuracy(&[], &[], 0.5).is_err());
        assert!(accuracy(&[0.5], &[1, 0], 0.5).is_err());
    }

    #[test]
    fn z_test_identical_proportions() {
        let r = two_proportion_z_test(40, 100, 40, 100, &[0.05]).unwrap();
        assert_eq!(r.z, 0.0);
        assert!(r.significant_at.is_empty());
        assert!((r.p_value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn z_test_degenerate_and_bad_input() {
        assert!(two_proportion_z_test(0, 10, 0, 10, &[]).is_err());
        assert!(two_proportion_z_test(10, 10, 10, 10, &[]).is_err());
        assert!(two_proportion_z_test(11, 10, 1, 10, &[]).is_err());
        assert!(two_proportion_z_test(1, 0, 1, 10, &[]).is_err());
        assert!(two_proportion_z_test(1, 10, 2, 10, &[1.5]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 3.0], vec![2.0, 2.0]]).unwrap();
        let s = cosine_similarity_matrix(&m, &ids(4)).unwrap();
        assert!((s.values.row(0)[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(s.values.row(1)[2], 0.0);
        assert!((s.values.row(0)[3] - 1.0).abs() < 1e-15);
        assert!(s.zero_rows.is_empty());
    }

    #[test]
    fn zero_rows_flagged() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let s = cosine_similarity_matrix(&m, &ids(2)).unwrap();
        assert_eq!(s.zero_rows, vec![0]);
        assert_eq!(s.values.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn display_rescale_maps_off_diagonal() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let s = cosine_similarity_matrix(&m, &ids(3)).unwrap().display_rescale();
        assert!(s.display_rescaled);
        assert_eq!(s.values.row(0)[1], 0.0);
        assert_eq!(s.values.row(0)[2], 1.0);
        assert_eq!(s.values.row(2)[2], 1.0);
    }

    #[test]
    fn csv_has_id_header() {
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let s = cosine_similarity_matrix(&m, &["a".into(), "b".into()]).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "question_id,a,b");
        assert_eq!(text.lines().nth(2).unwrap(), "b,1,1");
    }

    proptest! {
        #[test]
        fn accuracy_permutation_invariant(pairs in proptest::collection::vec((0.0f64..1.0, 0u8..2), 1..40), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let (p, y): (Vec<f64>, Vec<u8>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::rng::rng(seed, 0));
            let (ps, ys): (Vec<f64>, Vec<u8>) = shuffled.into_iter().unzip();
            prop_assert_eq!(accuracy(&p, &y, 0.5).unwrap(), accuracy(&ps, &ys, 0.5).unwrap());
        }

        #[test]
        fn z_antisymmetric(x1 in 1u64..500, x2 in 1u64..500, extra1 in 1u64..500, extra2 in 1u64..500) {
            let (n1, n2) = (x1 + extra1, x2 + extra2);
            let a = two_proportion_z_test(x1, n1, x2, n2, &[]).unwrap();
            let b = two_proportion_z_test(x2, n2, x1, n1, &[]).unwrap();
            prop_assert_eq!(a.z, -b.z);
        }

        #[test]
        fn similarity_structure(rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 2..8), scale in 0.01f64..100.0, which in 0usize..8) {
            prop_assume!(rows.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
            let m = Matrix::from_rows(&rows).unwrap();
            let n = rows.len();
            let s = cosine_similarity_matrix(&m, &ids(n)).unwrap();
            for i in 0..n {
                prop_assert_eq!(s.values.row(i)[i], 1.0);
                for j in 0..n {
                    prop_assert_eq!(s.values.row(i)[j], s.values.row(j)[i]);
                    prop_assert!((-1.0..=1.0).contains(&s.values.row(i)[j]));
                }
            }
            let k = which % n;
            let mut scaled = rows.clone();
            scaled[k].iter_mut().for_each(|v| *v *= scale);
            let t = cosine_similarity_matrix(&Matrix::from_rows(&scaled).unwrap(), &ids(n)).unwrap();
            for (a, b) in s.values.as_slice().iter().zip(t.values.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
