//! Response ingestion: raw marks, binarization, id interning, splits and
//! student subsampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Class label used when a raw row carries an empty class id.
pub const NO_CLASS: &str = "__none__";

pub const RAW_HEADER: [&str; 5] = [
    "student_id",
    "question_id",
    "class_id",
    "marks_awarded",
    "marks_available",
];
pub const BINARY_HEADER: [&str; 4] = ["student_id", "question_id", "class_id", "y"];

/// Input CSV layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvFormat {
    Raw,
    Binary,
}

/// A marked response before binarization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub student_id: String,
    pub question_id: String,
    pub class_id: String,
    pub marks_awarded: u32,
    pub marks_available: u32,
}

/// 1 iff the student scored strictly more than half the available marks.
pub fn binarize(r: &RawResponse) -> u8 {
    u8::from(2 * u64::from(r.marks_awarded) > u64::from(r.marks_available))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryResponse {
    pub student: usize,
    pub question: usize,
    pub y: u8,
}

/// A row of the pre-binarized schema, ids still opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledRow {
    pub student_id: String,
    pub question_id: String,
    pub class_id: String,
    pub y: u8,
}

impl From<&RawResponse> for LabelledRow {
    fn from(r: &RawResponse) -> Self {
        LabelledRow {
            student_id: r.student_id.clone(),
            question_id: r.question_id.clone(),
            class_id: r.class_id.clone(),
            y: binarize(r),
        }
    }
}

/// Interning table between opaque ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Interner {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if lookup.insert(n.clone(), i).is_some() {
                return Err(Error::Dataset(format!("duplicate id {n:?} in id table")));
            }
        }
        Ok(Interner { names, lookup })
    }

    /// Generated names `prefix0, prefix1, ...`.
    pub fn sequential(prefix: &str, n: usize) -> Self {
        let names = (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::from_names(names).expect("sequential names are unique")
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.lookup.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Id tables plus the student → class map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdTables {
    pub students: Interner,
    pub questions: Interner,
    pub classes: Interner,
}

/// Sparse set of binary responses over dense student/question/class indices.
///
/// Immutable once built; train/test splits and subsamples are new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    responses: Vec<BinaryResponse>,
    num_students: usize,
    num_questions: usize,
    num_classes: usize,
    class_of: Vec<usize>,
    ids: Arc<IdTables>,
}

impl Dataset {
    /// Assembles a dataset, checking every index against its count and
    /// rejecting duplicate cells.
    pub fn from_parts(
        responses: Vec<BinaryResponse>,
        num_students: usize,
        num_questions: usize,
        class_of: Vec<usize>,
        num_classes: usize,
        ids: Arc<IdTables>,
    ) -> Result<Self> {
        if class_of.len() != num_students {
            return Err(Error::Dataset(format!(
                "class_of has {} entries for {} students",
                class_of.len(),
                num_students
            )));
        }
        if let Some(&c) = class_of.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Dataset(format!("class index {c} >= {num_classes}")));
        }
        if ids.students.len() != num_students
            || ids.questions.len() != num_questions
            || ids.classes.len() != num_classes
        {
            return Err(Error::Dataset("id tables disagree with counts".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(responses.len());
        for r in &responses {
            if r.student >= num_students || r.question >= num_questions {
                return Err(Error::Dataset(format!(
                    "response ({}, {}) outside {}x{}",
                    r.student, r.question, num_students, num_questions
                )));
            }
            if r.y > 1 {
                return Err(Error::Dataset(format!("label {} is not binary", r.y)));
            }
            if !seen.insert((r.student, r.question)) {
                return Err(Error::Dataset(format!(
                    "duplicate cell (student {}, question {})",
                    ids.students.name(r.student),
                    ids.questions.name(r.question)
                )));
            }
        }
        Ok(Dataset {
            responses,
            num_students,
            num_questions,
            num_classes,
            class_of,
            ids,
        })
    }

    /// Same index space and id tables, different responses. Used for views.
    fn with_responses(&self, responses: Vec<BinaryResponse>) -> Dataset {
        Dataset {
            responses,
            num_students: self.num_students,
            num_questions: self.num_questions,
            num_classes: self.num_classes,
            class_of: self.class_of.clone(),
            ids: Arc::clone(&self.ids),
        }
    }

    /// Restricts to the given responses of this dataset, keeping the index space.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        self.with_responses(indices.iter().map(|&i| self.responses[i]).collect())
    }

    /// Appends responses in the same index space.
    pub fn extend(&self, extra: &[BinaryResponse]) -> Result<Dataset> {
        let mut responses = self.responses.clone();
        responses.extend_from_slice(extra);
        Dataset::from_parts(
            responses,
            self.num_students,
            self.num_questions,
            self.class_of.clone(),
            self.num_classes,
            Arc::clone(&self.ids),
        )
    }

    /// Responses reordered by (student, question).
    pub fn sorted(&self) -> Dataset {
        let mut r = self.responses.clone();
        r.sort_unstable_by_key(|x| (x.student, x.question));
        self.with_responses(r)
    }

    pub fn responses(&self) -> &[BinaryResponse] {
        &self.responses
    }
    pub fn len(&self) -> usize {
        self.responses.len()
    }
    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
    pub fn num_students(&self) -> usize {
        self.num_students
    }
    pub fn num_questions(&self) -> usize {
        self.num_questions
    }
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }
    pub fn ids(&self) -> &IdTables {
        &self.ids
    }
    pub fn ids_arc(&self) -> Arc<IdTables> {
        Arc::clone(&self.ids)
    }

    /// Fraction of responses with y = 1.
    pub fn correct_rate(&self) -> f64 {
        if self.responses.is_empty() {
            return 0.0;
        }
        self.responses.iter().map(|r| f64::from(r.y)).sum::<f64>() / self.responses.len() as f64
    }

    /// Responses grouped by student, in CSR layout.
    pub fn by_student(&self) -> StudentIndex {
        let mut counts = vec![0usize; self.num_students + 1];
        for r in &self.responses {
            counts[r.student + 1] += 1;
        }
        for i in 0..self.num_students {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut order = vec![0usize; self.responses.len()];
        for (i, r) in self.responses.iter().enumerate() {
            order[fill[r.student]] = i;
            fill[r.student] += 1;
        }
        StudentIndex { offsets, order }
    }

    /// Rows in the pre-binarized schema, in response order.
    pub fn labelled_rows(&self) -> Vec<LabelledRow> {
        self.responses
            .iter()
            .map(|r| LabelledRow {
                student_id: self.ids.students.name(r.student).to_owned(),
                question_id: self.ids.questions.name(r.question).to_owned(),
                class_id: self
                    .ids
                    .classes
                    .name(self.class_of[r.student])
                    .to_owned(),
                y: r.y,
            })
            .collect()
    }
}

/// Response indices grouped per student.
#[derive(Debug, Clone)]
pub struct StudentIndex {
    offsets: Vec<usize>,
    order: Vec<usize>,
}

impl StudentIndex {
    pub fn of(&self, student: usize) -> &[usize] {
        &self.order[self.offsets[student]..self.offsets[student + 1]]
    }
    pub fn num_students(&self) -> usize {
        self.offsets.len() - 1
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str, line: usize) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing column {name}"),
    })
}

fn parse_u32(s: &str, name: &str, line: usize) -> Result<u32> {
    s.trim().parse::<u32>().map_err(|_| Error::Parse {
        line,
        message: format!("{name} {s:?} is not a non-negative integer"),
    })
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header {:?} does not match {:?}", got, expected),
        });
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

fn class_or_sentinel(s: &str) -> String {
    let s = s.trim();
    if s.is_empty() {
        NO_CLASS.to_owned()
    } else {
        s.to_owned()
    }
}

pub fn read_raw_csv<R: Read>(reader: R) -> Result<Vec<RawResponse>> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers()?, &RAW_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != RAW_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", RAW_HEADER.len(), rec.len()),
            });
        }
        let awarded = parse_u32(field(&rec, 3, "marks_awarded", line)?, "marks_awarded", line)?;
        let available = parse_u32(
            field(&rec, 4, "marks_available", line)?,
            "marks_available",
            line,
        )?;
        if available == 0 {
            return Err(Error::Parse {
                line,
                message: "marks_available must be at least 1".into(),
            });
        }
        if awarded > available {
            return Err(Error::Parse {
                line,
                message: "marks_awarded exceeds marks_available".into(),
            });
        }
        out.push(RawResponse {
            student_id: field(&rec, 0, "student_id", line)?.trim().to_owned(),
            question_id: field(&rec, 1, "question_id", line)?.trim().to_owned(),
            class_id: class_or_sentinel(field(&rec, 2, "class_id", line)?),
            marks_awarded: awarded,
            marks_available: available,
        });
    }
    Ok(out)
}

/// Reads the raw marks schema from a file; rows come back in file order.
pub fn load_raw_csv(path: impl AsRef<Path>) -> Result<Vec<RawResponse>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_csv(f)
}

pub fn read_binary_csv<R: Read>(reader: R) -> Result<Vec<LabelledRow>> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers()?, &BINARY_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != BINARY_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    BINARY_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let y = match field(&rec, 3, "y", line)?.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("y {other:?} is not 0 or 1"),
                })
            }
        };
        out.push(LabelledRow {
            student_id: field(&rec, 0, "student_id", line)?.trim().to_owned(),
            question_id: field(&rec, 1, "question_id", line)?.trim().to_owned(),
            class_id: class_or_sentinel(field(&rec, 2, "class_id", line)?),
            y,
        });
    }
    Ok(out)
}

pub fn load_binary_csv(path: impl AsRef<Path>) -> Result<Vec<LabelledRow>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_binary_csv(f)
}

/// Reads either schema as binarized rows in file order.
pub fn load_rows(path: impl AsRef<Path>, format: CsvFormat) -> Result<Vec<LabelledRow>> {
    match format {
        CsvFormat::Raw => Ok(load_raw_csv(path)?.iter().map(LabelledRow::from).collect()),
        CsvFormat::Binary => load_binary_csv(path),
    }
}

/// Loads either schema straight into a [`Dataset`].
pub fn load_dataset(path: impl AsRef<Path>, format: CsvFormat) -> Result<Dataset> {
    build_dataset_labelled(&load_rows(path, format)?)
}

pub fn write_binary_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BINARY_HEADER)?;
    for row in d.labelled_rows() {
        w.write_record([
            row.student_id.as_str(),
            row.question_id.as_str(),
            row.class_id.as_str(),
            if row.y == 1 { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Binarizes raw rows and interns ids in first-appearance order.
pub fn build_dataset(rows: &[RawResponse]) -> Result<Dataset> {
    let labelled: Vec<LabelledRow> = rows.iter().map(LabelledRow::from).collect();
    build_dataset_labelled(&labelled)
}

pub fn build_dataset_labelled(rows: &[LabelledRow]) -> Result<Dataset> {
    let mut ids = IdTables::default();
    let mut class_of: Vec<usize> = Vec::new();
    let mut responses = Vec::with_capacity(rows.len());
    let mut seen = std::collections::HashSet::with_capacity(rows.len());
    for row in rows {
        let s = ids.students.intern(&row.student_id);
        let q = ids.questions.intern(&row.question_id);
        let c = ids.classes.intern(&row.class_id);
        if s == class_of.len() {
            class_of.push(c);
        } else if class_of[s] != c {
            return Err(Error::Dataset(format!(
                "student {:?} listed in classes {:?} and {:?}",
                row.student_id,
                ids.classes.name(class_of[s]),
                row.class_id
            )));
        }
        if !seen.insert((s, q)) {
            return Err(Error::Dataset(format!(
                "duplicate cell (student {:?}, question {:?})",
                row.student_id, row.question_id
            )));
        }
        responses.push(BinaryResponse {
            student: s,
            question: q,
            y: row.y,
        });
    }
    let (ns, nq, nc) = (ids.students.len(), ids.questions.len(), ids.classes.len());
    Dataset::from_parts(responses, ns, nq, class_of, nc, Arc::new(ids))
}

/// Disjoint train/test partition of one dataset's cells, sharing its index space.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Per-cell random holdout, stratified per student.
///
/// The total test count is `round(test_fraction * n)` whenever the
/// stratification constraint allows it: every student with at least two
/// responses keeps at least one in train, and single-response students stay
/// entirely in train. Quotas are `floor(fraction * n_s)` per student with the
/// remainder handed out by largest fractional part (ties in seeded random
/// order).
pub fn split_train_test(d: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    if d.len() < 2 {
        return Err(Error::invalid("split needs at least 2 responses"));
    }
    let mut rng = rng::rng(seed, rng::offset::SPLIT);
    let index = d.by_student();
    let s_count = d.num_students();

    let mut quota = vec![0usize; s_count];
    let mut cap = vec![0usize; s_count];
    let mut remainders: Vec<(f64, usize)> = Vec::new();
    for s in 0..s_count {
        let n = index.of(s).len();
        cap[s] = n.saturating_sub(1);
        let exact = test_fraction * n as f64;
        quota[s] = (exact.floor() as usize).min(cap[s]);
        if quota[s] < cap[s] {
            remainders.push((exact - quota[s] as f64, s));
        }
    }
    let target = (test_fraction * d.len() as f64).round() as usize;
    let mut assigned: usize = quota.iter().sum();
    remainders.shuffle(&mut rng);
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    for &(_, s) in &remainders {
        if assigned >= target {
            break;
        }
        quota[s] += 1;
        assigned += 1;
    }

    let mut is_test = vec![false; d.len()];
    for s in 0..s_count {
        let mut cells = index.of(s).to_vec();
        cells.shuffle(&mut rng);
        for &i in cells.iter().take(quota[s]) {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in d.responses().iter().enumerate() {
        if is_test[i] {
            test.push(*r);
        } else {
            train.push(*r);
        }
    }
    Ok(Split {
        train: d.with_responses(train),
        test: d.with_responses(test),
    })
}

/// Keeps `floor(fraction * S)` students chosen uniformly at random, with all
/// their responses, reindexed densely in original order. Questions keep their
/// indices; classes are reindexed over the retained students.
pub fn subsample_students(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let s_count = d.num_students();
    let keep = ((fraction * s_count as f64) + 1e-9).floor() as usize;
    if keep == s_count {
        return Ok(d.clone());
    }
    let mut rng = rng::rng(seed, rng::offset::SUBSAMPLE);
    let mut chosen = index::sample(&mut rng, s_count, keep).into_vec();
    chosen.sort_unstable();

    let mut new_student = vec![usize::MAX; s_count];
    let mut ids = IdTables {
        questions: d.ids().questions.clone(),
        ..IdTables::default()
    };
    let mut class_of = Vec::with_capacity(keep);
    for (new, &old) in chosen.iter().enumerate() {
        new_student[old] = new;
        ids.students.intern(d.ids().students.name(old));
        let c = ids.classes.intern(d.ids().classes.name(d.class_of()[old]));
        class_of.push(c);
    }
    let responses = d
        .responses()
        .iter()
        .filter(|r| new_student[r.student] != usize::MAX)
        .map(|r| BinaryResponse {
            student: new_student[r.student],
            ..*r
        })
        .collect();
    let nc = ids.classes.len();
    Dataset::from_parts(
        responses,
        keep,
        d.num_questions(),
        class_of,
        nc,
        Arc::new(ids),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(awarded: u32, available: u32) -> RawResponse {
        RawResponse {
            student_id: "s".into(),
            question_id: "q".into(),
            class_id: "c".into(),
            marks_awarded: awarded,
            marks_available: available,
        }
    }

    fn row(s: &str, q: &str, c: &str, y: u8) -> LabelledRow {
        LabelledRow {
            student_id: s.into(),
            question_id: q.into(),
            class_id: c.into(),
            y,
        }
    }

    #[test]
    fn binarize_rule() {
        assert_eq!(binarize(&raw(2, 3)), 1);
        assert_eq!(binarize(&raw(1, 2)), 0);
        assert_eq!(binarize(&raw(0, 5)), 0);
        assert_eq!(binarize(&raw(3, 3)), 1);
        assert_eq!(binarize(&raw(1, 3)), 0);
    }

    #[test]
    fn parses_raw_rows() {
        let text = "student_id,question_id,class_id,marks_awarded,marks_available\ns1,q1,c1,2,3\n";
        let rows = read_raw_csv(text.as_bytes()).unwrap();
        assert_eq!(
            rows,
            vec![RawResponse {
                student_id: "s1".into(),
                question_id: "q1".into(),
                class_id: "c1".into(),
                marks_awarded: 2,
                marks_available: 3,
            }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        let text = "student_id,question_id,class_id,marks_awarded,marks_available\n";
        assert!(read_raw_csv(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn rejects_excess_marks_with_line() {
        let text = "student_id,question_id,class_id,marks_awarded,marks_available\ns1,q1,c1,4,3\n";
        let err = read_raw_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(
            err.contains("marks_awarded exceeds marks_available at line 2"),
            "{err}"
        );
    }

    #[test]
    fn rejects_bad_marks_and_columns() {
        let h = "student_id,question_id,class_id,marks_awarded,marks_available\n";
        let e = read_raw_csv(format!("{h}s1,q1,c1,x,3\n").as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = read_raw_csv(format!("{h}s1,q1,c1,1,3\ns2,q1,c1\n").as_bytes()).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = read_raw_csv("student_id,question_id,class_id,marks\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("header"), "{e}");
        let e = read_raw_csv(format!("{h}s1,q1,c1,0,0\n").as_bytes()).unwrap_err();
        assert!(e.to_string().contains("at least 1"), "{e}");
    }

    #[test]
    fn empty_class_becomes_sentinel() {
        let text = "student_id,question_id,class_id,y\ns1,q1,,1\n";
        let rows = read_binary_csv(text.as_bytes()).unwrap();
        assert_eq!(rows[0].class_id, NO_CLASS);
        let e = read_binary_csv("student_id,question_id,class_id,y\ns1,q1,c,2\n".as_bytes());
        assert!(e.is_err());
    }

    #[test]
    fn builds_counts_in_first_appearance_order() {
        let d = build_dataset_labelled(&[row("b", "q", "c", 1), row("a", "q", "c", 0)]).unwrap();
        assert_eq!((d.num_students(), d.num_questions(), d.len()), (2, 1, 2));
        assert_eq!(d.ids().students.names(), &["b".to_string(), "a".to_string()]);
    }

    #[test]
    fn conflicting_class_is_error() {
        let e = build_dataset_labelled(&[row("s", "q1", "c1", 1), row("s", "q2", "c2", 0)]);
        assert!(matches!(e, Err(Error::Dataset(_))));
    }

    #[test]
    fn duplicate_cell_is_error() {
        let e = build_dataset_labelled(&[row("s", "q1", "c1", 1), row("s", "q1", "c1", 0)]);
        assert!(matches!(e, Err(Error::Dataset(_))));
    }

    fn grid(students: usize, questions: usize) -> Dataset {
        let mut rows = Vec::new();
        for s in 0..students {
            for q in 0..questions {
                rows.push(row(
                    &format!("s{s}"),
                    &format!("q{q}"),
                    &format!("c{}", s % 3),
                    ((s + q) % 2) as u8,
                ));
            }
        }
        build_dataset_labelled(&rows).unwrap()
    }

    #[test]
    fn split_counts_and_determinism() {
        let d = grid(1, 10);
        let sp = split_train_test(&d, 0.2, 3).unwrap();
        assert_eq!((sp.train.len(), sp.test.len()), (8, 2));
        let again = split_train_test(&d, 0.2, 3).unwrap();
        assert_eq!(sp.train, again.train);
        assert_eq!(sp.test, again.test);

        let d = grid(5, 2);
        let sp = split_train_test(&d, 0.2, 3).unwrap();
        assert_eq!(sp.test.len(), 2);
    }

    #[test]
    fn single_response_student_stays_in_train() {
        let mut rows = vec![row("solo", "q0", "c", 1)];
        for q in 0..6 {
            rows.push(row("other", &format!("q{q}"), "c", (q % 2) as u8));
        }
        let d = build_dataset_labelled(&rows).unwrap();
        for seed in 0..20 {
            let sp = split_train_test(&d, 0.5, seed).unwrap();
            assert!(sp.train.responses().iter().any(|r| r.student == 0));
            assert!(sp.test.responses().iter().all(|r| r.student != 0));
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = grid(2, 2);
        assert!(split_train_test(&d, 0.0, 1).is_err());
        assert!(split_train_test(&d, 1.0, 1).is_err());
    }

    #[test]
    fn subsample_identity_and_counts() {
        let d = grid(20, 3);
        assert_eq!(subsample_students(&d, 1.0, 9).unwrap(), d);
        let sub = subsample_students(&d, 0.5, 9).unwrap();
        assert_eq!(sub.num_students(), 10);
        assert_eq!(sub.len(), 30);
        assert!(subsample_students(&d, 0.0, 9).is_err());
    }

    #[test]
    fn subsample_sizes_match_reported_counts() {
        for (fraction, expected) in [(0.5, 17_757usize), (0.25, 8_878), (0.15, 5_327)] {
            let keep = ((fraction * 35_514f64) + 1e-9).floor() as usize;
            assert_eq!(keep, expected);
        }
    }

    proptest! {
        #[test]
        fn binarize_monotone(available in 1u32..50, a in 0u32..50, b in 0u32..50) {
            let (lo, hi) = (a.min(b).min(available), a.max(b).min(available));
            prop_assert!(binarize(&raw(lo, available)) <= binarize(&raw(hi, available)));
        }

        #[test]
        fn split_partitions(students in 1usize..8, questions in 1usize..8, f in 0.05f64..0.95, seed in 0u64..1000) {
            let d = grid(students, questions);
            prop_assume!(d.len() >= 2);
            let sp = split_train_test(&d, f, seed).unwrap();
            prop_assert_eq!(sp.train.len() + sp.test.len(), d.len());
            let train: std::collections::HashSet<_> = sp.train.responses().iter().map(|r| (r.student, r.question)).collect();
            for r in sp.test.responses() {
                prop_assert!(!train.contains(&(r.student, r.question)));
            }
        }

        #[test]
        fn subsample_keeps_all_responses(fraction in 0.05f64..1.0, seed in 0u64..1000) {
            let d = grid(12, 4);
            let sub = subsample_students(&d, fraction, seed).unwrap();
            let idx = sub.by_student();
            for s in 0..sub.num_students() {
                let name = sub.ids().students.name(s);
                let old = d.ids().students.get(name).unwrap();
                prop_assert_eq!(idx.of(s).len(), d.by_student().of(old).len());
                prop_assert_eq!(sub.ids().classes.name(sub.class_of()[s]), d.ids().classes.name(d.class_of()[old]));
            }
        }
    }
}
