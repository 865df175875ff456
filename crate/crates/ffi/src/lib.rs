//! C ABI over the irtvi models.
//!
//! Datasets and models are opaque handles created and freed through this
//! interface. Every fallible call returns an [`IrtviStatus`]; on failure the
//! message is kept per thread and can be fetched with
//! [`irtvi_last_error_message`]. Strings returned to the caller must be
//! released with [`irtvi_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use irtvi::checkpoint::{Checkpoint, Model};
use irtvi::data::{load_dataset, split_train_test, CsvFormat, Dataset};
use irtvi::eval::{evaluate_point, evaluate_vi, two_proportion_z_test};
use irtvi::models::{ModelKind, ModelSpec};
use irtvi::optim::{sgd_train, TrainConfig};
use irtvi::vi::{kl_gaussian, predict_prob_vi, train_vi, PredictMode, VIConfig, ViKind};
use irtvi::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrtviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Dataset = 5,
    Shape = 6,
    NonFinite = 7,
    Checkpoint = 8,
    IndexOutOfRange = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrtviFormat {
    /// `student_id,question_id,class_id,marks_awarded,marks_available`
    Raw = 0,
    /// `student_id,question_id,class_id,y`
    Binary = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrtviModelKind {
    Rasch = 0,
    Interaction = 1,
    ClassInteraction = 2,
    RaschVi = 3,
    InteractionVi = 4,
    ClassInteractionVi = 5,
}

/// Point-model optimizer settings; see [`irtvi_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IrtviTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub convergence_tol: f64,
}

/// Variational optimizer settings; see [`irtvi_vi_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IrtviViConfig {
    pub m_samples: usize,
    pub sigma_init: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_students: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub convergence_tol: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IrtviZTest {
    pub p1: f64,
    pub p2: f64,
    pub p_hat: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    /// 1 when `p_value < alpha`.
    pub significant: i32,
}

/// Opaque dataset handle.
pub struct IrtviDataset(Dataset);

/// Opaque model handle: parameters plus the id tables they index.
pub struct IrtviModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IrtviStatus {
    match e {
        Error::Io { .. } => IrtviStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => IrtviStatus::Parse,
        Error::Dataset(_) => IrtviStatus::Dataset,
        Error::InvalidArgument(_) => IrtviStatus::InvalidArgument,
        Error::IndexOutOfRange { .. } => IrtviStatus::IndexOutOfRange,
        Error::NonFinite { .. } => IrtviStatus::NonFinite,
        Error::Shape(_) => IrtviStatus::Shape,
        Error::Checkpoint(_) => IrtviStatus::Checkpoint,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IrtviStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IrtviStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            IrtviStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            IrtviStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            IrtviStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn irtvi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if the last call
/// succeeded. Free with [`irtvi_string_free`].
#[no_mangle]
pub extern "C" fn irtvi_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn irtvi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a CSV file into a new dataset handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_dataset_load(
    path: *const c_char,
    format: IrtviFormat,
    out: *mut *mut IrtviDataset,
) -> IrtviStatus {
    guard(|| {
        let path = path_arg(path)?;
        let fmt = match format {
            IrtviFormat::Raw => CsvFormat::Raw,
            IrtviFormat::Binary => CsvFormat::Binary,
        };
        let d = load_dataset(path, fmt)?;
        write_out(out, Box::into_raw(Box::new(IrtviDataset(d))), "out")
    })
}

/// # Safety
/// `d` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn irtvi_dataset_free(d: *mut IrtviDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of students, questions, classes and responses. Any output
/// pointer may be NULL.
///
/// # Safety
/// `d` must be a live dataset handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_dataset_counts(
    d: *const IrtviDataset,
    students: *mut usize,
    questions: *mut usize,
    classes: *mut usize,
    responses: *mut usize,
) -> IrtviStatus {
    guard(|| {
        let d = &as_ref(d, "dataset")?.0;
        for (p, v) in [
            (students, d.num_students()),
            (questions, d.num_questions()),
            (classes, d.num_classes()),
            (responses, d.len()),
        ] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Stratified per-student train/test split into two new handles.
///
/// # Safety
/// `d` must be a live dataset handle; `train` and `test` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_dataset_split(
    d: *const IrtviDataset,
    test_fraction: f64,
    seed: u64,
    train: *mut *mut IrtviDataset,
    test: *mut *mut IrtviDataset,
) -> IrtviStatus {
    guard(|| {
        let d = &as_ref(d, "dataset")?.0;
        if train.is_null() || test.is_null() {
            return Err(Failure::Null("train/test"));
        }
        let split = split_train_test(d, test_fraction, seed)?;
        train.write(Box::into_raw(Box::new(IrtviDataset(split.train))));
        test.write(Box::into_raw(Box::new(IrtviDataset(split.test))));
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn irtvi_train_config_default() -> IrtviTrainConfig {
    let c = TrainConfig::default();
    IrtviTrainConfig {
        learning_rate: c.learning_rate,
        epochs: c.epochs,
        batch_size: c.batch_size,
        l2_penalty: c.l2_penalty,
        seed: c.seed,
        init_scale: c.init_scale,
        convergence_tol: c.convergence_tol,
    }
}

#[no_mangle]
pub extern "C" fn irtvi_vi_config_default() -> IrtviViConfig {
    let c = VIConfig::default();
    IrtviViConfig {
        m_samples: c.m_samples,
        sigma_init: c.sigma_init,
        learning_rate: c.learning_rate,
        epochs: c.epochs,
        batch_students: c.batch_students,
        seed: c.seed,
        init_scale: c.init_scale,
        convergence_tol: c.convergence_tol,
    }
}

fn point_kind(k: IrtviModelKind) -> Option<ModelKind> {
    match k {
        IrtviModelKind::Rasch => Some(ModelKind::Rasch),
        IrtviModelKind::Interaction => Some(ModelKind::Interaction),
        IrtviModelKind::ClassInteraction => Some(ModelKind::ClassInteraction),
        _ => None,
    }
}

fn vi_kind(k: IrtviModelKind) -> Option<ViKind> {
    match k {
        IrtviModelKind::RaschVi => Some(ViKind::RaschVi),
        IrtviModelKind::InteractionVi => Some(ViKind::InteractionVi),
        IrtviModelKind::ClassInteractionVi => Some(ViKind::ClassInteractionVi),
        _ => None,
    }
}

/// Fits a point model (`Rasch`, `Interaction` or `ClassInteraction`).
/// `config` may be NULL for defaults; `warm_start` may be NULL.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_train(
    d: *const IrtviDataset,
    kind: IrtviModelKind,
    dims: usize,
    config: *const IrtviTrainConfig,
    warm_start: *const IrtviModel,
    out: *mut *mut IrtviModel,
) -> IrtviStatus {
    guard(|| {
        let d = &as_ref(d, "dataset")?.0;
        let kind = point_kind(kind)
            .ok_or_else(|| Failure::Invalid("irtvi_model_train needs a point model kind".into()))?;
        let c = config.as_ref().copied().unwrap_or_else(|| irtvi_train_config_default());
        let cfg = TrainConfig {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            l2_penalty: c.l2_penalty,
            seed: c.seed,
            init_scale: c.init_scale,
            convergence_tol: c.convergence_tol,
        };
        let spec = ModelSpec {
            kind,
            dims: if kind == ModelKind::Rasch { 0 } else { dims },
        };
        let warm = warm_start.as_ref().map(|m| m.0.model.point());
        let (params, _) = sgd_train(spec, d, &cfg, warm.as_ref())?;
        let ck = Checkpoint::new(Model::Point(params), d)?;
        write_out(out, Box::into_raw(Box::new(IrtviModel(ck))), "out")
    })
}

/// Fits a variational model. `warm_start` may be NULL or a point model of
/// the matching kind; `config` may be NULL for defaults.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_train_vi(
    d: *const IrtviDataset,
    kind: IrtviModelKind,
    dims: usize,
    config: *const IrtviViConfig,
    warm_start: *const IrtviModel,
    out: *mut *mut IrtviModel,
) -> IrtviStatus {
    guard(|| {
        let d = &as_ref(d, "dataset")?.0;
        let kind = vi_kind(kind).ok_or_else(|| {
            Failure::Invalid("irtvi_model_train_vi needs a variational model kind".into())
        })?;
        let c = config.as_ref().copied().unwrap_or_else(|| irtvi_vi_config_default());
        let cfg = VIConfig {
            m_samples: c.m_samples,
            sigma_init: c.sigma_init,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_students: c.batch_students,
            dims,
            seed: c.seed,
            init_scale: c.init_scale,
            convergence_tol: c.convergence_tol,
        };
        let warm = match warm_start.as_ref() {
            None => None,
            Some(IrtviModel(Checkpoint {
                model: Model::Point(p),
                ..
            })) => Some(p),
            Some(_) => {
                return Err(Failure::Invalid(
                    "warm start must be a point model".into(),
                ))
            }
        };
        let (params, _) = train_vi(kind, d, &cfg, warm)?;
        let ck = Checkpoint::new(Model::Vi(params), d)?;
        write_out(out, Box::into_raw(Box::new(IrtviModel(ck))), "out")
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_free(m: *mut IrtviModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Probability that `student` answers `question` correctly, by dense index.
/// Variational models predict at their posterior means.
///
/// # Safety
/// `m` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_predict(
    m: *const IrtviModel,
    student: usize,
    question: usize,
    out: *mut f64,
) -> IrtviStatus {
    guard(|| {
        let ck = &as_ref(m, "model")?.0;
        let class_of = &ck.ids.class_of;
        let p = match &ck.model {
            Model::Point(p) => p.predict_prob(student, question, class_of)?,
            Model::Vi(v) => predict_prob_vi(v, student, question, class_of, PredictMode::PlugInMean)?,
        };
        write_out(out, p, "out")
    })
}

/// Thresholded accuracy on a dataset, matched to the model by id.
///
/// # Safety
/// Handles must be live; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_evaluate(
    m: *const IrtviModel,
    d: *const IrtviDataset,
    threshold: f64,
    accuracy: *mut f64,
) -> IrtviStatus {
    guard(|| {
        let ck = &as_ref(m, "model")?.0;
        let d = &as_ref(d, "dataset")?.0;
        let aligned = ck.align(&d.labelled_rows())?;
        let report = match &ck.model {
            Model::Point(p) => evaluate_point(p, &aligned, threshold)?,
            Model::Vi(v) => evaluate_vi(v, &aligned, PredictMode::PlugInMean, threshold)?,
        };
        write_out(accuracy, report.accuracy, "accuracy")
    })
}

/// Writes the model as a JSON checkpoint.
///
/// # Safety
/// `m` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_save(m: *const IrtviModel, path: *const c_char) -> IrtviStatus {
    guard(|| {
        let ck = &as_ref(m, "model")?.0;
        ck.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Reads a JSON checkpoint into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_model_load(
    path: *const c_char,
    out: *mut *mut IrtviModel,
) -> IrtviStatus {
    guard(|| {
        let ck = Checkpoint::load(path_arg(path)?)?;
        write_out(out, Box::into_raw(Box::new(IrtviModel(ck))), "out")
    })
}

/// Pooled two-proportion z-test, two-sided.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_z_test(
    x1: u64,
    n1: u64,
    x2: u64,
    n2: u64,
    alpha: f64,
    out: *mut IrtviZTest,
) -> IrtviStatus {
    guard(|| {
        let r = two_proportion_z_test(x1, n1, x2, n2, &[alpha])?;
        let z = IrtviZTest {
            p1: r.p1,
            p2: r.p2,
            p_hat: r.p_hat,
            se: r.se,
            z: r.z,
            p_value: r.p_value,
            significant: i32::from(!r.significant_at.is_empty()),
        };
        write_out(out, z, "out")
    })
}

/// KL(N(mu1, sigma1²) || N(mu2, sigma2²)).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irtvi_kl_gaussian(
    mu1: f64,
    sigma1: f64,
    mu2: f64,
    sigma2: f64,
    out: *mut f64,
) -> IrtviStatus {
    guard(|| {
        let kl = kl_gaussian(mu1, sigma1, mu2, sigma2)?;
        write_out(out, kl, "out")
    })
}
