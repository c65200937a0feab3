//! C interface to `handeye-cov`.
//!
//! Datasets and solutions are opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns
//! a [`HecStatus`]; on failure a description is available from
//! [`hec_last_error`] on the same thread until the next failing call.
//! Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use handeye_cov::io::{AssumedCovariances, DatasetFile, PoseFile, PoseRecord};
use handeye_cov::{compound_poses, propagate_chain, solve_axxb, AxxbSolution, Cov3, Error, MeasurementPair, NoisyPose};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DegenerateMotion = 3,
    NoConvergence = 4,
    RankDeficient = 5,
    Io = 6,
    Internal = 7,
}

/// A pose with its rotation (left perturbation, rad²) and translation (m²)
/// covariances.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HecPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub cov_rot: [f64; 9],
    pub cov_trans: [f64; 9],
}

pub struct HecDataset {
    pairs: Vec<MeasurementPair>,
}

pub struct HecSolution {
    inner: AxxbSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> HecStatus {
    match e {
        Error::DegenerateMotion(_) => HecStatus::DegenerateMotion,
        Error::NoConvergence { .. } => HecStatus::NoConvergence,
        Error::RankDeficient(_) | Error::SingularBlock { .. } => HecStatus::RankDeficient,
        Error::Io(_) => HecStatus::Io,
        Error::AtLine { source, .. } => status_of(source),
        _ => HecStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HecStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HecStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal error".into());
            HecStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

impl HecPose {
    fn to_noisy(self) -> handeye_cov::Result<NoisyPose> {
        let pose = PoseRecord {
            r: self.rotation,
            t: self.translation,
        }
        .to_pose()?;
        Ok(NoisyPose::new(
            pose,
            Cov3::from_row_slice(&self.cov_rot)?,
            Cov3::from_row_slice(&self.cov_trans)?,
        ))
    }

    fn from_noisy(p: &NoisyPose) -> Self {
        let f = PoseFile::from_noisy_pose(p);
        Self {
            rotation: f.r,
            translation: f.t,
            cov_rot: f.cov_r,
            cov_trans: f.cov_t,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Empty dataset.
#[no_mangle]
pub extern "C" fn hec_dataset_new() -> *mut HecDataset {
    Box::into_raw(Box::new(HecDataset { pairs: Vec::new() }))
}

/// Reads a JSONL dataset file. Every pair must carry its covariances.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hec_dataset_read(path: *const c_char, out: *mut *mut HecDataset) -> HecStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Error::InvalidInput(format!("path is not UTF-8: {e}")))?;
        let pairs = DatasetFile::read(Path::new(path))?.measurement_set(&AssumedCovariances::default())?;
        *out = Box::into_raw(Box::new(HecDataset { pairs }));
        Ok(())
    })
}

/// Appends one (A, B) pair after validating rotations and covariances.
///
/// # Safety
/// `dataset` must come from this library; `a` and `b` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hec_dataset_add_pair(
    dataset: *mut HecDataset,
    a: *const HecPose,
    b: *const HecPose,
) -> HecStatus {
    guard(|| {
        let ds = deref_mut(dataset, "dataset")?;
        let a = deref(a, "a")?.to_noisy()?;
        let b = deref(b, "b")?.to_noisy()?;
        ds.pairs.push(MeasurementPair { a, b });
        Ok(())
    })
}

/// Number of pairs; 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn hec_dataset_len(dataset: *const HecDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.pairs.len())
}

/// # Safety
/// `dataset` must be NULL or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn hec_dataset_free(dataset: *mut HecDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Solves AX = XB for the pairs of `dataset`.
///
/// # Safety
/// `dataset` must come from this library, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hec_calibrate(dataset: *const HecDataset, out: *mut *mut HecSolution) -> HecStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let ds = deref(dataset, "dataset")?;
        let inner = solve_axxb(&ds.pairs)?;
        *out = Box::into_raw(Box::new(HecSolution { inner }));
        Ok(())
    })
}

/// X with its covariances.
///
/// # Safety
/// `solution` must come from this library, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hec_solution_pose(solution: *const HecSolution, out: *mut HecPose) -> HecStatus {
    guard(|| {
        let sol = deref(solution, "solution")?;
        *deref_mut(out, "out")? = HecPose::from_noisy(&sol.inner.noisy_pose());
        Ok(())
    })
}

/// Gauss-Newton iterations of the rotation and translation stages.
///
/// # Safety
/// `solution` must come from this library; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn hec_solution_iterations(
    solution: *const HecSolution,
    rotation: *mut usize,
    translation: *mut usize,
) -> HecStatus {
    guard(|| {
        let sol = deref(solution, "solution")?;
        let r = deref_mut(rotation, "rotation")?;
        let t = deref_mut(translation, "translation")?;
        *r = sol.inner.rotation.iterations;
        *t = sol.inner.translation.iterations;
        Ok(())
    })
}

/// # Safety
/// `solution` must be NULL or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn hec_solution_free(solution: *mut HecSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// `out = a · b` with propagated covariances.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hec_compound(a: *const HecPose, b: *const HecPose, out: *mut HecPose) -> HecStatus {
    guard(|| {
        let a = deref(a, "a")?.to_noisy()?;
        let b = deref(b, "b")?.to_noisy()?;
        let c = compound_poses(&a, &b)?;
        *deref_mut(out, "out")? = HecPose::from_noisy(&c);
        Ok(())
    })
}

/// `out = poses[0] · poses[1] · … · poses[n-1]`.
///
/// # Safety
/// `poses` must point to `n` valid poses, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hec_propagate_chain(poses: *const HecPose, n: usize, out: *mut HecPose) -> HecStatus {
    guard(|| {
        if poses.is_null() {
            return Err(Failure::Null("poses"));
        }
        let noisy = std::slice::from_raw_parts(poses, n)
            .iter()
            .map(|p| p.to_noisy())
            .collect::<handeye_cov::Result<Vec<_>>>()?;
        let c = propagate_chain(&noisy)?;
        *deref_mut(out, "out")? = HecPose::from_noisy(&c);
        Ok(())
    })
}
