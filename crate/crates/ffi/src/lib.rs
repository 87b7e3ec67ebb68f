//! C ABI for xlnav.
//!
//! Worlds, data directories and checkpoints cross the boundary as opaque
//! handles, each released by its `_free` function. Fallible calls return an
//! [`XlnavStatus`]; after a failure, `xlnav_last_error_message` describes it
//! for the calling thread. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use xlnav::lang::{LangError, MtConfig, SplitName};
use xlnav::metrics::{evaluate_episode, MetricsError, TrajectoryMetrics, TrajectoryRecord};
use xlnav::trainer::{evaluate, Checkpoint, Regime, TrainContext, TrainerError};
use xlnav::world::{generate_world, World, WorldConfig, WorldError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XlnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Regime = 5,
    Panic = 6,
}

/// Navigation metrics of one episode, or means over a split.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct XlnavMetrics {
    pub pl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub cls: f64,
}

impl From<TrajectoryMetrics> for XlnavMetrics {
    fn from(m: TrajectoryMetrics) -> Self {
        Self {
            pl: m.pl,
            ne: m.ne,
            sr: m.sr,
            osr: m.osr,
            spl: m.spl,
            cls: m.cls,
        }
    }
}

/// A navigation graph.
pub struct XlnavWorld(World);

/// Worlds, splits and vocabulary read from a data directory.
pub struct XlnavContext(TrainContext);

/// Trained agent parameters.
pub struct XlnavCheckpoint(Checkpoint);

struct Failure {
    status: XlnavStatus,
    message: String,
}

impl Failure {
    fn new(status: XlnavStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(XlnavStatus::NullPointer, format!("`{what}` is null"))
    }
}

impl From<WorldError> for Failure {
    fn from(e: WorldError) -> Self {
        let status = match e {
            WorldError::Json(_) => XlnavStatus::Format,
            _ => XlnavStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Self::new(XlnavStatus::InvalidArgument, e.to_string())
    }
}

impl From<TrainerError> for Failure {
    fn from(e: TrainerError) -> Self {
        let status = match &e {
            TrainerError::UnknownRegime(_) | TrainerError::RegimeMismatch { .. } => {
                XlnavStatus::Regime
            }
            TrainerError::Io(_) | TrainerError::Lang(LangError::Io(_)) => XlnavStatus::Io,
            TrainerError::Checkpoint(_) | TrainerError::Lang(LangError::Json(_)) => {
                XlnavStatus::Format
            }
            _ => XlnavStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> XlnavStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::new(XlnavStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error("");
            XlnavStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            XlnavStatus::InvalidArgument,
            format!("`{what}` is not UTF-8"),
        )
    })
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a>(p: *const usize, len: usize, what: &str) -> Result<&'a [usize], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xlnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next xlnav call on the same thread.
#[no_mangle]
pub extern "C" fn xlnav_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates a world; `n_viewpoints` of 0 keeps the default size.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn xlnav_world_generate(
    seed: u64,
    n_viewpoints: usize,
    out: *mut *mut XlnavWorld,
) -> XlnavStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let mut cfg = WorldConfig::default();
        if n_viewpoints > 0 {
            cfg.n_viewpoints = n_viewpoints;
        }
        let world = generate_world(seed, &cfg)?;
        put(out, Box::into_raw(Box::new(XlnavWorld(world))), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn xlnav_world_from_json(
    json: *const c_char,
    out: *mut *mut XlnavWorld,
) -> XlnavStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let world = World::from_json(text)?;
        put(out, Box::into_raw(Box::new(XlnavWorld(world))), "out")
    })
}

/// Serializes a world; release the string with `xlnav_string_free`.
///
/// # Safety
/// `world` must come from this library; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn xlnav_world_to_json(
    world: *const XlnavWorld,
    out: *mut *mut c_char,
) -> XlnavStatus {
    guard(|| {
        let world = deref(world, "world")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let text = world.0.to_json()?;
        let c = CString::new(text)
            .map_err(|_| Failure::new(XlnavStatus::Format, "json contains NUL"))?;
        put(out, c.into_raw(), "out")
    })
}

/// Number of viewpoints, 0 for a null handle.
///
/// # Safety
/// `world` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn xlnav_world_num_viewpoints(world: *const XlnavWorld) -> usize {
    world.as_ref().map_or(0, |w| w.0.len())
}

/// Shortest-path distance in meters.
///
/// # Safety
/// `world` must come from this library; `out` valid for one double.
#[no_mangle]
pub unsafe extern "C" fn xlnav_world_distance(
    world: *const XlnavWorld,
    a: usize,
    b: usize,
    out: *mut f64,
) -> XlnavStatus {
    guard(|| {
        let w = &deref(world, "world")?.0;
        w.check_viewpoint(a)?;
        w.check_viewpoint(b)?;
        put(out, w.distance(a, b), "out")
    })
}

/// Scores a predicted path against a reference path whose last viewpoint
/// is the goal.
///
/// # Safety
/// The arrays must hold `n_predicted` and `n_reference` elements; `out`
/// must be valid for one `XlnavMetrics`.
#[no_mangle]
pub unsafe extern "C" fn xlnav_evaluate_path(
    world: *const XlnavWorld,
    predicted: *const usize,
    n_predicted: usize,
    reference: *const usize,
    n_reference: usize,
    radius: f64,
    out: *mut XlnavMetrics,
) -> XlnavStatus {
    guard(|| {
        let w = &deref(world, "world")?.0;
        let predicted = slice(predicted, n_predicted, "predicted")?.to_vec();
        let reference = slice(reference, n_reference, "reference")?.to_vec();
        let goal = *reference
            .last()
            .ok_or_else(|| Failure::new(XlnavStatus::InvalidArgument, "reference path is empty"))?;
        let rec = TrajectoryRecord {
            predicted,
            reference,
            goal,
            radius,
        };
        put(out, evaluate_episode(w, &rec)?.into(), "out")
    })
}

/// # Safety
/// `world` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn xlnav_world_free(world: *mut XlnavWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn xlnav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a data directory written by `xlnav gen-data`, filling the
/// translation cache with the default translator when needed.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn xlnav_context_load(
    dir: *const c_char,
    out: *mut *mut XlnavContext,
) -> XlnavStatus {
    guard(|| {
        let dir = read_str(dir, "dir")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let ctx = TrainContext::load(Path::new(dir), Some(&MtConfig::default()))?;
        put(out, Box::into_raw(Box::new(XlnavContext(ctx))), "out")
    })
}

/// Number of trajectories in a split (`train`, `val_seen`, `val_unseen`).
///
/// # Safety
/// `ctx` must come from this library; `split` a NUL-terminated string;
/// `out` valid for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn xlnav_context_split_len(
    ctx: *const XlnavContext,
    split: *const c_char,
    out: *mut usize,
) -> XlnavStatus {
    guard(|| {
        let ctx = &deref(ctx, "ctx")?.0;
        let split = parse_split(read_str(split, "split")?)?;
        put(out, ctx.dataset.split(split).len(), "out")
    })
}

/// # Safety
/// `ctx` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn xlnav_context_free(ctx: *mut XlnavContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// # Safety
/// `path` must be a NUL-terminated path; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn xlnav_checkpoint_load(
    path: *const c_char,
    out: *mut *mut XlnavCheckpoint,
) -> XlnavStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let ckpt = Checkpoint::load(Path::new(path))?;
        put(out, Box::into_raw(Box::new(XlnavCheckpoint(ckpt))), "out")
    })
}

/// Whether the checkpoint holds a dual-stream agent.
///
/// # Safety
/// `ckpt` must come from this library; `out` valid for one bool.
#[no_mangle]
pub unsafe extern "C" fn xlnav_checkpoint_is_xli(
    ckpt: *const XlnavCheckpoint,
    out: *mut bool,
) -> XlnavStatus {
    guard(|| {
        let ckpt = &deref(ckpt, "ckpt")?.0;
        put(out, ckpt.agent.mode == xlnav::agent::Mode::Xli, "out")
    })
}

/// Training iteration the checkpoint was taken at.
///
/// # Safety
/// `ckpt` must come from this library; `out` valid for one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn xlnav_checkpoint_iteration(
    ckpt: *const XlnavCheckpoint,
    out: *mut u64,
) -> XlnavStatus {
    guard(|| put(out, deref(ckpt, "ckpt")?.0.iteration, "out"))
}

/// # Safety
/// `ckpt` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn xlnav_checkpoint_free(ckpt: *mut XlnavCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

fn parse_split(s: &str) -> Result<SplitName, Failure> {
    SplitName::parse(s)
        .ok_or_else(|| Failure::new(XlnavStatus::InvalidArgument, format!("unknown split `{s}`")))
}

/// Greedy rollouts of a checkpoint over one split under the test side of
/// `regime`; writes the mean metrics.
///
/// # Safety
/// Handles must come from this library; `split` and `regime` must be
/// NUL-terminated strings; `out` valid for one `XlnavMetrics`.
#[no_mangle]
pub unsafe extern "C" fn xlnav_evaluate(
    ckpt: *const XlnavCheckpoint,
    ctx: *const XlnavContext,
    split: *const c_char,
    regime: *const c_char,
    max_actions: usize,
    out: *mut XlnavMetrics,
) -> XlnavStatus {
    guard(|| {
        let ckpt = &deref(ckpt, "ckpt")?.0;
        let ctx = &deref(ctx, "ctx")?.0;
        let split = parse_split(read_str(split, "split")?)?;
        let regime = Regime::parse(read_str(regime, "regime")?)?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let report = evaluate(ckpt, ctx, split, regime, 0, max_actions)?;
        put(out, report.mean.into(), "out")
    })
}
