//! C ABI over `tactica-core`.
//!
//! Every function returns a [`TacticaStatus`]; results go through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`tactica_last_error_message`]. Models are opaque handles created by
//! [`tactica_model_load`] and released with [`tactica_model_free`].
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tactica_core::dominance::{arrival_time, offside_positions, MotionParams, PlayerState, Side, SpaceEngine};
use tactica_core::explain::tree_shap;
use tactica_core::gbdt::{predict_proba, GbdtModel};
use tactica_core::geometry::{field_weight, PitchSpec, Point2, WeightParams};
use tactica_core::ingest::{BallState, FrameMeta, TeamId, TrackedFrame};
use tactica_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TacticaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Model = 4,
    Data = 5,
    Internal = 6,
}

/// Pitch dimensions in meters and dominance-grid cell size.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TacticaPitch {
    pub length: f64,
    pub width: f64,
    pub grid_cell: f64,
}

/// One player for [`tactica_space_scores`]. Coordinates are already
/// normalized so the attacking team plays toward +x.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TacticaPlayer {
    pub id: u32,
    /// Nonzero for the attacking team.
    pub attacking: u8,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Opaque trained model.
pub struct TacticaModel {
    inner: GbdtModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TacticaStatus {
    match e {
        Error::InvalidParam(_) | Error::Domain(_) | Error::Config(_) | Error::UnknownPlayer(_) => {
            TacticaStatus::InvalidArgument
        }
        Error::Io { .. } => TacticaStatus::Io,
        Error::Model(_) | Error::Json(_) => TacticaStatus::Model,
        Error::Schema { .. } | Error::Data(_) | Error::Csv(_) => TacticaStatus::Data,
        Error::Internal(_) => TacticaStatus::Internal,
    }
}

struct Fail(TacticaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TacticaStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TacticaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TacticaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TacticaStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `p` points to `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `p` points to `len` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn model_ref<'a>(m: *const TacticaModel) -> Result<&'a GbdtModel, Fail> {
    // SAFETY: non-null handles come from tactica_model_load.
    unsafe { m.as_ref() }.map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn pitch_of(p: *const TacticaPitch) -> Result<PitchSpec, Fail> {
    let pitch = match unsafe { p.as_ref() } {
        Some(p) => PitchSpec::new(p.length, p.width, p.grid_cell)?,
        None => PitchSpec::default(),
    };
    Ok(pitch)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next tactica call on the same thread.
#[no_mangle]
pub extern "C" fn tactica_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a model file; on success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tactica_model_load(path: *const c_char, out: *mut *mut TacticaModel) -> TacticaStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| Fail(TacticaStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = GbdtModel::load(Path::new(path))?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(TacticaModel { inner: model })) };
        Ok(())
    })
}

/// Release a handle from [`tactica_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tactica_model_free(model: *mut TacticaModel) {
    if !model.is_null() {
        // SAFETY: handle was produced by Box::into_raw in tactica_model_load.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tactica_model_num_features(model: *const TacticaModel, out: *mut usize) -> TacticaStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = m.n_features();
        Ok(())
    })
}

/// Success probability for one feature row (NaN cells take the model's
/// training medians).
///
/// # Safety
/// `row` must hold `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tactica_model_predict_proba(
    model: *const TacticaModel,
    row: *const f64,
    len: usize,
    out: *mut f64,
) -> TacticaStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let row = unsafe { slice(row, len, "row") }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = predict_proba(m, row)?;
        Ok(())
    })
}

/// Shapley attribution of the margin: writes `len` values and the base value.
///
/// # Safety
/// `row` and `values` must hold `len` doubles; `base_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tactica_model_shap(
    model: *const TacticaModel,
    row: *const f64,
    len: usize,
    values: *mut f64,
    base_value: *mut f64,
) -> TacticaStatus {
    guard(|| {
        let m = unsafe { model_ref(model) }?;
        let row = unsafe { slice(row, len, "row") }?;
        let values = unsafe { slice_mut(values, len, "values") }?;
        let base = unsafe { base_value.as_mut() }.ok_or_else(|| null("base_value"))?;
        let e = tree_shap(m, row)?;
        values.copy_from_slice(&e.values);
        *base = e.base_value;
        Ok(())
    })
}

/// Field weight of a point. A null `pitch` means the default 105 x 68 m.
///
/// # Safety
/// `pitch` must be null or valid; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tactica_field_weight(
    pitch: *const TacticaPitch,
    beta: f64,
    x: f64,
    y: f64,
    attacking: u8,
    out: *mut f64,
) -> TacticaStatus {
    guard(|| {
        let pitch = pitch_of(pitch)?;
        let w = WeightParams::new(beta)?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = field_weight(Point2::new(x, y), &pitch, &w, attacking != 0)?;
        Ok(())
    })
}

/// Seconds for a player at (x, y) moving at (vx, vy) to reach (tx, ty).
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tactica_arrival_time(
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    tx: f64,
    ty: f64,
    reaction_time: f64,
    max_speed: f64,
    out: *mut f64,
) -> TacticaStatus {
    guard(|| {
        let mp = MotionParams::new(reaction_time, max_speed)?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let p = PlayerState::new(0, "A", Side::Attacking, Point2::new(x, y), Point2::new(vx, vy));
        *out = arrival_time(&p, Point2::new(tx, ty), &mp);
        Ok(())
    })
}

/// Space score of every player in one frame. Offside attackers get score 0
/// and `excluded[i] = 1`.
///
/// # Safety
/// `players`, `scores` and `excluded` must each hold `n` elements; `pitch`
/// must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tactica_space_scores(
    players: *const TacticaPlayer,
    n: usize,
    ball_x: f64,
    ball_y: f64,
    pitch: *const TacticaPitch,
    reaction_time: f64,
    max_speed: f64,
    beta: f64,
    scores: *mut f64,
    excluded: *mut u8,
) -> TacticaStatus {
    guard(|| {
        let input = unsafe { slice(players, n, "players") }?;
        let scores = unsafe { slice_mut(scores, n, "scores") }?;
        let excluded = unsafe { slice_mut(excluded, n, "excluded") }?;
        let pitch = pitch_of(pitch)?;
        let mp = MotionParams::new(reaction_time, max_speed)?;
        let w = WeightParams::new(beta)?;
        let ids: BTreeSet<u32> = input.iter().map(|p| p.id).collect();
        if ids.len() != input.len() {
            return Err(Fail(TacticaStatus::InvalidArgument, "duplicate player id".into()));
        }
        let states = input
            .iter()
            .map(|p| {
                let (team, side) = if p.attacking != 0 {
                    ("A", Side::Attacking)
                } else {
                    ("B", Side::Defending)
                };
                PlayerState::new(p.id, team, side, Point2::new(p.x, p.y), Point2::new(p.vx, p.vy))
            })
            .collect();
        let frame = TrackedFrame {
            frame_index: 0,
            time: 0.0,
            ball: BallState {
                pos: Point2::new(ball_x, ball_y),
                vel: Point2::default(),
            },
            players: states,
            meta: FrameMeta {
                attacking_team: Some(TeamId::new("A")),
                right_team: Some(TeamId::new("A")),
                ..FrameMeta::default()
            },
        };
        let off = offside_positions(&frame);
        let table = SpaceEngine::new(&frame, &pitch, &mp, &w, &off)?.table(&BTreeSet::new())?;
        for (i, entry) in table.players.iter().enumerate() {
            scores[i] = entry.score;
            excluded[i] = u8::from(entry.excluded_offside);
        }
        Ok(())
    })
}
