//! C ABI for carvemesh.
//!
//! A `CmReconstructor` is driven one keyframe at a time: open it with
//! `cm_keyframe_begin`, describe it with the point and observation calls,
//! then run it with `cm_keyframe_end`. Every fallible call returns a
//! `CmStatus`; the message for the last failure on the calling thread is
//! available from `cm_last_error`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Passing a freed handle is undefined behavior.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use carvemesh::config::Config;
use carvemesh::geom::Point;
use carvemesh::io::{self, Camera, IoError, KeyframeBatch, MeshFormat};
use carvemesh::mesh::TriangleMesh;
use carvemesh::reconstructor::{ReconstructError, Reconstructor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    /// A keyframe index did not increase, or a keyframe call came out of
    /// sequence.
    OutOfOrder = 5,
    UnknownId = 6,
    /// The triangulation or the manifold invariant failed.
    Reconstruction = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// Per-keyframe counters returned by `cm_keyframe_end`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CmKeyframeSummary {
    pub index: u64,
    pub seconds: f64,
    pub new_points: u64,
    pub points_not_added: u64,
    pub vertices: u64,
    pub tets: u64,
    pub outside_tets: u64,
}

pub struct CmReconstructor {
    inner: Reconstructor,
    open: Option<KeyframeBatch>,
}

pub struct CmMesh {
    vertices: Vec<f64>,
    triangles: Vec<u32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CmStatus, msg: impl Into<String>) -> CmStatus {
    set_error(msg.into());
    status
}

fn reconstruct_status(e: ReconstructError) -> CmStatus {
    let status = match &e {
        ReconstructError::OutOfOrder { .. } | ReconstructError::NoFrame | ReconstructError::InvalidMidFrame => CmStatus::OutOfOrder,
        ReconstructError::UnknownId { .. } => CmStatus::UnknownId,
        ReconstructError::Config(_) => CmStatus::Config,
        ReconstructError::Empty => CmStatus::InvalidArgument,
        _ => CmStatus::Reconstruction,
    };
    fail(status, e.to_string())
}

fn io_status(e: IoError) -> CmStatus {
    let status = match e {
        IoError::UnknownId { .. } => CmStatus::UnknownId,
        IoError::Parse { .. } => CmStatus::InvalidArgument,
        _ => CmStatus::Io,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into `CmStatus::Panic`.
fn guard(f: impl FnOnce() -> CmStatus) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CmStatus::Panic, msg)
        }
    }
}

unsafe fn point3(xyz: *const f64) -> Option<Point> {
    if xyz.is_null() {
        return None;
    }
    let s = std::slice::from_raw_parts(xyz, 3);
    let p = Point::new(s[0], s[1], s[2]);
    p.coords.iter().all(|c| c.is_finite()).then_some(p)
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, CmStatus> {
    if s.is_null() {
        return Err(fail(CmStatus::NullArgument, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CmStatus::InvalidArgument, "string is not UTF-8"))
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates a reconstructor. `config_toml` may be NULL for defaults.
///
/// # Safety
/// `config_toml` is NULL or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cm_reconstructor_new(config_toml: *const c_char, out: *mut *mut CmReconstructor) -> CmStatus {
    guard(|| {
        if out.is_null() {
            return fail(CmStatus::NullArgument, "out is null");
        }
        let cfg = if config_toml.is_null() {
            Config::default()
        } else {
            let text = match str_arg(config_toml) {
                Ok(t) => t,
                Err(s) => return s,
            };
            match Config::from_toml(text) {
                Ok(c) => c,
                Err(e) => return fail(CmStatus::Config, e.to_string()),
            }
        };
        match Reconstructor::new(cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CmReconstructor { inner, open: None }));
                CmStatus::Ok
            }
            Err(e) => reconstruct_status(e),
        }
    })
}

/// # Safety
/// `r` is NULL or a handle from `cm_reconstructor_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_reconstructor_free(r: *mut CmReconstructor) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

unsafe fn with_open(r: *mut CmReconstructor, f: impl FnOnce(&mut KeyframeBatch) -> CmStatus) -> CmStatus {
    guard(|| {
        let Some(r) = r.as_mut() else {
            return fail(CmStatus::NullArgument, "reconstructor is null");
        };
        match r.open.as_mut() {
            Some(b) => f(b),
            None => fail(CmStatus::OutOfOrder, "no keyframe is open"),
        }
    })
}

/// Opens keyframe `index`, taken by camera `camera_id` at `center`.
///
/// # Safety
/// `r` is a live handle; `center` points to three doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_keyframe_begin(r: *mut CmReconstructor, index: u64, camera_id: u32, center: *const f64) -> CmStatus {
    guard(|| {
        let Some(r) = r.as_mut() else {
            return fail(CmStatus::NullArgument, "reconstructor is null");
        };
        if r.open.is_some() {
            return fail(CmStatus::OutOfOrder, "a keyframe is already open");
        }
        let Some(center) = point3(center) else {
            return fail(CmStatus::InvalidArgument, "camera center is null or not finite");
        };
        r.open = Some(KeyframeBatch::new(index, Camera { id: camera_id, center, pose: None }));
        CmStatus::Ok
    })
}

/// # Safety
/// `r` is a live handle; `xyz` points to three doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_keyframe_add_point(r: *mut CmReconstructor, point_id: u64, xyz: *const f64) -> CmStatus {
    with_open(r, |b| match point3(xyz) {
        Some(p) => {
            b.new_points.push((point_id, p));
            CmStatus::Ok
        }
        None => fail(CmStatus::InvalidArgument, "point is null or not finite"),
    })
}

/// # Safety
/// `r` is a live handle; `xyz` points to three doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_keyframe_move_point(r: *mut CmReconstructor, point_id: u64, xyz: *const f64) -> CmStatus {
    with_open(r, |b| match point3(xyz) {
        Some(p) => {
            b.moved_points.push((point_id, p));
            CmStatus::Ok
        }
        None => fail(CmStatus::InvalidArgument, "point is null or not finite"),
    })
}

/// # Safety
/// `r` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_keyframe_remove_point(r: *mut CmReconstructor, point_id: u64) -> CmStatus {
    with_open(r, |b| {
        b.removed_points.push(point_id);
        CmStatus::Ok
    })
}

/// Records that camera `camera_id` sees point `point_id`.
///
/// # Safety
/// `r` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_keyframe_observe(r: *mut CmReconstructor, camera_id: u32, point_id: u64) -> CmStatus {
    with_open(r, |b| {
        b.observations.push((camera_id, point_id));
        CmStatus::Ok
    })
}

/// Integrates the open keyframe. `summary` may be NULL.
///
/// # Safety
/// `r` is a live handle; `summary` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_keyframe_end(r: *mut CmReconstructor, summary: *mut CmKeyframeSummary) -> CmStatus {
    guard(|| {
        let Some(r) = r.as_mut() else {
            return fail(CmStatus::NullArgument, "reconstructor is null");
        };
        let Some(batch) = r.open.take() else {
            return fail(CmStatus::OutOfOrder, "no keyframe is open");
        };
        match r.inner.process_keyframe(batch) {
            Ok(s) => {
                if let Some(out) = summary.as_mut() {
                    *out = CmKeyframeSummary {
                        index: s.index,
                        seconds: s.timings.total,
                        new_points: s.new_points as u64,
                        points_not_added: s.points_not_added as u64,
                        vertices: s.vertices as u64,
                        tets: s.tets as u64,
                        outside_tets: s.outside_tets as u64,
                    };
                }
                CmStatus::Ok
            }
            Err(e) => reconstruct_status(e),
        }
    })
}

/// Feeds every keyframe of a log file, stopping at the first failure.
///
/// # Safety
/// `r` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm_reconstructor_feed_log(r: *mut CmReconstructor, path: *const c_char) -> CmStatus {
    guard(|| {
        let Some(r) = r.as_mut() else {
            return fail(CmStatus::NullArgument, "reconstructor is null");
        };
        if r.open.is_some() {
            return fail(CmStatus::OutOfOrder, "a keyframe is already open");
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let reader = match io::open_log(Path::new(path)) {
            Ok(rd) => rd,
            Err(e) => return io_status(e),
        };
        for batch in reader {
            let batch = match batch {
                Ok(b) => b,
                Err(e) => return io_status(e),
            };
            if let Err(e) = r.inner.process_keyframe(batch) {
                return reconstruct_status(e);
            }
        }
        CmStatus::Ok
    })
}

/// Extracts the current surface into a new mesh handle.
///
/// # Safety
/// `r` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cm_reconstructor_surface(r: *const CmReconstructor, out: *mut *mut CmMesh) -> CmStatus {
    guard(|| {
        let (Some(r), false) = (r.as_ref(), out.is_null()) else {
            return fail(CmStatus::NullArgument, "null argument");
        };
        let m = r.inner.surface();
        *out = Box::into_raw(Box::new(CmMesh {
            vertices: m.vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
            triangles: m.triangles.iter().flatten().copied().collect(),
        }));
        CmStatus::Ok
    })
}

/// # Safety
/// `m` is NULL or a handle from `cm_reconstructor_surface` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_mesh_free(m: *mut CmMesh) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` is a live mesh handle.
#[no_mangle]
pub unsafe extern "C" fn cm_mesh_vertex_count(m: *const CmMesh) -> usize {
    m.as_ref().map_or(0, |m| m.vertices.len() / 3)
}

/// # Safety
/// `m` is a live mesh handle.
#[no_mangle]
pub unsafe extern "C" fn cm_mesh_triangle_count(m: *const CmMesh) -> usize {
    m.as_ref().map_or(0, |m| m.triangles.len() / 3)
}

/// `3 * vertex_count` coordinates, owned by the mesh.
///
/// # Safety
/// `m` is a live mesh handle.
#[no_mangle]
pub unsafe extern "C" fn cm_mesh_vertices(m: *const CmMesh) -> *const f64 {
    m.as_ref().map_or(std::ptr::null(), |m| m.vertices.as_ptr())
}

/// `3 * triangle_count` vertex indices, counter-clockwise seen from the
/// free side, owned by the mesh.
///
/// # Safety
/// `m` is a live mesh handle.
#[no_mangle]
pub unsafe extern "C" fn cm_mesh_triangles(m: *const CmMesh) -> *const u32 {
    m.as_ref().map_or(std::ptr::null(), |m| m.triangles.as_ptr())
}

/// Writes the mesh as PLY or OFF, chosen by the file extension.
///
/// # Safety
/// `m` is a live mesh handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm_mesh_write(m: *const CmMesh, path: *const c_char) -> CmStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(CmStatus::NullArgument, "mesh is null");
        };
        let path = match str_arg(path) {
            Ok(p) => Path::new(p),
            Err(s) => return s,
        };
        let Some(format) = MeshFormat::from_path(path) else {
            return fail(CmStatus::InvalidArgument, "mesh path must end in .ply or .off");
        };
        let mesh = TriangleMesh {
            vertices: m.vertices.chunks_exact(3).map(|c| Point::new(c[0], c[1], c[2])).collect(),
            triangles: m.triangles.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        };
        match io::write_mesh(&mesh, path, format) {
            Ok(()) => CmStatus::Ok,
            Err(e) => io_status(e),
        }
    })
}
