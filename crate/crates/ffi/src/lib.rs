//! C ABI over the weavestat library.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns a [`WsStatus`]; on failure the message is
//! available from [`ws_last_error`] until the next failing call on the same
//! thread. Arrays are C-ordered `(z, y, x)` with x fastest.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ndarray::Array3;
use weavestat::descriptors::{
    axis_spectrum, class_s2, volume_fractions, Boundary, CorrelationField, GridAxis,
};
use weavestat::nesting::{self, CompactionSpec, AREAL_WEIGHT_GSM, FIBER_DENSITY_G_CM3};
use weavestat::patching::patch_grid;
use weavestat::synth::{generate_plain_weave, WeaveSpec};
use weavestat::volume::{one_hot_encode, LabelVolume};
use weavestat::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 3,
    Consistency = 4,
    Domain = 5,
    Format = 6,
    Io = 7,
    Refused = 8,
    Coverage = 9,
    Empty = 10,
    BufferTooSmall = 11,
    Panic = 99,
}

impl From<&Error> for WsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::Consistency(_) => Self::Consistency,
            Error::Domain(_) => Self::Domain,
            Error::Format { .. } | Error::Hdf5(_) => Self::Format,
            Error::Io { .. } => Self::Io,
            Error::Refused(_) => Self::Refused,
            Error::Coverage(_) => Self::Coverage,
            Error::Empty(_) => Self::Empty,
        }
    }
}

/// Opaque segmented volume.
pub struct WsLabelVolume(LabelVolume);

/// Opaque two-point correlation field.
pub struct WsCorrelation(CorrelationField);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WsNestingResult {
    pub layer_thickness_mm: f64,
    pub layer_sigma_mm: f64,
    pub nesting_factor: f64,
    pub nesting_sigma: f64,
    pub peak_voxels: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(WsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(WsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(WsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            WsStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn boundary(periodic: bool) -> Boundary {
    if periodic {
        Boundary::Periodic
    } else {
        Boundary::Aperiodic { unbiased: false }
    }
}

fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < values.len() {
        return Err(Fail(
            WsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    // SAFETY: caller guarantees `out` points to `len` writable doubles.
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
    Ok(())
}

/// Message of the last failed call on this thread (empty if none).
#[no_mangle]
pub extern "C" fn ws_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copy `nz * ny * nx` labels into a new volume with isotropic `pitch_mm`.
///
/// # Safety
/// `labels` must point to `nz * ny * nx` readable values.
#[no_mangle]
pub unsafe extern "C" fn ws_label_volume_new(
    labels: *const u16,
    nz: usize,
    ny: usize,
    nx: usize,
    pitch_mm: f64,
    out: *mut *mut WsLabelVolume,
) -> WsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let n = nz
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nx))
            .ok_or_else(|| Fail(WsStatus::InvalidInput, "shape overflows".into()))?;
        let data = std::slice::from_raw_parts(labels, n).to_vec();
        let arr = Array3::from_shape_vec((nz, ny, nx), data)
            .map_err(|e| Fail(WsStatus::InvalidInput, e.to_string()))?;
        let vol = LabelVolume::from_array(arr, [pitch_mm; 3])?;
        *out = Box::into_raw(Box::new(WsLabelVolume(vol)));
        Ok(())
    })
}

/// Load labels (or the argmax of masks) from an HDF5 bundle.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ws_label_volume_read_h5(
    path: *const c_char,
    pitch_mm: f64,
    out: *mut *mut WsLabelVolume,
) -> WsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(WsStatus::InvalidInput, "path is not UTF-8".into()))?;
        let bundle = weavestat::io::read_h5_bundle(Path::new(path), [pitch_mm; 3])?;
        let vol = match (bundle.labels, bundle.masks) {
            (Some(l), _) => l,
            (None, Some(m)) => {
                let c = m.num_classes();
                let labels = Array3::from_shape_fn(m.geometry().shape(), |(z, y, x)| {
                    (0..c)
                        .find(|&k| m.channels()[[k, z, y, x]] == 1)
                        .unwrap_or(0) as u16
                });
                LabelVolume::new(*m.geometry(), labels, c)?
            }
            (None, None) => {
                return Err(Fail(
                    WsStatus::InvalidInput,
                    format!("{path}: no labels or masks"),
                ));
            }
        };
        *out = Box::into_raw(Box::new(WsLabelVolume(vol)));
        Ok(())
    })
}

/// # Safety
/// `vol` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ws_label_volume_free(vol: *mut WsLabelVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Write `(nz, ny, nx)` into `shape`.
///
/// # Safety
/// `shape` must point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn ws_label_volume_shape(
    vol: *const WsLabelVolume,
    shape: *mut usize,
) -> WsStatus {
    guard(|| {
        let vol = borrow(vol, "volume")?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        let s = vol.0.geometry().shape();
        std::ptr::copy_nonoverlapping(s.as_ptr(), shape, 3);
        Ok(())
    })
}

/// # Safety
/// `vol` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_label_volume_num_classes(
    vol: *const WsLabelVolume,
    out: *mut usize,
) -> WsStatus {
    guard(|| {
        let vol = borrow(vol, "volume")?;
        *out_ref(out, "out")? = vol.0.num_classes();
        Ok(())
    })
}

/// Fraction of voxels per class, `num_classes` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_volume_fractions(
    vol: *const WsLabelVolume,
    out: *mut f64,
    len: usize,
) -> WsStatus {
    guard(|| {
        let vol = borrow(vol, "volume")?;
        copy_out(&volume_fractions(&one_hot_encode(&vol.0)), out, len)
    })
}

/// Two-point correlation of `class`. Periodic output matches the volume
/// shape; aperiodic output is `2n - 1` per axis.
///
/// # Safety
/// `vol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_s2(
    vol: *const WsLabelVolume,
    class: u16,
    periodic: bool,
    out: *mut *mut WsCorrelation,
) -> WsStatus {
    guard(|| {
        let vol = borrow(vol, "volume")?;
        let out = out_ref(out, "out")?;
        let field = class_s2(&vol.0, class, boundary(periodic))?;
        *out = Box::into_raw(Box::new(WsCorrelation(field)));
        Ok(())
    })
}

/// # Safety
/// `corr` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ws_correlation_free(corr: *mut WsCorrelation) {
    if !corr.is_null() {
        drop(Box::from_raw(corr));
    }
}

/// # Safety
/// `shape` must point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn ws_correlation_shape(
    corr: *const WsCorrelation,
    shape: *mut usize,
) -> WsStatus {
    guard(|| {
        let corr = borrow(corr, "correlation")?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        let s = corr.0.geometry().shape();
        std::ptr::copy_nonoverlapping(s.as_ptr(), shape, 3);
        Ok(())
    })
}

/// Copy the field (zero lag at the center index) into `out`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_correlation_values(
    corr: *const WsCorrelation,
    out: *mut f64,
    len: usize,
) -> WsStatus {
    guard(|| {
        let corr = borrow(corr, "correlation")?;
        let values: Vec<f64> = corr.0.values().iter().copied().collect();
        copy_out(&values, out, len)
    })
}

/// # Safety
/// `corr` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ws_correlation_zero_lag(
    corr: *const WsCorrelation,
    out: *mut f64,
) -> WsStatus {
    guard(|| {
        let corr = borrow(corr, "correlation")?;
        *out_ref(out, "out")? = corr.0.zero_lag();
        Ok(())
    })
}

/// Samples along the z axis through the zero lag, `nz` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ws_correlation_z_spectrum(
    corr: *const WsCorrelation,
    out: *mut f64,
    len: usize,
) -> WsStatus {
    guard(|| {
        let corr = borrow(corr, "correlation")?;
        copy_out(axis_spectrum(&corr.0, GridAxis::Z).values(), out, len)
    })
}

/// Laminate thickness in mm for `layers` plies at fiber volume content `fvc`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ws_laminate_thickness(
    layers: u32,
    areal_weight_gsm: f64,
    fiber_density_g_cm3: f64,
    fvc: f64,
    out: *mut f64,
) -> WsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = nesting::laminate_thickness(&CompactionSpec {
            layers,
            areal_weight: areal_weight_gsm,
            fiber_density: fiber_density_g_cm3,
            target_fvc: fvc,
            gap_mm: 1.0,
        })?;
        Ok(())
    })
}

fn stack(layers: u32, gap_mm: f64) -> Result<CompactionSpec, Fail> {
    let mut spec = CompactionSpec {
        layers,
        areal_weight: AREAL_WEIGHT_GSM,
        fiber_density: FIBER_DENSITY_G_CM3,
        target_fvc: 1.0,
        gap_mm,
    };
    spec.validate()?;
    spec.target_fvc = nesting::laminate_thickness(&spec)? / gap_mm;
    Ok(spec)
}

fn result_of(r: &nesting::NestingReport) -> WsNestingResult {
    WsNestingResult {
        layer_thickness_mm: r.layer_thickness_mm,
        layer_sigma_mm: r.layer_sigma_mm,
        nesting_factor: r.nesting_factor,
        nesting_sigma: r.nesting_sigma,
        peak_voxels: r.peak.map_or(f64::NAN, |p| p.lag_voxels),
    }
}

/// Nesting factor from a known layer thickness `t_mm +- sigma_t_mm`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ws_nesting_factor(
    t_mm: f64,
    sigma_t_mm: f64,
    layers: u32,
    gap_mm: f64,
    out: *mut WsNestingResult,
) -> WsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let spec = stack(layers, gap_mm)?;
        *out = result_of(&nesting::nesting_factor(t_mm, sigma_t_mm, &spec)?);
        Ok(())
    })
}

/// Full chain on a volume: S2 of `class`, z-axis spectrum, peak, nesting factor.
///
/// # Safety
/// `vol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ws_nesting_from_labels(
    vol: *const WsLabelVolume,
    class: u16,
    periodic: bool,
    interp_factor: usize,
    layers: u32,
    gap_mm: f64,
    out: *mut WsNestingResult,
) -> WsStatus {
    guard(|| {
        let vol = borrow(vol, "volume")?;
        let out = out_ref(out, "out")?;
        let spec = stack(layers, gap_mm)?;
        let r =
            nesting::nesting_from_labels(&vol.0, class, boundary(periodic), interp_factor, &spec)?;
        *out = result_of(&r);
        Ok(())
    })
}

/// Number of sliding-window patches for `volume`, `patch` and `stride`
/// (each three values, `(z, y, x)`).
///
/// # Safety
/// The three arrays must each hold three values.
#[no_mangle]
pub unsafe extern "C" fn ws_patch_grid_count(
    volume: *const usize,
    patch: *const usize,
    stride: *const usize,
    out: *mut usize,
) -> WsStatus {
    guard(|| {
        let read = |p: *const usize, what| -> Result<[usize; 3], Fail> {
            if p.is_null() {
                return Err(null(what));
            }
            let mut a = [0; 3];
            std::ptr::copy_nonoverlapping(p, a.as_mut_ptr(), 3);
            Ok(a)
        };
        let g = patch_grid(
            read(volume, "volume")?,
            read(patch, "patch")?,
            read(stride, "stride")?,
        )?;
        *out_ref(out, "out")? = g.len();
        Ok(())
    })
}

/// Synthetic plain-weave stack with the reference fabric geometry. A
/// non-zero `seed` shifts each layer in-plane at random.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ws_synth_plain_weave(
    layers: usize,
    pitch_mm: f64,
    interpenetration_mm: f64,
    seed: u64,
    nz: usize,
    ny: usize,
    nx: usize,
    out: *mut *mut WsLabelVolume,
) -> WsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mut spec = WeaveSpec {
            layers,
            voxel_pitch: pitch_mm,
            interpenetration: interpenetration_mm,
            ..WeaveSpec::default()
        };
        if seed != 0 {
            spec = spec.with_random_offsets(seed);
        }
        let vol = generate_plain_weave(&spec, [nz, ny, nx])?;
        *out = Box::into_raw(Box::new(WsLabelVolume(vol)));
        Ok(())
    })
}
