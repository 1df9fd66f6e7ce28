//! C ABI over the `attacknet` crate.
//!
//! Models are opaque [`AtnModel`] handles created by `atn_model_new` or
//! `atn_model_load` and released with `atn_model_free`. Every fallible call
//! returns an [`AtnStatus`]; on failure a description is kept per thread and
//! can be copied out with `atn_last_error_message`. Images are `float`
//! buffers in `[N, 3, H, W]` order with values in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use attacknet::data::Label;
use attacknet::gradcam::grad_cam;
use attacknet::metrics::{ConfusionMatrix, EvalReport};
use attacknet::model::{
    build_model, flop_count, load_checkpoint, param_count, save_checkpoint, Model, ModelConfig,
};
use attacknet::{Error, Prng, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Io = 5,
    Decode = 6,
    Checkpoint = 7,
    Dataset = 8,
    Undefined = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct AtnModel {
    inner: Model,
}

/// Metrics derived from confusion counts; bonafide is the positive class.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AtnMetrics {
    pub precision_bonafide: f32,
    pub recall_bonafide: f32,
    pub f1_bonafide: f32,
    pub precision_attack: f32,
    pub recall_attack: f32,
    pub f1_attack: f32,
    pub far: f32,
    pub frr: f32,
    pub hter: f32,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> AtnStatus {
    match e {
        Error::Shape(_) => AtnStatus::Shape,
        Error::Config(_) => AtnStatus::Config,
        Error::InvalidArgument(_) => AtnStatus::InvalidArgument,
        Error::Dataset(_) => AtnStatus::Dataset,
        Error::Undefined(_) => AtnStatus::Undefined,
        Error::Decode(_) => AtnStatus::Decode,
        Error::Checkpoint(_) => AtnStatus::Checkpoint,
        Error::Io { .. } => AtnStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (AtnStatus, String)>) -> AtnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            AtnStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AtnStatus::Panic
        }
    }
}

fn lift<T>(r: attacknet::Result<T>) -> Result<T, (AtnStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (AtnStatus, String) {
    (AtnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const AtnModel) -> Result<&'a Model, (AtnStatus, String)> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (AtnStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (AtnStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
    Ok(PathBuf::from(s))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn atn_status_name(status: AtnStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AtnStatus::Ok => c"ok",
        AtnStatus::NullPointer => c"null pointer",
        AtnStatus::InvalidArgument => c"invalid argument",
        AtnStatus::Shape => c"shape mismatch",
        AtnStatus::Config => c"invalid configuration",
        AtnStatus::Io => c"i/o error",
        AtnStatus::Decode => c"image decode error",
        AtnStatus::Checkpoint => c"checkpoint format error",
        AtnStatus::Dataset => c"dataset error",
        AtnStatus::Undefined => c"undefined metric",
        AtnStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn atn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a freshly initialized model. `config` is key=value text or null
/// for the defaults; `seed` drives the initialization.
///
/// # Safety
/// `config` must be null or a NUL-terminated string; `out` must be valid
/// for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn atn_model_new(
    config: *const c_char,
    seed: u64,
    out: *mut *mut AtnModel,
) -> AtnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config.is_null() {
            ModelConfig::default()
        } else {
            let text = CStr::from_ptr(config).to_str().map_err(|_| {
                (
                    AtnStatus::InvalidArgument,
                    "config is not UTF-8".to_string(),
                )
            })?;
            lift(ModelConfig::from_key_values(text))?
        };
        let model = lift(build_model(&cfg, &mut Prng::new(seed)))?;
        *out = Box::into_raw(Box::new(AtnModel { inner: model }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn atn_model_load(path: *const c_char, out: *mut *mut AtnModel) -> AtnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = lift(load_checkpoint(&path_arg(path)?))?;
        *out = Box::into_raw(Box::new(AtnModel { inner: model }));
        Ok(())
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn atn_model_save(model: *const AtnModel, path: *const c_char) -> AtnStatus {
    guard(|| lift(save_checkpoint(model_ref(model)?, &path_arg(path)?)))
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn atn_model_free(model: *mut AtnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Expected input image extents.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn atn_model_input_shape(
    model: *const AtnModel,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> AtnStatus {
    guard(|| {
        let cfg = model_ref(model)?.config();
        if channels.is_null() || height.is_null() || width.is_null() {
            return Err(null("output"));
        }
        *channels = cfg.input_channels;
        *height = cfg.input_h;
        *width = cfg.input_w;
        Ok(())
    })
}

/// Number of trainable scalars.
///
/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn atn_model_param_count(model: *const AtnModel, out: *mut u64) -> AtnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = param_count(m) as u64;
        Ok(())
    })
}

/// Forward-pass FLOPs of the convolution and dense layers.
///
/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn atn_model_flop_count(model: *const AtnModel, out: *mut u64) -> AtnStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = flop_count(m);
        Ok(())
    })
}

unsafe fn image_batch(
    m: &Model,
    pixels: *const f32,
    n: usize,
) -> Result<Tensor, (AtnStatus, String)> {
    if pixels.is_null() {
        return Err(null("pixels"));
    }
    if n == 0 {
        return Err((AtnStatus::InvalidArgument, "no images".into()));
    }
    let cfg = m.config();
    let shape = [n, cfg.input_channels, cfg.input_h, cfg.input_w];
    let len: usize = shape.iter().product();
    let data = std::slice::from_raw_parts(pixels, len).to_vec();
    lift(Tensor::new(&shape, data))
}

/// Inference-mode class probabilities. Writes `n_images × 2` floats
/// (bonafide, attack) to `probs`.
///
/// # Safety
/// `pixels` must hold `n_images × 3 × H × W` floats and `probs` have room
/// for `n_images × 2`.
#[no_mangle]
pub unsafe extern "C" fn atn_model_predict(
    model: *const AtnModel,
    pixels: *const f32,
    n_images: usize,
    probs: *mut f32,
) -> AtnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = image_batch(m, pixels, n_images)?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let p = lift(m.predict(&x))?;
        ptr::copy_nonoverlapping(p.data().as_ptr(), probs, p.len());
        Ok(())
    })
}

/// Grad-CAM map of one image for `target` (0 bonafide, 1 attack),
/// upsampled to `H × W` and written to `map`.
///
/// # Safety
/// `pixels` must hold `3 × H × W` floats and `map` have room for `H × W`.
#[no_mangle]
pub unsafe extern "C" fn atn_model_gradcam(
    model: *const AtnModel,
    pixels: *const f32,
    target: u32,
    map: *mut f32,
) -> AtnStatus {
    guard(|| {
        let m = model_ref(model)?;
        let label = Label::from_index(target as usize).ok_or_else(|| {
            (
                AtnStatus::InvalidArgument,
                format!("target {target} is not 0 or 1"),
            )
        })?;
        let x = image_batch(m, pixels, 1)?;
        if map.is_null() {
            return Err(null("map"));
        }
        let cam = lift(grad_cam(m, &x, label))?;
        ptr::copy_nonoverlapping(cam.upsampled.data().as_ptr(), map, cam.upsampled.len());
        Ok(())
    })
}

/// Precision, recall, F1, FAR, FRR and HTER from confusion counts.
/// Fails with `UNDEFINED` when either actual class is empty.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn atn_metrics_from_counts(
    tp: u64,
    fn_: u64,
    fp: u64,
    tn: u64,
    out: *mut AtnMetrics,
) -> AtnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = lift(EvalReport::from_confusion(ConfusionMatrix {
            tp,
            fn_,
            fp,
            tn,
        }))?;
        *out = AtnMetrics {
            precision_bonafide: r.bonafide.precision.value,
            recall_bonafide: r.bonafide.recall.value,
            f1_bonafide: r.bonafide.f1.value,
            precision_attack: r.attack.precision.value,
            recall_attack: r.attack.recall.value,
            f1_attack: r.attack.f1.value,
            far: r.far,
            frr: r.frr,
            hter: r.hter,
        };
        Ok(())
    })
}
