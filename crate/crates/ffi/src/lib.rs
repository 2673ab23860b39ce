//! C ABI over `boasbuck`.
//!
//! Every entry point returns a [`BbStatus`]; on failure the message is kept
//! per thread and read back with [`bb_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use boasbuck::catalog::TestFunction;
use boasbuck::moments::MomentInputs;
use boasbuck::operators::{apply_batch_with_breaks, J0Convention, KernelCdf, OperatorConfig, OperatorKind};
use boasbuck::{BoasBuckSystem, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Io = 4,
    Parse = 5,
    Inadmissible = 6,
    Evaluation = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbOperatorKind {
    Discrete = 0,
    Durrmeyer = 1,
    SzaszDurrmeyer = 2,
}

impl From<BbOperatorKind> for OperatorKind {
    fn from(k: BbOperatorKind) -> Self {
        match k {
            BbOperatorKind::Discrete => OperatorKind::Discrete,
            BbOperatorKind::Durrmeyer => OperatorKind::Durrmeyer,
            BbOperatorKind::SzaszDurrmeyer => OperatorKind::SzaszDurrmeyer,
        }
    }
}

/// Operator value with its error budget.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BbValue {
    pub value: f64,
    pub truncation_bound: f64,
    pub quadrature_tol: f64,
    pub j_cut: usize,
}

/// Closed-form raw moments `m0, m1, m2` and Durrmeyer central moments.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BbMoments {
    pub discrete: [f64; 3],
    pub durrmeyer: [f64; 3],
    pub szasz: [f64; 3],
    pub mu1: f64,
    pub mu2: f64,
}

/// Real function callback; `ctx` is passed through untouched.
pub type BbRealFn = Option<unsafe extern "C" fn(x: f64, ctx: *mut c_void) -> f64>;

/// Opaque system handle.
pub struct BbSystem(BoasBuckSystem);

/// Opaque operator handle; owns a copy of its system.
pub struct BbOperator {
    sys: BoasBuckSystem,
    cfg: OperatorConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(BbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> BbStatus {
    match e {
        Error::AtPoint { source, .. } => status_of(source),
        Error::InvalidArgument(_)
        | Error::UnknownFunction(_)
        | Error::OrderMismatch { .. }
        | Error::CompositionDomain { .. } => BbStatus::InvalidArgument,
        Error::Io { .. } | Error::Csv { .. } => BbStatus::Io,
        Error::Json { .. } => BbStatus::Parse,
        Error::Inadmissible(_) => BbStatus::Inadmissible,
        _ => BbStatus::Evaluation,
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            BbStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            BbStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BbStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(BbStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

fn to_value(v: boasbuck::operators::OperatorValue) -> BbValue {
    BbValue {
        value: v.value,
        truncation_bound: v.truncation_bound,
        quadrature_tol: v.quadrature_tol,
        j_cut: v.j_cut,
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn bb_status_name(status: BbStatus) -> *const c_char {
    let s: &'static CStr = match status {
        BbStatus::Ok => c"ok",
        BbStatus::NullPointer => c"null pointer",
        BbStatus::InvalidArgument => c"invalid argument",
        BbStatus::InvalidUtf8 => c"invalid utf-8",
        BbStatus::Io => c"i/o error",
        BbStatus::Parse => c"parse error",
        BbStatus::Inadmissible => c"inadmissible system",
        BbStatus::Evaluation => c"evaluation error",
        BbStatus::BufferTooSmall => c"buffer too small",
        BbStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

fn store_system(out: *mut *mut BbSystem, sys: BoasBuckSystem) -> Result<(), Fail> {
    let out = unsafe { out_ref(out, "out")? };
    *out = Box::into_raw(Box::new(BbSystem(sys)));
    Ok(())
}

/// Built-in system by name (`exp1`, `exp2`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_system_builtin(name: *const c_char, out: *mut *mut BbSystem) -> BbStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        store_system(out, BoasBuckSystem::builtin(name)?)
    })
}

/// System from JSON text in the system-file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_system_from_json(json: *const c_char, out: *mut *mut BbSystem) -> BbStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let sys = BoasBuckSystem::from_json_str(text).map_err(|e| Fail(BbStatus::Parse, e.to_string()))??;
        store_system(out, sys)
    })
}

/// System from a file path, or `builtin:<name>`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_system_load(path: *const c_char, out: *mut *mut BbSystem) -> BbStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        store_system(out, BoasBuckSystem::load(path)?)
    })
}

/// # Safety
/// `sys` must be null or a handle from a `bb_system_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn bb_system_free(sys: *mut BbSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Runs the admissibility checks; `admissible` receives the verdict.
///
/// # Safety
/// `sys` must be a live handle; `admissible` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_system_validate(sys: *const BbSystem, admissible: *mut bool) -> BbStatus {
    guard(|| {
        let sys = borrow(sys, "sys")?;
        *out_ref(admissible, "admissible")? = sys.0.validate().is_admissible();
        Ok(())
    })
}

/// `p(x) = n^2 x^2 T(1) + n x U(1) + V(1)`.
///
/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_p_of_x(sys: *const BbSystem, n: u64, x: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let sys = borrow(sys, "sys")?;
        *out_ref(out, "out")? = sys.0.p_of_x(n, x);
        Ok(())
    })
}

/// Writes `Theta_0(y) .. Theta_order(y)` to `out[0..=order]`.
///
/// # Safety
/// `sys` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bb_theta_values(
    sys: *const BbSystem,
    y: f64,
    order: usize,
    out: *mut f64,
    len: usize,
) -> BbStatus {
    guard(|| {
        let sys = borrow(sys, "sys")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len <= order {
            return Err(Fail(
                BbStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", order + 1),
            ));
        }
        let table = sys.0.theta_values(y, order)?;
        let scale = table.log_scale.exp();
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, v) in dst.iter_mut().zip(&table.values) {
            *d = v * scale;
        }
        Ok(())
    })
}

/// Closed-form moments at `(n, x)`.
///
/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_moments(sys: *const BbSystem, n: u64, x: f64, out: *mut BbMoments) -> BbStatus {
    guard(|| {
        let sys = borrow(sys, "sys")?;
        let out = out_ref(out, "out")?;
        let m = MomentInputs::new(&sys.0, n, x)?;
        let (mu1, mu2) = m.central()?;
        *out = BbMoments {
            discrete: m.discrete(),
            durrmeyer: m.durrmeyer()?,
            szasz: m.szasz(),
            mu1,
            mu2,
        };
        Ok(())
    })
}

/// Operator of the given kind and index with default settings.
///
/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_new(
    sys: *const BbSystem,
    kind: BbOperatorKind,
    n: u64,
    out: *mut *mut BbOperator,
) -> BbStatus {
    guard(|| {
        let sys = borrow(sys, "sys")?;
        let out = out_ref(out, "out")?;
        let cfg = OperatorConfig::new(kind.into(), n);
        cfg.validate()?;
        *out = Box::into_raw(Box::new(BbOperator {
            sys: sys.0.clone(),
            cfg,
        }));
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from [`bb_operator_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_free(op: *mut BbOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Weight truncation tolerance, in `(0, 1e-3]`.
///
/// # Safety
/// `op` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_set_trunc_eps(op: *mut BbOperator, eps: f64) -> BbStatus {
    guard(|| {
        let op = out_ref(op, "op")?;
        let cfg = op.cfg.with_trunc_eps(eps);
        cfg.validate()?;
        op.cfg = cfg;
        Ok(())
    })
}

/// Drop the `j = 0` Durrmeyer term instead of placing it as a point mass at zero.
///
/// # Safety
/// `op` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_set_drop_j0(op: *mut BbOperator, drop_j0: bool) -> BbStatus {
    guard(|| {
        let op = out_ref(op, "op")?;
        let conv = if drop_j0 {
            J0Convention::Drop
        } else {
            J0Convention::PointMassAtZero
        };
        op.cfg = op.cfg.with_j0(conv);
        Ok(())
    })
}

struct Callback {
    f: unsafe extern "C" fn(f64, *mut c_void) -> f64,
    ctx: *mut c_void,
}

// Operator evaluation never leaves the calling thread, so the callback and
// its context are only touched from the thread that supplied them.
unsafe impl Sync for Callback {}

impl Callback {
    fn call(&self, s: f64) -> f64 {
        unsafe { (self.f)(s, self.ctx) }
    }
}

/// Applies the operator to a C callback at `x`. `breaks` (may be null when
/// `nbreaks` is 0) lists points where `f` has kinks.
///
/// # Safety
/// `op` must be a live handle, `f` non-null, `breaks` readable for `nbreaks`
/// doubles and `out` writable. The callback must not unwind.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_apply(
    op: *const BbOperator,
    f: BbRealFn,
    ctx: *mut c_void,
    breaks: *const f64,
    nbreaks: usize,
    x: f64,
    out: *mut BbValue,
) -> BbStatus {
    guard(|| {
        let op = borrow(op, "op")?;
        let out = out_ref(out, "out")?;
        let cb = Callback {
            f: f.ok_or_else(|| null("f"))?,
            ctx,
        };
        let breaks = match (breaks.is_null(), nbreaks) {
            (_, 0) => &[][..],
            (true, _) => return Err(null("breaks")),
            (false, k) => std::slice::from_raw_parts(breaks, k),
        };
        let g = |s: f64| cb.call(s);
        let v = apply_batch_with_breaks(&op.sys, &op.cfg, &[&g], breaks, x)?.remove(0);
        *out = to_value(v);
        Ok(())
    })
}

/// Applies the operator to a catalog function (`one`, `s`, `s2`, `s3`,
/// `sqrt`, `exp_neg`, `abs_s_minus_1`, `piecewise:<path>`).
///
/// # Safety
/// `op` must be a live handle, `id` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_apply_builtin(
    op: *const BbOperator,
    id: *const c_char,
    x: f64,
    out: *mut BbValue,
) -> BbStatus {
    guard(|| {
        let op = borrow(op, "op")?;
        let out = out_ref(out, "out")?;
        let f = TestFunction::lookup(str_arg(id, "id")?)?;
        let v = apply_batch_with_breaks(&op.sys, &op.cfg, &[f.as_fn()], f.kinks(), x)?.remove(0);
        *out = to_value(v);
        Ok(())
    })
}

/// Durrmeyer kernel distribution function `P(t <= y)` at `x`.
///
/// # Safety
/// `op` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bb_operator_kernel_cdf(op: *const BbOperator, x: f64, y: f64, out: *mut f64) -> BbStatus {
    guard(|| {
        let op = borrow(op, "op")?;
        let out = out_ref(out, "out")?;
        *out = KernelCdf::new(&op.sys, &op.cfg, x)?.eval(y);
        Ok(())
    })
}
