//! C ABI for the rtlforge engine: opaque engine handle, error codes, and a
//! small analysis surface (code extraction, port lint, error categorization,
//! scoring arithmetic, pass@k, BLEU) for bindings from other languages.
//!
//! Conventions: functions returning `RtlforgeStatus` report failure details
//! through `rtlforge_last_error`; every `char*` output is owned by the caller
//! and must be released with `rtlforge_string_free`.

use rtlforge::dataset::TaskKind;
use rtlforge::feedback::{Categorizer, QualityScore};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

/// Status codes returned by rtlforge FFI calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtlforgeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseFailed = 3,
    DomainError = 4,
    NoCodeFound = 5,
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let cstring = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

/// Message for the most recent failure on this thread, or null when the last
/// call succeeded. The pointer stays valid until the next failing call.
#[no_mangle]
pub extern "C" fn rtlforge_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rtlforge_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Frees a string allocated by this library.
///
/// # Safety
/// `s` must be a pointer previously returned through an out-parameter of
/// this library, or null.
#[no_mangle]
pub unsafe extern "C" fn rtlforge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque engine handle holding the error categorizer.
pub struct RtlforgeEngine {
    categorizer: Categorizer,
}

/// Creates an engine with the default category rule table.
#[no_mangle]
pub extern "C" fn rtlforge_engine_new() -> *mut RtlforgeEngine {
    Box::into_raw(Box::new(RtlforgeEngine { categorizer: Categorizer::default() }))
}

/// Destroys an engine handle.
///
/// # Safety
/// `engine` must come from `rtlforge_engine_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rtlforge_engine_free(engine: *mut RtlforgeEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, RtlforgeStatus> {
    if ptr.is_null() {
        set_last_error(&format!("{name} is null"));
        return Err(RtlforgeStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(&format!("{name} is not valid UTF-8"));
        RtlforgeStatus::InvalidUtf8
    })
}

fn string_out(value: String, out: *mut *mut c_char) -> RtlforgeStatus {
    match CString::new(value.replace('\0', " ")) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            RtlforgeStatus::Ok
        }
        Err(_) => {
            set_last_error("output contained an interior NUL");
            RtlforgeStatus::Internal
        }
    }
}

/// ceil(chars/4) token estimate; -1 on invalid input.
#[no_mangle]
pub unsafe extern "C" fn rtlforge_estimate_tokens(text: *const c_char) -> i64 {
    match str_arg(text, "text") {
        Ok(s) => i64::from(rtlforge::prompting::estimate_tokens(s)),
        Err(_) => -1,
    }
}

/// Composite quality score from the four components (weights 0.6/0.2/0.1/0.1).
#[no_mangle]
pub extern "C" fn rtlforge_quality_composite(
    functional: f64,
    compile: f64,
    port_completeness: f64,
    structure: f64,
) -> f64 {
    QualityScore::from_components(functional, compile, port_completeness, structure).composite
}

/// Unbiased pass@k estimator 1 - C(n-c,k)/C(n,k).
#[no_mangle]
pub unsafe extern "C" fn rtlforge_pass_at_k(n: u64, c: u64, k: u64, out: *mut f64) -> RtlforgeStatus {
    if out.is_null() {
        set_last_error("out is null");
        return RtlforgeStatus::NullArgument;
    }
    match rtlforge::metrics::pass_at_k(n, c, k) {
        Ok(v) => {
            *out = v;
            RtlforgeStatus::Ok
        }
        Err(e) => {
            set_last_error(&e.to_string());
            RtlforgeStatus::DomainError
        }
    }
}

/// BLEU-4 of a candidate against `n_references` reference strings.
#[no_mangle]
pub unsafe extern "C" fn rtlforge_bleu(
    candidate: *const c_char,
    references: *const *const c_char,
    n_references: usize,
    out: *mut f64,
) -> RtlforgeStatus {
    if out.is_null() || (references.is_null() && n_references > 0) {
        set_last_error("out/references is null");
        return RtlforgeStatus::NullArgument;
    }
    let candidate = match str_arg(candidate, "candidate") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let mut refs = Vec::with_capacity(n_references);
    for i in 0..n_references {
        match str_arg(*references.add(i), "reference") {
            Ok(s) => refs.push(s.to_string()),
            Err(status) => return status,
        }
    }
    *out = rtlforge::metrics::bleu(candidate, &refs);
    RtlforgeStatus::Ok
}

/// Extracts the Verilog candidate from raw model output. `is_generation`
/// selects the strict generation-task rules (whole-text fallback is
/// comprehension-only).
#[no_mangle]
pub unsafe extern "C" fn rtlforge_extract_code(
    raw: *const c_char,
    is_generation: bool,
    out: *mut *mut c_char,
) -> RtlforgeStatus {
    if out.is_null() {
        set_last_error("out is null");
        return RtlforgeStatus::NullArgument;
    }
    let raw = match str_arg(raw, "raw") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let kind = if is_generation { TaskKind::Generation } else { TaskKind::Comprehension };
    match rtlforge::rtl::extract_code(raw, kind) {
        Ok(candidate) => string_out(candidate.code, out),
        Err(e) => {
            set_last_error(&e.to_string());
            RtlforgeStatus::NoCodeFound
        }
    }
}

/// Lints Verilog source: port list, zombie ports, structure checks. The
/// result is a JSON object written to `out`.
#[no_mangle]
pub unsafe extern "C" fn rtlforge_lint_json(code: *const c_char, out: *mut *mut c_char) -> RtlforgeStatus {
    if out.is_null() {
        set_last_error("out is null");
        return RtlforgeStatus::NullArgument;
    }
    let code = match str_arg(code, "code") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let ports = match rtlforge::rtl::parse_ports(code) {
        Ok(p) => p,
        Err(e) => {
            set_last_error(&e.to_string());
            return RtlforgeStatus::ParseFailed;
        }
    };
    let usage = rtlforge::rtl::analyze_port_usage(code, &ports);
    let structure = rtlforge::rtl::score_structure(code, None);
    let value = serde_json::json!({
        "usage": usage,
        "structure": structure,
    });
    string_out(value.to_string(), out)
}

/// Categorizes a diagnostic or test-log message; writes the category name.
#[no_mangle]
pub unsafe extern "C" fn rtlforge_categorize(
    engine: *const RtlforgeEngine,
    message: *const c_char,
    out: *mut *mut c_char,
) -> RtlforgeStatus {
    if engine.is_null() || out.is_null() {
        set_last_error("engine/out is null");
        return RtlforgeStatus::NullArgument;
    }
    let message = match str_arg(message, "message") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let categorized = (*engine).categorizer.categorize_error(message, None, None);
    string_out(categorized.category.name().to_string(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    unsafe fn take_string(ptr: *mut c_char) -> String {
        let s = CStr::from_ptr(ptr).to_string_lossy().into_owned();
        rtlforge_string_free(ptr);
        s
    }

    #[test]
    fn version_is_non_null() {
        assert!(!rtlforge_version().is_null());
    }

    #[test]
    fn pass_at_k_roundtrip() {
        let mut out = 0.0;
        let status = unsafe { rtlforge_pass_at_k(5, 2, 1, &mut out) };
        assert_eq!(status, RtlforgeStatus::Ok);
        assert!((out - 0.4).abs() < 1e-12);
    }

    #[test]
    fn pass_at_k_domain_error_sets_message() {
        let mut out = 0.0;
        let status = unsafe { rtlforge_pass_at_k(5, 9, 1, &mut out) };
        assert_eq!(status, RtlforgeStatus::DomainError);
        assert!(!rtlforge_last_error().is_null());
    }

    #[test]
    fn extract_and_lint_roundtrip() {
        let raw = CString::new("prose\n```verilog\nmodule m(input a, output b); assign b = a; endmodule\n```").unwrap();
        let mut code_out: *mut c_char = std::ptr::null_mut();
        let status = unsafe { rtlforge_extract_code(raw.as_ptr(), true, &mut code_out) };
        assert_eq!(status, RtlforgeStatus::Ok);
        let code = unsafe { take_string(code_out) };
        assert!(code.contains("module m"));

        let code_c = CString::new(code).unwrap();
        let mut lint_out: *mut c_char = std::ptr::null_mut();
        let status = unsafe { rtlforge_lint_json(code_c.as_ptr(), &mut lint_out) };
        assert_eq!(status, RtlforgeStatus::Ok);
        let json = unsafe { take_string(lint_out) };
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["usage"]["usage_fraction"], 1.0);
        assert_eq!(value["structure"]["fraction"], 1.0);
    }

    #[test]
    fn categorize_through_engine_handle() {
        let engine = rtlforge_engine_new();
        let message = CString::new("identifier 'foo' is not declared").unwrap();
        let mut out: *mut c_char = std::ptr::null_mut();
        let status = unsafe { rtlforge_categorize(engine, message.as_ptr(), &mut out) };
        assert_eq!(status, RtlforgeStatus::Ok);
        assert_eq!(unsafe { take_string(out) }, "Undeclared");
        unsafe { rtlforge_engine_free(engine) };
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut out: *mut c_char = std::ptr::null_mut();
        let status = unsafe { rtlforge_extract_code(std::ptr::null(), true, &mut out) };
        assert_eq!(status, RtlforgeStatus::NullArgument);
        assert_eq!(unsafe { rtlforge_estimate_tokens(std::ptr::null()) }, -1);
    }

    #[test]
    fn composite_matches_weights() {
        let v = rtlforge_quality_composite(0.75, 1.0, 1.0, 1.0);
        assert!((v - 0.85).abs() < 1e-9);
    }

    #[test]
    fn bleu_identity() {
        let cand = CString::new("a b c d").unwrap();
        let r = CString::new("a b c d").unwrap();
        let refs = [r.as_ptr()];
        let mut out = 0.0;
        let status = unsafe { rtlforge_bleu(cand.as_ptr(), refs.as_ptr(), 1, &mut out) };
        assert_eq!(status, RtlforgeStatus::Ok);
        assert!((out - 1.0).abs() < 1e-12);
    }
}
