//! C ABI over `verifact-core`.
//!
//! Every fallible call returns a [`VfStatus`]; on anything but `VF_STATUS_OK` the
//! message is available from [`vf_last_error`] on the same thread. Strings
//! returned through `char **` out-parameters are owned by the caller and must
//! go back through [`vf_string_free`]. Handles have a matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use verifact_core::calibration::{ece, platt_fit, CalibrationModel};
use verifact_core::corpus::{agreement_kappa, BinaryLabel, Language, Split, Statement};
use verifact_core::evidence::{strip_verdict_with, Article, KeywordMatch};
use verifact_core::gateway::{default_prices, estimate_cost, CostLedger, Price};
use verifact_core::parser::{parse_reply, VerdictKind};
use verifact_core::prompts::{render, Demonstration, Evidence, PromptKind};
use verifact_core::scoring::{confusion, metrics, Averaging};
use verifact_core::verdicts::{apply_threshold, optimize_threshold, ThresholdRule};
use verifact_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad argument or configuration.
    InvalidArgument = 3,
    /// Transport, provider or fixture failure.
    Transport = 4,
    /// Malformed or inconsistent data.
    Data = 5,
    Panic = 6,
}

impl From<&Error> for VfStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => VfStatus::InvalidArgument,
            3 => VfStatus::Transport,
            _ => VfStatus::Data,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfVerdictKind {
    Score = 0,
    Binary = 1,
    Uncertain = 2,
    Refusal = 3,
}

/// A parsed reply. `value` is the score or the 0/1 binary answer, -1 otherwise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VfVerdict {
    pub kind: VfVerdictKind,
    pub value: i32,
    pub out_of_range: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VfMetrics {
    pub accuracy: f64,
    pub f1: f64,
}

/// Opaque fitted Platt model.
pub struct VfCalibrationModel(CalibrationModel);

/// Opaque token ledger.
pub struct VfCostLedger(CostLedger);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(VfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(VfStatus::from(&e), e.to_string())
    }
}

type Out<T = ()> = Result<T, Failure>;

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Out) -> VfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside verifact");
            VfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(VfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Out<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Out<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Out<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Out {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Out {
    let c = CString::new(s)
        .map_err(|_| Failure(VfStatus::Data, "result contains a NUL byte".into()))?;
    write(out, c.into_raw(), "out")
}

fn binary_labels(raw: &[u8]) -> Out<Vec<BinaryLabel>> {
    raw.iter()
        .map(|&b| match b {
            0 => Ok(BinaryLabel::False),
            1 => Ok(BinaryLabel::True),
            other => Err(Failure(
                VfStatus::InvalidArgument,
                format!("binary label {other} is not 0 or 1"),
            )),
        })
        .collect()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next verifact call on the same thread.
#[no_mangle]
pub extern "C" fn vf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn vf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a verifact `char **` out-parameter, or be null.
#[no_mangle]
pub unsafe extern "C" fn vf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a model reply produced by prompt `kind` (e.g. "score", "binary").
///
/// # Safety
/// `kind` and `raw` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_parse_reply(
    kind: *const c_char,
    raw: *const c_char,
    out: *mut VfVerdict,
) -> VfStatus {
    guard(|| {
        let kind: PromptKind = text(kind, "kind")?.parse()?;
        let (verdict, out_of_range) = parse_reply(kind, text(raw, "raw")?);
        let (k, value) = match verdict.kind {
            VerdictKind::Score(s) => (VfVerdictKind::Score, s as i32),
            VerdictKind::Binary(b) => (VfVerdictKind::Binary, b as i32),
            VerdictKind::Uncertain => (VfVerdictKind::Uncertain, -1),
            VerdictKind::Refusal => (VfVerdictKind::Refusal, -1),
        };
        write(
            out,
            VfVerdict {
                kind: k,
                value,
                out_of_range,
            },
            "out",
        )
    })
}

/// Render a prompt. `article` is needed for web_evidence and `demo_text`
/// with `demo_score` for the in-context kinds; pass null otherwise.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed; `out`
/// receives a string to release with `vf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn vf_render_prompt(
    kind: *const c_char,
    statement: *const c_char,
    article: *const c_char,
    demo_text: *const c_char,
    demo_score: u8,
    out: *mut *mut c_char,
) -> VfStatus {
    guard(|| {
        let kind: PromptKind = text(kind, "kind")?.parse()?;
        let s = Statement {
            id: "ffi".into(),
            text: text(statement, "statement")?.to_string(),
            language: Language::En,
            six_way: None,
            possibility: None,
            split: Split::Test,
        };
        let evidence = opt_text(article, "article")?.map(|t| Evidence { id: "ffi", text: t });
        let demo = opt_text(demo_text, "demo_text")?.map(|t| Demonstration {
            id: "ffi",
            text: t,
            score: demo_score,
        });
        let rendered = render(kind, &s, evidence, demo)?;
        write_string(out, rendered.text)
    })
}

/// Binary decision for `score`: 1 (true) when score >= threshold.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vf_apply_threshold(score: u8, threshold: u8, out: *mut u8) -> VfStatus {
    guard(|| {
        if score > 100 {
            return Err(Error::OutOfRange(score as i64).into());
        }
        let label = apply_threshold(score, ThresholdRule::new(threshold)?);
        write(out, label.is_true() as u8, "out")
    })
}

/// Accuracy-maximizing threshold over 0..=101.
///
/// # Safety
/// `scores` and `labels` must each hold `n` readable items; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_optimize_threshold(
    scores: *const u8,
    labels: *const u8,
    n: usize,
    out: *mut u8,
) -> VfStatus {
    guard(|| {
        let scores = slice(scores, n, "scores")?;
        let labels = binary_labels(slice(labels, n, "labels")?)?;
        let rule = optimize_threshold(scores, &labels)?;
        write(out, rule.threshold, "out")
    })
}

/// Accuracy and weighted (or macro) F1 over class indices `< n_classes`.
///
/// # Safety
/// `predicted` and `gold` must each hold `n` readable items; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_metrics(
    predicted: *const usize,
    gold: *const usize,
    n: usize,
    n_classes: usize,
    macro_average: bool,
    out: *mut VfMetrics,
) -> VfStatus {
    guard(|| {
        let cm = confusion(
            slice(predicted, n, "predicted")?,
            slice(gold, n, "gold")?,
            n_classes,
        )?;
        let averaging = if macro_average {
            Averaging::Macro
        } else {
            Averaging::Weighted
        };
        let m = metrics(&cm, averaging)?;
        write(
            out,
            VfMetrics {
                accuracy: m.accuracy,
                f1: m.f1,
            },
            "out",
        )
    })
}

/// Fit a Platt model on 0..=100 scores and 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must each hold `n` readable items; `out` receives a
/// handle to release with `vf_calibration_free`.
#[no_mangle]
pub unsafe extern "C" fn vf_platt_fit(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut *mut VfCalibrationModel,
) -> VfStatus {
    guard(|| {
        let scores = slice(scores, n, "scores")?;
        let labels = binary_labels(slice(labels, n, "labels")?)?;
        let model = platt_fit(scores, &labels)?;
        write(
            out,
            Box::into_raw(Box::new(VfCalibrationModel(model))),
            "out",
        )
    })
}

/// Build a model from known parameters.
///
/// # Safety
/// `out` receives a handle to release with `vf_calibration_free`.
#[no_mangle]
pub unsafe extern "C" fn vf_calibration_new(
    slope: f64,
    intercept: f64,
    out: *mut *mut VfCalibrationModel,
) -> VfStatus {
    guard(|| {
        if !slope.is_finite() || !intercept.is_finite() {
            return Err(Error::argument("calibration parameters must be finite").into());
        }
        let model = CalibrationModel { slope, intercept };
        write(
            out,
            Box::into_raw(Box::new(VfCalibrationModel(model))),
            "out",
        )
    })
}

/// # Safety
/// `model` must be a live handle; `slope` and `intercept` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_calibration_params(
    model: *const VfCalibrationModel,
    slope: *mut f64,
    intercept: *mut f64,
) -> VfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write(slope, m.0.slope, "slope")?;
        write(intercept, m.0.intercept, "intercept")
    })
}

/// Calibrated P(true) for one score.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_calibration_apply(
    model: *const VfCalibrationModel,
    score: f64,
    out: *mut f64,
) -> VfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write(out, m.0.apply(score), "out")
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vf_calibration_free(model: *mut VfCalibrationModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Expected calibration error with `bins` equal-mass bins.
///
/// # Safety
/// `probabilities` and `labels` must each hold `n` readable items.
#[no_mangle]
pub unsafe extern "C" fn vf_ece(
    probabilities: *const f64,
    labels: *const u8,
    n: usize,
    bins: usize,
    out: *mut f64,
) -> VfStatus {
    guard(|| {
        let p = slice(probabilities, n, "probabilities")?;
        let labels = binary_labels(slice(labels, n, "labels")?)?;
        write(out, ece(p, &labels, bins)?, "out")
    })
}

/// Remove the verdict sentence and everything after it from an article.
/// `substring` switches keyword matching from whole words to substrings.
///
/// # Safety
/// `article` must be NUL-terminated; `out` receives a string to release
/// with `vf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn vf_strip_verdict(
    article: *const c_char,
    substring: bool,
    out: *mut *mut c_char,
) -> VfStatus {
    guard(|| {
        let a = Article {
            statement_id: String::new(),
            text: text(article, "article")?.to_string(),
            source_url: None,
        };
        let mode = if substring {
            KeywordMatch::Substring
        } else {
            KeywordMatch::WordBounded
        };
        write_string(out, strip_verdict_with(&a, mode).article.text)
    })
}

/// Cohen's kappa between two integer labelings.
///
/// # Safety
/// `a` and `b` must each hold `n` readable items; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_kappa(
    a: *const u32,
    b: *const u32,
    n: usize,
    out: *mut f64,
) -> VfStatus {
    guard(|| {
        write(
            out,
            agreement_kappa(slice(a, n, "a")?, slice(b, n, "b")?)?,
            "out",
        )
    })
}

/// A ledger with the default price table.
///
/// # Safety
/// `out` receives a handle to release with `vf_cost_ledger_free`.
#[no_mangle]
pub unsafe extern "C" fn vf_cost_ledger_new(out: *mut *mut VfCostLedger) -> VfStatus {
    guard(|| {
        write(
            out,
            Box::into_raw(Box::new(VfCostLedger(CostLedger::new(default_prices())))),
            "out",
        )
    })
}

/// Add or replace the USD-per-1000-token prices for a model.
///
/// # Safety
/// `ledger` must be a live handle; `model` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vf_cost_ledger_set_price(
    ledger: *mut VfCostLedger,
    model: *const c_char,
    usd_per_1k_input: f64,
    usd_per_1k_output: f64,
) -> VfStatus {
    guard(|| {
        let l = ledger.as_mut().ok_or_else(|| null("ledger"))?;
        if !(usd_per_1k_input >= 0.0 && usd_per_1k_output >= 0.0) {
            return Err(Error::argument("prices must be non-negative").into());
        }
        l.0.prices.insert(
            text(model, "model")?.to_string(),
            Price {
                usd_per_1k_input,
                usd_per_1k_output,
            },
        );
        Ok(())
    })
}

/// Record one request's token counts.
///
/// # Safety
/// `ledger` must be a live handle; `model` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vf_cost_ledger_record(
    ledger: *mut VfCostLedger,
    model: *const c_char,
    input_tokens: u64,
    output_tokens: u64,
) -> VfStatus {
    guard(|| {
        let l = ledger.as_mut().ok_or_else(|| null("ledger"))?;
        l.0.record(text(model, "model")?, input_tokens, output_tokens);
        Ok(())
    })
}

/// USD spent on `model` so far.
///
/// # Safety
/// `ledger` must be a live handle; `model` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vf_cost_ledger_usd(
    ledger: *const VfCostLedger,
    model: *const c_char,
    out: *mut f64,
) -> VfStatus {
    guard(|| {
        let l = ledger.as_ref().ok_or_else(|| null("ledger"))?;
        write(out, estimate_cost(&l.0, text(model, "model")?)?, "out")
    })
}

/// # Safety
/// `ledger` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vf_cost_ledger_free(ledger: *mut VfCostLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}
