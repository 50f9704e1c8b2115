use std::ffi::{CStr, CString};
use std::ptr;

use verifact::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vf_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn parse_score_and_refusal() {
    let mut v = VfVerdict {
        kind: VfVerdictKind::Refusal,
        value: 0,
        out_of_range: false,
    };
    assert_eq!(
        unsafe { vf_parse_reply(c("score").as_ptr(), c(" 73 ").as_ptr(), &mut v) },
        VfStatus::Ok
    );
    assert_eq!(
        (v.kind, v.value, v.out_of_range),
        (VfVerdictKind::Score, 73, false)
    );

    assert_eq!(
        unsafe { vf_parse_reply(c("score").as_ptr(), c("150").as_ptr(), &mut v) },
        VfStatus::Ok
    );
    assert_eq!((v.kind, v.out_of_range), (VfVerdictKind::Refusal, true));

    assert_eq!(
        unsafe { vf_parse_reply(c("nope").as_ptr(), c("1").as_ptr(), &mut v) },
        VfStatus::InvalidArgument
    );
    assert!(last_error().contains("nope"));
}

#[test]
fn render_substitutes_statement() {
    let mut out = ptr::null_mut();
    let status = unsafe {
        vf_render_prompt(
            c("score").as_ptr(),
            c("The moon is cheese.").as_ptr(),
            ptr::null(),
            ptr::null(),
            0,
            &mut out,
        )
    };
    assert_eq!(status, VfStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { vf_string_free(out) };
    assert!(text.contains("The moon is cheese."));
    assert!(!text.contains("STATEMENT"));

    let status = unsafe {
        vf_render_prompt(
            c("web_evidence").as_ptr(),
            c("x").as_ptr(),
            ptr::null(),
            ptr::null(),
            0,
            &mut out,
        )
    };
    assert_eq!(status, VfStatus::InvalidArgument);
}

#[test]
fn threshold_round_trip() {
    let scores = [10u8, 20, 60, 90];
    let labels = [0u8, 0, 1, 1];
    let mut t = 0u8;
    assert_eq!(
        unsafe { vf_optimize_threshold(scores.as_ptr(), labels.as_ptr(), 4, &mut t) },
        VfStatus::Ok
    );
    // Every threshold in 21..=60 is perfect; the smallest wins.
    assert_eq!(t, 21);
    let bad = [0u8, 2, 1, 1];
    assert_eq!(
        unsafe { vf_optimize_threshold(scores.as_ptr(), bad.as_ptr(), 4, &mut t) },
        VfStatus::InvalidArgument
    );
}

#[test]
fn metrics_match_hand_count() {
    let pred = [0usize, 1, 1, 0];
    let gold = [0usize, 1, 0, 0];
    let mut m = VfMetrics::default();
    assert_eq!(
        unsafe { vf_metrics(pred.as_ptr(), gold.as_ptr(), 4, 2, true, &mut m) },
        VfStatus::Ok
    );
    assert_eq!(m.accuracy, 0.75);
    // class 0: p=1, r=2/3 -> 0.8; class 1: p=1/2, r=1 -> 2/3
    assert!((m.f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
}

#[test]
fn calibration_handle_lifecycle() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vf_calibration_new(0.08, -4.0, &mut h) },
        VfStatus::Ok
    );
    let mut p = 0.0;
    assert_eq!(
        unsafe { vf_calibration_apply(h, 50.0, &mut p) },
        VfStatus::Ok
    );
    assert!((p - 0.5).abs() < 1e-12);
    let (mut a, mut b) = (0.0, 0.0);
    assert_eq!(
        unsafe { vf_calibration_params(h, &mut a, &mut b) },
        VfStatus::Ok
    );
    assert_eq!((a, b), (0.08, -4.0));
    unsafe { vf_calibration_free(h) };
    unsafe { vf_calibration_free(ptr::null_mut()) };

    assert_eq!(
        unsafe { vf_calibration_apply(ptr::null(), 1.0, &mut p) },
        VfStatus::NullPointer
    );
}

#[test]
fn platt_fit_through_abi() {
    let scores: Vec<f64> = (0..=100).map(f64::from).collect();
    let labels: Vec<u8> = (0..=100).map(|s| u8::from(s % 3 == 0 || s > 60)).collect();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { vf_platt_fit(scores.as_ptr(), labels.as_ptr(), scores.len(), &mut h) },
        VfStatus::Ok
    );
    let (mut a, mut b) = (0.0, 0.0);
    unsafe { vf_calibration_params(h, &mut a, &mut b) };
    assert!(a > 0.0 && a.is_finite() && b.is_finite());
    unsafe { vf_calibration_free(h) };
}

#[test]
fn ece_of_perfect_forecast_is_zero() {
    let p = [0.0, 0.0, 1.0, 1.0];
    let y = [0u8, 0, 1, 1];
    let mut e = 1.0;
    assert_eq!(
        unsafe { vf_ece(p.as_ptr(), y.as_ptr(), 4, 2, &mut e) },
        VfStatus::Ok
    );
    assert_eq!(e, 0.0);
}

#[test]
fn strip_verdict_drops_tail() {
    let article =
        c("The senator spoke on Monday. Our ruling: we rate this claim False. Sources follow.");
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { vf_strip_verdict(article.as_ptr(), false, &mut out) },
        VfStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { vf_string_free(out) };
    assert_eq!(text, "The senator spoke on Monday.");
}

#[test]
fn kappa_perfect_and_chance() {
    let a = [0u32, 1, 0, 1];
    let mut k = 0.0;
    assert_eq!(
        unsafe { vf_kappa(a.as_ptr(), a.as_ptr(), 4, &mut k) },
        VfStatus::Ok
    );
    assert_eq!(k, 1.0);
    let b = [0u32, 0, 1, 1];
    unsafe { vf_kappa(a.as_ptr(), b.as_ptr(), 4, &mut k) };
    assert_eq!(k, 0.0);
}

#[test]
fn cost_ledger_prices_gpt4() {
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { vf_cost_ledger_new(&mut l) }, VfStatus::Ok);
    let model = c("gpt-4");
    unsafe { vf_cost_ledger_record(l, model.as_ptr(), 100_000, 3_000) };
    let mut usd = 0.0;
    assert_eq!(
        unsafe { vf_cost_ledger_usd(l, model.as_ptr(), &mut usd) },
        VfStatus::Ok
    );
    assert!((usd - 3.18).abs() < 1e-9);

    let other = c("other");
    assert_eq!(
        unsafe { vf_cost_ledger_usd(l, other.as_ptr(), &mut usd) },
        VfStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { vf_cost_ledger_set_price(l, other.as_ptr(), 1.0, 2.0) },
        VfStatus::Ok
    );
    unsafe { vf_cost_ledger_record(l, other.as_ptr(), 1000, 1000) };
    unsafe { vf_cost_ledger_usd(l, other.as_ptr(), &mut usd) };
    assert_eq!(usd, 3.0);
    unsafe { vf_cost_ledger_free(l) };
}

#[test]
fn invalid_utf8_is_rejected() {
    let raw = [0xffu8, 0xfe, 0];
    let mut v = VfVerdict {
        kind: VfVerdictKind::Refusal,
        value: 0,
        out_of_range: false,
    };
    let status = unsafe { vf_parse_reply(c("score").as_ptr(), raw.as_ptr().cast(), &mut v) };
    assert_eq!(status, VfStatus::InvalidUtf8);
}
