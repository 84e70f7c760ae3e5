use std::ffi::{CStr, CString};
use std::ptr;

use priomac::harness::{run_scenario, Scenario};
use priomac::metrics::{to_csv, Protocol};
use priomac::SimConfig;
use priomac_ffi::*;

fn set(cfg: *mut PmConfig, key: &str, value: &str) -> PmStatus {
    let k = CString::new(key).unwrap();
    let v = CString::new(value).unwrap();
    unsafe { pm_config_set(cfg, k.as_ptr(), v.as_ptr()) }
}

fn last_error() -> String {
    let p = pm_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn small_config() -> *mut PmConfig {
    let cfg = pm_config_new();
    for (k, v) in [
        ("n_urgent", "4"),
        ("duration_s", "60"),
        ("urgent_interval_us", "500000"),
        ("seed", "3"),
    ] {
        assert_eq!(set(cfg, k, v), PmStatus::Ok);
    }
    cfg
}

#[test]
fn run_matches_the_rust_api() {
    let cfg = small_config();
    let mut direct = SimConfig::default();
    for (k, v) in [
        ("n_urgent", "4"),
        ("duration_s", "60"),
        ("urgent_interval_us", "500000"),
        ("seed", "3"),
    ] {
        direct.set(k, v).unwrap();
    }
    for (proto, rust_proto) in [
        (PmProtocol::Ssmac, Protocol::SsMac),
        (PmProtocol::Frogmac, Protocol::FrogMac),
    ] {
        let mut res = ptr::null_mut();
        assert_eq!(unsafe { pm_run(cfg, proto, &mut res) }, PmStatus::Ok);
        assert!(!res.is_null());
        let expected = run_scenario(&Scenario::new("ffi", rust_proto, direct.clone()))
            .unwrap()
            .result;

        let mut stats = PmClassStats::default();
        assert_eq!(
            unsafe { pm_result_class_stats(res, PmClass::Urgent, &mut stats) },
            PmStatus::Ok
        );
        assert_eq!(stats.generated, expected.urgent.generated);
        assert_eq!(stats.delivered, expected.urgent.delivered);
        assert_eq!(stats.has_delay, 1);
        assert_eq!(stats.mean_delay_us, expected.urgent.mean_delay_us.unwrap());
        assert_eq!(stats.p95_delay_us, expected.urgent.p95_delay_us.unwrap());

        let csv = unsafe { pm_result_to_csv(res) };
        assert!(!csv.is_null());
        let text = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_string();
        assert_eq!(text, to_csv(&[expected]));
        unsafe {
            pm_string_free(csv);
            pm_result_free(res);
        }
    }
    unsafe { pm_config_free(cfg) };
}

#[test]
fn errors_are_reported_with_codes_and_messages() {
    let cfg = pm_config_new();
    assert_eq!(set(cfg, "no_such_key", "1"), PmStatus::InvalidArgument);
    assert!(last_error().contains("no_such_key"));
    assert_eq!(set(cfg, "seed", "many"), PmStatus::InvalidConfig);
    assert_eq!(
        unsafe { pm_config_set(cfg, ptr::null(), ptr::null()) },
        PmStatus::NullPointer
    );
    let bad = [0xffu8, 0];
    let v = CString::new("1").unwrap();
    assert_eq!(
        unsafe { pm_config_set(cfg, bad.as_ptr().cast(), v.as_ptr()) },
        PmStatus::Utf8
    );

    assert_eq!(set(cfg, "gap_frag_us", "1344"), PmStatus::Ok);
    assert_eq!(
        unsafe { pm_config_validate(cfg, PmProtocol::Frogmac) },
        PmStatus::InvalidConfig
    );
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { pm_run(cfg, PmProtocol::Frogmac, &mut res) },
        PmStatus::InvalidConfig
    );
    assert!(res.is_null());
    assert!(last_error().contains("gap"));

    // A successful call clears the message.
    assert_eq!(set(cfg, "seed", "2"), PmStatus::Ok);
    assert!(pm_last_error_message().is_null());

    assert_eq!(
        unsafe { pm_run(ptr::null(), PmProtocol::Ssmac, &mut res) },
        PmStatus::NullPointer
    );
    assert_eq!(
        unsafe { pm_run(cfg, PmProtocol::Ssmac, ptr::null_mut()) },
        PmStatus::NullPointer
    );
    assert_eq!(
        unsafe { pm_result_class_stats(ptr::null(), PmClass::Normal, ptr::null_mut()) },
        PmStatus::NullPointer
    );
    assert!(unsafe { pm_result_to_csv(ptr::null()) }.is_null());
    unsafe {
        pm_config_free(cfg);
        pm_config_free(ptr::null_mut());
        pm_result_free(ptr::null_mut());
        pm_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(pm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
