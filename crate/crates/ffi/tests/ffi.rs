use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use aitwin_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(aitwin_last_error()).to_string_lossy().into_owned() }
}

struct Fixture {
    twin: *mut AitwinTwin,
    n: usize,
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe { aitwin_twin_free(self.twin) };
    }
}

fn four_tanks() -> Fixture {
    let scenario = c("config = \"4_tanks\"\nduration = 300.0\nnoise_sigma = 0.0\n");
    let mut twin = ptr::null_mut();
    unsafe {
        assert_eq!(aitwin_twin_from_scenario(scenario.as_ptr(), &mut twin), AitwinStatus::Ok);
        let mut n = 0;
        assert_eq!(aitwin_twin_signal_count(twin, &mut n), AitwinStatus::Ok);
        Fixture { twin, n }
    }
}

#[test]
fn data_access_and_ingest() {
    let f = four_tanks();
    unsafe {
        let (mut first, mut last) = (0.0, 0.0);
        assert_eq!(aitwin_twin_time_range(f.twin, &mut first, &mut last), AitwinStatus::Ok);
        assert_eq!((first, last), (0.0, 299.0));

        let mut all = vec![0.0; f.n];
        assert_eq!(aitwin_twin_get_data_all(f.twin, 100.5, all.as_mut_ptr(), f.n), AitwinStatus::Ok);
        let mut one = 0.0;
        assert_eq!(aitwin_twin_get_data(f.twin, 2, 100.5, &mut one), AitwinStatus::Ok);
        assert_eq!(one.to_bits(), all[2].to_bits());

        assert_eq!(aitwin_twin_get_data(f.twin, 0, 1e6, &mut one), AitwinStatus::OutOfRange);
        assert_eq!(aitwin_twin_get_data(f.twin, f.n, 10.0, &mut one), AitwinStatus::OutOfRange);
        assert_eq!(aitwin_twin_get_data_all(f.twin, 10.0, all.as_mut_ptr(), f.n - 1), AitwinStatus::SchemaMismatch);

        assert_eq!(aitwin_twin_ingest(f.twin, 300.0, all.as_ptr(), f.n), AitwinStatus::Ok);
        assert_eq!(aitwin_twin_ingest(f.twin, 300.0, all.as_ptr(), f.n), AitwinStatus::InvalidArgument);
        assert!(last_error().contains("not after"));
        let mut comps = 0;
        assert_eq!(aitwin_twin_component_count(f.twin, &mut comps), AitwinStatus::Ok);
        assert_eq!(comps, 12);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut n = 0;
        assert_eq!(aitwin_twin_signal_count(ptr::null(), &mut n), AitwinStatus::NullPointer);
        assert!(last_error().contains("twin"));
        let mut twin = ptr::null_mut();
        assert_eq!(aitwin_twin_from_scenario(ptr::null(), &mut twin), AitwinStatus::NullPointer);
        aitwin_twin_free(ptr::null_mut());
        aitwin_session_free(ptr::null_mut());
    }
}

#[test]
fn bad_scenarios_map_to_status_codes() {
    unsafe {
        let mut twin = ptr::null_mut();
        assert_eq!(aitwin_twin_from_scenario(c("config = ").as_ptr(), &mut twin), AitwinStatus::Parse);
        assert_eq!(
            aitwin_twin_from_scenario(c("config = \"a_tank\"\ndt = -1.0\n").as_ptr(), &mut twin),
            AitwinStatus::InvalidArgument
        );
        assert_eq!(aitwin_twin_from_scenario_file(c("/no/such/file.toml").as_ptr(), &mut twin), AitwinStatus::Io);
        assert!(twin.is_null());
    }
}

#[test]
fn physics_session_predicts_and_honours_failures() {
    let f = four_tanks();
    unsafe {
        let mut session = ptr::null_mut();
        assert_eq!(aitwin_session_new(f.twin, &mut session), AitwinStatus::Ok);
        let partial = vec![f64::NAN; f.n];
        let (mut x, mut p) = (vec![0.0; f.n], vec![0.0; f.n]);
        assert_eq!(
            aitwin_session_extrapolate_static(session, partial.as_ptr(), f.n, x.as_mut_ptr(), p.as_mut_ptr()),
            AitwinStatus::NotFitted
        );
        aitwin_session_free(session);

        assert_eq!(aitwin_twin_fit(f.twin, c("physics").as_ptr(), 200.0), AitwinStatus::Ok);
        assert_eq!(aitwin_session_new(f.twin, &mut session), AitwinStatus::Ok);

        // one-step prediction against the stored next sample
        let times = [99.0, 100.0];
        let mut values = vec![0.0; 2 * f.n];
        for (k, t) in times.iter().enumerate() {
            assert_eq!(aitwin_twin_get_data_all(f.twin, *t, values[k * f.n..].as_mut_ptr(), f.n), AitwinStatus::Ok);
        }
        let mut next = vec![0.0; f.n];
        assert_eq!(aitwin_twin_get_data_all(f.twin, 101.0, next.as_mut_ptr(), f.n), AitwinStatus::Ok);
        assert_eq!(
            aitwin_session_extrapolate_dynamic(
                session,
                times.as_ptr(),
                values.as_ptr(),
                2,
                f.n,
                1.0,
                x.as_mut_ptr(),
                ptr::null_mut()
            ),
            AitwinStatus::Ok
        );
        for (a, b) in x.iter().zip(&next) {
            assert!((a - b).abs() <= 1e-6);
        }

        let mut score = 0.0;
        assert_eq!(aitwin_session_anomaly_score_static(session, next.as_ptr(), f.n, &mut score), AitwinStatus::Ok);
        assert!((0.0..=1.0).contains(&score));
        let mut windowed = values.clone();
        windowed.extend_from_slice(&next);
        let t3 = [99.0, 100.0, 101.0];
        assert_eq!(
            aitwin_session_anomaly_score_dynamic(session, t3.as_ptr(), windowed.as_ptr(), 3, f.n, &mut score),
            AitwinStatus::Ok
        );
        assert!(score > 0.5);

        assert_eq!(aitwin_session_set_failed(session, c("v0").as_ptr(), c("blocked").as_ptr()), AitwinStatus::Ok);
        assert_eq!(
            aitwin_session_extrapolate_static(session, partial.as_ptr(), f.n, x.as_mut_ptr(), p.as_mut_ptr()),
            AitwinStatus::Ok
        );
        assert_eq!(x[0], 0.0);
        assert_eq!(p[0], 1.0);
        assert_eq!(
            aitwin_session_set_failed(session, c("v0").as_ptr(), c("melted").as_ptr()),
            AitwinStatus::UnknownName
        );
        assert_eq!(aitwin_session_clear_failed(session), AitwinStatus::Ok);
        aitwin_session_free(session);
    }
}

#[test]
fn events_and_concepts() {
    let f = four_tanks();
    unsafe {
        let (mut e, mut s) = (0, 0);
        assert_eq!(
            aitwin_twin_define_event(f.twin, c("t0_level > 0.5").as_ptr(), c("t0_half").as_ptr(), &mut e),
            AitwinStatus::Ok
        );
        assert_eq!(
            aitwin_twin_define_concept(
                f.twin,
                c("t0_level < 0.5 & t1_level < 0.5").as_ptr(),
                c("low").as_ptr(),
                &mut s
            ),
            AitwinStatus::Ok
        );
        assert_eq!(
            aitwin_twin_define_event(f.twin, c("pressure > 1").as_ptr(), c("bad").as_ptr(), &mut e),
            AitwinStatus::Parse
        );
        let t0 = f.n - 4;
        let mut a = vec![0.0; f.n];
        let mut b = vec![0.0; f.n];
        b[t0] = 1.0;
        let mut ids = [u32::MAX; 4];
        let mut count = 0;
        assert_eq!(
            aitwin_twin_get_event(f.twin, a.as_ptr(), b.as_ptr(), f.n, ids.as_mut_ptr(), 4, &mut count),
            AitwinStatus::Ok
        );
        assert_eq!((count, ids[0]), (1, 0));
        assert_eq!(
            aitwin_twin_get_event(f.twin, a.as_ptr(), b.as_ptr(), f.n, ids.as_mut_ptr(), 0, &mut count),
            AitwinStatus::BufferTooSmall
        );
        assert_eq!(count, 1);

        assert_eq!(
            aitwin_twin_get_concepts(f.twin, a.as_ptr(), f.n, ids.as_mut_ptr(), 4, &mut count),
            AitwinStatus::Ok
        );
        assert_eq!((count, ids[0]), (1, 0));
        a[t0] = f64::NAN;
        assert_eq!(
            aitwin_twin_get_concepts(f.twin, a.as_ptr(), f.n, ids.as_mut_ptr(), 4, &mut count),
            AitwinStatus::InvalidArgument
        );
    }
}

#[test]
fn auc_through_the_abi() {
    let scores = [0.1, 0.3, 0.35, 0.8];
    let labels = [1u8, 0, 1, 0];
    let mut a = 0.0;
    unsafe {
        assert_eq!(aitwin_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut a), AitwinStatus::Ok);
        assert_eq!(a, 0.75);
        assert_eq!(aitwin_auc(scores.as_ptr(), [0u8; 4].as_ptr(), 4, &mut a), AitwinStatus::InvalidArgument);
        assert!(!CStr::from_ptr(aitwin_version()).to_bytes().is_empty());
    }
}

/// Compiles `smoke.c` against the generated header and the static library.
#[test]
fn c_program_links_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap();
    let lib = lib_dir.join("libaitwin_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap_or_else(|e| panic!("C compiler `{cc}` not runnable: {e}"));
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "smoke exited {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
