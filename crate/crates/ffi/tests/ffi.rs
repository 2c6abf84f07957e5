use std::ffi::{c_char, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tiltpath_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { tp_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn mixture(triples: &[(f64, f64, f64)]) -> *mut TpMixture {
    let w: Vec<f64> = triples.iter().map(|t| t.0).collect();
    let m: Vec<f64> = triples.iter().map(|t| t.1).collect();
    let s: Vec<f64> = triples.iter().map(|t| t.2).collect();
    let mut out = ptr::null_mut();
    let st = unsafe { tp_mixture_new(w.as_ptr(), m.as_ptr(), s.as_ptr(), w.len(), &mut out) };
    assert_eq!(st, TpStatus::Ok, "{}", last_error());
    out
}

#[test]
fn mixture_queries_and_errors() {
    let pi = mixture(&[(2.0 / 3.0, -8.0, 1.0), (1.0 / 3.0, 4.0, 1.0)]);
    let mut v = 0.0;
    unsafe {
        assert_eq!(tp_mixture_cdf(pi, -2.0, &mut v), TpStatus::Ok);
        assert!((v - 2.0 / 3.0).abs() < 1e-8);
        assert_eq!(tp_mixture_quantile(pi, 0.5, &mut v), TpStatus::Ok);
        let mut c = 0.0;
        tp_mixture_cdf(pi, v, &mut c);
        assert!((c - 0.5).abs() < 1e-9);
        assert_eq!(tp_mixture_quantile(pi, 1.5, &mut v), TpStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(tp_mixture_pdf(ptr::null(), 0.0, &mut v), TpStatus::NullPointer);
        assert_eq!(last_error(), "mixture is null");
        assert_eq!(tp_mixture_pdf(pi, 0.0, ptr::null_mut()), TpStatus::NullPointer);

        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        tp_mixture_sample(pi, 16, 3, a.as_mut_ptr());
        tp_mixture_sample(pi, 16, 3, b.as_mut_ptr());
        assert_eq!(a, b);
        tp_mixture_free(pi);
        tp_mixture_free(ptr::null_mut());
    }
    let mut out = ptr::null_mut();
    let st = unsafe { tp_mixture_new([0.3].as_ptr(), [0.0].as_ptr(), [1.0].as_ptr(), 1, &mut out) };
    assert_eq!(st, TpStatus::InvalidArgument);
    assert!(out.is_null());
}

#[test]
fn mccann_map_is_monotone() {
    let eta = mixture(&[(1.0, 0.0, 1.0)]);
    let pi = mixture(&[(2.0 / 3.0, -8.0, 1.0), (1.0 / 3.0, 4.0, 1.0)]);
    let mut prev = f64::NEG_INFINITY;
    for i in 0..50 {
        let mut y = 0.0;
        let st = unsafe { tp_mccann_map(eta, pi, -3.0 + 0.12 * i as f64, &mut y) };
        assert_eq!(st, TpStatus::Ok);
        assert!(y > prev);
        prev = y;
    }
    unsafe {
        tp_mixture_free(eta);
        tp_mixture_free(pi);
    }
}

const SHIFT: &str = r#"{"pi": {"components": [{"weight": 1, "mean": 2, "std": 1}]},
  "grid": {"x_lo": -4, "x_hi": 6, "n_x": 12, "n_t": 11},
  "transport": {"dt": 0.01, "n_particles": 50, "seed": 1}}"#;

#[test]
fn solvers_through_handles() {
    let json = CString::new(SHIFT).unwrap();
    let mut exp = ptr::null_mut();
    unsafe {
        assert_eq!(tp_experiment_from_json(json.as_ptr(), &mut exp), TpStatus::Ok, "{}", last_error());
        let mut n = 0usize;
        tp_experiment_n_particles(exp, &mut n);
        assert_eq!(n, 50);

        let mut r = ptr::null_mut();
        assert_eq!(tp_reference_solve(exp, &mut r), TpStatus::Ok);
        let (mut u, mut du) = (0.0, 0.0);
        tp_reference_eval(r, 1.0, 0.5, &mut u, &mut du);
        assert!((du - 2.0).abs() < 0.1, "{du}");
        let mut norm = 0.0;
        tp_reference_norm(r, &mut norm);
        assert!(norm > 0.0);

        let mut c = ptr::null_mut();
        assert_eq!(tp_control_solve(exp, &mut c), TpStatus::Ok);
        let (mut nu, mut ng, mut it, mut conv) = (0.0, 0.0, 0usize, false);
        tp_control_summary(c, &mut nu, &mut ng, &mut it, &mut conv);
        assert!(conv && nu > 0.0 && it > 0);
        let mut g = 0.0;
        tp_control_eval(c, 1.0, 0.0, &mut u, &mut du, &mut g);
        assert!(g.abs() < 1e-2);

        let init = [-0.5, 0.0, 0.5];
        let mut out = [0.0; 3];
        assert_eq!(tp_reference_transport(r, init.as_ptr(), 3, 0.01, out.as_mut_ptr()), TpStatus::Ok);
        for (a, b) in init.iter().zip(&out) {
            assert!((b - a - 2.0).abs() < 0.1);
        }
        assert_eq!(tp_control_transport(c, init.as_ptr(), 3, 0.3, out.as_mut_ptr()), TpStatus::InvalidArgument);

        tp_control_free(c);
        tp_reference_free(r);
        tp_experiment_free(exp);
    }
    let bad = CString::new(r#"{"grid": 3}"#).unwrap();
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { tp_experiment_from_json(bad.as_ptr(), &mut e) }, TpStatus::Config);
    assert!(e.is_null());
}

#[test]
fn run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SHIFT).unwrap();
    let c = |s: &str| CString::new(s).unwrap();
    let (cmd, path, out) = (c("mccann"), c(cfg.to_str().unwrap()), c(dir.path().join("o").to_str().unwrap()));
    assert_eq!(unsafe { tp_run(cmd.as_ptr(), path.as_ptr(), out.as_ptr()) }, TpStatus::Ok);
    assert!(dir.path().join("o/mccann_metrics.json").exists());
    let nope = c("plot");
    assert_eq!(unsafe { tp_run(nope.as_ptr(), path.as_ptr(), out.as_ptr()) }, TpStatus::InvalidArgument);
    let missing = c("/nonexistent/cfg.json");
    assert_eq!(unsafe { tp_run(cmd.as_ptr(), missing.as_ptr(), out.as_ptr()) }, TpStatus::Io);
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_is_current_and_c_program_links() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(crate_dir.join("include/tiltpath.h")).unwrap();
    for name in ["tp_last_error", "tp_mixture_new", "tp_control_solve", "tp_run", "TP_STATUS_PANIC"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let lib = target_dir().join("libtiltpath_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping C link check: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
