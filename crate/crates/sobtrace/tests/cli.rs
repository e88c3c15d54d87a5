use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use sobtrace::{Manifest, Setup};
use sobtrace_core::domain::bump;
use sobtrace_core::norms::sobolev_norm;
use sobtrace_core::scalar::{Combination, Separable};
use sobtrace_core::traceops::{extend_e, restrict};
use sobtrace_core::{Error, SharedField};

const SMALL: &str = "\
fields:
  X1: 1, 0, 0, 0
  X2: 0, 1, x1, 0
  T:  0, 0, 0, 1

domain:
  v = [-1, 1]
  v1 = [-0.6, 0.6]
  v2 = [-0.4, 0.4]
  eps = 0.5
  delta = 0.2
  grid_res = 8
  t_res = 6

norms:
  p = 2
  t_nodes = 10
  tau_samples = 3
  panel_nodes = 2

extension:
  quad_order = 3
  grid_res = 4

experiment:
  time_field = T
  corpus = 2
  change = 1, 1; 0, 1
";

fn r4() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/r4.cfg")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("small.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn sobtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sobtrace")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_reports_full_rank() {
    let out = sobtrace(&["check", "--config", r4().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("rank 3 of 3"), "{text}");
    assert!(text.contains("Z3 = [X1, X2]"), "{text}");
}

#[test]
fn flow_subcommand_prints_the_closed_form() {
    let out = sobtrace(&["flow", "--config", r4().to_str().unwrap(), "--field", "X2", "--point", "0.5,0,0,0", "--tau", "0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let y: Vec<f64> = stdout(&out).trim().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(y, vec![0.5, 0.25, 0.125, 0.0]);
}

#[test]
fn missing_config_is_an_error() {
    let out = sobtrace(&["check", "--config", "/nonexistent/none.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.cfg"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sobtrace(&["verify", "nothing"]).status.code(), Some(2));
}

#[test]
fn malformed_manifest_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &SMALL.replace("p = 2", "p = two"));
    let out = sobtrace(&["check", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 16"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn inadmissible_delta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL);
    let out = sobtrace(&["verify", "restriction", "--config", path.to_str().unwrap(), "--delta", "0.45"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not admissible"));
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL);
    let cfg = path.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = sobtrace(&["verify", "restriction", "--config", cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# experiment = restriction\n"));
    assert!(text.contains("\nid,kind,scale,besov_trace,sobolev,ratio\n"));
    assert!(text.lines().last().unwrap().starts_with("# summary pass="));
}

#[test]
fn report_writes_one_file_per_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = sobtrace(&["report", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["restriction", "extension", "basis", "singular", "residuals"] {
        assert!(out_dir.join(format!("{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn trace_ratio_is_invariant_under_amplitude() {
    let setup = Setup::new(Manifest::parse(SMALL).unwrap()).unwrap();
    let params = &setup.manifest.norms;
    let psi: SharedField = Arc::new(bump(&[0.0; 3], 0.2));
    let time: SharedField = Arc::new(bump(&[0.0], 0.15));
    let phi: SharedField = Arc::new(Separable { space: psi.clone(), time });
    let ratio = |c: f64| {
        let scaled: SharedField = Arc::new(Combination::scaled(c, phi.clone()));
        let trace = setup.besov(&restrict(scaled.clone()), &setup.basis, params).unwrap();
        trace / sobolev_norm(&scaled, &setup.bundle, &setup.u(), params).unwrap()
    };
    let base = ratio(1.0);
    for c in [7.0, 1e-6] {
        assert!((ratio(c) / base - 1.0).abs() < 1e-10, "amplitude {c}");
    }
}

#[test]
fn support_outside_v2_is_rejected() {
    let setup = Setup::new(Manifest::parse(SMALL).unwrap()).unwrap();
    let psi: SharedField = Arc::new(bump(&[0.35, 0.0, 0.0], 0.2));
    match extend_e(psi, setup.extension_config().unwrap()) {
        Err(Error::SupportViolation { .. }) => {}
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("extension accepted a function supported outside V2"),
    }
}
