use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochsym"))
        .current_dir(Path::new(env!("CARGO_MANIFEST_DIR")))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn success() {
    let o = run(&["verify-symmetry", "problems/brownian.prob", "problems/heat-translation.gen", "--eps", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("symmetry check passed"));
}

#[test]
fn unbound_parameter_is_a_parse_error() {
    let o = run(&["symmetries", "problems/unbound.prob"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parameter a requires a value or must appear in ansatz rates"), "{}", stderr(&o));
}

#[test]
fn malformed_generator_is_a_parse_error() {
    let dir = std::env::temp_dir().join(format!("stochsym-exit-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let gen = dir.join("bad.gen");
    std::fs::write(&gen, "tau = 1 +\n").unwrap();
    let o = run(&["verify-symmetry", "problems/brownian.prob", gen.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.gen:1"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_a_parse_error() {
    let o = run(&["symmetries", "problems/nowhere.prob"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn aborted_simulation_is_a_solver_failure() {
    let o = run(&["verify-symmetry", "problems/singular.prob", "problems/time-shift.gen"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("all 8 paths"));
}

#[test]
fn dimension_mismatch_is_no_match() {
    let o = run(&["match", "problems/axinv.prob", "problems/brownian-classical.prob"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("no match: dimension mismatch"), "{}", stdout(&o));
}

#[test]
fn find_map_without_match() {
    let o = run(&["find-map", "problems/axinv.prob", "problems/brownian-classical.prob"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stdout(&o).contains("no match"));
}

#[test]
fn find_map_needs_a_map_ansatz() {
    let o = run(&["find-map", "problems/brownian.prob", "problems/brownian-classical.prob"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mu1"), "{}", stderr(&o));
}

#[test]
fn failed_symmetry_check() {
    let o = run(&["verify-symmetry", "problems/brownian.prob", "problems/not-a-symmetry.gen"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("residual check FAILED"));
}

#[test]
fn stochastic_generator_relies_on_residuals() {
    let o = run(&["verify-symmetry", "problems/axinv.prob", "problems/constant-noise.gen"]);
    assert_eq!(o.status.code(), Some(5));
    let s = stdout(&o);
    assert!(s.contains("flow check skipped"), "{s}");
}

#[test]
fn map_checks() {
    let ok = run(&["verify-map", "problems/langevin-affine.prob", "problems/langevin-brownian.map"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let bad = run(&["verify-map", "problems/langevin-affine.prob", "problems/wrong-drift.map", "--output", "kv"]);
    assert_eq!(bad.status.code(), Some(5));
    let s = stdout(&bad);
    assert!(s.contains("mu2 = x\n") && s.contains("checkpoint.4.pass = false"), "{s}");
}

#[test]
fn help_documents_normalization() {
    let o = run(&["symmetries", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("clear rational denominators"));
}

#[test]
fn decreasing_time_change_is_rejected() {
    let o = run(&["verify-map", "problems/langevin-affine.prob", "problems/time-reversal.map"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("map rejected"), "{}", stdout(&o));
}
