use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qlimit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlimit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SHORT: &str = r#"
[bath1]
coupling = 1e-3
cutoff = 1.0
temperature = 5.0

[drive]
amplitude = 0.2
frequency = 2.0

[grid]
time_start = 0.0
time_stop = 4.0
time_count = 9
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn list_shows_every_builtin_scenario() {
    let o = qlimit(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let names: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    assert!(names.len() >= 8, "{names:?}");
    for want in ["fig1_temperature", "fig3_initial_state", "oracle_xcheck", "markov_limit"] {
        assert!(names.contains(&want), "missing {want}");
    }
}

#[test]
fn unknown_scenario_is_an_error_listing_alternatives() {
    let dir = tempfile::tempdir().unwrap();
    let o = qlimit(&["run", "no_such_scenario", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no_such_scenario") && err.contains("markov_limit"), "{err}");
}

#[test]
fn validate_accepts_good_and_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", SHORT);
    assert!(qlimit(&["validate", &good]).status.success());

    let negative = write(dir.path(), "neg.toml", &SHORT.replace("coupling = 1e-3", "coupling = -1e-3"));
    let o = qlimit(&["validate", &negative]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bath1.coupling"));

    let broken = write(dir.path(), "broken.toml", "[bath1]\ncoupling = ");
    assert_eq!(qlimit(&["validate", &broken]).status.code(), Some(1));
    assert_eq!(qlimit(&["validate", "/nonexistent/file.toml"]).status.code(), Some(1));
}

#[test]
fn run_writes_outputs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = qlimit(&["run", "fig6_mass_ratio", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let base = out.join("fig6_mass_ratio");
    let summary = fs::read_to_string(base.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.lines().skip(1).all(|l| l.contains(",completed,")));
    let point = fs::read_to_string(base.join("osc2_mass_0.5.csv")).unwrap();
    assert_eq!(point.lines().count(), 10);
    assert!(point.lines().next().unwrap().contains("log_negativity"));

    let again = qlimit(&["run", "fig6_mass_ratio", "--config", &cfg, "--out", out_s]);
    assert!(again.status.success());
    assert_eq!(stdout(&again).matches("skipped").count(), 4);
    assert_eq!(fs::read_to_string(base.join("osc2_mass_0.5.csv")).unwrap(), point);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("out{threads}"));
        let o = qlimit(&["run", "fig2_coupling", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success());
        files.push(fs::read_to_string(out.join("fig2_coupling").join("bath_cutoff_20-bath_coupling_0.002.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn a_failing_sweep_value_gives_exit_code_two() {
    // With no damping or drive, sin(omega2 t) = 0 makes the boundary problem singular for
    // omega2 = 0.96 only.
    let dir = tempfile::tempdir().unwrap();
    let t = std::f64::consts::PI / 0.96;
    let text = format!(
        "[bath1]\ncoupling = 0.0\ncutoff = 1.0\ntemperature = 1.0\n\n[drive]\namplitude = 0.0\n\n[grid]\nfinal_times = [1.0, {t:?}]\n"
    );
    let cfg = write(dir.path(), "singular.toml", &text);
    let o = qlimit(&["run", "fig6_freq_ratio", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let summary = fs::read_to_string(dir.path().join("fig6_freq_ratio").join("summary.csv")).unwrap();
    assert_eq!(summary.matches(",failed,").count(), 1);
    assert_eq!(summary.matches(",completed,").count(), 4);
}
