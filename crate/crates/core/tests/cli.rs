use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_markov-structures");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Row {
    t: f64,
    nu_dep: f64,
    kappa: f64,
    classification: String,
}

fn read_csv(path: &Path) -> Vec<Row> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,nu_dep,nu_ind,rho,kl,kappa,classification"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 7, "{l}");
            Row {
                t: f[0].parse().unwrap(),
                nu_dep: f[1].parse().unwrap(),
                kappa: f[5].parse().unwrap(),
                classification: f[6].to_string(),
            }
        })
        .collect()
}

#[test]
fn common_jumps_kappa_vanishes_at_both_ends() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "ex1_common_jumps_s1", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("o/ex1_common_jumps_s1.common_jumps.csv"));
    assert_eq!(rows.len(), 151);
    assert_eq!(rows[0].t, 0.0);
    assert_eq!(rows[150].t, 30.0);
    assert!(rows[0].kappa.abs() < 1e-12);
    assert!(rows[150].kappa.abs() < 1e-12);
    assert!(rows.iter().any(|r| r.kappa > 1e-6));
    let report = std::fs::read_to_string(dir.path().join("o/ex1_common_jumps_s1.report.txt")).unwrap();
    assert!(report.contains("classification: weak-only"), "{report}");
    assert!(report.contains("(M) witness"), "{report}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(&["run", "ex4_systemic_importance_s2", "--out", out], dir.path());
        assert!(o.status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        let a = std::fs::read(dir.path().join("a").join(&n)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?}");
    }
}

#[test]
fn extreme_contagion_coincides_with_strong_eta_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "ex2_extreme_contagion_s1", "--out", "o"], dir.path());
    assert!(o.status.success());
    let ext = read_csv(&dir.path().join("o/ex2_extreme_contagion_s1.extreme_contagion.csv"));
    let strong = read_csv(&dir.path().join("o/ex2_extreme_contagion_s1.strong_eta_1.csv"));
    assert_eq!(ext.len(), strong.len());
    for (a, b) in ext.iter().zip(&strong) {
        assert_eq!(a.t, b.t);
        assert!((a.kappa - b.kappa).abs() <= 1e-8, "t={}", a.t);
    }
}

#[test]
fn anti_contagion_is_of_systemic_benefit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "ex3_anti_contagion_s1", "--out", "o"], dir.path());
    assert!(o.status.success());
    let rows = read_csv(&dir.path().join("o/ex3_anti_contagion_s1.extreme_anti_contagion.csv"));
    assert!(rows.iter().all(|r| r.nu_dep == 0.0));
    assert!(rows.iter().all(|r| r.kappa <= 0.0));
    assert!(rows
        .iter()
        .all(|r| r.classification == "systemic_benefit" || r.classification == "systemic_indifference"));
    assert!(rows.iter().any(|r| r.classification == "systemic_benefit"));
}

#[test]
fn grid_step_override_changes_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "ex1_common_jumps_s2", "--out", "o", "--grid-step", "1"], dir.path());
    assert!(o.status.success());
    let rows = read_csv(&dir.path().join("o/ex1_common_jumps_s2.common_jumps.csv"));
    assert_eq!(rows.len(), 31);
}

#[test]
fn verify_common_jumps_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "ex1_common_jumps_s1"], dir.path());
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("PASS classification: weak-only"), "{text}");
    assert!(text.contains("PASS law matching"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn verify_independence_config_is_strong() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
name = "independent"
[[structures]]
label = "independent"
generator = { matrices = [[[-0.3, 0.1, 0.2, 0], [0, -0.2, 0, 0.2], [0, 0, -0.1, 0.1], [0, 0, 0, 0]]] }
marginals = [{ matrices = [[[-0.2, 0.2], [0, 0]]] }, { matrices = [[[-0.1, 0.1], [0, 0]]] }]
"#;
    std::fs::write(dir.path().join("ind.toml"), cfg).unwrap();
    let o = run(&["verify", "ind.toml"], dir.path());
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("classification: strong"), "{text}");
}

#[test]
fn verify_reports_negative_rate_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
name = "broken"
[[structures]]
label = "broken"
generator = { breakpoints = [0, 5], matrices = [
  [[-0.3, 0.1, 0.2, 0], [0, -0.2, 0, 0.2], [0, 0, -0.1, 0.1], [0, 0, 0, 0]],
  [[-0.3, 0.1, 0.2, 0], [0, -0.2, 0, 0.2], [0, 0, 0.1, -0.1], [0, 0, 0, 0]],
] }
marginals = [{ matrices = [[[-0.2, 0.2], [0, 0]]] }, { matrices = [[[-0.1, 0.1], [0, 0]]] }]
"#;
    std::fs::write(dir.path().join("broken.toml"), cfg).unwrap();
    let o = run(&["verify", "broken.toml"], dir.path());
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{text}");
    assert!(text.contains("FAIL generator rules"), "{text}");
    assert!(text.contains("segment 1 row 2: negative off-diagonal rate -0.1 in column 3"), "{text}");
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "name = \"bad\"\n\n[[structures]]\nlabel = \"x\"\nfamily = \"common_jumps\"\nparams.a = 0.01\nparams.b = 0.02\nparams.z = 1\n";
    std::fs::write(dir.path().join("bad.toml"), cfg).unwrap();
    let o = run(&["run", "bad.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line "), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn list_examples_covers_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["list-examples"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 11);
    let alt = text
        .lines()
        .find(|l| l.starts_with("ex4_systemic_importance_s1_alt"))
        .expect("footnote variant listed");
    assert!(alt.contains("[0,6),[6,8),[8,10),[10,12),[12,15),[15,inf)"), "{alt}");
    assert!(text.lines().any(|l| l.starts_with("ex5_two_weak_only")));
}

#[test]
fn every_bundled_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["list-examples"], dir.path());
    let names: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    let start = std::time::Instant::now();
    for n in &names {
        let o = run(&["run", n, "--out", "o"], dir.path());
        assert!(o.status.success(), "{n}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(start.elapsed().as_secs() < 60);
}
