use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use enlarge_sim::ExperimentConfig;

const GAUSSIAN: &str = r#"
n_steps = 64
n_paths = 10000
root_seed = 9

[model]
beta = 0.0
sigma2 = 1.0
"#;

const AC_HAZARD: &str = r#"
[hazard.kind]
type = "absolutely-continuous"
intensity = { type = "constant", rate = 1.0 }
"#;

const PANEL: &str = r#"
[[payoffs]]
kind = "wsigma-terminal"

[[payoffs]]
kind = "default-indicator"

[[payoffs]]
kind = "survival"
g = { type = "clip", bound = 3.0 }
s = 0.5
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("enlarge-sim-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, experiment: &str, config: &str, extra: &[&str]) -> Output {
    let file = dir.join("config.in.toml");
    fs::write(&file, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_enlarge-sim"))
        .arg(experiment)
        .arg("--config")
        .arg(&file)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_levy_on_gaussian_passes() {
    let dir = scratch("levy");
    let o = run(&dir, "verify-levy", GAUSSIAN, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(dir.join("out/characteristic.csv")).unwrap();
    assert!(table.starts_with("u,t,mean_re,mean_im,target_re,target_im,se_re,se_im,z_re,z_im\n"));
    assert_eq!(table.lines().count(), 1 + 9);
    let summary = fs::read_to_string(dir.join("out/summary.txt")).unwrap();
    assert!(summary.contains("PASS characteristic function"));
    assert!(summary.ends_with("overall: PASS\n"));
}

#[test]
fn missing_hazard_is_a_config_error() {
    let dir = scratch("nohazard");
    let o = run(&dir, "verify-enlargement", GAUSSIAN, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing field `hazard`"), "{}", stderr(&o));
}

#[test]
fn unknown_and_mistyped_fields_are_named() {
    let dir = scratch("typo");
    let o = run(&dir, "verify-levy", &format!("n_pths = 3\n{GAUSSIAN}"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_pths"), "{}", stderr(&o));
    let o = run(
        &dir,
        "verify-levy",
        &GAUSSIAN.replace("sigma2 = 1.0", "sigma2 = -1.0"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `model`"), "{}", stderr(&o));
    let o = run(&dir, "verify-levy", &format!("{GAUSSIAN}volatility = 2.0\n"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("volatility"), "{}", stderr(&o));
}

#[test]
fn subcommand_must_match_config() {
    let dir = scratch("mismatch");
    let o = run(
        &dir,
        "verify-levy",
        &format!("experiment = \"represent\"\n{GAUSSIAN}"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `experiment`"));
}

#[test]
fn small_batch_is_a_power_error() {
    let dir = scratch("power");
    let o = run(&dir, "verify-levy", GAUSSIAN, &["--paths", "500"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn panel_without_mixed_payoff_is_rejected() {
    let dir = scratch("panel");
    let config = format!("{GAUSSIAN}{AC_HAZARD}\n[[payoffs]]\nkind = \"default-indicator\"\n");
    let o = run(&dir, "multiplicity", &config, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("payoff panel lacks"), "{}", stderr(&o));
}

#[test]
fn negative_control_passes_only_when_single_integrator_fails() {
    let dir = scratch("negative");
    let config = format!("{GAUSSIAN}{AC_HAZARD}{PANEL}\n[multiplicity]\nnegative_control = true\n");
    let o = run(&dir, "multiplicity", &config, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.join("out/summary.txt")).unwrap();
    assert!(summary.contains("PASS negative control: single integrator fails"));
    assert!(summary.contains("verdict: multiplicity-two consistent"));
    // The same flag on a singular hazard makes no sense.
    let staircase = format!(
        "{GAUSSIAN}\n[hazard.kind]\ntype = \"singular-continuous\"\nscale = 5.0\ns_max = 1.0\n{PANEL}\n[multiplicity]\nnegative_control = true\n"
    );
    assert_eq!(run(&dir, "multiplicity", &staircase, &[]).status.code(), Some(2));
}

#[test]
fn gate_failure_exits_one() {
    let dir = scratch("gatefail");
    let config = format!("{GAUSSIAN}{AC_HAZARD}{PANEL}\n[represent]\ntolerances = [0.02, 0.1, 1e-9]\n");
    let o = run(&dir, "represent", &config, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.join("out/summary.txt")).unwrap();
    assert!(summary.contains("FAIL regression clip3(L_T)*(1-H_0.5)"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = scratch("repro-a");
    let b = scratch("repro-b");
    let config = format!("{GAUSSIAN}{AC_HAZARD}{PANEL}");
    for dir in [&a, &b] {
        assert_eq!(
            run(dir, "multiplicity", &config, &["--seed", "77"]).status.code(),
            Some(0)
        );
    }
    for file in ["singularity.csv", "summary.txt"] {
        assert_eq!(
            fs::read(a.join("out").join(file)).unwrap(),
            fs::read(b.join("out").join(file)).unwrap(),
            "{file}"
        );
    }
    let strip = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("generated_unix"))
            .map(String::from)
            .collect()
    };
    assert_eq!(strip(a.join("out/manifest.txt")), strip(b.join("out/manifest.txt")));
    let c = scratch("repro-c");
    run(&c, "multiplicity", &config, &["--seed", "78"]);
    assert_ne!(
        fs::read(a.join("out/singularity.csv")).unwrap(),
        fs::read(c.join("out/singularity.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let config = ExperimentConfig::load(&path).unwrap();
        config
            .validate(config.experiment.expect("shipped configs name their experiment"))
            .unwrap();
        let back = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(back, config, "{}", path.display());
        n += 1;
    }
    assert!(n >= 7);
}
