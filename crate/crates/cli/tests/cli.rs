use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const REFERENCE: &str = "seed = 42
[problem]
nodes = 32
p = 2.0
alpha = 0.5
q = 0.5
r = 3.0
lambda_over_lambda0 = 0.5
h = \"1\"
b = \"1\"
";

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn run(&self, args: &[&str], config: &Path) -> Output {
        self.run_env(args, config, &[])
    }

    fn run_env(&self, args: &[&str], config: &Path, env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_nehari"));
        cmd.args(args)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.path("out"));
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path("out").join(name)).unwrap()).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_reference_writes_two_fields_with_opposite_energies() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    let o = sb.run(&["solve"], &config);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let result = sb.json("result.json");
    assert_eq!(result["status"], "complete");
    assert!(result["plus"]["energy"].as_f64().unwrap() < 0.0);
    assert!(result["minus"]["energy"].as_f64().unwrap() > 0.0);
    assert!(result["lambda0"]["lambda0"].as_f64().unwrap() > 0.0);
    assert_eq!(result["config"]["seed"], 42);
    for name in ["u_plus.csv", "u_minus.csv"] {
        let text = std::fs::read_to_string(sb.path("out").join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,value"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 32);
        assert!(rows.iter().all(|r| r.len() == 2 && r[1] >= 0.0));
    }
    assert!(!sb.path("out").join("trace.jsonl").exists());
}

#[test]
fn config_echo_reproduces_the_run() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    assert_eq!(sb.run(&["solve"], &config).status.code(), Some(0));
    let first = std::fs::read(sb.path("out").join("result.json")).unwrap();
    let echo = sb.path("echo.toml");
    std::fs::copy(sb.path("out").join("config.toml"), &echo).unwrap();
    assert_eq!(sb.run(&["solve"], &echo).status.code(), Some(0));
    assert_eq!(first, std::fs::read(sb.path("out").join("result.json")).unwrap());
}

#[test]
fn verbose_solve_writes_a_trace() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    let o = sb.run(&["solve", "--verbose"], &config);
    assert_eq!(o.status.code(), Some(0));
    let trace = std::fs::read_to_string(sb.path("out").join("trace.jsonl")).unwrap();
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first["energy"].is_number() && first["branch"].is_string());
}

#[test]
fn strict_inequality_violation_exits_one() {
    let sb = Sandbox::new();
    let config = sb.config("bad.toml", &REFERENCE.replace("q = 0.5", "q = 1.0"));
    let o = sb.run(&["solve"], &config);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("q < p−1 violated"), "{}", stderr(&o));
}

#[test]
fn malformed_config_names_the_line() {
    let sb = Sandbox::new();
    let config = sb.config("bad.toml", &REFERENCE.replace("alpha = 0.5", "alpha = oops"));
    let o = sb.run(&["solve"], &config);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn negative_weights_exit_two_with_no_nehari_points() {
    let sb = Sandbox::new();
    let text = REFERENCE
        .replace("lambda_over_lambda0 = 0.5", "lambda = 1.0")
        .replace("h = \"1\"", "h = \"-1\"")
        .replace("b = \"1\"", "b = \"-1\"");
    let config = sb.config("neg.toml", &text);
    let o = sb.run(&["solve"], &config);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let result = sb.json("result.json");
    assert_eq!(result["status"], "no_nehari_points");
    assert!(result["lambda0"]["error"].is_string());
}

#[test]
fn environment_overrides_config_keys() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    let o = sb.run_env(
        &["solve"],
        &config,
        &[("NEHARI_PROBLEM__NODES", "16"), ("NEHARI_SEED", "5")],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let result = sb.json("result.json");
    assert_eq!(result["config"]["problem"]["nodes"], 16);
    assert_eq!(result["seed"], 5);
}

#[test]
fn fibering_random_field_is_in_the_positive_case_with_two_roots() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    let dump = sb.path("phi.csv");
    let o = sb.run(
        &["fibering", "--field", "random:42", "--phi-dump", dump.to_str().unwrap()],
        &config,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = &sb.json("fibering.json")["report"];
    assert_eq!(report["case"], "H+∩B+");
    let roots = report["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 2);
    assert_eq!(roots[0]["kind"], "min");
    assert_eq!(roots[1]["kind"], "max");
    let samples = std::fs::read_to_string(dump).unwrap();
    assert_eq!(samples.lines().count(), 401);
}

#[test]
fn fibering_of_a_solution_has_its_root_at_one() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    assert_eq!(sb.run(&["solve"], &config).status.code(), Some(0));
    let moved = sb.path("u_minus.csv");
    std::fs::copy(sb.path("out").join("u_minus.csv"), &moved).unwrap();
    let field = format!("file:{}", moved.display());
    let o = sb.run(&["fibering", "--field", &field], &config);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = &sb.json("fibering.json")["report"];
    let max = report["roots"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["kind"] == "max")
        .unwrap();
    assert!((max["t"].as_f64().unwrap() - 1.0).abs() <= 1e-8);
}

#[test]
fn fibering_of_a_zero_field_exits_one() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    let rows: String = (0..32).map(|i| format!("{},0\n", i as f64 / 33.0)).collect();
    let zero = sb.config("zero.csv", &format!("x,value\n{rows}"));
    let field = format!("file:{}", zero.display());
    let o = sb.run(&["fibering", "--field", &field], &config);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zero"));
}

#[test]
fn lambda0_reports_constants_and_is_reproducible() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    let o = sb.run(&["lambda0"], &config);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("lambda0") && stdout.contains("S_{q+1}"));
    let first = std::fs::read(sb.path("out").join("lambda0.json")).unwrap();
    let est = &sb.json("lambda0.json")["estimate"];
    assert!(est["lambda0"].as_f64().unwrap() > 0.0);
    assert!(est["delta"].as_f64().unwrap() > 0.0);
    assert_eq!(sb.run(&["lambda0"], &config).status.code(), Some(0));
    assert_eq!(first, std::fs::read(sb.path("out").join("lambda0.json")).unwrap());
}

#[test]
fn lambda0_failure_exits_two() {
    let sb = Sandbox::new();
    let text = REFERENCE
        .replace("lambda_over_lambda0 = 0.5", "lambda = 1.0")
        .replace("b = \"1\"", "b = \"-1\"");
    let config = sb.config("neg.toml", &text);
    assert_eq!(sb.run(&["lambda0"], &config).status.code(), Some(2));
}

#[test]
fn validate_kernel_accepts_fractional_and_rejects_asymmetric() {
    let sb = Sandbox::new();
    let config = sb.config("ref.toml", REFERENCE);
    assert_eq!(sb.run(&["validate-kernel"], &config).status.code(), Some(0));
    let text =
        format!("{REFERENCE}\n[problem.kernel]\nfamily = \"custom\"\nexpression = \"r^(-2) * (1 + 0.5*sign(z1))\"\n");
    let config = sb.config("asym.toml", &text);
    let o = sb.run(&["validate-kernel"], &config);
    assert_eq!(o.status.code(), Some(2));
    let json = sb.json("kernel.json");
    assert_eq!(json["admissible"], false);
    assert_eq!(json["report"]["symmetry_ok"], false);
}
