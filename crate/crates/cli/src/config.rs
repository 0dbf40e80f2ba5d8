//! Run configuration: TOML file, `NEHARI_` environment overrides, and the
//! translation into core problem objects.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nehari::{
    estimate_lambda0, CustomKernel, Domain, EnergyWeights, Expr, KernelFamily, KernelSpec, Lambda0Estimate, Mesh,
    NearField, ProblemSpec, SobolevSearch, SolverConfig, StepRule,
};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Environment variables with this prefix override config keys; `__` separates sections.
pub const ENV_PREFIX: &str = "NEHARI_";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub lambda0: SearchSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// One `[lo, hi]` pair per axis.
    #[serde(default = "default_domain")]
    pub domain: Vec<[f64; 2]>,
    /// Nodes per axis.
    pub nodes: usize,
    pub p: f64,
    pub alpha: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub near_field: NearField,
    #[serde(default)]
    pub kernel: KernelSection,
    pub q: f64,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_over_lambda0: Option<f64>,
    #[serde(default = "unit_expr")]
    pub h: String,
    #[serde(default = "unit_expr")]
    pub b: String,
}

fn default_domain() -> Vec<[f64; 2]> {
    vec![[0.0, 1.0]]
}

fn one() -> f64 {
    1.0
}

fn unit_expr() -> String {
    "1".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[default]
    Fractional,
    ScaledFractional,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    /// Custom kernel in `z1`, `z2`, `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Power `s` of a custom kernel's `|z|^{-s}` singularity, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singularity_exponent: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_outer_iters: usize,
    pub tol_residual: f64,
    pub tol_step: f64,
    pub multistart: usize,
    pub truncate_negative: bool,
    pub step_rule: StepRule,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            max_outer_iters: d.max_outer_iters,
            tol_residual: d.tol_residual,
            tol_step: d.tol_step,
            multistart: d.multistart,
            truncate_negative: d.truncate_negative,
            step_rule: d.step_rule,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub starts: usize,
    pub ascent_steps: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SobolevSearch::default();
        SearchSection {
            starts: d.starts,
            ascent_steps: d.ascent_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    pub verbose: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            verbose: false,
        }
    }
}

impl RunConfig {
    /// Reads `path`, applies environment overrides and checks the problem constraints.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, std::env::vars())
    }

    pub fn parse(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, Failure> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Failure::config(e.to_string()))?;
        for (key, value) in env {
            if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
                apply_override(&mut table, rest, &value)?;
            }
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Failure::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn validate(&self) -> Result<(), Failure> {
        let p = &self.problem;
        match (p.lambda, p.lambda_over_lambda0) {
            (Some(_), Some(_)) => {
                return Err(Failure::config(
                    "[problem] set exactly one of lambda and lambda_over_lambda0",
                ))
            }
            (None, None) => return Err(Failure::config("[problem] missing lambda or lambda_over_lambda0")),
            (_, Some(f)) if !(f > 0.0) || !f.is_finite() => {
                return Err(Failure::config(format!(
                    "[problem] lambda_over_lambda0 > 0 violated (lambda_over_lambda0 = {f})"
                )))
            }
            _ => {}
        }
        self.solver_config()
            .validate()
            .map_err(|e| Failure::config(format!("[solver] {e}")))?;
        if self.lambda0.starts == 0 || self.lambda0.ascent_steps == 0 {
            return Err(Failure::config("[lambda0] starts ≥ 1 and ascent_steps ≥ 1 violated"));
        }
        self.kernel()?;
        let mesh = self.mesh()?;
        self.spec_at(mesh, p.lambda.unwrap_or(1.0))?;
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            max_outer_iters: s.max_outer_iters,
            step_rule: s.step_rule,
            tol_residual: s.tol_residual,
            tol_step: s.tol_step,
            multistart: s.multistart,
            seed: self.seed,
            truncate_negative: s.truncate_negative,
            trace: self.output.verbose,
        }
    }

    pub fn search(&self) -> SobolevSearch {
        SobolevSearch {
            starts: self.lambda0.starts,
            ascent_steps: self.lambda0.ascent_steps,
            seed: self.seed,
        }
    }

    pub fn kernel(&self) -> Result<KernelSpec, Failure> {
        let p = &self.problem;
        let k = &p.kernel;
        let family = match k.family {
            FamilyName::Fractional => KernelFamily::Fractional,
            FamilyName::ScaledFractional => KernelFamily::ScaledFractional {
                multiplier: k.multiplier.unwrap_or(p.theta),
            },
            FamilyName::Custom => {
                let source = k
                    .expression
                    .as_deref()
                    .ok_or_else(|| Failure::config("[problem.kernel] custom family needs an expression"))?;
                let custom = CustomKernel::from_expression(source)
                    .map_err(|e| Failure::config(format!("[problem.kernel] expression: {e}")))?;
                let custom = match k.singularity_exponent {
                    Some(s) => custom.with_singularity_exponent(s),
                    None => custom,
                };
                KernelFamily::Custom(custom)
            }
        };
        KernelSpec::new(p.domain.len(), p.p, p.alpha, p.theta, family)
            .map_err(|e| Failure::config(format!("[problem] {}", bare(&e))))
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>, Failure> {
        let p = &self.problem;
        let domain = match p.domain.as_slice() {
            [[a, b]] => Domain::Interval { a: *a, b: *b },
            [x, y] => Domain::Rectangle { x: *x, y: *y },
            other => {
                return Err(Failure::config(format!(
                    "[problem] domain needs one or two axes (found {})",
                    other.len()
                )))
            }
        };
        Mesh::build(domain, p.nodes)
            .map(Arc::new)
            .map_err(|e| Failure::config(format!("[problem] {}", bare(&e))))
    }

    fn spec_at(&self, mesh: Arc<Mesh>, lambda: f64) -> Result<ProblemSpec, Failure> {
        let p = &self.problem;
        let parse = |name: &str, src: &str| {
            Expr::parse(src, &["x", "y"]).map_err(|e| Failure::config(format!("[problem] {name}: {e}")))
        };
        let h = parse("h", &p.h)?;
        let b = parse("b", &p.b)?;
        ProblemSpec::from_expressions(self.kernel()?, mesh, p.q, p.r, lambda, &h, &b)
            .map_err(|e| Failure::config(format!("[problem] {}", bare(&e))))
    }

    /// Assembles the problem at its configured `λ`, estimating `λ₀` when asked or needed.
    pub fn build(&self, with_estimate: bool) -> Result<Problem, Failure> {
        let mesh = self.mesh()?;
        let weights = EnergyWeights::assemble(&mesh, &self.kernel()?, self.problem.near_field)
            .map_err(|e| Failure::config(format!("[problem] {}", bare(&e))))?;
        let provisional = self.spec_at(mesh.clone(), self.problem.lambda.unwrap_or(1.0))?;
        let estimate = if with_estimate || self.problem.lambda_over_lambda0.is_some() {
            Some(estimate_lambda0(&provisional, &weights, &self.search()).map_err(|e| e.to_string()))
        } else {
            None
        };
        let spec = match self.problem.lambda_over_lambda0 {
            Some(factor) => {
                let est = estimate
                    .as_ref()
                    .expect("estimated above")
                    .as_ref()
                    .map_err(|e| Failure {
                        code: 1,
                        message: format!("lambda_over_lambda0 needs a λ₀ estimate: {e}"),
                    })?;
                provisional
                    .with_lambda(factor * est.lambda0)
                    .map_err(|e| Failure::config(format!("[problem] {}", bare(&e))))?
            }
            None => provisional,
        };
        Ok(Problem {
            spec,
            weights,
            estimate,
        })
    }
}

pub struct Problem {
    pub spec: ProblemSpec,
    pub weights: EnergyWeights,
    pub estimate: Option<Result<Lambda0Estimate, String>>,
}

/// The message of a configuration error without its category prefix.
fn bare(e: &nehari::Error) -> String {
    match e {
        nehari::Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), Failure> {
    let path: Vec<String> = key.split("__").map(|s| s.to_lowercase()).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(Failure::config(format!("malformed override {ENV_PREFIX}{key}")));
    }
    // values that are not valid TOML literals are taken as bare strings
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, sections) = path.split_last().expect("non-empty path");
    let mut node = table;
    for s in sections {
        node = node
            .entry(s.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Failure::config(format!("override {ENV_PREFIX}{key}: `{s}` is not a section")))?;
    }
    node.insert(last.clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"
seed = 7
[problem]
nodes = 16
p = 2
alpha = 0.5
q = 0.5
r = 3
lambda = 1.5
h = "1"
b = "1"
"#;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = RunConfig::parse(REFERENCE, no_env()).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.problem.domain, vec![[0.0, 1.0]]);
        assert_eq!(c.solver.multistart, SolverConfig::default().multistart);
        assert_eq!(c.solver_config().seed, 7);
        assert_eq!(c.output.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn violated_inequality_is_named() {
        let text = REFERENCE.replace("q = 0.5", "q = 1.0");
        let err = RunConfig::parse(&text, no_env()).unwrap_err();
        assert_eq!(err.code, 1);
        assert!(err.message.contains("q < p−1 violated"), "{}", err.message);
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let text = REFERENCE.replace("alpha = 0.5", "alpha = ");
        let err = RunConfig::parse(&text, no_env()).unwrap_err();
        assert!(err.message.contains("line 6"), "{}", err.message);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = REFERENCE.replace("h = \"1\"", "hh = \"1\"");
        assert!(RunConfig::parse(&text, no_env()).is_err());
    }

    #[test]
    fn environment_overrides_nested_keys() {
        let env = vec![
            ("NEHARI_PROBLEM__NODES".to_string(), "32".to_string()),
            ("NEHARI_PROBLEM__H".to_string(), "sin(x)".to_string()),
            ("NEHARI_SOLVER__STEP_RULE__SHRINK".to_string(), "0.25".to_string()),
            ("NEHARI_SEED".to_string(), "9".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = RunConfig::parse(REFERENCE, env).unwrap();
        assert_eq!(c.problem.nodes, 32);
        assert_eq!(c.problem.h, "sin(x)");
        assert_eq!(c.solver.step_rule.shrink, 0.25);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn lambda_must_be_given_once() {
        let text = REFERENCE.replace("lambda = 1.5", "lambda = 1.5\nlambda_over_lambda0 = 0.5");
        assert!(RunConfig::parse(&text, no_env()).is_err());
        let text = REFERENCE.replace("lambda = 1.5", "");
        assert!(RunConfig::parse(&text, no_env()).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::parse(REFERENCE, no_env()).unwrap();
        let again = RunConfig::parse(&c.to_toml(), no_env()).unwrap();
        assert_eq!(again.to_toml(), c.to_toml());
    }

    #[test]
    fn custom_kernel_needs_expression() {
        let text = format!("{REFERENCE}\n[problem.kernel]\nfamily = \"custom\"\n");
        assert!(RunConfig::parse(&text, no_env()).is_err());
        let text = format!("{REFERENCE}\n[problem.kernel]\nfamily = \"custom\"\nexpression = \"r^(-2)\"\n");
        assert!(RunConfig::parse(&text, no_env()).is_ok());
    }
}
