//! Experiment descriptions (TOML or JSON) and their validated, ready-to-run
//! form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{CostSpec, CostSystem, RadialProfile};
use crate::criteria::TestFunction;
use crate::error::{Error, Result};
use crate::grid::{make_gibbs, Grid, GridMeasure, Potential, PotentialSpec};
use crate::jko::JkoConfig;
use crate::moduli::{ppower_c, Modulus, ModulusKind, ModulusSpec};

/// Radius up to which cost axioms are checked when building a system.
const AXIOM_RANGE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

/// Initial (or target) measure description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// The Gibbs measure `eta` itself.
    Gibbs,
    Gaussian { mean: f64, std: f64 },
    /// `eta e^{t x}`, renormalized.
    Tilt { t: f64 },
    Uniform,
    /// Two-component Gaussian mixture.
    Mixture { weight: f64, first: (f64, f64), second: (f64, f64) },
    Table { values: Vec<f64> },
}

impl MeasureSpec {
    pub fn build(&self, grid: &Grid, potential: &Potential) -> Result<GridMeasure> {
        let gauss = |x: f64, m: f64, s: f64| -(x - m).powi(2) / (2.0 * s * s) - s.ln();
        match self {
            MeasureSpec::Gibbs => GridMeasure::new(grid, potential.gibbs_density()),
            MeasureSpec::Gaussian { mean, std } => {
                if !(*std > 0.0) {
                    return Err(Error::Config(format!("gaussian std must be positive, got {std}")));
                }
                GridMeasure::from_log_fn(grid, |x| gauss(x, *mean, *std))
            }
            MeasureSpec::Tilt { t } => {
                let logs: Vec<f64> =
                    grid.nodes().iter().zip(potential.values()).map(|(x, v)| t * x - v).collect();
                GridMeasure::from_log_density(grid, &logs)
            }
            MeasureSpec::Uniform => Ok(GridMeasure::uniform(grid)),
            MeasureSpec::Mixture { weight, first, second } => {
                if !(*weight > 0.0 && *weight < 1.0) || !(first.1 > 0.0) || !(second.1 > 0.0) {
                    return Err(Error::Config("mixture needs weight in (0, 1) and positive widths".into()));
                }
                GridMeasure::from_log_fn(grid, |x| {
                    let a = weight.ln() + gauss(x, first.0, first.1);
                    let b = (1.0 - weight).ln() + gauss(x, second.0, second.1);
                    let m = a.max(b);
                    m + ((a - m).exp() + (b - m).exp()).ln()
                })
            }
            MeasureSpec::Table { values } => GridMeasure::new(grid, values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub n_steps: usize,
    #[serde(default)]
    pub solver: JkoConfig,
}

/// Settings of the pointwise criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionSpec {
    /// Upper end of the z-grid; defaults to `Lip(V) + h'(b - a)`.
    pub z_max: Option<f64>,
    pub n_z: usize,
    /// Pair samples for modulus validation.
    pub pair_samples: usize,
}

impl Default for CriterionSpec {
    fn default() -> Self {
        Self { z_max: None, n_z: 400, pair_samples: 10_000 }
    }
}

/// The power-law setting: `V` with convexity modulus `(alpha/p) t^p` and
/// monotonicity modulus `(beta/q) t^p`, `h = tau (r/tau)^p / p`. Missing
/// cost, Fisher weight, Young function and moduli are derived so that the
/// pointwise criterion holds with equality:
/// `L = alpha^(1-q) r^q / q`, `H = L / theta`, `theta = beta tau^(p-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpowerSpec {
    pub p: f64,
    pub tau: f64,
    /// Defaults to `p C(p)`.
    pub alpha: Option<f64>,
    /// Defaults to `q 2^(2-p)`.
    pub beta: Option<f64>,
}

impl PpowerSpec {
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn alpha(&self) -> Result<f64> {
        match self.alpha {
            Some(a) => Ok(a),
            None => Ok(self.p * ppower_c(self.p)?),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| self.q() * 2f64.powf(2.0 - self.p))
    }

    pub fn theta(&self) -> f64 {
        self.beta() * self.tau.powf(self.p - 1.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0) || !(self.tau > 0.0) {
            return Err(Error::Config(format!("ppower needs p >= 2 and tau > 0, got {}, {}", self.p, self.tau)));
        }
        if self.alpha.is_some_and(|a| !(a > 0.0)) || self.beta.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::Config("ppower alpha and beta must be positive".into()));
        }
        Ok(())
    }

    fn cost(&self) -> CostSpec {
        CostSpec::Scaled { tau: self.tau, inner: Box::new(CostSpec::Power { p: self.p }) }
    }

    fn young(&self) -> Result<CostSpec> {
        Ok(CostSpec::Multiple {
            c: self.alpha()?.powf(1.0 - self.q()),
            inner: Box::new(CostSpec::Power { p: self.q() }),
        })
    }

    fn fisher(&self) -> Result<CostSpec> {
        Ok(CostSpec::Multiple {
            c: self.alpha()?.powf(1.0 - self.q()) / self.theta(),
            inner: Box::new(CostSpec::Power { p: self.q() }),
        })
    }

    fn sigma(&self) -> Result<ModulusSpec> {
        Ok(ModulusSpec::Power { p: self.p, coeff: self.alpha()? / self.p })
    }

    fn omega(&self) -> ModulusSpec {
        ModulusSpec::Power { p: self.p, coeff: self.beta() / self.q() }
    }
}

/// Comparison function `theta(t) = offset + coeff t^power` for the
/// radial construction, with the constant `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub coeff: f64,
    pub power: f64,
    #[serde(default)]
    pub offset: f64,
    pub c: f64,
    pub t_max: f64,
    #[serde(default = "default_theta_points")]
    pub n_t: usize,
}

fn default_theta_points() -> usize {
    401
}

impl ThetaSpec {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.coeff * t.powf(self.power)
    }
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub cost: Option<CostSpec>,
    #[serde(default, rename = "fisher_H")]
    pub fisher: Option<CostSpec>,
    #[serde(default, rename = "young_L")]
    pub young: Option<CostSpec>,
    #[serde(default)]
    pub sigma: Option<ModulusSpec>,
    #[serde(default)]
    pub omega: Option<ModulusSpec>,
    pub initial: MeasureSpec,
    /// Second measure for transport and five-gradients runs; defaults to `eta`.
    #[serde(default)]
    pub target: Option<MeasureSpec>,
    #[serde(default)]
    pub flow: Option<FlowSpec>,
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    #[serde(default)]
    pub criterion: CriterionSpec,
    #[serde(default)]
    pub ppower: Option<PpowerSpec>,
    #[serde(default)]
    pub theta: Option<ThetaSpec>,
    /// Test functions for `lsi_gap`; defaults to the standard family.
    #[serde(default)]
    pub test_functions: Option<Vec<TestFunction>>,
}

fn default_checks() -> Vec<String> {
    vec!["theorem_criterion".into()]
}

/// Known entries of `checks`.
pub const CHECK_NAMES: [&str; 4] = ["theorem_criterion", "simpler_condition", "moduli", "lsi_gap"];

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub potential: Potential,
    pub eta: GridMeasure,
    pub system: CostSystem,
    pub sigma: Modulus,
    pub omega: Modulus,
    pub rho0: GridMeasure,
    pub target: GridMeasure,
}

/// Parses a TOML or JSON document (chosen by extension, TOML otherwise)
/// into a generic tree, so that overrides can be applied before typing.
pub fn load_tree(path: &Path) -> Result<toml::Value> {
    let text = std::fs::read_to_string(path)?;
    parse_tree(&text, path.extension().and_then(|e| e.to_str()) == Some("json"))
}

pub fn parse_tree(text: &str, json: bool) -> Result<toml::Value> {
    if json {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        strip_nulls(&mut v);
        toml::Value::try_from(v).map_err(|e| Error::Config(e.to_string()))
    } else {
        text.parse::<toml::Table>().map(toml::Value::Table).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Removes `null` members, which have no TOML counterpart and mean "absent".
fn strip_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|_, x| !x.is_null());
            map.values_mut().for_each(strip_nulls);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

/// Parses an override value as a TOML scalar, falling back to a string.
pub fn parse_scalar(text: &str) -> toml::Value {
    let t = text.trim();
    if let Ok(i) = t.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = t.parse::<f64>() {
        return toml::Value::Float(f);
    }
    if let Ok(b) = t.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    toml::Value::String(t.to_string())
}

/// Sets the value at a dotted path (`cost.tau`), creating tables as needed.
/// Integers replace floats as floats, so that `tau=1` stays a real.
pub fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("invalid override path `{path}`")));
    }
    let mut node = tree;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` in `{path}` is not inside a table")))?;
        node = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("parent of `{path}` is not a table")))?;
    let last = keys[keys.len() - 1].to_string();
    let value = match (table.get(&last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(last, value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_tree(tree: toml::Value) -> Result<Self> {
        tree.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_tree(parse_tree(text, false)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tree(load_tree(path)?)
    }

    fn resolved<T: Clone>(&self, field: &Option<T>, name: &str, derived: impl FnOnce(&PpowerSpec) -> Result<T>) -> Result<T> {
        match (field, &self.ppower) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(pp)) => derived(pp),
            (None, None) => Err(Error::Config(format!("missing field `{name}`"))),
        }
    }

    /// Validates every description and builds the experiment.
    pub fn build(&self) -> Result<Experiment> {
        for check in &self.checks {
            if !CHECK_NAMES.contains(&check.as_str()) {
                return Err(Error::Config(format!("unknown check `{check}`; expected one of {CHECK_NAMES:?}")));
            }
        }
        if let Some(pp) = &self.ppower {
            pp.validate()?;
        }
        let grid = Grid::new(self.grid.a, self.grid.b, self.grid.n)?;
        let (potential, eta) = make_gibbs(&self.potential, &grid)?;
        let cost = self.resolved(&self.cost, "cost", |pp| Ok(pp.cost()))?;
        let fisher = self.resolved(&self.fisher, "fisher_H", |pp| pp.fisher())?;
        let young = self.resolved(&self.young, "young_L", |pp| pp.young())?;
        let sigma = self.resolved(&self.sigma, "sigma", |pp| pp.sigma())?;
        let omega = self.resolved(&self.omega, "omega", |pp| Ok(pp.omega()))?;
        let system = CostSystem::new(cost.build()?, fisher.build()?, young.build()?, AXIOM_RANGE)?;
        let sigma = Modulus::new(sigma, ModulusKind::Convexity)?;
        let omega = Modulus::new(omega, ModulusKind::Monotonicity)?;
        let rho0 = self.initial.build(&grid, &potential)?;
        let target = self.target.as_ref().unwrap_or(&MeasureSpec::Gibbs).build(&grid, &potential)?;
        if let Some(flow) = &self.flow {
            flow.solver.validate()?;
        }
        Ok(Experiment {
            config: self.clone(),
            grid,
            potential,
            eta,
            system,
            sigma,
            omega,
            rho0,
            target,
        })
    }
}

impl Experiment {
    /// Upper end of the criterion z-grid.
    pub fn z_max(&self) -> f64 {
        self.config
            .criterion
            .z_max
            .unwrap_or_else(|| crate::criteria::default_z_max(&self.potential, &self.system.h))
    }

    /// `G = H + L`.
    pub fn total_cost(&self) -> RadialProfile {
        self.system.total()
    }

    pub fn test_functions(&self) -> Vec<TestFunction> {
        self.config
            .test_functions
            .clone()
            .unwrap_or_else(|| TestFunction::standard_family(0.5 * self.grid.length()))
    }
}

/// A one-step problem `(mu, V, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepCase {
    pub name: String,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    pub cost: CostSpec,
    pub initial: MeasureSpec,
}

/// A built one-step problem.
#[derive(Debug, Clone)]
pub struct StepProblem {
    pub name: String,
    pub mu: GridMeasure,
    pub potential: Potential,
    pub h: RadialProfile,
}

impl StepCase {
    pub fn build(&self) -> Result<StepProblem> {
        let grid = Grid::new(self.grid.a, self.grid.b, self.grid.n)?;
        let (potential, _) = make_gibbs(&self.potential, &grid)?;
        let mu = self.initial.build(&grid, &potential)?;
        Ok(StepProblem { name: self.name.clone(), mu, potential, h: self.cost.build()? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepCaseFile {
    case: Vec<StepCase>,
}

/// Whether a parsed document is a list of step cases (`[[case]]` tables).
pub fn is_step_case_file(tree: &toml::Value) -> bool {
    tree.get("case").is_some_and(|c| c.is_array())
}

/// Reads the `[[case]]` entries of a step-case document.
pub fn step_cases_from_tree(tree: toml::Value) -> Result<Vec<StepCase>> {
    let file: StepCaseFile = tree.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    if file.case.is_empty() {
        return Err(Error::Config("no step cases".into()));
    }
    Ok(file.case)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSSIAN: &str = r#"
        [grid]
        a = -4.0
        b = 4.0
        n = 101

        [potential]
        kind = "quadratic"
        lambda = 1.0

        [cost]
        kind = "scaled"
        tau = 0.1
        inner = { kind = "quadratic" }

        [fisher_H]
        kind = "quadratic"

        [young_L]
        kind = "multiple"
        c = 0.1
        inner = { kind = "quadratic" }

        [sigma]
        kind = "power"
        p = 2.0
        coeff = 0.5

        [omega]
        kind = "power"
        p = 2.0
        coeff = 1.0

        [initial]
        kind = "gaussian"
        mean = 1.0
        std = 1.0

        [flow]
        n_steps = 5
    "#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_toml_str(GAUSSIAN).unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.grid.len(), 101);
        assert_eq!(cfg.flow.unwrap().solver, JkoConfig::default());
        assert!((exp.system.h.value(1.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn missing_field_is_a_config_error() {
        let text = GAUSSIAN.replace("[cost]", "[unused]");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
        let cfg = ExperimentConfig::from_toml_str(&GAUSSIAN.replace(
            "[cost]\n        kind = \"scaled\"\n        tau = 0.1\n        inner = { kind = \"quadratic\" }",
            "",
        ))
        .unwrap();
        assert!(matches!(cfg.build(), Err(Error::Config(m)) if m.contains("cost")));
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut tree = parse_tree(GAUSSIAN, false).unwrap();
        set_path(&mut tree, "cost.tau", parse_scalar("1")).unwrap();
        set_path(&mut tree, "flow.solver.opt_tol", parse_scalar("1e-9")).unwrap();
        let cfg = ExperimentConfig::from_tree(tree).unwrap();
        assert_eq!(cfg.cost, Some(CostSpec::Scaled { tau: 1.0, inner: Box::new(CostSpec::Quadratic) }));
        assert_eq!(cfg.flow.unwrap().solver.opt_tol, 1e-9);
    }

    #[test]
    fn json_and_toml_agree() {
        let from_toml = ExperimentConfig::from_toml_str(GAUSSIAN).unwrap();
        let json = serde_json::to_string(&from_toml).unwrap();
        let from_json = ExperimentConfig::from_tree(parse_tree(&json, true).unwrap()).unwrap();
        assert_eq!(from_toml, from_json);
    }

    #[test]
    fn ppower_derives_the_system() {
        let text = r#"
            [grid]
            a = -3.0
            b = 3.0
            n = 61
            [potential]
            kind = "power"
            p = 3.0
            coeff = 1.0
            [initial]
            kind = "gibbs"
            [ppower]
            p = 3.0
            tau = 0.5
        "#;
        let exp = ExperimentConfig::from_toml_str(text).unwrap().build().unwrap();
        let alpha = 2.0 - 2f64.sqrt();
        assert!((exp.sigma.value(1.0) - alpha / 3.0).abs() < 1e-10);
        assert!((exp.omega.value(1.0) - 0.5).abs() < 1e-12);
        let report = crate::criteria::theorem_criterion(&exp.system, &exp.sigma, &exp.omega, 10.0, 100).unwrap();
        assert!(report.passed, "{}", report.worst_margin);
    }

    #[test]
    fn unknown_check_is_rejected() {
        let text = format!("checks = [\"nonsense\"]\n{GAUSSIAN}");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.build(), Err(Error::Config(_))));
    }
}
