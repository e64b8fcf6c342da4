//! TOML run configuration: strict sections, dotted `--set` overrides, and
//! builders that turn the parsed document into library objects.

use std::collections::BTreeMap;
use std::path::Path as FsPath;

use langevin_deviations::coefficients::{builtins, BoxDomain, CoefficientModel};
use langevin_deviations::grid::TimeGrid;
use langevin_deviations::sde::SimConfig;
use langevin_deviations::skeleton::Control;
use nalgebra::DVector;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub scales: ScalesSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    pub rate: Option<RateSection>,
    pub sweep: Option<SweepSection>,
    pub control: Option<ControlSection>,
    pub domain: Option<DomainSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Registry name: one of `linear`, `double_well`, `trig_rotation`.
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalesSection {
    pub epsilon: f64,
    pub kappa: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Starting position (defaults to the origin).
    pub position: Option<Vec<f64>>,
    /// Momentum parameter `p` in `q'(0) = p/eps` (defaults to zero).
    pub momentum: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Monte Carlo sample count (sweeps, exceedance estimates).
    pub samples: usize,
    /// Noise stream used by single-trajectory commands.
    pub sample_index: u64,
    /// Extra substep resolution on top of the stiffness cap.
    pub min_substeps: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 42, samples: 1000, sample_index: 0, min_substeps: 1 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    /// Exit radius / exceedance threshold.
    pub delta: Option<f64>,
    /// Terminal target for the hitting rate.
    pub target: Option<Vec<f64>>,
    /// Grid resolution for rate computations (defaults to [grid].steps).
    pub steps: Option<usize>,
    /// Direction-grid resolution for exit scans in d = 2, 3.
    pub directions: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Scales, in sweep order (pass them decreasing).
    pub epsilons: Vec<f64>,
    /// Resolution of the reference exit-rate grid.
    #[serde(default = "default_rate_steps")]
    pub rate_steps: usize,
    /// Per-scale sample count (defaults to [run].samples).
    pub samples_per_scale: Option<usize>,
}

fn default_rate_steps() -> usize {
    4000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ControlSection {
    /// `u(t) = values`.
    Constant { values: Vec<f64> },
    /// Piecewise-constant coefficients: one row per equal-width knot
    /// interval over the horizon; each grid cell takes the row covering its
    /// left endpoint.
    Piecewise { values: Vec<Vec<f64>> },
    /// `u_i(t) = amplitude_i * sin(frequency * t)`.
    Sine { amplitude: Vec<f64>, frequency: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_domain_samples")]
    pub samples: usize,
    #[serde(default = "default_domain_tol")]
    pub tol: f64,
}

fn default_domain_samples() -> usize {
    200
}

fn default_domain_tol() -> f64 {
    0.05
}

impl RunConfig {
    /// Read a TOML file and apply dotted `key.path=value` overrides before
    /// deserializing, so overrides are type-checked like the file itself.
    pub fn load(path: &FsPath, overrides: &[String]) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut value = toml::Value::Table(table);
        for spec in overrides {
            apply_override(&mut value, spec)?;
        }
        value
            .try_into()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn build_model(&self) -> Result<CoefficientModel, CliError> {
        builtins::from_name(&self.model.name, self.model.dim, &self.model.params)
            .map_err(CliError::from)
    }

    pub fn build_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(CliError::from)
    }

    /// Rate computations may use their own (usually finer) resolution.
    pub fn rate_grid(&self) -> Result<TimeGrid, CliError> {
        let steps = self
            .rate
            .as_ref()
            .and_then(|r| r.steps)
            .unwrap_or(self.grid.steps);
        TimeGrid::new(self.grid.horizon, steps).map_err(CliError::from)
    }

    fn initial_vector(&self, v: &Option<Vec<f64>>, what: &str) -> Result<DVector<f64>, CliError> {
        match v {
            None => Ok(DVector::zeros(self.model.dim)),
            Some(values) if values.len() == self.model.dim => {
                Ok(DVector::from_column_slice(values))
            }
            Some(values) => Err(CliError::Config(format!(
                "[initial].{what} has dimension {}, model has {}",
                values.len(),
                self.model.dim
            ))),
        }
    }

    pub fn build_sim(&self) -> Result<SimConfig, CliError> {
        let grid = self.build_grid()?;
        let q = self.initial_vector(&self.initial.position, "position")?;
        let p = self.initial_vector(&self.initial.momentum, "momentum")?;
        let cfg = SimConfig::new(
            self.scales.epsilon,
            self.scales.kappa,
            grid,
            self.run.seed,
            q,
            p,
        )?;
        cfg.with_min_substeps(self.run.min_substeps).map_err(CliError::from)
    }

    /// The `[control]` section as a `Control` on the given grid; errors if
    /// the section is absent.
    pub fn build_control(&self, grid: TimeGrid) -> Result<Control, CliError> {
        let section = self.control.as_ref().ok_or_else(|| {
            CliError::Config("this command needs a [control] section".into())
        })?;
        let dim = self.model.dim;
        let control = match section {
            ControlSection::Constant { values } => {
                if values.len() != dim {
                    return Err(CliError::Config(format!(
                        "[control].values has dimension {}, model has {dim}",
                        values.len()
                    )));
                }
                Control::constant(grid, &DVector::from_column_slice(values))?
            }
            ControlSection::Piecewise { values } => {
                if values.is_empty() {
                    return Err(CliError::Config("[control].values is empty".into()));
                }
                if let Some(row) = values.iter().find(|row| row.len() != dim) {
                    return Err(CliError::Config(format!(
                        "[control].values row has dimension {}, model has {dim}",
                        row.len()
                    )));
                }
                let rows = values.clone();
                let horizon = grid.horizon();
                Control::from_fn(grid, dim, |t| {
                    let i = ((t / horizon * rows.len() as f64) as usize).min(rows.len() - 1);
                    DVector::from_column_slice(&rows[i])
                })?
            }
            ControlSection::Sine { amplitude, frequency } => {
                if amplitude.len() != dim {
                    return Err(CliError::Config(format!(
                        "[control].amplitude has dimension {}, model has {dim}",
                        amplitude.len()
                    )));
                }
                let amp = amplitude.clone();
                let freq = *frequency;
                Control::from_fn(grid, dim, |t| {
                    DVector::from_iterator(dim, amp.iter().map(|a| a * (freq * t).sin()))
                })?
            }
        };
        Ok(control)
    }

    pub fn build_domain(&self) -> Result<(BoxDomain, usize, f64), CliError> {
        let section = self.domain.as_ref().ok_or_else(|| {
            CliError::Config("the validate command needs a [domain] section".into())
        })?;
        let domain = BoxDomain::new(
            DVector::from_column_slice(&section.lower),
            DVector::from_column_slice(&section.upper),
        )?;
        if section.lower.len() != self.model.dim {
            return Err(CliError::Config(format!(
                "[domain] has dimension {}, model has {}",
                section.lower.len(),
                self.model.dim
            )));
        }
        Ok((domain, section.samples, section.tol))
    }

    pub fn sweep(&self) -> Result<&SweepSection, CliError> {
        self.sweep
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [sweep] section".into()))
    }

    pub fn delta(&self) -> Result<f64, CliError> {
        self.rate
            .as_ref()
            .and_then(|r| r.delta)
            .ok_or_else(|| CliError::Config("this command needs [rate].delta".into()))
    }
}

/// Parse a `--set key.path=value` specification and splice it into the TOML
/// document. The value is parsed as a TOML literal (numbers, booleans,
/// arrays, quoted strings); bare words fall back to strings.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set needs key=value, got {spec:?}")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("--set has an empty path segment: {spec:?}")));
    }
    let value = parse_toml_literal(raw.trim());

    let mut cursor = root;
    for key in &keys[..keys.len() - 1] {
        let table = cursor.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("--set {spec:?}: {key} is not a table"))
        })?;
        cursor = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("--set {spec:?}: parent is not a table")))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn parse_toml_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut table) => table.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
name = "linear"
dim = 1
[model.params]
a = 1.0
sigma = 1.0
alpha = 1.0

[grid]
horizon = 1.0
steps = 50

[scales]
epsilon = 0.1
kappa = 0.25
"#;

    fn load_str(text: &str, overrides: &[&str]) -> Result<RunConfig, CliError> {
        let dir = std::env::temp_dir().join(format!(
            "ld-config-test-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("run.toml");
        std::fs::write(&file, text).unwrap();
        let ovs: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        RunConfig::load(&file, &ovs)
    }

    #[test]
    fn parses_and_builds() {
        let cfg = load_str(BASE, &[]).unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.dim(), 1);
        let sim = cfg.build_sim().unwrap();
        assert_eq!(sim.epsilon(), 0.1);
        assert_eq!(sim.grid().steps(), 50);
        assert_eq!(sim.seed(), 42); // [run] defaults
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{BASE}\n[grid2]\nx = 1\n");
        let err = load_str(&text, &[]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{err:?}");
        let text = BASE.replace("epsilon = 0.1", "epsilon = 0.1\ntypo_key = 3");
        assert!(load_str(&text, &[]).is_err());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = load_str(
            BASE,
            &[
                "scales.epsilon=0.05",
                "run.seed=7",
                "sweep.epsilons=[0.2, 0.1]",
                "model.params.a=2.5",
            ],
        )
        .unwrap();
        assert_eq!(cfg.scales.epsilon, 0.05);
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.sweep.as_ref().unwrap().epsilons, vec![0.2, 0.1]);
        assert_eq!(cfg.model.params["a"], 2.5);
    }

    #[test]
    fn override_type_errors_are_config_errors() {
        let err = load_str(BASE, &["grid.steps=not_a_number"]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        let err = load_str(BASE, &["missing_the_equals"]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn control_section_variants() {
        let text = format!(
            "{BASE}\n[control]\nkind = \"sine\"\namplitude = [0.5]\nfrequency = 2.0\n"
        );
        let cfg = load_str(&text, &[]).unwrap();
        let grid = cfg.build_grid().unwrap();
        let u = cfg.build_control(grid).unwrap();
        let expected = 0.5 * (2.0 * grid.node(3)).sin();
        assert!((u.value_slice(3)[0] - expected).abs() < 1e-15);

        let cfg = load_str(BASE, &["control.kind=constant", "control.values=[1.5]"]).unwrap();
        let u = cfg.build_control(grid).unwrap();
        assert_eq!(u.value_slice(10)[0], 1.5);
    }
}
