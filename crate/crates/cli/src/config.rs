//! Run configuration: a TOML key tree validated into typed blocks.
//!
//! Every error names the dotted key it concerns, e.g. `grid.h: required`.

use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};
use weakkam_core::simplex::{Pricing, SimplexOptions};
use weakkam_core::BoxDomain;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyConfig {
    Eikonal,
    Quadratic,
    Sampled { path: PathBuf, p_lo: Vec<f64>, p_hi: Vec<f64>, p_counts: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub family: FamilyConfig,
    /// Registry name of the potential (closed-form families only).
    pub potential: Option<String>,
    pub scale: f64,
    pub shift: f64,
    /// Shift `H` by its computed critical value before any other step.
    pub normalize: bool,
    pub superlinearize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub critical_tol: f64,
    pub eps_aubry: Option<f64>,
    pub polytope_tol: f64,
    pub pricing: Pricing,
}

impl SolverConfig {
    pub fn simplex(&self) -> SimplexOptions {
        SimplexOptions { pricing: self.pricing, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub domain: BoxDomain,
    pub h: f64,
    pub q_max: f64,
    pub velocity_count: usize,
    pub solver: SolverConfig,
    pub schedule: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    pub report_box: BoxDomain,
    pub outputs: OutputConfig,
    pub seed: u64,
    pub n_objectives: usize,
    /// Non-fatal findings (e.g. probes outside the reporting box).
    pub warnings: Vec<String>,
}

const KNOWN_KEYS: &[&str] = &[
    "model.family",
    "model.potential",
    "model.scale",
    "model.shift",
    "model.normalize",
    "model.superlinearize",
    "model.sampled.path",
    "model.sampled.p_lo",
    "model.sampled.p_hi",
    "model.sampled.p_counts",
    "grid.lo",
    "grid.hi",
    "grid.radius",
    "grid.dim",
    "grid.h",
    "velocities.q_max",
    "velocities.count",
    "solver.tol",
    "solver.max_iter",
    "solver.critical_tol",
    "solver.eps_aubry",
    "solver.polytope_tol",
    "solver.pricing",
    "schedule.lambdas",
    "schedule.start",
    "schedule.ratio",
    "schedule.count",
    "probes.points",
    "report.lo",
    "report.hi",
    "outputs.directory",
    "outputs.formats",
    "seeds.mather",
    "seeds.n_objectives",
];

/// Reads and parses a config file into a raw key tree.
pub fn read_table(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| ConfigError::new("config", format!("parse error: {e}")))
}

/// Applies a `key=value` override; the value is parsed as TOML, falling back to a string.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    if !KNOWN_KEYS.contains(&key) {
        return Err(ConfigError::new(key, "unknown key"));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(*part, "expected a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => out.push(key),
        }
    }
}

struct Reader<'a> {
    root: &'a Table,
}

impl<'a> Reader<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        let mut node = self.root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node.get(*part)?.as_table()?;
        }
        node.get(parts[parts.len() - 1])
    }

    fn required(&self, key: &str) -> Result<&'a Value, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::new(key, "required"))
    }

    fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::new(key, "expected a number")),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key).map(|v| Self::as_f64(key, v)).transpose()
    }

    fn req_f64(&self, key: &str) -> Result<f64, ConfigError> {
        Self::as_f64(key, self.required(key)?)
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key)
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                _ => Err(ConfigError::new(key, "expected a nonnegative integer")),
            })
            .transpose()
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key)
            .map(|v| v.as_bool().ok_or_else(|| ConfigError::new(key, "expected a boolean")))
            .transpose()
    }

    fn string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        self.get(key)
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| ConfigError::new(key, "expected a string")))
            .transpose()
    }

    fn vec_f64(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.as_array()
                    .ok_or_else(|| ConfigError::new(key, "expected an array of numbers"))?
                    .iter()
                    .map(|x| Self::as_f64(key, x))
                    .collect()
            })
            .transpose()
    }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Validates a raw key tree. Relative sampled-data paths resolve against `base_dir`.
    pub fn from_table(table: &Table, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut keys = Vec::new();
        flatten("", table, &mut keys);
        if let Some(bad) = keys.iter().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(bad.clone(), "unknown key"));
        }
        let r = Reader { root: table };
        let mut warnings = Vec::new();

        // grid
        let h = positive("grid.h", r.req_f64("grid.h")?)?;
        let domain = match (r.vec_f64("grid.lo")?, r.vec_f64("grid.hi")?, r.f64("grid.radius")?) {
            (Some(lo), Some(hi), None) => {
                BoxDomain::new(lo, hi).map_err(|e| ConfigError::new("grid.lo", e.to_string()))?
            }
            (None, None, Some(radius)) => {
                let dim = r.usize("grid.dim")?.unwrap_or(1);
                if dim == 0 {
                    return Err(ConfigError::new("grid.dim", "must be at least 1"));
                }
                BoxDomain::centered(dim, positive("grid.radius", radius)?)
            }
            (None, None, None) => return Err(ConfigError::new("grid.lo", "required (or grid.radius)")),
            _ => return Err(ConfigError::new("grid", "give either grid.lo and grid.hi or grid.radius")),
        };
        let dim = domain.dim();

        // model
        let family_name = r.string("model.family")?.ok_or_else(|| ConfigError::new("model.family", "required"))?;
        let family = match family_name.as_str() {
            "eikonal" => FamilyConfig::Eikonal,
            "quadratic" => FamilyConfig::Quadratic,
            "sampled" => {
                let path = r
                    .string("model.sampled.path")?
                    .ok_or_else(|| ConfigError::new("model.sampled.path", "required"))?;
                let p_lo = r.vec_f64("model.sampled.p_lo")?.ok_or_else(|| ConfigError::new("model.sampled.p_lo", "required"))?;
                let p_hi = r.vec_f64("model.sampled.p_hi")?.ok_or_else(|| ConfigError::new("model.sampled.p_hi", "required"))?;
                let counts = r
                    .vec_f64("model.sampled.p_counts")?
                    .ok_or_else(|| ConfigError::new("model.sampled.p_counts", "required"))?;
                if p_lo.len() != dim || p_hi.len() != dim || counts.len() != dim {
                    return Err(ConfigError::new("model.sampled", format!("momentum box must have dimension {dim}")));
                }
                let p_counts = counts
                    .iter()
                    .map(|&c| {
                        if c >= 2.0 && c.fract() == 0.0 {
                            Ok(c as usize)
                        } else {
                            Err(ConfigError::new("model.sampled.p_counts", "expected integers ≥ 2"))
                        }
                    })
                    .collect::<Result<_, _>>()?;
                let path = PathBuf::from(path);
                let path = if path.is_relative() { base_dir.join(path) } else { path };
                FamilyConfig::Sampled { path, p_lo, p_hi, p_counts }
            }
            other => {
                return Err(ConfigError::new(
                    "model.family",
                    format!("unknown family {other:?} (expected eikonal, quadratic or sampled)"),
                ))
            }
        };
        let potential = r.string("model.potential")?;
        match (&family, &potential) {
            (FamilyConfig::Sampled { .. }, Some(_)) => {
                return Err(ConfigError::new("model.potential", "not used by the sampled family"))
            }
            (FamilyConfig::Sampled { .. }, None) => {}
            (_, None) => return Err(ConfigError::new("model.potential", "required")),
            (_, Some(name)) => {
                if weakkam_core::Potential::by_name(name, 1.0).is_none() {
                    return Err(ConfigError::new(
                        "model.potential",
                        format!("unknown potential {name:?} (expected abs, half_square, double_well or lorentzian)"),
                    ));
                }
            }
        }
        let model = ModelConfig {
            family,
            potential,
            scale: r.f64("model.scale")?.unwrap_or(1.0),
            shift: r.f64("model.shift")?.unwrap_or(0.0),
            normalize: r.bool("model.normalize")?.unwrap_or(false),
            superlinearize: r.bool("model.superlinearize")?.unwrap_or(false),
        };

        // velocities
        let q_max = positive("velocities.q_max", r.req_f64("velocities.q_max")?)?;
        let velocity_count = r.usize("velocities.count")?.ok_or_else(|| ConfigError::new("velocities.count", "required"))?;
        if velocity_count % 2 == 0 {
            return Err(ConfigError::new("velocities.count", "must be odd so that 0 is a velocity"));
        }

        // solver
        let pricing = match r.string("solver.pricing")?.as_deref() {
            None | Some("dantzig") => Pricing::Dantzig,
            Some("bland") => Pricing::Bland,
            Some(other) => {
                return Err(ConfigError::new("solver.pricing", format!("unknown rule {other:?} (expected dantzig or bland)")))
            }
        };
        let solver = SolverConfig {
            tol: positive("solver.tol", r.f64("solver.tol")?.unwrap_or(1e-8))?,
            max_iter: r.usize("solver.max_iter")?.unwrap_or(1_000_000),
            critical_tol: positive("solver.critical_tol", r.f64("solver.critical_tol")?.unwrap_or(1e-4))?,
            eps_aubry: r.f64("solver.eps_aubry")?.map(|v| positive("solver.eps_aubry", v)).transpose()?,
            polytope_tol: positive("solver.polytope_tol", r.f64("solver.polytope_tol")?.unwrap_or(1e-9))?,
            pricing,
        };

        // schedule
        let schedule = match (r.vec_f64("schedule.lambdas")?, r.f64("schedule.start")?) {
            (Some(l), None) => l,
            (None, Some(start)) => {
                let ratio = r.f64("schedule.ratio")?.unwrap_or(0.5);
                let count = r.usize("schedule.count")?.ok_or_else(|| ConfigError::new("schedule.count", "required with schedule.start"))?;
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(ConfigError::new("schedule.ratio", "must lie in (0, 1)"));
                }
                (0..count).map(|k| start * ratio.powi(k as i32)).collect()
            }
            (None, None) => vec![0.5, 0.25, 0.125],
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("schedule", "give either schedule.lambdas or schedule.start"))
            }
        };
        if schedule.is_empty() {
            return Err(ConfigError::new("schedule.lambdas", "must not be empty"));
        }
        if schedule.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(ConfigError::new("schedule.lambdas", "values must be positive and finite"));
        }
        if schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::new("schedule.lambdas", "must be strictly decreasing"));
        }

        // reporting box
        let report_box = match (r.vec_f64("report.lo")?, r.vec_f64("report.hi")?) {
            (Some(lo), Some(hi)) => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(ConfigError::new("report.lo", format!("expected dimension {dim}")));
                }
                BoxDomain::new(lo, hi).map_err(|e| ConfigError::new("report.lo", e.to_string()))?
            }
            (None, None) => domain.scaled(0.5),
            _ => return Err(ConfigError::new("report", "report.lo and report.hi must be given together")),
        };

        // probes
        let probes: Vec<Vec<f64>> = match r.get("probes.points") {
            None => Vec::new(),
            Some(v) => {
                let arr = v.as_array().ok_or_else(|| ConfigError::new("probes.points", "expected an array of points"))?;
                arr.iter()
                    .map(|p| {
                        let p: Vec<f64> = match p {
                            Value::Array(xs) => xs.iter().map(|x| Reader::as_f64("probes.points", x)).collect::<Result<_, _>>()?,
                            other => vec![Reader::as_f64("probes.points", other)?],
                        };
                        if p.len() != dim {
                            return Err(ConfigError::new("probes.points", format!("expected points of dimension {dim}")));
                        }
                        Ok(p)
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        for p in &probes {
            if !domain.contains(p) {
                return Err(ConfigError::new("probes.points", format!("probe {p:?} lies outside the box")));
            }
            if !domain.scaled(0.5).contains(p) {
                let w = format!("probes.points: probe {p:?} lies outside the central half-box");
                log::warn!("{w}");
                warnings.push(w);
            }
        }

        // outputs
        let directory = PathBuf::from(r.string("outputs.directory")?.unwrap_or_else(|| "out".into()));
        let formats: Vec<String> = match r.get("outputs.formats") {
            None => vec!["csv".into(), "json".into(), "svg".into()],
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| ConfigError::new("outputs.formats", "expected strings")))
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(ConfigError::new("outputs.formats", "expected an array of strings")),
        };
        if let Some(bad) = formats.iter().find(|f| !matches!(f.as_str(), "csv" | "json" | "svg")) {
            return Err(ConfigError::new("outputs.formats", format!("unknown format {bad:?} (expected csv, json or svg)")));
        }
        let outputs = OutputConfig {
            directory,
            csv: formats.iter().any(|f| f == "csv"),
            json: formats.iter().any(|f| f == "json"),
            svg: formats.iter().any(|f| f == "svg"),
        };

        let seed = match r.get("seeds.mather") {
            None => 0,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(_) => return Err(ConfigError::new("seeds.mather", "expected a nonnegative integer")),
        };
        let n_objectives = r.usize("seeds.n_objectives")?.unwrap_or(8);

        Ok(RunConfig {
            model,
            domain,
            h,
            q_max,
            velocity_count,
            solver,
            schedule,
            probes,
            report_box,
            outputs,
            seed,
            n_objectives,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
family = "quadratic"
potential = "half_square"
[grid]
radius = 2.0
h = 0.1
[velocities]
q_max = 1.0
count = 5
"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_table(&text.parse::<Table>().unwrap(), Path::new("."))
    }

    #[test]
    fn defaults_fill_optional_blocks() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.schedule, vec![0.5, 0.25, 0.125]);
        assert_eq!(c.report_box, BoxDomain::centered(1, 1.0));
        assert!(c.outputs.csv && c.outputs.json && c.outputs.svg);
        assert_eq!(c.solver.tol, 1e-8);
    }

    #[test]
    fn missing_h_names_the_key() {
        let text = BASE.replace("h = 0.1\n", "");
        assert_eq!(parse(&text).unwrap_err().to_string(), "grid.h: required");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_schedules() {
        let e = parse(&format!("{BASE}\n[extra]\nfoo = 1\n")).unwrap_err();
        assert_eq!(e.key, "extra.foo");
        let e = parse(&format!("{BASE}\n[schedule]\nlambdas = [0.25, 0.5]\n")).unwrap_err();
        assert_eq!(e.key, "schedule.lambdas");
    }

    #[test]
    fn geometric_schedule() {
        let c = parse(&format!("{BASE}\n[schedule]\nstart = 1.0\nratio = 0.5\ncount = 3\n")).unwrap();
        assert_eq!(c.schedule, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn overrides_replace_values() {
        let mut t: Table = BASE.parse().unwrap();
        apply_override(&mut t, "grid.h=0.05").unwrap();
        apply_override(&mut t, "outputs.directory=results").unwrap();
        let c = RunConfig::from_table(&t, Path::new(".")).unwrap();
        assert_eq!(c.h, 0.05);
        assert_eq!(c.outputs.directory, PathBuf::from("results"));
        assert_eq!(apply_override(&mut t, "grid.q=1").unwrap_err().key, "grid.q");
    }

    #[test]
    fn probes_outside_half_box_warn() {
        let c = parse(&format!("{BASE}\n[probes]\npoints = [[0.0], [1.5]]\n")).unwrap();
        assert_eq!(c.probes.len(), 2);
        assert_eq!(c.warnings.len(), 1);
        let e = parse(&format!("{BASE}\n[probes]\npoints = [[3.0]]\n")).unwrap_err();
        assert_eq!(e.key, "probes.points");
    }
}
