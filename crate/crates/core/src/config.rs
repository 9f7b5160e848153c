//! Run configuration: TOML file, `--section.key=value` overrides, validation
//! and a self-describing schema.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Neighborhood;
use crate::mesh::PlyFormat;
use crate::scene::{resolve_class, CameraRig, CostParams, Preset, SceneError};
use crate::solver::{ExpansionOptions, LabelMetric, LabelSet};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid value for `{field}`: {msg}")]
    Invalid { field: String, msg: String },
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    Binary,
    Multilabel,
}

/// How `lambda_pair` turns into an integer edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// `lambda_pair` times the magnitude of the mean ray cost entry.
    #[default]
    Relative,
    /// `lambda_pair` times the fixed-point scale.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub preset: Preset,
    pub resolution: usize,
    pub cameras: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let rig = CameraRig::default();
        Self {
            preset: Preset::WallWithHole,
            resolution: 32,
            cameras: rig.count,
            width: rig.width,
            height: rig.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsConfig {
    pub names: Vec<String>,
    pub free: String,
    /// Row-major label distance table; Potts when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<i64>>>,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        Self {
            names: vec!["free".into(), "building".into()],
            free: "free".into(),
            metric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub lambda_sem: f64,
    pub lambda_dep: f64,
    pub delta: f64,
    pub matches_per_pixel: usize,
    pub depth_sigma: f64,
    pub confusion: f64,
    pub scale: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        let p = CostParams::default();
        Self {
            lambda_sem: p.lambda_sem,
            lambda_dep: p.lambda_dep,
            delta: p.delta,
            matches_per_pixel: p.matches_per_pixel,
            depth_sigma: p.depth_sigma,
            confusion: p.confusion,
            scale: p.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub lambda_pair: f64,
    pub pair_mode: PairMode,
    pub neighborhood: Neighborhood,
    pub max_cycles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Binary,
            lambda_pair: 0.01,
            pair_mode: PairMode::Relative,
            neighborhood: Neighborhood::Six,
            max_cycles: ExpansionOptions::default().max_cycles,
            shuffle_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub ply_format: PlyFormat,
    pub smoothing_iterations: usize,
    pub smoothing_step: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            ply_format: PlyFormat::Ascii,
            smoothing_iterations: 3,
            smoothing_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Compare against exhaustive search when the grid is small enough.
    pub oracle_check: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub labels: LabelsConfig,
    pub cost: CostConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub run: RunSection,
}

/// Parses `--section.key=value` (leading dashes optional). Values are read as
/// TOML literals, falling back to a bare string.
pub fn parse_override(arg: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let body = arg.trim_start_matches('-');
    let (key, raw) = body
        .split_once('=')
        .ok_or_else(|| invalid(body, "override must look like --section.key=value"))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
        return Err(invalid(key, "override key must be section.key"));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_parts(text, &[])
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_parts(&text, overrides)
    }

    /// Parses, applies overrides in order, then validates.
    pub fn from_parts(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| invalid("<file>", e.message()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            let section = table
                .entry(path[0].clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| invalid(&path[0], "is not a section"))?;
            section.insert(path[1].clone(), value);
        }
        let cfg: RunConfig =
            serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
                let field = e.path().to_string();
                invalid(
                    if field == "." {
                        "<file>".to_string()
                    } else {
                        field
                    },
                    e.into_inner().to_string().trim(),
                )
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label_set(&self) -> Result<LabelSet, ConfigError> {
        LabelSet::new(self.labels.names.iter().cloned(), &self.labels.free).map_err(|e| {
            let field = if self.labels.names.contains(&self.labels.free) {
                "labels.names"
            } else {
                "labels.free"
            };
            invalid(field, e.to_string())
        })
    }

    pub fn metric(&self) -> Result<LabelMetric, ConfigError> {
        let n = self.labels.names.len();
        match &self.labels.metric {
            None => Ok(LabelMetric::potts(n)),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid("labels.metric", format!("must be a {n}x{n} table")));
                }
                LabelMetric::from_table(n, rows.concat())
                    .map_err(|e| invalid("labels.metric", e.to_string()))
            }
        }
    }

    pub fn cost_params(&self) -> CostParams {
        let c = &self.cost;
        CostParams {
            lambda_sem: c.lambda_sem,
            lambda_dep: c.lambda_dep,
            delta: c.delta,
            matches_per_pixel: c.matches_per_pixel,
            depth_sigma: c.depth_sigma,
            confusion: c.confusion,
            seed: self.run.seed,
            scale: c.scale,
        }
    }

    pub fn rig(&self) -> CameraRig {
        CameraRig {
            count: self.scene.cameras,
            width: self.scene.width,
            height: self.scene.height,
        }
    }

    pub fn expansion_options(&self) -> ExpansionOptions {
        ExpansionOptions {
            shuffle_seed: self.solver.shuffle_seed,
            max_cycles: self.solver.max_cycles,
        }
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scene;
        if !(4..=512).contains(&s.resolution) {
            return Err(invalid("scene.resolution", "must be between 4 and 512"));
        }
        if s.cameras == 0 {
            return Err(invalid("scene.cameras", "must be at least 1"));
        }
        if s.width == 0 || s.width > 8192 {
            return Err(invalid("scene.width", "must be between 1 and 8192"));
        }
        if s.height == 0 || s.height > 8192 {
            return Err(invalid("scene.height", "must be between 1 and 8192"));
        }
        let labels = self.label_set()?;
        if labels.len() > 64 {
            return Err(invalid("labels.names", "at most 64 labels"));
        }
        self.metric()?;
        for class in ["building", "tree"] {
            let needed =
                class == "building" || matches!(s.preset, Preset::ThinColumn | Preset::TwoPlanes);
            if needed {
                resolve_class(&labels, class)
                    .map_err(|e| invalid("labels.names", e.to_string()))?;
            }
        }
        self.cost_params().validate().map_err(|e| match e {
            SceneError::Params { field, msg } => invalid(format!("cost.{field}"), msg),
            other => invalid("cost", other.to_string()),
        })?;
        let v = &self.solver;
        if self.solver.mode == SolverMode::Binary && labels.len() != 2 {
            return Err(invalid(
                "solver.mode",
                format!("binary mode needs exactly 2 labels, got {}", labels.len()),
            ));
        }
        if !(v.lambda_pair >= 0.0 && v.lambda_pair.is_finite()) {
            return Err(invalid("solver.lambda_pair", "must be a finite value >= 0"));
        }
        if v.max_cycles == 0 {
            return Err(invalid("solver.max_cycles", "must be at least 1"));
        }
        let o = &self.output;
        if o.dir.as_os_str().is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        if !(0.0..=1.0).contains(&o.smoothing_step) {
            return Err(invalid("output.smoothing_step", "must be in [0, 1]"));
        }
        if self.run.threads > 1024 {
            return Err(invalid("run.threads", "at most 1024"));
        }
        Ok(())
    }
}

struct FieldDoc {
    section: &'static str,
    key: &'static str,
    ty: &'static str,
    doc: &'static str,
    /// Commented-out example for fields without a default value.
    example: Option<&'static str>,
}

const fn f(
    section: &'static str,
    key: &'static str,
    ty: &'static str,
    doc: &'static str,
) -> FieldDoc {
    FieldDoc {
        section,
        key,
        ty,
        doc,
        example: None,
    }
}

const FIELDS: &[FieldDoc] = &[
    f(
        "scene",
        "preset",
        "string",
        "box | wall_with_hole | thin_column | two_planes",
    ),
    f(
        "scene",
        "resolution",
        "integer",
        "voxels per grid side, 4..=512",
    ),
    f(
        "scene",
        "cameras",
        "integer",
        "cameras on the ring around the grid",
    ),
    f("scene", "width", "integer", "image width in pixels"),
    f("scene", "height", "integer", "image height in pixels"),
    f(
        "labels",
        "names",
        "array of strings",
        "label names; occupied classes besides the free label",
    ),
    f("labels", "free", "string", "name of the free-space label"),
    FieldDoc {
        section: "labels",
        key: "metric",
        ty: "array of integer arrays",
        doc:
            "label distance table (zero diagonal, symmetric, triangle inequality); Potts when unset",
        example: Some("[[0, 1, 1], [1, 0, 2], [1, 2, 0]]"),
    },
    f("cost", "lambda_sem", "float", "weight of the semantic term"),
    f("cost", "lambda_dep", "float", "weight of the depth term"),
    f("cost", "delta", "float", "depth tolerance in length units"),
    f(
        "cost",
        "matches_per_pixel",
        "integer",
        "depth matches per pixel, 1..=3",
    ),
    f(
        "cost",
        "depth_sigma",
        "float",
        "standard deviation of the depth noise",
    ),
    f(
        "cost",
        "confusion",
        "float",
        "semantic probability spread over all labels, 0..=1",
    ),
    f(
        "cost",
        "scale",
        "float",
        "fixed-point factor applied to every cost before rounding",
    ),
    f("solver", "mode", "string", "binary | multilabel"),
    f("solver", "lambda_pair", "float", "smoothness weight"),
    f(
        "solver",
        "pair_mode",
        "string",
        "relative (times mean |ray cost|) | absolute (times scale)",
    ),
    f("solver", "neighborhood", "string", "six | twenty_six"),
    f(
        "solver",
        "max_cycles",
        "integer",
        "alpha-expansion cycle limit",
    ),
    FieldDoc {
        section: "solver",
        key: "shuffle_seed",
        ty: "integer",
        doc: "shuffle the occupied labels' visiting order; fixed order when unset",
        example: Some("7"),
    },
    f(
        "output",
        "dir",
        "string",
        "directory for result.ply, metrics.json, energy_trace.csv, run.log",
    ),
    f(
        "output",
        "ply_format",
        "string",
        "ascii | binary_little_endian",
    ),
    f(
        "output",
        "smoothing_iterations",
        "integer",
        "Laplacian smoothing passes on the mesh",
    ),
    f(
        "output",
        "smoothing_step",
        "float",
        "smoothing step size, 0..=1",
    ),
    f(
        "run",
        "seed",
        "integer",
        "seed for cameras and observation noise",
    ),
    f("run", "threads", "integer", "worker threads, 0 = all cores"),
    f(
        "run",
        "oracle_check",
        "boolean",
        "verify against exhaustive search (tiny grids only)",
    ),
];

/// Every field with its type and default, as a config file that parses back
/// to the defaults.
pub fn print_config_schema() -> String {
    let defaults = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
    let mut out = String::from(
        "# rayopt run configuration. Every field is optional; values shown are defaults.\n",
    );
    let mut section = "";
    for fd in FIELDS {
        if fd.section != section {
            section = fd.section;
            let _ = write!(out, "\n[{section}]\n");
        }
        let _ = writeln!(out, "# {} ({}): {}", fd.key, fd.ty, fd.doc);
        match defaults.get(fd.section).and_then(|s| s.get(fd.key)) {
            Some(v) => {
                let _ = writeln!(out, "{} = {}", fd.key, v);
            }
            None => {
                let _ = writeln!(out, "# {} = {}", fd.key, fd.example.unwrap_or("\"\""));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_parses_to_defaults() {
        let s = print_config_schema();
        assert_eq!(RunConfig::from_toml_str(&s).unwrap(), RunConfig::default());
        assert!(s.contains("lambda_sem = 1.0\n"));
        assert!(s.contains("scale = 10000.0\n"));
    }

    #[test]
    fn schema_lists_every_field() {
        let defaults = toml::Value::try_from(RunConfig::default()).unwrap();
        let mut documented: Vec<String> = FIELDS
            .iter()
            .filter(|f| f.example.is_none())
            .map(|f| format!("{}.{}", f.section, f.key))
            .collect();
        let mut actual: Vec<String> = defaults
            .as_table()
            .unwrap()
            .iter()
            .flat_map(|(s, t)| {
                t.as_table()
                    .unwrap()
                    .keys()
                    .map(move |k| format!("{s}.{k}"))
            })
            .collect();
        documented.sort();
        actual.sort();
        assert_eq!(documented, actual);
        // Optional fields parse when uncommented.
        for f in FIELDS.iter().filter(|f| f.example.is_some()) {
            let mut labels = String::from("names = [\"free\", \"building\", \"tree\"]\n");
            let mut solver = String::from("mode = \"multilabel\"\n");
            let line = format!("{} = {}\n", f.key, f.example.unwrap());
            if f.section == "labels" {
                labels += &line
            } else {
                solver += &line
            }
            let text = format!("[labels]\n{labels}[solver]\n{solver}");
            RunConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", f.key));
        }
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn invalid_preset_names_field() {
        let e = RunConfig::from_toml_str("[scene]\npreset = \"castle\"\n").unwrap_err();
        assert_eq!(e.field(), Some("scene.preset"));
        assert!(e.to_string().contains("scene.preset"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_toml_str("[scene]\nresolutoin = 8\n").unwrap_err();
        assert!(e.field().unwrap().starts_with("scene"), "{e}");
        let e = RunConfig::from_toml_str("[sceen]\n").unwrap_err();
        assert!(e.to_string().contains("sceen"), "{e}");
    }

    #[test]
    fn validation_names_field() {
        let cases = [
            ("[scene]\nresolution = 2\n", "scene.resolution"),
            ("[scene]\ncameras = 0\n", "scene.cameras"),
            ("[cost]\ndelta = 0.0\n", "cost.delta"),
            ("[cost]\nconfusion = 2.0\n", "cost.confusion"),
            ("[solver]\nlambda_pair = -1.0\n", "solver.lambda_pair"),
            ("[labels]\nnames = [\"free\", \"building\", \"tree\"]\n", "solver.mode"),
            ("[labels]\nfree = \"sky\"\n", "labels.free"),
            ("[labels]\nnames = [\"free\", \"building\", \"tree\"]\nmetric = [[0, 1], [1, 0]]\n[solver]\nmode = \"multilabel\"\n", "labels.metric"),
            (
                "[labels]\nnames = [\"free\", \"building\", \"tree\"]\nmetric = [[0, 1, 5], [1, 0, 1], [5, 1, 0]]\n[solver]\nmode = \"multilabel\"\n",
                "labels.metric",
            ),
            ("[scene]\npreset = \"thin_column\"\n[labels]\nnames = [\"free\", \"building\", \"tree\"]\n[solver]\nmode = \"multilabel\"\n", ""),
            ("[output]\nsmoothing_step = 1.5\n", "output.smoothing_step"),
            ("[solver]\nmode = \"fast\"\n", "solver.mode"),
            ("[cost]\nscale = \"big\"\n", "cost.scale"),
        ];
        for (text, field) in cases {
            match RunConfig::from_toml_str(text) {
                Ok(_) => assert_eq!(field, "", "{text}"),
                Err(e) => assert_eq!(e.field(), Some(field), "{text}: {e}"),
            }
        }
    }

    #[test]
    fn overrides_apply_in_order() {
        let args = [
            "--scene.resolution=16",
            "--scene.preset=box",
            "--solver.lambda_pair=0.5",
            "--scene.resolution=8",
        ];
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let cfg = RunConfig::from_parts("[scene]\nresolution = 64\n", &args).unwrap();
        assert_eq!(cfg.scene.resolution, 8);
        assert_eq!(cfg.scene.preset, Preset::Box);
        assert_eq!(cfg.solver.lambda_pair, 0.5);
        let e = RunConfig::from_parts("", &["--scene.preset=nowhere".to_string()]).unwrap_err();
        assert_eq!(e.field(), Some("scene.preset"));
        assert!(parse_override("--scene=3").is_err());
        assert_eq!(
            parse_override("--output.dir=/tmp/x").unwrap().1,
            toml::Value::String("/tmp/x".into())
        );
        assert_eq!(
            parse_override("--run.oracle_check=true").unwrap().1,
            toml::Value::Boolean(true)
        );
    }
}
