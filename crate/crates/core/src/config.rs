//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! keys and repeated keys are rejected with the offending line number.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ensemble::{EnsembleConfig, EvolutionParams, ShapeSpec, SpectrumParams};
use crate::error::{BilliardError, Result};
use crate::geometry::parse_text_grid;
use crate::observables::CgfMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    QuarterStadium,
    Custom,
}

impl ShapeKind {
    fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::QuarterStadium => "quarter_stadium",
            ShapeKind::Custom => "custom",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rectangle" => Ok(ShapeKind::Rectangle),
            "quarter_stadium" | "stadium" => Ok(ShapeKind::QuarterStadium),
            "custom" => Ok(ShapeKind::Custom),
            other => Err(format!(
                "unknown shape {other:?} (expected rectangle, quarter_stadium or custom)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub shape: ShapeKind,
    pub lx: usize,
    pub ly: usize,
    pub a: usize,
    pub r: usize,
    pub mask_file: Option<PathBuf>,
    pub lambda: f64,
    pub dt: Option<f64>,
    pub t_final_in_tl: f64,
    pub record_stride: usize,
    pub cgf_n: usize,
    pub cgf_mode: CgfMode,
    pub snapshot_times: Option<Vec<f64>>,
    pub p_defect: f64,
    pub epsilon_max: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub unfold_degree: usize,
    pub edge_trim: f64,
    pub lss_bins: usize,
    pub lss_s_max: f64,
    pub collapse_degenerate: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let evo = EvolutionParams::default();
        let spec = SpectrumParams::default();
        RunConfig {
            shape: ShapeKind::Rectangle,
            lx: 31,
            ly: 15,
            a: 17,
            r: 15,
            mask_file: None,
            lambda: evo.lambda,
            dt: None,
            t_final_in_tl: evo.t_final_in_tl,
            record_stride: evo.record_stride,
            cgf_n: evo.cgf_n,
            cgf_mode: CgfMode::Coherent,
            snapshot_times: None,
            p_defect: 5e-3,
            epsilon_max: 1e-5,
            n_realizations: 10,
            base_seed: 1,
            output_dir: PathBuf::from("out"),
            unfold_degree: spec.poly_degree,
            edge_trim: spec.edge_trim,
            lss_bins: spec.n_bins,
            lss_s_max: spec.s_max,
            collapse_degenerate: spec.collapse_degenerate,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| BilliardError::Config(format!("line {line}: key `{key}`: cannot parse {raw:?}: {e}")))
}

fn parse_seed(key: &str, raw: &str, line: usize) -> Result<u64> {
    let parsed = match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).map_err(|e| e.to_string()),
        None => raw.parse::<u64>().map_err(|e| e.to_string()),
    };
    parsed.map_err(|e| BilliardError::Config(format!("line {line}: key `{key}`: cannot parse {raw:?}: {e}")))
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (k, raw_line) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(BilliardError::Config(format!(
                    "line {line}: expected `key = value`, got {content:?}"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(BilliardError::Config(format!("line {line}: key `{key}` given twice")));
            }
            cfg.set(key, value, line)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BilliardError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "shape" => {
                self.shape = value
                    .parse()
                    .map_err(|e| BilliardError::Config(format!("line {line}: key `shape`: {e}")))?
            }
            "lx" => self.lx = parse_value(key, value, line)?,
            "ly" => self.ly = parse_value(key, value, line)?,
            "a" => self.a = parse_value(key, value, line)?,
            "r" => self.r = parse_value(key, value, line)?,
            "mask_file" => self.mask_file = Some(PathBuf::from(value)),
            "lambda" => self.lambda = parse_value(key, value, line)?,
            "dt" => {
                self.dt = if value == "auto" {
                    None
                } else {
                    Some(parse_value(key, value, line)?)
                }
            }
            "t_final_in_tl" => self.t_final_in_tl = parse_value(key, value, line)?,
            "record_stride" => self.record_stride = parse_value(key, value, line)?,
            "cgf_n" => self.cgf_n = parse_value(key, value, line)?,
            "cgf_mode" => self.cgf_mode = parse_value(key, value, line)?,
            "snapshot_times" => {
                self.snapshot_times = if value == "auto" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|v| parse_value::<f64>(key, v.trim(), line))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "p_defect" => self.p_defect = parse_value(key, value, line)?,
            "epsilon_max" => self.epsilon_max = parse_value(key, value, line)?,
            "n_realizations" => self.n_realizations = parse_value(key, value, line)?,
            "base_seed" => self.base_seed = parse_seed(key, value, line)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "unfold_degree" => self.unfold_degree = parse_value(key, value, line)?,
            "edge_trim" => self.edge_trim = parse_value(key, value, line)?,
            "lss_bins" => self.lss_bins = parse_value(key, value, line)?,
            "lss_s_max" => self.lss_s_max = parse_value(key, value, line)?,
            "collapse_degenerate" => self.collapse_degenerate = parse_value(key, value, line)?,
            other => {
                return Err(BilliardError::Config(format!("line {line}: unknown key `{other}`")));
            }
        }
        Ok(())
    }

    fn config_error(e: BilliardError) -> BilliardError {
        match e {
            BilliardError::InvalidArgument(msg) => BilliardError::Config(msg),
            other => other,
        }
    }

    pub fn shape_spec(&self) -> Result<ShapeSpec> {
        Ok(match self.shape {
            ShapeKind::Rectangle => ShapeSpec::Rectangle { lx: self.lx, ly: self.ly },
            ShapeKind::QuarterStadium => ShapeSpec::QuarterStadium { a: self.a, r: self.r },
            ShapeKind::Custom => {
                let path = self
                    .mask_file
                    .as_ref()
                    .ok_or_else(|| BilliardError::Config("shape = custom requires mask_file".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| {
                    BilliardError::Config(format!("cannot read mask file {}: {e}", path.display()))
                })?;
                ShapeSpec::Custom(parse_text_grid(&text).map_err(Self::config_error)?)
            }
        })
    }

    /// Builds and validates the ensemble description. Invalid values are
    /// reported as config errors.
    pub fn ensemble_config(&self) -> Result<EnsembleConfig> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(BilliardError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        let shape = self.shape_spec()?;
        shape.build().map_err(Self::config_error)?;
        let cfg = EnsembleConfig {
            shape,
            evolution: EvolutionParams {
                lambda: self.lambda,
                dt: self.dt,
                t_final_in_tl: self.t_final_in_tl,
                record_stride: self.record_stride,
                cgf_n: self.cgf_n,
                acf_mode: self.cgf_mode,
                snapshot_times: self.snapshot_times.clone(),
                ..EvolutionParams::default()
            },
            spectrum: SpectrumParams {
                poly_degree: self.unfold_degree,
                edge_trim: self.edge_trim,
                n_bins: self.lss_bins,
                s_max: self.lss_s_max,
                collapse_degenerate: self.collapse_degenerate,
            },
            n_realizations: self.n_realizations,
            p_defect: self.p_defect,
            epsilon_max: self.epsilon_max,
            base_seed: self.base_seed,
        };
        cfg.validate().map_err(Self::config_error)?;
        if self.unfold_degree == 0 {
            return Err(BilliardError::Config("unfold_degree must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.edge_trim) {
            return Err(BilliardError::Config(format!("edge_trim must lie in [0, 0.5), got {}", self.edge_trim)));
        }
        if self.lss_bins < 2 || !(self.lss_s_max > 0.0) {
            return Err(BilliardError::Config("lss_bins must be >= 2 and lss_s_max > 0".into()));
        }
        Ok(cfg)
    }

    /// Renders the configuration in the same `key = value` format, so a
    /// manifest can be fed back in as a config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("shape", self.shape.name().to_string());
        kv("lx", self.lx.to_string());
        kv("ly", self.ly.to_string());
        kv("a", self.a.to_string());
        kv("r", self.r.to_string());
        if let Some(p) = &self.mask_file {
            kv("mask_file", p.display().to_string());
        }
        kv("lambda", self.lambda.to_string());
        kv("dt", self.dt.map_or("auto".into(), |d| d.to_string()));
        kv("t_final_in_tl", self.t_final_in_tl.to_string());
        kv("record_stride", self.record_stride.to_string());
        kv("cgf_n", self.cgf_n.to_string());
        kv(
            "cgf_mode",
            match self.cgf_mode {
                CgfMode::Coherent => "coherent".into(),
                CgfMode::Incoherent => "incoherent".into(),
            },
        );
        kv(
            "snapshot_times",
            self.snapshot_times.as_deref().map_or("auto".into(), fmt_list),
        );
        kv("p_defect", self.p_defect.to_string());
        kv("epsilon_max", self.epsilon_max.to_string());
        kv("n_realizations", self.n_realizations.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("unfold_degree", self.unfold_degree.to_string());
        kv("edge_trim", self.edge_trim.to_string());
        kv("lss_bins", self.lss_bins.to_string());
        kv("lss_s_max", self.lss_s_max.to_string());
        kv("collapse_degenerate", self.collapse_degenerate.to_string());
        s
    }
}
