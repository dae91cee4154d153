//! Run configuration: `key = value` text plus overrides.

use crate::distancing::{Method, Schedule};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Grain reconstruction choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recon {
    Texture,
    Louvain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub recon: Recon,
    pub k_l: f64,
    pub q_c: f64,
    pub louvain_seed: u64,
    /// Louvain neighbourhood radius in spacings.
    pub r_lv: f64,
    pub methods: Vec<Method>,
    /// DIS search radius as a fraction of the initial RVE edge.
    pub dis_radius: f64,
    /// Guard shell of the P0+eps cloud as a fraction of the initial RVE edge.
    pub eps: f64,
    pub theta_c: f64,
    /// SDF voxel size in spacings.
    pub d_cell: f64,
    /// SDF block margin in spacings.
    pub sdf_margin: f64,
    /// VOR guard zone in spacings.
    pub guard: f64,
    pub use_bvh: bool,
    pub max_retries: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub bin_step: f64,
    pub step_workers: usize,
    pub intra_workers: usize,
    pub schedule: Schedule,
    pub export_obj: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            recon: Recon::Texture,
            k_l: 1000.0,
            q_c: 0.01,
            louvain_seed: 0,
            r_lv: 2.0,
            methods: vec![Method::Sdf],
            dis_radius: 0.1,
            eps: 0.1,
            theta_c: 15.0,
            d_cell: 0.5,
            sdf_margin: 2.0,
            guard: 3.0,
            use_bvh: true,
            max_retries: 3,
            bin_lo: 0.0,
            bin_hi: 24.0,
            bin_step: 0.2,
            step_workers: 1,
            intra_workers: 1,
            schedule: Schedule::Static,
            export_obj: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected true or false".into(),
        }),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Parses `GRAINMAP_WORKERS`: `I` sets the intra-step workers, `SxI` sets
/// step workers and intra-step workers.
pub fn parse_workers(value: &str) -> Result<(Option<usize>, usize), ConfigError> {
    let bad = |reason: &str| ConfigError::BadValue {
        key: "GRAINMAP_WORKERS".into(),
        value: value.into(),
        reason: reason.into(),
    };
    let num = |s: &str| -> Result<usize, ConfigError> {
        match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(bad("expected I or SxI with positive integers")),
        }
    };
    match value.trim().split_once(['x', 'X']) {
        Some((s, i)) => Ok((Some(num(s)?), num(i)?)),
        None => Ok((None, num(value)?)),
    }
}

impl RunConfig {
    /// Reads a config file. Relative input paths resolve against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::default();
        cfg.apply_text(&text, base)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                text: raw.into(),
            })?;
            self.apply(k, v, base)?;
        }
        Ok(())
    }

    /// Sets one key. Keys accept `-` or `_`.
    pub fn apply(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let k = key.as_str();
        let v = value.trim();
        match k {
            "input" | "inputs" => {
                if k == "inputs" {
                    self.inputs.clear();
                }
                self.inputs.extend(list(v).map(|p| base.join(p)));
            }
            "output" | "output_dir" => self.output_dir = base.join(v),
            "recon" => {
                self.recon = match v.to_ascii_lowercase().as_str() {
                    "tex" | "texture" => Recon::Texture,
                    "lou" | "louvain" => Recon::Louvain,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.clone(),
                            value: v.into(),
                            reason: "expected tex or louvain".into(),
                        })
                    }
                }
            }
            "kl" | "k_l" => self.k_l = parse_num(k, v)?,
            "qc" | "q_c" => self.q_c = parse_num(k, v)?,
            "louvain_seed" | "seed" => self.louvain_seed = parse_num(k, v)?,
            "r_lv" => self.r_lv = parse_num(k, v)?,
            "method" | "methods" => {
                let mut methods = Vec::new();
                for m in list(v) {
                    let m = Method::parse(m).ok_or_else(|| ConfigError::BadValue {
                        key: key.clone(),
                        value: v.into(),
                        reason: "expected sdf, vor or dis".into(),
                    })?;
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
                self.methods = methods;
            }
            "radius" | "dis_radius" => self.dis_radius = parse_num(k, v)?,
            "eps" => self.eps = parse_num(k, v)?,
            "theta_c" => self.theta_c = parse_num(k, v)?,
            "dcell" | "d_cell" => self.d_cell = parse_num(k, v)?,
            "sdf_margin" => self.sdf_margin = parse_num(k, v)?,
            "guard" => self.guard = parse_num(k, v)?,
            "bvh" | "use_bvh" => self.use_bvh = parse_bool(k, v)?,
            "max_retries" => self.max_retries = parse_num(k, v)?,
            "bin_lo" => self.bin_lo = parse_num(k, v)?,
            "bin_hi" => self.bin_hi = parse_num(k, v)?,
            "bin_step" => self.bin_step = parse_num(k, v)?,
            "bins" => {
                let parts: Vec<&str> = list(v).collect();
                if parts.len() != 3 {
                    return Err(ConfigError::BadValue {
                        key: key.clone(),
                        value: v.into(),
                        reason: "expected lo,hi,step".into(),
                    });
                }
                self.bin_lo = parse_num(k, parts[0])?;
                self.bin_hi = parse_num(k, parts[1])?;
                self.bin_step = parse_num(k, parts[2])?;
            }
            "step_workers" => self.step_workers = parse_num(k, v)?,
            "workers" | "intra_workers" => self.intra_workers = parse_num(k, v)?,
            "schedule" => {
                self.schedule = match v.to_ascii_lowercase().as_str() {
                    "static" => Schedule::Static,
                    "dynamic" => Schedule::Dynamic,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.clone(),
                            value: v.into(),
                            reason: "expected static or dynamic".into(),
                        })
                    }
                }
            }
            "export_obj" => self.export_obj = parse_bool(k, v)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a `GRAINMAP_WORKERS` value.
    pub fn apply_workers_env(&mut self, value: &str) -> Result<(), ConfigError> {
        let (steps, intra) = parse_workers(value)?;
        if let Some(s) = steps {
            self.step_workers = s;
        }
        self.intra_workers = intra;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.inputs.is_empty() {
            return fail("no input files".into());
        }
        if self.methods.is_empty() {
            return fail("no distancing method".into());
        }
        if self.step_workers == 0 || self.intra_workers == 0 {
            return fail("worker counts must be at least 1".into());
        }
        let positive = [
            ("k_l", self.k_l),
            ("r_lv", self.r_lv),
            ("radius", self.dis_radius),
            ("eps", self.eps),
            ("theta_c", self.theta_c),
            ("d_cell", self.d_cell),
            ("guard", self.guard),
            ("bin_step", self.bin_step),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return fail(format!("{k} = {v} must be positive"));
        }
        if !(self.q_c >= 0.0) || !(self.sdf_margin >= 0.0) {
            return fail("q_c and sdf_margin must be non-negative".into());
        }
        if !(self.bin_hi > self.bin_lo) {
            return fail(format!("bins [{}, {}) are empty", self.bin_lo, self.bin_hi));
        }
        crate::stats::bin_edges(self.bin_lo, self.bin_hi, self.bin_step).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Reconstruction tag used in output names.
    pub fn recon_method(&self) -> crate::grains::ReconMethod {
        match self.recon {
            Recon::Texture => crate::grains::ReconMethod::Texture,
            Recon::Louvain => crate::grains::ReconMethod::Louvain { k_l: self.k_l },
        }
    }
}
