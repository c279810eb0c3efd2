//! Flat key-value experiment configuration with dotted sections.
//!
//! The format is deliberately plain so that every artifact is reproducible
//! from the config file alone: `key = value` lines, `#` comments, no
//! environment overrides. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qglab::edge_ode::Potential;
use qglab::graph::GraphKind;
use qglab::tree::TreeModel;

/// Configuration error carrying the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at '{}': {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { field: field.into(), message: message.into() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PotentialSpec {
    Zero,
    /// `cos2pi` or `cos2pi:<amplitude>` — amp·cos(2πx/L).
    Cosine(String),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    EdgeConstant,
    EdgeFunction,
    PathKernel,
}

impl ObservableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObservableKind::EdgeConstant => "edge_constant",
            ObservableKind::EdgeFunction => "edge_function",
            ObservableKind::PathKernel => "path_kernel",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub q: usize,
    pub length: f64,
    pub alpha: f64,
    pub potential: PotentialSpec,
    pub kind: GraphKind,
    pub sizes: Vec<usize>,
    pub degree: usize,
    pub seed: u64,
    /// 1-based ordinal of the band within the scanned λ-range.
    pub band_index: usize,
    pub lambda_range: (f64, f64),
    pub observable: ObservableKind,
    pub observable_dump: bool,
    pub trials: usize,
    pub grid_n: usize,
    pub out_dir: PathBuf,
    /// Number of eigenfunction dumps written by the spectrum command.
    pub psi_dump: usize,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(&format!("line {}", ln + 1), format!("expected 'key = value', got '{line}'"));
            };
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return err(&key, "duplicate key");
            }
        }

        let mut take = |k: &str| map.remove(k);

        let q: usize = parse_or(&mut take, "model.q", 2)?;
        let length: f64 = parse_or(&mut take, "model.length", 1.0)?;
        let alpha: f64 = parse_or(&mut take, "model.alpha", 0.0)?;
        let potential = match take("model.potential").as_deref().unwrap_or("zero") {
            "zero" => PotentialSpec::Zero,
            s if s == "cos2pi" || s.starts_with("cos2pi:") => PotentialSpec::Cosine(s.to_string()),
            s if s.starts_with("file:") => {
                let p = PathBuf::from(s.trim_start_matches("file:"));
                let p = if p.is_absolute() { p } else { base_dir.join(p) };
                PotentialSpec::File(p)
            }
            other => return err("model.potential", format!("unknown potential '{other}'")),
        };

        let kind = match take("graph.kind").as_deref().unwrap_or("random_regular") {
            "random_regular" => GraphKind::RandomRegular,
            "cycle" => GraphKind::Cycle,
            "complete" => GraphKind::Complete,
            "petersen" => GraphKind::Petersen,
            other => return err("graph.kind", format!("unknown graph kind '{other}'")),
        };
        let sizes: Vec<usize> = match take("graph.sizes") {
            None => vec![100],
            Some(s) => {
                let mut out = Vec::new();
                for part in s.split(',') {
                    match part.trim().parse() {
                        Ok(v) => out.push(v),
                        Err(_) => return err("graph.sizes", format!("bad size '{part}'")),
                    }
                }
                out
            }
        };
        let degree: usize = parse_or(&mut take, "graph.degree", q + 1)?;
        let seed: u64 = parse_or(&mut take, "graph.seed", 0)?;

        let band_index: usize = parse_or(&mut take, "band.index", 1)?;
        let lambda_min: f64 = parse_or(&mut take, "band.lambda_min", 0.01)?;
        let lambda_max: f64 = parse_or(&mut take, "band.lambda_max", 9.0)?;

        let observable = match take("observable.kind").as_deref().unwrap_or("edge_constant") {
            "edge_constant" => ObservableKind::EdgeConstant,
            "edge_function" => ObservableKind::EdgeFunction,
            "path_kernel" => ObservableKind::PathKernel,
            other => return err("observable.kind", format!("unknown observable kind '{other}'")),
        };
        let observable_dump: bool = parse_or(&mut take, "observable.dump", false)?;

        let trials: usize = parse_or(&mut take, "run.trials", 1)?;
        let grid_n: usize = parse_or(&mut take, "run.grid_n", 256)?;
        let out_dir = PathBuf::from(take("run.out_dir").unwrap_or_else(|| "out".into()));
        let psi_dump: usize = parse_or(&mut take, "spectrum.psi_dump", 0)?;
        let threads: Option<usize> = match take("run.threads") {
            None => None,
            Some(s) => match s.parse() {
                Ok(v) => Some(v),
                Err(_) => return err("run.threads", format!("bad thread count '{s}'")),
            },
        };

        if let Some(stray) = map.keys().next() {
            return err(stray, "unknown key");
        }

        let cfg = ExperimentConfig {
            q,
            length,
            alpha,
            potential,
            kind,
            sizes,
            degree,
            seed,
            band_index,
            lambda_range: (lambda_min, lambda_max),
            observable,
            observable_dump,
            trials,
            grid_n,
            out_dir,
            psi_dump,
            threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.q < 1 {
            return err("model.q", "branching q must be ≥ 1");
        }
        if !(self.length > 0.0) {
            return err("model.length", "edge length must be positive");
        }
        if self.degree != self.q + 1 {
            return err(
                "graph.degree",
                format!("degree must equal model.q + 1 (got {} vs {})", self.degree, self.q + 1),
            );
        }
        if self.grid_n == 0 || self.grid_n % 2 != 0 {
            return err("run.grid_n", format!("grid size must be even and positive, got {}", self.grid_n));
        }
        if self.sizes.is_empty() {
            return err("graph.sizes", "at least one size required");
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return err("graph.sizes", "sizes must be strictly ascending");
        }
        if self.band_index == 0 {
            return err("band.index", "band index is 1-based");
        }
        if self.lambda_range.1 < self.lambda_range.0 {
            return err("band.lambda_max", "λ-range must satisfy lambda_min ≤ lambda_max");
        }
        if let PotentialSpec::File(p) = &self.potential {
            if !p.exists() {
                return err("model.potential", format!("file '{}' does not exist", p.display()));
            }
        }
        Ok(())
    }

    /// Build the tree model, loading/resampling the potential onto the
    /// configured grid.
    pub fn build_model(&self) -> Result<TreeModel, ConfigError> {
        let potential = match &self.potential {
            PotentialSpec::Zero => Potential::zero(self.length, self.grid_n),
            PotentialSpec::Cosine(spec) => {
                let amp = match spec.split_once(':') {
                    None => 1.0,
                    Some((_, a)) => match a.parse() {
                        Ok(v) => v,
                        Err(_) => return err("model.potential", format!("bad amplitude '{a}'")),
                    },
                };
                Potential::cosine_scaled(self.length, self.grid_n, amp)
            }
            PotentialSpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError { field: "model.potential".into(), message: e.to_string() })?;
                Potential::from_csv_str(&text).and_then(|p| {
                    if (p.length() - self.length).abs() > 1e-9 * self.length {
                        return Err(qglab::Error::Parse(format!(
                            "potential file covers [0, {}], model.length is {}",
                            p.length(),
                            self.length
                        )));
                    }
                    p.with_grid(self.grid_n)
                })
            }
        }
        .map_err(|e| ConfigError { field: "model.potential".into(), message: e.to_string() })?;
        TreeModel::new(self.q, self.alpha, potential)
            .map_err(|e| ConfigError { field: "model.q".into(), message: e.to_string() })
    }
}

type Taker<'a> = dyn FnMut(&str) -> Option<String> + 'a;

fn parse_or<T: std::str::FromStr>(take: &mut Taker, key: &str, default: T) -> Result<T, ConfigError> {
    match take(key) {
        None => Ok(default),
        Some(s) => s.parse().or_else(|_| err(key, format!("cannot parse '{s}'"))),
    }
}
