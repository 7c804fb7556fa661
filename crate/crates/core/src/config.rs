//! Run configuration for the experiment runner: parameter grids, levels and
//! output locations, from command-line flags and an optional INI file.
//!
//! File grammar: `key = value` lines, optionally grouped under `[run]` and
//! `[problem]` headers. Keys match the long flag names without dashes:
//!
//! ```text
//! [run]
//! coarse-levels = 1..4
//! fine-level = 8
//! ell = 1,2,3
//! workers = 4
//!
//! [problem]
//! seed = 7,8
//! ```
//!
//! Flags given on the command line override file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Homogenize1d,
    Homogenize2d,
    Helmholtz1d,
    Scatter2d,
    Decay,
    IdealCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Homogenize1d => "homogenize1d",
            Experiment::Homogenize2d => "homogenize2d",
            Experiment::Helmholtz1d => "helmholtz1d",
            Experiment::Scatter2d => "scatter2d",
            Experiment::Decay => "decay",
            Experiment::IdealCheck => "ideal-check",
        }
    }

    fn default_coarse_levels(self) -> &'static str {
        match self {
            Experiment::Homogenize1d => "3..6",
            Experiment::Homogenize2d => "1..4",
            Experiment::Helmholtz1d => "7",
            Experiment::Scatter2d => "5,6",
            Experiment::Decay => "3",
            Experiment::IdealCheck => "2",
        }
    }

    fn default_fine_level(self) -> u32 {
        match self {
            Experiment::Homogenize1d | Experiment::Helmholtz1d => 12,
            Experiment::Homogenize2d | Experiment::Scatter2d => 8,
            Experiment::Decay => 6,
            Experiment::IdealCheck => 5,
        }
    }

    fn default_ell(self) -> &'static str {
        match self {
            Experiment::Homogenize1d => "1,2",
            Experiment::Homogenize2d | Experiment::Scatter2d => "1..3",
            Experiment::Helmholtz1d => "1..5",
            Experiment::Decay | Experiment::IdealCheck => "1",
        }
    }
}

/// Raw settings before defaults are applied. Each field holds the text of a
/// flag or file entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub coarse_levels: Option<String>,
    pub fine_level: Option<String>,
    pub ell: Option<String>,
    pub kappa: Option<String>,
    pub eps: Option<String>,
    pub seed: Option<String>,
    pub cache_dir: Option<String>,
    pub out: Option<String>,
    pub workers: Option<String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| e.to_string())?;
        let mut s = Settings::default();
        for (section, props) in ini.iter() {
            let allowed: &[&str] = match section {
                None | Some("run") => &["coarse-levels", "fine-level", "ell", "cache-dir", "out", "workers"],
                Some("problem") => &["kappa", "eps", "seed"],
                Some(other) => return Err(format!("unknown section [{other}]")),
            };
            for (key, value) in props.iter() {
                if !allowed.contains(&key) {
                    return Err(format!("unknown key `{key}`"));
                }
                let slot = match key {
                    "coarse-levels" => &mut s.coarse_levels,
                    "fine-level" => &mut s.fine_level,
                    "ell" => &mut s.ell,
                    "cache-dir" => &mut s.cache_dir,
                    "out" => &mut s.out,
                    "workers" => &mut s.workers,
                    "kappa" => &mut s.kappa,
                    "eps" => &mut s.eps,
                    _ => &mut s.seed,
                };
                *slot = Some(value.trim().to_string());
            }
        }
        Ok(s)
    }

    /// Values of `other` take precedence.
    pub fn overridden_by(self, other: Settings) -> Settings {
        Settings {
            coarse_levels: other.coarse_levels.or(self.coarse_levels),
            fine_level: other.fine_level.or(self.fine_level),
            ell: other.ell.or(self.ell),
            kappa: other.kappa.or(self.kappa),
            eps: other.eps.or(self.eps),
            seed: other.seed.or(self.seed),
            cache_dir: other.cache_dir.or(self.cache_dir),
            out: other.out.or(self.out),
            workers: other.workers.or(self.workers),
        }
    }
}

/// Parses comma-separated integers and inclusive ranges `a..b`.
pub fn parse_int_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + PartialOrd + TryFrom<u64>,
    u64: TryFrom<T>,
{
    let bad = || Error::Config(format!("cannot parse integer list `{text}`"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(Error::Config(format!("empty range `{part}`")));
            }
            for v in a..=b {
                out.push(T::try_from(v).map_err(|_| bad())?);
            }
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_float_list(text: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse number list `{text}`")))?;
    if vals.is_empty() || vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Config(format!("expected positive numbers, got `{text}`")));
    }
    Ok(vals)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub coarse_levels: Vec<u32>,
    pub fine_level: u32,
    pub ells: Vec<usize>,
    pub kappas: Vec<f64>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cache_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: usize,
    pub dump_mesh: bool,
    pub dump_fields: bool,
}

impl RunConfig {
    pub fn resolve(experiment: Experiment, s: Settings) -> Result<Self> {
        let coarse_levels = parse_int_list::<u32>(s.coarse_levels.as_deref().unwrap_or(experiment.default_coarse_levels()))?;
        let fine_level = match &s.fine_level {
            Some(t) => t
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse fine level `{t}`")))?,
            None => experiment.default_fine_level(),
        };
        if let Some(&bad) = coarse_levels.iter().find(|&&l| l >= fine_level) {
            return Err(Error::InvalidLevels {
                coarse: bad,
                fine: fine_level,
            });
        }
        let ells = parse_int_list::<usize>(s.ell.as_deref().unwrap_or(experiment.default_ell()))?;
        if ells.contains(&0) {
            return Err(Error::Config("patch order ℓ must be at least 1".into()));
        }
        let kappas = match &s.kappa {
            Some(t) => parse_float_list(t)?,
            None => match experiment {
                Experiment::Helmholtz1d => vec![128.0],
                Experiment::Scatter2d => vec![32.0],
                _ => Vec::new(),
            },
        };
        let eps = match &s.eps {
            Some(t) => parse_float_list(t)?,
            None => vec![1.0 / 32.0],
        };
        let seeds = parse_int_list::<u64>(s.seed.as_deref().unwrap_or("7"))?;
        let workers = match &s.workers {
            Some(t) => t
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|w| *w > 0)
                .ok_or_else(|| Error::Config(format!("invalid worker count `{t}`")))?,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(RunConfig {
            experiment,
            coarse_levels,
            fine_level,
            ells,
            kappas,
            eps,
            seeds,
            cache_dir: s.cache_dir.map(PathBuf::from),
            out: PathBuf::from(s.out.unwrap_or_else(|| "results".into())),
            workers,
            dump_mesh: false,
            dump_fields: false,
        })
    }
}
