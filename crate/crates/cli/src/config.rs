//! Flat `key=value` run configuration. Later sources override earlier ones:
//! built-in defaults, then the config file, then `--set` flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lrfim_core::entropy::feasible_m;
use lrfim_core::model::{FieldDist, Params};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LRFIM_OUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: Params,
    pub experiment: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Side of the box `Λ` for experiments on a single volume.
    pub side: u32,
    pub samples: usize,
    pub sweeps: usize,
    pub realizations: usize,
    pub k_max: usize,
    pub n_max: usize,
    pub instances: usize,
    pub lemma_instances: usize,
    pub ell: u32,
    pub sides: Vec<u32>,
    pub betas: Vec<f64>,
    pub epss: Vec<f64>,
    pub dist: FieldDist,
    /// Raise `M` to just above the Peierls threshold.
    pub feasible_m: bool,
    /// Constant field value for `animal`; random draws when absent.
    pub field: Option<f64>,
    pub variant: String,
    pub normalization: String,
}

pub const KEYS: &[&str] = &[
    "d", "alpha", "j", "beta", "eps", "m", "a", "delta", "r", "tol", "exact_cap", "seed", "experiment", "out_dir",
    "side", "samples", "sweeps", "realizations", "k_max", "n_max", "instances", "lemma_instances", "ell", "sides",
    "betas", "epss", "dist", "feasible_m", "field", "variant", "normalization",
];

/// Parse `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("bad value '{v}' for {key}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!("bad boolean '{v}' for {key}"))),
    }
}

impl RunConfig {
    /// Build from an ordered list of settings; `d` and `alpha` are read first
    /// because the default exponents depend on them.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<RunConfig, CliError> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown config key '{k}'")));
            }
            map.insert(k, v);
        }
        let d = map.get("d").map(|v| num("d", v)).transpose()?.unwrap_or(2);
        let alpha = map.get("alpha").map(|v| num("alpha", v)).transpose()?.unwrap_or(4.0);
        let mut params = Params::new(d, alpha)?;
        let mut cfg = RunConfig {
            params: params.clone(),
            experiment: "default".into(),
            seed: 0,
            out_dir: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
            side: 4,
            samples: 1000,
            sweeps: 4000,
            realizations: 20,
            k_max: 6,
            n_max: 24,
            instances: 500,
            lemma_instances: 10_000,
            ell: 0,
            sides: vec![4],
            betas: vec![0.3, 1.0],
            epss: vec![0.0, 0.5],
            dist: FieldDist::Gaussian,
            feasible_m: false,
            field: None,
            variant: "connected".into(),
            normalization: "boundary".into(),
        };
        for (&k, &v) in &map {
            match k {
                "d" | "alpha" => {}
                "j" => params.j = num(k, v)?,
                "beta" => params.beta = num(k, v)?,
                "eps" => params.eps = num(k, v)?,
                "m" => params.m_sep = num(k, v)?,
                "a" => params.a = num(k, v)?,
                "delta" => params.delta = num(k, v)?,
                "r" => params.r = num(k, v)?,
                "tol" => params.tol = num(k, v)?,
                "exact_cap" => params.exact_cap = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                "experiment" => cfg.experiment = v.to_string(),
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "side" => cfg.side = num(k, v)?,
                "samples" => cfg.samples = num(k, v)?,
                "sweeps" => cfg.sweeps = num(k, v)?,
                "realizations" => cfg.realizations = num(k, v)?,
                "k_max" => cfg.k_max = num(k, v)?,
                "n_max" => cfg.n_max = num(k, v)?,
                "instances" => cfg.instances = num(k, v)?,
                "lemma_instances" => cfg.lemma_instances = num(k, v)?,
                "ell" => cfg.ell = num(k, v)?,
                "sides" => cfg.sides = list(k, v)?,
                "betas" => cfg.betas = list(k, v)?,
                "epss" => cfg.epss = list(k, v)?,
                "dist" => cfg.dist = v.parse()?,
                "feasible_m" => cfg.feasible_m = flag(k, v)?,
                "field" => cfg.field = Some(num(k, v)?),
                "variant" => cfg.variant = v.to_string(),
                "normalization" => cfg.normalization = v.to_string(),
                _ => unreachable!("key list checked above"),
            }
        }
        params.seed = cfg.seed;
        if cfg.feasible_m {
            params.m_sep = feasible_m(&params)?;
        }
        params.validate()?;
        cfg.params = params;
        cfg.check()?;
        Ok(cfg)
    }

    /// Defaults, then `file`, then `overrides` (each `key=value`).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut pairs = Vec::new();
        if let Some(f) = file {
            let text = std::fs::read_to_string(f)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", f.display())))?;
            pairs.extend(parse_kv(&text)?);
        }
        for o in overrides {
            pairs.extend(parse_kv(o)?);
        }
        RunConfig::from_pairs(&pairs)
    }

    pub fn with(pairs: &[(&str, &str)]) -> Result<RunConfig, CliError> {
        let owned: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        RunConfig::from_pairs(&owned)
    }

    fn check(&self) -> Result<(), CliError> {
        let caps = [
            ("side", self.side as usize),
            ("samples", self.samples),
            ("sweeps", self.sweeps),
            ("realizations", self.realizations),
            ("k_max", self.k_max),
            ("n_max", self.n_max),
            ("instances", self.instances),
            ("lemma_instances", self.lemma_instances),
        ];
        for (name, v) in caps {
            if v == 0 {
                return Err(CliError::Usage(format!("{name} must be positive")));
            }
        }
        if self.sweeps < 10 {
            return Err(CliError::Usage("sweeps must be at least 10".into()));
        }
        Ok(())
    }

    /// Caps and grids as one line for output headers.
    pub fn describe(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "experiment={} side={} samples={} sweeps={} realizations={} k_max={} n_max={} instances={} \
             lemma_instances={} ell={} sides={} betas={} epss={} dist={:?} feasible_m={}",
            self.experiment,
            self.side,
            self.samples,
            self.sweeps,
            self.realizations,
            self.k_max,
            self.n_max,
            self.instances,
            self.lemma_instances,
            self.ell,
            self.sides.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            join(&self.betas),
            join(&self.epss),
            self.dist,
            self.feasible_m
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_settings_win() {
        let pairs = parse_kv("d=3\n# comment\nbeta = 2 # inline\nbeta=0.5\n").unwrap();
        let cfg = RunConfig::from_pairs(&pairs).unwrap();
        assert_eq!(cfg.params.d, 3);
        assert_eq!(cfg.params.beta, 0.5);
        assert_eq!(cfg.params.r, 20);
    }

    #[test]
    fn rejects_unknown_and_bad() {
        assert!(RunConfig::with(&[("colour", "red")]).is_err());
        assert!(RunConfig::with(&[("alpha", "2")]).is_err());
        assert!(parse_kv("novalue").is_err());
        assert!(RunConfig::with(&[("samples", "0")]).is_err());
    }

    #[test]
    fn lists_and_flags() {
        let cfg = RunConfig::with(&[("epss", "0.1, 2"), ("feasible_m", "true")]).unwrap();
        assert_eq!(cfg.epss, vec![0.1, 2.0]);
        assert!(cfg.params.m_sep > 1.0);
    }
}
