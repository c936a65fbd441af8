//! Flat `key = value` configuration files.
//!
//! Blank lines and anything after `#` are ignored. Each experiment consumes
//! the keys it knows; leftovers are reported as errors.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::dgp::{CycleDgpConfig, Decay, DecayDgpConfig, SwitchbackDgpConfig};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key")));
            }
            if entries
                .insert(key.to_string(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::Config(format!("line {line_no}: duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse `{key} = {v}`"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_grid(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => parse_grid(&v)
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: {e}"))),
        }
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
        }
    }
}

/// `"1..30"` (inclusive), `"1,2,5"`, or a mix such as `"1..5,10,20"`.
pub fn parse_grid(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| format!("bad range `{part}`"))?;
            let b: usize = b.trim().parse().map_err(|_| format!("bad range `{part}`"))?;
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad grid value `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("empty grid".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleSettings {
    pub dgp: CycleDgpConfig,
    pub l_grid: Vec<usize>,
    pub reps: usize,
}

impl CycleSettings {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = CycleDgpConfig::default();
        let s = Self {
            dgp: CycleDgpConfig {
                n: kv.take_or("n", d.n)?,
                pi: kv.take_or("pi", d.pi)?,
                noise_scale: kv.take_or("noise_scale", d.noise_scale)?,
                seed: kv.take_or("seed", d.seed)?,
            },
            l_grid: kv.take_grid("l_grid")?.unwrap_or_else(|| (1..=30).collect()),
            reps: kv.take_or("reps", 5000)?,
        };
        kv.finish()?;
        s.dgp.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchbackSettings {
    pub dgp: SwitchbackDgpConfig,
    pub l_grid: Vec<usize>,
    pub reps: usize,
}

impl SwitchbackSettings {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = SwitchbackDgpConfig::default();
        let s = Self {
            dgp: SwitchbackDgpConfig {
                horizon: kv.take_or("horizon", d.horizon)?,
                ell: kv.take_or("ell", d.ell)?,
                burn_in: kv.take_or("burn_in", d.burn_in)?,
                alpha: kv.take_or("alpha", d.alpha)?,
                rho: kv.take_or("rho", d.rho)?,
                pi: kv.take_or("pi", d.pi)?,
                seed: kv.take_or("seed", d.seed)?,
            },
            l_grid: kv.take_grid("l_grid")?.unwrap_or_else(|| (1..=20).collect()),
            reps: kv.take_or("reps", 1000)?,
        };
        kv.finish()?;
        s.dgp.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySettings {
    pub dgp: DecayDgpConfig,
    /// Buffer of the comparison run sharing the same treatment draws.
    pub compare_buffer: usize,
    pub reps: usize,
}

impl DecaySettings {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = DecayDgpConfig::default();
        let horizon = kv.take_or("horizon", d.horizon)?;
        let ell = kv.take_or("ell", d.ell)?;
        let kind: String = kv.take_or("decay", "geometric".to_string())?;
        let decay = match kind.as_str() {
            "geometric" => Decay::Geometric {
                rho: kv.take_or("rate", 0.9)?,
            },
            "polynomial" => Decay::Polynomial {
                alpha: kv.take_or("rate", 1.0)?,
            },
            other => return Err(Error::Config(format!("unknown decay `{other}`"))),
        };
        let s = Self {
            dgp: DecayDgpConfig {
                horizon,
                ell,
                buffer: kv.take_or("buffer", DecayDgpConfig::log_buffer(horizon, ell.max(1)))?,
                decay,
                pi: kv.take_or("pi", d.pi)?,
                noise_scale: kv.take_or("noise_scale", d.noise_scale)?,
                seed: kv.take_or("seed", d.seed)?,
            },
            compare_buffer: kv.take_or("compare_buffer", 0)?,
            reps: kv.take_or("reps", 2000)?,
        };
        kv.finish()?;
        s.dgp.validate()?;
        DecayDgpConfig {
            buffer: s.compare_buffer,
            ..s.dgp
        }
        .validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SutvaSettings {
    pub n: usize,
    pub n1: usize,
    pub reps: usize,
    pub seed: u64,
}

impl SutvaSettings {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let s = Self {
            n: kv.take_or("n", 40)?,
            n1: kv.take_or("n1", 16)?,
            reps: kv.take_or("reps", 500)?,
            seed: kv.take_or("seed", 2024)?,
        };
        kv.finish()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwCheckSettings {
    pub instances: usize,
    pub max_n: usize,
    pub seed: u64,
}

impl NwCheckSettings {
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let s = Self {
            instances: kv.take_or("instances", 100)?,
            max_n: kv.take_or("max_n", 200)?,
            seed: kv.take_or("seed", 2024)?,
        };
        kv.finish()?;
        Ok(s)
    }
}
