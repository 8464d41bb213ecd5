use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tables::{load_guesses_csv, load_market_csv};
use crate::calibrate::DescentOptions;
use crate::error::{Error, Result};
use crate::market::{reference_guesses, HestonParams, MarketQuote};
use crate::mc::McConfig;
use crate::pde::{GridOverrides, PdeOptions};
use crate::space_map::AsmOptions;

/// Market quote with its identifier, as written in configs and CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteSpec {
    pub id: String,
    pub s0: f64,
    pub r: f64,
    pub q: f64,
    pub strike: f64,
    pub maturity: f64,
    pub price: f64,
}

impl QuoteSpec {
    pub fn quote(&self) -> MarketQuote {
        MarketQuote {
            s0: self.s0,
            r: self.r,
            q: self.q,
            strike: self.strike,
            maturity: self.maturity,
            observed_price: self.price,
        }
    }
}

/// Initial parameter guess with its identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessSpec {
    pub id: String,
    pub sigma_nu: f64,
    pub rho: f64,
    pub kappa_nu: f64,
    pub mu_nu: f64,
}

impl GuessSpec {
    pub fn params(&self, nu0: f64) -> HestonParams {
        HestonParams::new(self.sigma_nu, self.rho, self.kappa_nu, self.mu_nu, nu0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceOptions {
    /// Coarsest number of time steps of the study.
    pub base_n_tau: usize,
    /// Number of successive halvings of the time step.
    pub refinements: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            base_n_tau: 40,
            refinements: 2,
        }
    }
}

/// Written into manifests; ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub version: String,
    pub command: String,
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Market CSV, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<PathBuf>,
    /// Guess CSV, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guesses_file: Option<PathBuf>,
    /// Output directory, relative to the config file.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Initial variance shared by every guess.
    #[serde(default = "default_nu0")]
    pub nu0: f64,
    /// Write full PDE surfaces from `price-pde`.
    #[serde(default)]
    pub dump_surface: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub pde: PdeOptions,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub descent: DescentOptions,
    #[serde(default)]
    pub asm: AsmOptions,
    #[serde(default)]
    pub convergence: ConvergenceOptions,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quotes: Vec<QuoteSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guesses: Vec<GuessSpec>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_nu0() -> f64 {
    0.05
}

/// Config with file references resolved and every field validated.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

fn check_unique(ids: impl Iterator<Item = String>, what: &str) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::Config(format!("{what}: empty id")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Config(format!("{what}: duplicate id \"{id}\"")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    /// Validate every section; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu0 > 0.0 && self.nu0.is_finite()) {
            return Err(Error::Config(format!("nu0 must be finite and > 0, got {}", self.nu0)));
        }
        self.pde.validate()?;
        self.mc.validate()?;
        self.descent.validate()?;
        self.asm.validate()?;
        if self.convergence.base_n_tau < 2 || self.convergence.refinements < 2 {
            return Err(Error::Config(
                "convergence.base_n_tau must be >= 2 and convergence.refinements >= 2".into(),
            ));
        }
        check_unique(self.quotes.iter().map(|q| q.id.clone()), "quotes")?;
        check_unique(self.guesses.iter().map(|g| g.id.clone()), "guesses")?;
        for q in &self.quotes {
            q.quote().check().map_err(|(field, msg)| {
                Error::Config(format!("quotes[id = {}].{field}: {msg}", q.id))
            })?;
        }
        for g in &self.guesses {
            let v = [g.sigma_nu, g.rho, g.kappa_nu, g.mu_nu];
            let names = ["sigma_nu", "rho", "kappa_nu", "mu_nu"];
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Config(format!(
                    "guesses[id = {}].{}: must be finite",
                    g.id, names[i]
                )));
            }
        }
        Ok(())
    }

    pub fn market_quotes(&self) -> Vec<(String, MarketQuote)> {
        self.quotes.iter().map(|q| (q.id.clone(), q.quote())).collect()
    }

    pub fn initial_guesses(&self) -> Vec<(String, HestonParams)> {
        self.guesses
            .iter()
            .map(|g| (g.id.clone(), g.params(self.nu0)))
            .collect()
    }
}

/// Default guesses, labelled `1` to `6`.
pub fn default_guesses() -> Vec<GuessSpec> {
    reference_guesses(0.0)
        .iter()
        .enumerate()
        .map(|(i, p)| GuessSpec {
            id: (i + 1).to_string(),
            sigma_nu: p.sigma_nu,
            rho: p.rho,
            kappa_nu: p.kappa_nu,
            mu_nu: p.mu_nu,
        })
        .collect()
}

/// Read a config file, inline the referenced quote and guess files and
/// validate the result. `seed` overrides `mc.seed`.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = RunConfig::from_toml_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(market) = cfg.market.take() {
        if !cfg.quotes.is_empty() {
            return Err(Error::Config(
                "give either `market` or inline `quotes`, not both".into(),
            ));
        }
        cfg.quotes = load_market_csv(&base.join(market))?;
    }
    if let Some(file) = cfg.guesses_file.take() {
        if !cfg.guesses.is_empty() {
            return Err(Error::Config(
                "give either `guesses_file` or inline `guesses`, not both".into(),
            ));
        }
        cfg.guesses = load_guesses_csv(&base.join(file))?;
    }
    if cfg.quotes.is_empty() {
        return Err(Error::Config("no market quotes: set `market` or `quotes`".into()));
    }
    if cfg.guesses.is_empty() {
        cfg.guesses = default_guesses();
    }
    if let Some(s) = seed {
        cfg.mc.seed = s;
    }
    let out_dir = match out {
        Some(o) => o.to_path_buf(),
        None => base.join(&cfg.out),
    };
    cfg.run = None;
    cfg.validate()?;
    Ok(LoadedConfig {
        config: cfg,
        out_dir,
    })
}
