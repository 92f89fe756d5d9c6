//! Flat `key = value` run configuration.
//!
//! Values are layered: built-in defaults, then a config file, then explicit
//! overrides (command-line flags). Unknown keys are rejected.

use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::GsConfig;
use crate::error::{Error, Result};
use crate::eval::{GtMode, MiouAggregation};
use crate::segnet::HyperParams;

/// Every key accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "layers",
    "p",
    "q",
    "lr",
    "momentum",
    "mu",
    "nu",
    "iters",
    "min_labels",
    "seed",
    "eps",
    "tv_bounds",
    "padding",
    "epochs",
    "gt_mode",
    "miou_aggregation",
    "pr_thresholds",
    "k",
    "window",
    "max_iter",
    "tau",
    "sigma",
    "min_size",
    "input",
    "output",
    "viz",
    "model",
    "scribbles",
    "gt_dir",
    "pred_dir",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hp: HyperParams,
    /// Passes over the reference images.
    pub epochs: usize,
    pub gt_mode: GtMode,
    pub miou_aggregation: MiouAggregation,
    pub pr_thresholds: Vec<f64>,
    /// k-means cluster count.
    pub k: usize,
    pub window: usize,
    pub max_iter: usize,
    pub gs: GsConfig,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub viz: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scribbles: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hp: HyperParams::default(),
            epochs: 1,
            gt_mode: GtMode::All,
            miou_aggregation: MiouAggregation::Pairs,
            pr_thresholds: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            k: 17,
            window: 5,
            max_iter: 100,
            gs: GsConfig::default(),
            input: None,
            output: None,
            viz: None,
            model: None,
            scribbles: None,
            gt_dir: None,
            pred_dir: None,
            out_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        match key {
            "layers" => self.hp.layers = parse(key, v)?,
            "p" => self.hp.features = parse(key, v)?,
            "q" => self.hp.clusters = parse(key, v)?,
            "lr" => self.hp.lr = parse(key, v)?,
            "momentum" => self.hp.momentum = parse(key, v)?,
            "mu" => self.hp.mu = parse(key, v)?,
            "nu" => self.hp.nu = parse(key, v)?,
            "iters" => self.hp.iterations = parse(key, v)?,
            "min_labels" => self.hp.min_labels = parse(key, v)?,
            "seed" => self.hp.seed = parse(key, v)?,
            "eps" => self.hp.eps = parse(key, v)?,
            "tv_bounds" => self.hp.tv_bounds = parse(key, v)?,
            "padding" => self.hp.padding = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "gt_mode" => self.gt_mode = parse(key, v)?,
            "miou_aggregation" => self.miou_aggregation = parse(key, v)?,
            "pr_thresholds" => {
                self.pr_thresholds = v
                    .split(',')
                    .map(|t| parse::<f64>(key, t.trim()))
                    .collect::<Result<_>>()?
            }
            "k" => self.k = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "max_iter" => self.max_iter = parse(key, v)?,
            "tau" => self.gs.tau = parse(key, v)?,
            "sigma" => self.gs.sigma = parse(key, v)?,
            "min_size" => self.gs.min_size = parse(key, v)?,
            "input" => self.input = path(),
            "output" => self.output = path(),
            "viz" => self.viz = path(),
            "model" => self.model = path(),
            "scribbles" => self.scribbles = path(),
            "gt_dir" => self.gt_dir = path(),
            "pred_dir" => self.pred_dir = path(),
            "out_dir" => self.out_dir = path(),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a config file body. Blank lines and `#` comments are ignored.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e)))?;
        }
        Ok(())
    }

    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, String)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, &v)?;
        }
        Ok(())
    }

    /// Defaults ← optional config file text ← overrides, then validation.
    pub fn layered<'a>(
        file_text: Option<&str>,
        overrides: impl IntoIterator<Item = (&'a str, String)>,
    ) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(t) = file_text {
            cfg.apply_file_text(t)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::Config("window must be odd".into()));
        }
        if let Some(t) = self.pr_thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("pr threshold {t} outside (0, 1)")));
        }
        Ok(())
    }
}
