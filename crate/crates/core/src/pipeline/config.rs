//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys and unparsable values are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::depth::DepthParams;
use crate::error::{Error, Result};
use crate::net::{FusionVariant, NetConfig, TrainConfig};
use crate::segment::SlicParams;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub superpixels: usize,
    pub slic_compactness: f64,
    pub slic_iterations: usize,
    /// Hysteresis high threshold for edge thinning; the low one is half.
    pub edge_threshold: f64,
    pub trunk_channels: [usize; 4],
    pub branch_dilation: usize,
    pub region_hidden: usize,
    pub fusion: FusionVariant,
    pub lambda_e: f64,
    pub deep_supervision: bool,
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub snapshot_every: usize,
    pub depth_refine: bool,
    pub sigma: f64,
    pub sigma_dep: f64,
    pub sigma_col: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub image_size: usize,
    pub gradcheck_samples: usize,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        let train = TrainConfig::default();
        let slic = SlicParams::default();
        let depth = DepthParams::default();
        RunConfig {
            superpixels: slic.regions,
            slic_compactness: slic.compactness,
            slic_iterations: slic.iterations,
            edge_threshold: 0.5,
            trunk_channels: net.trunk_channels,
            branch_dilation: net.branch_dilation,
            region_hidden: net.region_hidden,
            fusion: net.fusion,
            lambda_e: train.lambda_e,
            deep_supervision: train.deep_supervision,
            stage1_iterations: train.stage1_iterations,
            stage2_iterations: train.stage2_iterations,
            stage1_lr: train.stage1_lr,
            stage2_lr: train.stage2_lr,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
            seed: train.seed,
            snapshot_every: train.snapshot_every,
            depth_refine: true,
            sigma: depth.sigma,
            sigma_dep: depth.sigma_dep,
            sigma_col: depth.sigma_col,
            n_train: 200,
            n_test: 50,
            image_size: 96,
            gradcheck_samples: 8,
            gradcheck_step: 1e-5,
            gradcheck_tolerance: 1e-4,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn parse_channels(key: &str, value: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = value.split(',').map(|p| parse(key, p.trim())).collect::<Result<_>>()?;
    let arr: [usize; 4] = parts
        .try_into()
        .map_err(|_| Error::Config(format!("`{key}` needs four comma-separated channel counts")))?;
    if arr.contains(&0) {
        return Err(Error::Config(format!("`{key}` channel counts must be positive")));
    }
    Ok(arr)
}

impl RunConfig {
    /// Every recognised key, in file order.
    pub const KEYS: &'static [&'static str] = &[
        "superpixels",
        "slic_compactness",
        "slic_iterations",
        "edge_threshold",
        "trunk_channels",
        "branch_dilation",
        "region_hidden",
        "fusion",
        "lambda_e",
        "deep_supervision",
        "stage1_iterations",
        "stage2_iterations",
        "stage1_lr",
        "stage2_lr",
        "momentum",
        "weight_decay",
        "seed",
        "snapshot_every",
        "depth_refine",
        "sigma",
        "sigma_dep",
        "sigma_col",
        "n_train",
        "n_test",
        "image_size",
        "gradcheck_samples",
        "gradcheck_step",
        "gradcheck_tolerance",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "superpixels" => self.superpixels = parse(key, v)?,
            "slic_compactness" => self.slic_compactness = parse(key, v)?,
            "slic_iterations" => self.slic_iterations = parse(key, v)?,
            "edge_threshold" => self.edge_threshold = parse(key, v)?,
            "trunk_channels" => self.trunk_channels = parse_channels(key, v)?,
            "branch_dilation" => self.branch_dilation = parse(key, v)?,
            "region_hidden" => self.region_hidden = parse(key, v)?,
            "fusion" => {
                self.fusion = match v {
                    "maps" => FusionVariant::Maps,
                    "features" => FusionVariant::Features,
                    _ => return Err(Error::Config(format!("`fusion` must be `maps` or `features`, got `{v}`"))),
                }
            }
            "lambda_e" => self.lambda_e = parse(key, v)?,
            "deep_supervision" => self.deep_supervision = parse_bool(key, v)?,
            "stage1_iterations" => self.stage1_iterations = parse(key, v)?,
            "stage2_iterations" => self.stage2_iterations = parse(key, v)?,
            "stage1_lr" => self.stage1_lr = parse(key, v)?,
            "stage2_lr" => self.stage2_lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "snapshot_every" => self.snapshot_every = parse(key, v)?,
            "depth_refine" => self.depth_refine = parse_bool(key, v)?,
            "sigma" => self.sigma = parse(key, v)?,
            "sigma_dep" => self.sigma_dep = parse(key, v)?,
            "sigma_col" => self.sigma_col = parse(key, v)?,
            "n_train" => self.n_train = parse(key, v)?,
            "n_test" => self.n_test = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "gradcheck_samples" => self.gradcheck_samples = parse(key, v)?,
            "gradcheck_step" => self.gradcheck_step = parse(key, v)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config error: "))))?;
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text).map_err(|e| Error::file(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.superpixels == 0 {
            return fail("`superpixels` must be positive");
        }
        if !(self.edge_threshold > 0.0 && self.edge_threshold < 1.0) {
            return fail("`edge_threshold` must lie in (0, 1)");
        }
        if self.branch_dilation == 0 || self.region_hidden == 0 {
            return fail("`branch_dilation` and `region_hidden` must be positive");
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(16) {
            return fail("`image_size` must be a positive multiple of 16");
        }
        let finite = [
            self.slic_compactness,
            self.lambda_e,
            self.stage1_lr,
            self.stage2_lr,
            self.momentum,
            self.weight_decay,
            self.sigma,
            self.sigma_dep,
            self.sigma_col,
            self.gradcheck_step,
            self.gradcheck_tolerance,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return fail("numeric settings must be finite and non-negative");
        }
        if self.sigma_dep == 0.0 || self.sigma_col == 0.0 || self.gradcheck_step == 0.0 {
            return fail("`sigma_dep`, `sigma_col` and `gradcheck_step` must be positive");
        }
        Ok(())
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.value(key));
        }
        out
    }

    fn value(&self, key: &str) -> String {
        match key {
            "superpixels" => self.superpixels.to_string(),
            "slic_compactness" => self.slic_compactness.to_string(),
            "slic_iterations" => self.slic_iterations.to_string(),
            "edge_threshold" => self.edge_threshold.to_string(),
            "trunk_channels" => self.trunk_channels.map(|c| c.to_string()).join(","),
            "branch_dilation" => self.branch_dilation.to_string(),
            "region_hidden" => self.region_hidden.to_string(),
            "fusion" => match self.fusion {
                FusionVariant::Maps => "maps".into(),
                FusionVariant::Features => "features".into(),
            },
            "lambda_e" => self.lambda_e.to_string(),
            "deep_supervision" => self.deep_supervision.to_string(),
            "stage1_iterations" => self.stage1_iterations.to_string(),
            "stage2_iterations" => self.stage2_iterations.to_string(),
            "stage1_lr" => self.stage1_lr.to_string(),
            "stage2_lr" => self.stage2_lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "seed" => self.seed.to_string(),
            "snapshot_every" => self.snapshot_every.to_string(),
            "depth_refine" => self.depth_refine.to_string(),
            "sigma" => self.sigma.to_string(),
            "sigma_dep" => self.sigma_dep.to_string(),
            "sigma_col" => self.sigma_col.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_test" => self.n_test.to_string(),
            "image_size" => self.image_size.to_string(),
            "gradcheck_samples" => self.gradcheck_samples.to_string(),
            "gradcheck_step" => self.gradcheck_step.to_string(),
            "gradcheck_tolerance" => self.gradcheck_tolerance.to_string(),
            _ => unreachable!("KEYS and value() list the same keys"),
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            trunk_channels: self.trunk_channels,
            branch_dilation: self.branch_dilation,
            region_hidden: self.region_hidden,
            fusion: self.fusion,
            ..NetConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            stage1_iterations: self.stage1_iterations,
            stage2_iterations: self.stage2_iterations,
            stage1_lr: self.stage1_lr,
            stage2_lr: self.stage2_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lambda_e: self.lambda_e,
            deep_supervision: self.deep_supervision,
            seed: self.seed,
            snapshot_every: self.snapshot_every,
        }
    }

    pub fn slic_params(&self) -> SlicParams {
        SlicParams {
            regions: self.superpixels,
            compactness: self.slic_compactness,
            iterations: self.slic_iterations,
        }
    }

    pub fn depth_params(&self) -> DepthParams {
        DepthParams {
            sigma: self.sigma,
            sigma_dep: self.sigma_dep,
            sigma_col: self.sigma_col,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.set("trunk_channels", "4, 8,16,16").unwrap();
        cfg.set("fusion", "features").unwrap();
        cfg.set("deep_supervision", "false").unwrap();
        cfg.set("weight_decay", "0.0005").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let e = RunConfig::parse("superpixel = 10").unwrap_err().to_string();
        assert!(e.contains("unknown key `superpixel`") && e.contains("line 1"), "{e}");
        assert!(RunConfig::parse("seed = -1").is_err());
        assert!(RunConfig::parse("trunk_channels = 8,16").is_err());
        assert!(RunConfig::parse("edge_threshold = 1.5").is_err());
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse("# corpus\n\nn_train = 3   # small\nlambda_e=0\n").unwrap();
        assert_eq!(cfg.n_train, 3);
        assert_eq!(cfg.lambda_e, 0.0);
    }
}
