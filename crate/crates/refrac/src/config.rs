//! One configuration document for the whole tool: scene generation settings
//! and training settings, JSON on disk, every field defaulted, with
//! `key=value` command-line overrides (overrides win over the file).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub generate: GenerateConfig,
    pub train: TrainSettings,
}

/// Synthetic scene recipe: an analytic water surface above a textured ground
/// plane, viewed by a ring of cameras.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// "sine" or "flat".
    pub surface: String,
    pub base_height: f64,
    pub amplitude: f64,
    pub frequency: [f64; 2],
    pub phase: f64,
    /// Ground plane height.
    pub plane_z: f64,
    /// Half extent of the textured part of the plane.
    pub plane_half: f64,
    /// "waves" (smooth) or "checker".
    pub pattern: String,
    pub checker_cells: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub resolution: u32,
    /// Camera orbit radius and elevation range (degrees).
    pub radius: f64,
    pub elev_min_deg: f64,
    pub elev_max_deg: f64,
    pub n1: f64,
    pub n2: f64,
    /// Height-field domain half extent.
    pub domain_half: f64,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            surface: "sine".into(),
            base_height: 0.45,
            amplitude: 0.12,
            frequency: [3.0, 2.0],
            phase: 0.7,
            plane_z: -0.7,
            plane_half: 2.4,
            pattern: "waves".into(),
            checker_cells: 8,
            n_train: 8,
            n_test: 2,
            resolution: 64,
            radius: 2.4,
            elev_min_deg: 35.0,
            elev_max_deg: 50.0,
            n1: 1.0,
            n2: 1.333,
            domain_half: 1.2,
            seed: 7,
        }
    }
}

/// Desk-scale training defaults; everything scales up through the config
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub iterations: usize,
    /// Iterations with the surface net frozen.
    pub warmup: usize,
    /// Post-warmup alternation block length (0 = fully joint updates).
    pub alternate: usize,
    /// Coarse proxy-mesh resolution (per axis).
    pub coarse: usize,
    /// Subdivision levels.
    pub levels: usize,
    /// "phong" or "face".
    pub normal_mode: String,
    pub n_gaussians: usize,
    pub sh_degree: usize,
    pub net_hidden: Vec<usize>,
    pub net_bands: usize,
    /// Height of the initial flat surface.
    pub init_height: f64,
    /// Output scale of the surface net.
    pub net_scale: f64,
    pub lr_mu: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_sh: f64,
    pub lr_net: f64,
    pub mu_decay: f64,
    pub net_decay: f64,
    pub w_l1: f64,
    pub w_ssim: f64,
    pub w_opacity: f64,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            iterations: 3000,
            warmup: 200,
            alternate: 0,
            coarse: 40,
            levels: 2,
            normal_mode: "phong".into(),
            n_gaussians: 500,
            sh_degree: 0,
            net_hidden: vec![32, 32, 32],
            net_bands: 4,
            init_height: 0.45,
            net_scale: 1.0,
            lr_mu: 1.6e-4,
            lr_rotation: 1e-3,
            lr_scale: 5e-3,
            lr_opacity: 5e-2,
            lr_sh: 2.5e-3,
            lr_net: 3e-3,
            mu_decay: 0.01,
            net_decay: 1.0,
            w_l1: 0.8,
            w_ssim: 0.2,
            w_opacity: 0.007,
            log_every: 100,
            seed: 1,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies one `key=value` override, e.g. `train.iterations=100` or
    /// `generate.resolution=32`. Unknown keys and malformed values are
    /// errors.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let Some((key, value)) = spec.split_once('=') else {
            bail!("override '{spec}' is not of the form key=value");
        };
        // Round-trip through the JSON tree so every field stays reachable
        // without a hand-written match per key.
        let mut tree = serde_json::to_value(&*self)?;
        let mut node = &mut tree;
        for part in key.split('.') {
            node = match node.get_mut(part) {
                Some(n) => n,
                None => bail!("unknown config key '{key}'"),
            };
        }
        *node = parse_value(node, value)
            .with_context(|| format!("bad value '{value}' for key '{key}'"))?;
        *self = serde_json::from_value(tree)?;
        Ok(())
    }
}

fn parse_value(current: &serde_json::Value, text: &str) -> Result<serde_json::Value> {
    use serde_json::Value;
    Ok(match current {
        Value::String(_) => Value::String(text.to_string()),
        Value::Number(_) | Value::Array(_) => serde_json::from_str(text)?,
        Value::Bool(_) => Value::Bool(text.parse()?),
        _ => bail!("key does not hold an overridable value"),
    })
}
