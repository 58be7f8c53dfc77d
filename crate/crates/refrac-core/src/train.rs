//! Joint optimization of the Gaussian field and the height-field network:
//! total objective, per-group Adam updates, and the iteration loop.

use alloc::vec::Vec;

use crate::adam::AdamState;
use crate::camera::Camera;
use crate::gaussian::GaussianField;
use crate::heightfield::HeightFieldNet;
use crate::loss::{loss_l1, loss_opacity, loss_ssim, psnr};
use crate::math;
use crate::refract::RefractionConfig;
use crate::render::{render_backward, render_forward, RenderError, RenderScene};
use crate::trace::{NormalMode, TraceConfig};

#[derive(Debug, Clone, Copy)]
pub struct LearningRates {
    pub mu: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub sh: f64,
    pub net: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            mu: 1.6e-4,
            rotation: 1e-3,
            scale: 5e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
            net: 5e-4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub opacity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 0.8,
            ssim: 0.2,
            opacity: 0.007,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Iterations during which the height field stays frozen so the
    /// Gaussians settle first.
    pub warmup: usize,
    /// Coarse proxy-mesh resolution (per side).
    pub coarse: usize,
    pub levels: usize,
    pub normal_mode: NormalMode,
    pub lr: LearningRates,
    pub weights: LossWeights,
    pub refraction: RefractionConfig,
    /// Final factor of the exponential center-position learning-rate decay.
    pub mu_decay: f64,
    /// Final factor of the exponential surface-net learning-rate decay
    /// (1.0 keeps it constant).
    pub net_decay: f64,
    /// Block length for alternating optimization after warmup: blocks take
    /// turns updating only the Gaussians or only the surface network. 0 runs
    /// fully joint updates. Alternation keeps the field from co-adapting to
    /// a wrong surface, which helps when views are few.
    pub alternate: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 15_000,
            warmup: 500,
            coarse: 200,
            levels: 2,
            normal_mode: NormalMode::Phong,
            lr: LearningRates::default(),
            weights: LossWeights::default(),
            refraction: RefractionConfig::default(),
            mu_decay: 0.01,
            net_decay: 1.0,
            alternate: 0,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct View {
    pub camera: Camera,
    /// Linear ground-truth image, row major.
    pub image: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricRecord {
    pub iteration: usize,
    pub l1: f64,
    pub ssim_loss: f64,
    pub opacity_loss: f64,
    pub total: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainError {
    NonFiniteLoss { iteration: usize },
    Render(RenderError),
    NoViews,
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::NonFiniteLoss { iteration } => {
                write!(f, "loss became non-finite at iteration {iteration}")
            }
            TrainError::Render(e) => write!(f, "{e}"),
            TrainError::NoViews => write!(f, "training requires at least one view"),
        }
    }
}

struct GroupStates {
    mu: AdamState,
    rotation: AdamState,
    scale: AdamState,
    opacity: AdamState,
    sh: AdamState,
    net: AdamState,
}

fn field_to_flat(field: &GaussianField) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = field.len();
    let mut mu = Vec::with_capacity(3 * n);
    let mut rot = Vec::with_capacity(4 * n);
    let mut scale = Vec::with_capacity(3 * n);
    let mut op = Vec::with_capacity(n);
    let mut sh = Vec::new();
    for g in &field.gaussians {
        mu.extend_from_slice(&[g.mu.x, g.mu.y, g.mu.z]);
        rot.extend_from_slice(&g.rotation);
        scale.extend_from_slice(&[g.log_scale.x, g.log_scale.y, g.log_scale.z]);
        op.push(g.logit_opacity);
        sh.extend_from_slice(&g.sh);
    }
    (mu, rot, scale, op, sh)
}

fn flat_to_field(
    field: &mut GaussianField,
    mu: &[f64],
    rot: &[f64],
    scale: &[f64],
    op: &[f64],
    sh: &[f64],
) {
    let c = sh.len() / field.len().max(1);
    for (i, g) in field.gaussians.iter_mut().enumerate() {
        g.mu = crate::vec3::Vec3::new(mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]);
        g.rotation = [rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]];
        g.log_scale =
            crate::vec3::Vec3::new(scale[3 * i], scale[3 * i + 1], scale[3 * i + 2]);
        g.logit_opacity = op[i];
        g.sh.copy_from_slice(&sh[c * i..c * (i + 1)]);
    }
}

/// Runs the joint optimization. `on_record` is called for every logged
/// metric row (every `log_every` iterations and at the final one).
pub fn train(
    net: &mut HeightFieldNet,
    field: &mut GaussianField,
    views: &[View],
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&MetricRecord),
) -> Result<Vec<MetricRecord>, TrainError> {
    if views.is_empty() {
        return Err(TrainError::NoViews);
    }
    let n = field.len();
    let mut states = GroupStates {
        mu: AdamState::new(3 * n),
        rotation: AdamState::new(4 * n),
        scale: AdamState::new(3 * n),
        opacity: AdamState::new(n),
        sh: AdamState::new(field.gaussians.iter().map(|g| g.sh.len()).sum()),
        net: AdamState::new(net.param_count()),
    };
    let mut records = Vec::new();
    let w = cfg.weights;

    for it in 0..cfg.iterations {
        let view = &views[it % views.len()];
        field.rebuild_bvh();
        let scene = RenderScene {
            net: Some(net),
            field,
            refraction: cfg.refraction,
            trace: TraceConfig {
                nx: cfg.coarse,
                ny: cfg.coarse,
                levels: cfg.levels,
                normal_mode: cfg.normal_mode,
                with_tapes: true,
            },
        };
        let out = render_forward(&view.camera, &scene, true).map_err(TrainError::Render)?;

        let (l1, g_l1) = loss_l1(&out.colors, &view.image);
        let (ssim_loss, g_ssim) = loss_ssim(
            &out.colors,
            &view.image,
            out.width,
            out.height,
        );
        let (op_loss, g_op) = loss_opacity(field);
        let total = w.l1 * l1 + w.ssim * ssim_loss + w.opacity * op_loss;
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss { iteration: it });
        }

        if it % cfg.log_every == 0 || it + 1 == cfg.iterations {
            let rec = MetricRecord {
                iteration: it,
                l1,
                ssim_loss,
                opacity_loss: op_loss,
                total,
                psnr: psnr(&out.colors, &view.image),
            };
            on_record(&rec);
            records.push(rec);
        }

        let dl_dimage: Vec<[f64; 3]> = g_l1
            .iter()
            .zip(&g_ssim)
            .map(|(a, b)| {
                [
                    w.l1 * a[0] + w.ssim * b[0],
                    w.l1 * a[1] + w.ssim * b[1],
                    w.l1 * a[2] + w.ssim * b[2],
                ]
            })
            .collect();
        let grads = render_backward(&view.camera, &scene, &out, &dl_dimage);

        let (step_field, step_net) = if it < cfg.warmup {
            (true, false)
        } else if cfg.alternate == 0 {
            (true, true)
        } else {
            let block = (it - cfg.warmup) / cfg.alternate;
            (block % 2 == 0, block % 2 == 1)
        };

        let (mut mu, mut rot, mut scale, mut op, mut sh) = field_to_flat(field);
        let mut g_mu = Vec::with_capacity(3 * n);
        let mut g_rot = Vec::with_capacity(4 * n);
        let mut g_scale = Vec::with_capacity(3 * n);
        let mut g_opacity = Vec::with_capacity(n);
        for i in 0..n {
            let m = grads.field.mu[i];
            g_mu.extend_from_slice(&[m.x, m.y, m.z]);
            g_rot.extend_from_slice(&grads.field.rotation[i]);
            let s = grads.field.log_scale[i];
            g_scale.extend_from_slice(&[s.x, s.y, s.z]);
            g_opacity.push(grads.field.logit_opacity[i] + w.opacity * g_op[i]);
        }
        if step_field {
            let frac = it as f64 / cfg.iterations.max(2) as f64;
            let lr_mu = cfg.lr.mu * math::powf(cfg.mu_decay, frac);
            states.mu.step(&mut mu, &g_mu, lr_mu);
            states.rotation.step(&mut rot, &g_rot, cfg.lr.rotation);
            states.scale.step(&mut scale, &g_scale, cfg.lr.scale);
            states.opacity.step(&mut op, &g_opacity, cfg.lr.opacity);
            states.sh.step(&mut sh, &grads.field.sh, cfg.lr.sh);
            flat_to_field(field, &mu, &rot, &scale, &op, &sh);
        }

        if step_net {
            if let Some(ng) = &grads.net {
                let frac = it as f64 / cfg.iterations.max(2) as f64;
                let lr_net = cfg.lr.net * math::powf(cfg.net_decay, frac);
                let mut p = net.params_flat();
                states.net.step(&mut p, &ng.flat(), lr_net);
                net.set_params_flat(&p);
            }
        }
    }
    field.rebuild_bvh();
    Ok(records)
}
