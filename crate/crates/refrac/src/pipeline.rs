//! Glue between file formats and the core library: building the model from a
//! scene plus settings, running training, rendering views, and evaluating
//! checkpoints. The CLI is a thin shell over these.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use refrac_core::bvh::Aabb;
use refrac_core::heightfield::Domain;
use refrac_core::render::{render_forward, render_with_surface, RenderOutput, RenderScene};
use refrac_core::trace::{trace_fixed_mesh, NormalMode, TraceConfig};
use refrac_core::train::{train, MetricRecord, TrainConfig};
use refrac_core::{Camera, GaussianField, HeightFieldNet, Ray, RefractionConfig, Vec3};

use crate::config::TrainSettings;
use crate::metrics::{self, MetricReport, ViewMetrics};
use crate::scene::{SceneFile, SurfaceDesc};
use crate::synth::BACKGROUND;

pub fn parse_normal_mode(s: &str) -> Result<NormalMode> {
    match s {
        "phong" => Ok(NormalMode::Phong),
        "face" => Ok(NormalMode::Face),
        other => bail!("unknown normal mode '{other}' (expected phong|face)"),
    }
}

pub fn build_net(settings: &TrainSettings, domain: Domain) -> HeightFieldNet {
    HeightFieldNet::init_flat(
        domain,
        settings.init_height,
        settings.net_scale,
        &settings.net_hidden,
        settings.net_bands,
        settings.seed ^ 0x5eed,
    )
}

pub fn build_field(settings: &TrainSettings, scene: &SceneFile) -> GaussianField {
    let b = scene.scene_aabb;
    GaussianField::random_init(
        settings.n_gaussians,
        Aabb {
            min: Vec3::new(b.min[0], b.min[1], b.min[2]),
            max: Vec3::new(b.max[0], b.max[1], b.max[2]),
        },
        settings.sh_degree,
        BACKGROUND,
        settings.seed,
    )
}

pub fn train_config(settings: &TrainSettings, refraction: RefractionConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        iterations: settings.iterations,
        warmup: settings.warmup,
        coarse: settings.coarse,
        levels: settings.levels,
        normal_mode: parse_normal_mode(&settings.normal_mode)?,
        lr: refrac_core::train::LearningRates {
            mu: settings.lr_mu,
            rotation: settings.lr_rotation,
            scale: settings.lr_scale,
            opacity: settings.lr_opacity,
            sh: settings.lr_sh,
            net: settings.lr_net,
        },
        weights: refrac_core::train::LossWeights {
            l1: settings.w_l1,
            ssim: settings.w_ssim,
            opacity: settings.w_opacity,
        },
        refraction,
        mu_decay: settings.mu_decay,
        net_decay: settings.net_decay,
        alternate: settings.alternate,
        log_every: settings.log_every,
    })
}

pub struct TrainedModel {
    pub net: HeightFieldNet,
    pub field: GaussianField,
    pub records: Vec<MetricRecord>,
}

/// Trains on the scene's training split. `scene_dir` is where the image
/// paths resolve.
pub fn train_on_scene(
    scene: &SceneFile,
    scene_dir: &Path,
    settings: &TrainSettings,
    on_record: impl FnMut(&MetricRecord),
) -> Result<TrainedModel> {
    let views = scene.load_views(scene_dir, "train")?;
    if views.is_empty() {
        bail!("scene has no training views");
    }
    let mut net = build_net(settings, scene.domain.into());
    let mut field = build_field(settings, scene);
    let cfg = train_config(settings, scene.refraction.into())?;
    let records = train(&mut net, &mut field, &views, &cfg, on_record)
        .map_err(|e| anyhow!("training failed: {e}"))?;
    Ok(TrainedModel {
        net,
        field,
        records,
    })
}

/// Renders one camera. With `dewater` the surface is bypassed entirely.
pub fn render_view(
    net: Option<&HeightFieldNet>,
    field: &GaussianField,
    refraction: RefractionConfig,
    settings: &TrainSettings,
    camera: &Camera,
    dewater: bool,
) -> Result<RenderOutput> {
    let scene = RenderScene {
        net: if dewater { None } else { net },
        field,
        refraction,
        trace: TraceConfig {
            nx: settings.coarse,
            ny: settings.coarse,
            levels: settings.levels,
            normal_mode: parse_normal_mode(&settings.normal_mode)?,
            with_tapes: false,
        },
    };
    render_forward(camera, &scene, false).map_err(|e| anyhow!("render failed: {e}"))
}

/// Renders through a substituted height-field mesh instead of the trained
/// surface.
pub fn render_with_mesh(
    mesh: &refrac_core::mesh::ProxyMesh,
    field: &GaussianField,
    refraction: RefractionConfig,
    settings: &TrainSettings,
    camera: &Camera,
) -> Result<RenderOutput> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let rays: Vec<Ray> = (0..w * h)
        .map(|i| camera.pixel_ray((i % w) as f64, (i / w) as f64))
        .collect();
    let traced = trace_fixed_mesh(
        mesh.clone(),
        &rays,
        parse_normal_mode(&settings.normal_mode)?,
    );
    Ok(render_with_surface(camera, field, refraction, &traced))
}

/// Renders the chosen split against its ground-truth images and computes the
/// metric report, including surface RMSE when the scene has an analytic
/// ground-truth surface and the model has a trained net.
pub fn evaluate(
    net: Option<&HeightFieldNet>,
    field: &GaussianField,
    refraction: RefractionConfig,
    settings: &TrainSettings,
    scene: &SceneFile,
    scene_dir: &Path,
    split: &str,
) -> Result<MetricReport> {
    let start = Instant::now();
    let mut per_view = Vec::new();
    let mut cameras = Vec::new();
    for v in &scene.views {
        if v.split != split {
            continue;
        }
        let gt = crate::imageio::load_png(&scene_dir.join(&v.image))?;
        let cam = v.camera();
        let out = render_view(net, field, refraction, settings, &cam, false)?;
        per_view.push(ViewMetrics {
            name: v.image.clone(),
            psnr: metrics::psnr(&out.colors, &gt.pixels)?,
            ssim: metrics::ssim(&out.colors, &gt.pixels, gt.width, gt.height)?,
        });
        cameras.push(cam);
    }
    if per_view.is_empty() {
        bail!("scene has no '{split}' views");
    }
    let surface_rmse = match (net, &scene.surface) {
        (Some(net), Some(desc)) if !matches!(desc, SurfaceDesc::Mesh { .. }) => {
            Some(metrics::surface_rmse(net, desc, &cameras, 200)?)
        }
        _ => None,
    };
    Ok(MetricReport::from_views(
        per_view,
        surface_rmse,
        start.elapsed().as_secs_f64(),
    ))
}
