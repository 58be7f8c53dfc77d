//! Synthetic ground-truth scene generator.
//!
//! Renders a textured ground plane seen through an analytic water surface
//! with a deliberately plain ray tracer: per pixel, intersect the surface
//! analytically (flat) or by coarse marching plus bisection (sine), bend the
//! ray with scalar Snell refraction, and look the texture up at the ground
//! plane. It shares only `Vec3` with the main renderer, so the two act as
//! oracles for each other.

use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use refrac_core::rng::SplitMix64;
use refrac_core::Vec3;

use crate::config::GenerateConfig;
use crate::imageio;
use crate::scene::{
    AabbSpec, DomainSpec, RefractionSpec, SceneFile, SurfaceDesc, ViewSpec, SCENE_VERSION,
};

pub const BACKGROUND: [f64; 3] = [0.0, 0.0, 0.0];

/// Bisection parameters for the sine surface.
const MARCH_STEPS: usize = 256;
const BISECT_STEPS: usize = 128;
const BISECT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub enum Pattern {
    /// Smooth low-frequency color waves; friendly to Gaussian overfitting.
    Waves,
    /// Classic checkerboard, `cells` per plane side.
    Checker { cells: usize },
}

impl Pattern {
    pub fn color(&self, x: f64, y: f64, half: f64) -> [f64; 3] {
        match self {
            Pattern::Waves => [
                0.5 + 0.35 * (5.0 * x).sin(),
                0.5 + 0.35 * (6.1 * y).sin(),
                0.5 + 0.3 * (5.0 * x + 6.1 * y).sin(),
            ],
            Pattern::Checker { cells } => {
                let fx = ((x + half) / (2.0 * half) * *cells as f64).floor() as i64;
                let fy = ((y + half) / (2.0 * half) * *cells as f64).floor() as i64;
                if (fx + fy).rem_euclid(2) == 0 {
                    [0.9, 0.85, 0.8]
                } else {
                    [0.12, 0.2, 0.3]
                }
            }
        }
    }
}

/// Everything the independent tracer needs for one scene.
pub struct GtScene {
    pub surface: SurfaceDesc,
    pub pattern: Pattern,
    pub plane_z: f64,
    pub plane_half: f64,
    /// Half extent of the water body; outside it rays reach the plane
    /// directly.
    pub domain_half: f64,
    pub n1: f64,
    pub n2: f64,
}

impl GtScene {
    pub fn from_config(cfg: &GenerateConfig) -> Result<GtScene> {
        let surface = match cfg.surface.as_str() {
            "flat" => SurfaceDesc::Flat {
                height: cfg.base_height,
            },
            "sine" => SurfaceDesc::Sine {
                base_height: cfg.base_height,
                amplitude: cfg.amplitude,
                frequency: cfg.frequency,
                phase: cfg.phase,
            },
            other => bail!("unknown surface kind '{other}' (expected flat|sine)"),
        };
        let pattern = match cfg.pattern.as_str() {
            "waves" => Pattern::Waves,
            "checker" => Pattern::Checker {
                cells: cfg.checker_cells,
            },
            other => bail!("unknown pattern '{other}' (expected waves|checker)"),
        };
        if cfg.n1 <= 0.0 || cfg.n2 <= 0.0 {
            bail!("refractive indices must be positive");
        }
        if cfg.plane_z >= cfg.base_height - cfg.amplitude.abs() {
            bail!("ground plane must lie below the surface");
        }
        Ok(GtScene {
            surface,
            pattern,
            plane_z: cfg.plane_z,
            plane_half: cfg.plane_half,
            domain_half: cfg.domain_half,
            n1: cfg.n1,
            n2: cfg.n2,
        })
    }

    fn height(&self, x: f64, y: f64) -> f64 {
        self.surface.height_at(x, y).expect("analytic surface")
    }

    /// Upward surface normal from the analytic height gradient.
    fn normal(&self, x: f64, y: f64) -> Vec3 {
        match &self.surface {
            SurfaceDesc::Flat { .. } => Vec3::new(0.0, 0.0, 1.0),
            SurfaceDesc::Sine {
                amplitude,
                frequency,
                phase,
                ..
            } => {
                let c = (frequency[0] * x + frequency[1] * y + phase).cos();
                Vec3::new(-amplitude * frequency[0] * c, -amplitude * frequency[1] * c, 1.0)
                    .normalized()
            }
            SurfaceDesc::Mesh { .. } => unreachable!(),
        }
    }

    /// Ray-surface intersection parameter, or None when the ray never
    /// crosses. Flat surfaces are solved directly; sine surfaces by sign
    /// marching and bisection to [`BISECT_TOL`] in t.
    pub fn intersect_surface(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match &self.surface {
            SurfaceDesc::Flat { height } => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let t = (height - origin.z) / dir.z;
                (t > 0.0).then_some(t)
            }
            SurfaceDesc::Sine {
                base_height,
                amplitude,
                ..
            } => {
                if dir.z >= 0.0 {
                    return None;
                }
                let f = |t: f64| {
                    let p = origin + dir * t;
                    p.z - self.height(p.x, p.y)
                };
                let lowest = base_height - amplitude.abs() - 1e-6;
                let t_far = (origin.z - lowest) / -dir.z;
                let mut t0 = 0.0;
                let mut f0 = f(t0);
                if f0 <= 0.0 {
                    return None; // started at or below the surface
                }
                let mut bracket = None;
                for i in 1..=MARCH_STEPS {
                    let t1 = t_far * i as f64 / MARCH_STEPS as f64;
                    let f1 = f(t1);
                    if f1 <= 0.0 {
                        bracket = Some((t0, t1));
                        break;
                    }
                    t0 = t1;
                    f0 = f1;
                }
                let _ = f0;
                let (mut lo, mut hi) = bracket?;
                for _ in 0..BISECT_STEPS {
                    if hi - lo < BISECT_TOL {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi))
            }
            SurfaceDesc::Mesh { .. } => unreachable!(),
        }
    }

    /// Scalar Snell refraction of a unit direction about the given upward
    /// unit normal; None on total internal reflection.
    pub fn refract(&self, dir: Vec3, normal: Vec3) -> Option<Vec3> {
        let eta = self.n1 / self.n2;
        let n = if normal.dot(dir) > 0.0 { -normal } else { normal };
        let cos_i = -n.dot(dir);
        let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
        if sin2_t > 1.0 {
            return None;
        }
        let cos_t = (1.0 - sin2_t).sqrt();
        Some((dir * eta + n * (eta * cos_i - cos_t)).normalized())
    }

    fn plane_color(&self, origin: Vec3, dir: Vec3) -> [f64; 3] {
        if dir.z >= -1e-15 {
            return BACKGROUND;
        }
        let t = (self.plane_z - origin.z) / dir.z;
        if t <= 0.0 {
            return BACKGROUND;
        }
        let q = origin + dir * t;
        if q.x.abs() > self.plane_half || q.y.abs() > self.plane_half {
            return BACKGROUND;
        }
        self.pattern.color(q.x, q.y, self.plane_half)
    }

    /// Traces one primary ray to a color.
    pub fn trace(&self, origin: Vec3, dir: Vec3) -> [f64; 3] {
        if self.n1 == self.n2 {
            // Identical media: the surface does nothing.
            return self.plane_color(origin, dir);
        }
        let Some(t) = self.intersect_surface(origin, dir) else {
            // Never enters the water: straight shot to the plane.
            return self.plane_color(origin, dir);
        };
        let p = origin + dir * t;
        if p.x.abs() > self.domain_half || p.y.abs() > self.domain_half {
            // The water body only spans the height-field domain.
            return self.plane_color(origin, dir);
        }
        let n = self.normal(p.x, p.y);
        match self.refract(dir, n) {
            Some(r) => self.plane_color(p, r),
            None => BACKGROUND,
        }
    }

    /// Renders a full view. Ray generation is written out here on purpose:
    /// the generator must not depend on the main renderer's camera code.
    pub fn render(&self, view: &ViewSpec) -> Vec<[f64; 3]> {
        let w = view.width as usize;
        let h = view.height as usize;
        let r = view.rotation;
        let t = view.translation;
        // center = -R^T t
        let center = Vec3::new(
            -(r[0][0] * t[0] + r[1][0] * t[1] + r[2][0] * t[2]),
            -(r[0][1] * t[0] + r[1][1] * t[1] + r[2][1] * t[2]),
            -(r[0][2] * t[0] + r[1][2] * t[1] + r[2][2] * t[2]),
        );
        (0..w * h)
            .into_par_iter()
            .map(|i| {
                let px = (i % w) as f64;
                let py = (i / w) as f64;
                let dc = [
                    (px + 0.5 - view.cx) / view.fx,
                    (py + 0.5 - view.cy) / view.fy,
                    1.0,
                ];
                let dir = Vec3::new(
                    r[0][0] * dc[0] + r[1][0] * dc[1] + r[2][0] * dc[2],
                    r[0][1] * dc[0] + r[1][1] * dc[1] + r[2][1] * dc[2],
                    r[0][2] * dc[0] + r[1][2] * dc[1] + r[2][2] * dc[2],
                )
                .normalized();
                self.trace(center, dir)
            })
            .collect()
    }
}

/// Surround-view camera rig: evenly spaced azimuths at elevations drawn from
/// the configured range, all looking at the origin.
pub fn build_rig(cfg: &GenerateConfig) -> Vec<ViewSpec> {
    let mut rng = SplitMix64::new(cfg.seed);
    let total = cfg.n_train + cfg.n_test;
    let mut out = Vec::with_capacity(total);
    for k in 0..total {
        let azim = 2.0 * std::f64::consts::PI * k as f64 / total as f64;
        let elev = cfg.elev_min_deg.to_radians()
            + (cfg.elev_max_deg - cfg.elev_min_deg).to_radians() * rng.next_f64();
        let eye = Vec3::new(
            cfg.radius * elev.cos() * azim.cos(),
            cfg.radius * elev.cos() * azim.sin(),
            cfg.radius * elev.sin(),
        );
        let cam = refrac_core::Camera::look_at(
            eye,
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            cfg.resolution as f64 * 0.9,
            cfg.resolution as f64 * 0.9,
            cfg.resolution,
            cfg.resolution,
        );
        let name = format!("view_{k:03}.png");
        out.push(ViewSpec::from_camera(&cam, "train", &name));
    }
    // Deterministically mark the last n_test views as test views.
    for v in out.iter_mut().rev().take(cfg.n_test) {
        v.split = "test".into();
    }
    out
}

/// Generates the scene: renders every view with the independent tracer,
/// writes PNGs plus `scene.json` into `out_dir`, and returns the scene.
pub fn generate_synthetic_scene(cfg: &GenerateConfig, out_dir: &Path) -> Result<SceneFile> {
    let gt = GtScene::from_config(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let views = build_rig(cfg);
    for v in &views {
        let pixels = gt.render(v);
        imageio::save_png(&out_dir.join(&v.image), &pixels, v.width as usize, v.height as usize)?;
    }
    let scene = SceneFile {
        version: SCENE_VERSION,
        refraction: RefractionSpec {
            n1: cfg.n1,
            n2: cfg.n2,
        },
        domain: DomainSpec {
            x_min: -cfg.domain_half,
            x_max: cfg.domain_half,
            y_min: -cfg.domain_half,
            y_max: cfg.domain_half,
        },
        scene_aabb: AabbSpec {
            min: [-cfg.plane_half, -cfg.plane_half, cfg.plane_z - 0.1],
            max: [cfg.plane_half, cfg.plane_half, cfg.plane_z + 0.1],
        },
        surface: Some(gt.surface.clone()),
        views,
    };
    scene.save(&out_dir.join("scene.json"))?;
    Ok(scene)
}
