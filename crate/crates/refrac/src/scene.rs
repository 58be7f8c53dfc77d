//! Human-readable scene files: a JSON document listing cameras, image paths,
//! the refraction setup, the height-field domain and (optionally) a
//! ground-truth surface description. Images are separate PNGs referenced by
//! relative path.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use refrac_core::heightfield::Domain;
use refrac_core::train::View;
use refrac_core::vec3::Mat3;
use refrac_core::{Camera, RefractionConfig, Vec3};
use serde::{Deserialize, Serialize};

use crate::imageio;

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: u32,
    pub refraction: RefractionSpec,
    /// Height-field domain in world xy.
    pub domain: DomainSpec,
    /// World-space box enclosing the scene content, used to seed Gaussians.
    pub scene_aabb: AabbSpec,
    /// Ground-truth surface, when known (synthetic scenes).
    pub surface: Option<SurfaceDesc>,
    pub views: Vec<ViewSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefractionSpec {
    pub n1: f64,
    pub n2: f64,
}

impl From<RefractionSpec> for RefractionConfig {
    fn from(r: RefractionSpec) -> Self {
        RefractionConfig { n1: r.n1, n2: r.n2 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DomainSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl From<DomainSpec> for Domain {
    fn from(d: DomainSpec) -> Self {
        Domain::new(d.x_min, d.x_max, d.y_min, d.y_max)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AabbSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// Analytic or mesh ground-truth surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SurfaceDesc {
    Flat {
        height: f64,
    },
    Sine {
        base_height: f64,
        amplitude: f64,
        /// Spatial angular frequency (fx, fy): z = b + A sin(fx x + fy y + phase).
        frequency: [f64; 2],
        phase: f64,
    },
    Mesh {
        path: String,
    },
}

impl SurfaceDesc {
    /// Height of an analytic surface; None for mesh surfaces.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        match self {
            SurfaceDesc::Flat { height } => Some(*height),
            SurfaceDesc::Sine {
                base_height,
                amplitude,
                frequency,
                phase,
            } => Some(base_height + amplitude * (frequency[0] * x + frequency[1] * y + phase).sin()),
            SurfaceDesc::Mesh { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewSpec {
    /// "train" or "test".
    pub split: String,
    /// Image path relative to the scene file.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, rows.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl ViewSpec {
    pub fn camera(&self) -> Camera {
        let r = self.rotation;
        Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            rotation: Mat3::from_rows(
                Vec3::new(r[0][0], r[0][1], r[0][2]),
                Vec3::new(r[1][0], r[1][1], r[1][2]),
                Vec3::new(r[2][0], r[2][1], r[2][2]),
            ),
            translation: Vec3::new(self.translation[0], self.translation[1], self.translation[2]),
            width: self.width,
            height: self.height,
        }
    }

    pub fn from_camera(cam: &Camera, split: &str, image: &str) -> ViewSpec {
        let row = |v: Vec3| [v.x, v.y, v.z];
        ViewSpec {
            split: split.to_string(),
            image: image.to_string(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [
                row(cam.rotation.rows[0]),
                row(cam.rotation.rows[1]),
                row(cam.rotation.rows[2]),
            ],
            translation: row(cam.translation),
        }
    }
}

impl SceneFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).with_context(|| format!("writing scene {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<SceneFile> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading scene {}", path.display()))?;
        let scene: SceneFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if scene.version != SCENE_VERSION {
            bail!(
                "scene version {} unsupported (expected {})",
                scene.version,
                SCENE_VERSION
            );
        }
        Ok(scene)
    }

    /// Checks that every referenced image exists and matches its camera's
    /// resolution. `dir` is the directory the scene file lives in.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        for v in &self.views {
            let p = dir.join(&v.image);
            let img = imageio::load_png(&p)?;
            if img.width != v.width as usize || img.height != v.height as usize {
                bail!(
                    "image {} is {}x{} but the camera says {}x{}",
                    p.display(),
                    img.width,
                    img.height,
                    v.width,
                    v.height
                );
            }
        }
        Ok(())
    }

    /// Loads the images of one split into renderer-ready views.
    pub fn load_views(&self, dir: &Path, split: &str) -> Result<Vec<View>> {
        let mut out = Vec::new();
        for v in &self.views {
            if v.split != split {
                continue;
            }
            let img = imageio::load_png(&dir.join(&v.image))?;
            out.push(View {
                camera: v.camera(),
                image: img.pixels,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_scene() -> SceneFile {
        let cam = Camera::look_at(
            Vec3::new(1.5, 0.3, 1.2),
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            48.0,
            48.0,
            64,
            64,
        );
        SceneFile {
            version: SCENE_VERSION,
            refraction: RefractionSpec { n1: 1.0, n2: 1.333 },
            domain: DomainSpec {
                x_min: -1.0,
                x_max: 1.0,
                y_min: -1.0,
                y_max: 1.0,
            },
            scene_aabb: AabbSpec {
                min: [-1.0, -1.0, -0.8],
                max: [1.0, 1.0, -0.2],
            },
            surface: Some(SurfaceDesc::Sine {
                base_height: 0.4,
                amplitude: 0.05,
                frequency: [3.0, 2.0],
                phase: 0.7,
            }),
            views: vec![ViewSpec::from_camera(&cam, "train", "view_000.png")],
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let scene = toy_scene();
        scene.save(&path).unwrap();
        let back = SceneFile::load(&path).unwrap();
        assert_eq!(back.views.len(), 1);
        let a = scene.views[0].camera();
        let b = back.views[0].camera();
        assert_eq!(a.rotation.rows[0], b.rotation.rows[0]);
        assert_eq!(a.translation, b.translation);
    }

    #[test]
    fn bad_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let mut scene = toy_scene();
        scene.version = 99;
        scene.save(&path).unwrap();
        let err = SceneFile::load(&path).unwrap_err().to_string();
        assert!(err.contains("99"));
    }

    #[test]
    fn validate_catches_missing_image() {
        let dir = tempfile::tempdir().unwrap();
        let scene = toy_scene();
        assert!(scene.validate(dir.path()).is_err());
    }

    #[test]
    fn sine_height_matches_formula() {
        let s = SurfaceDesc::Sine {
            base_height: 0.4,
            amplitude: 0.1,
            frequency: [2.0, -1.0],
            phase: 0.3,
        };
        let z = s.height_at(0.5, 0.2).unwrap();
        assert!((z - (0.4 + 0.1 * (2.0 * 0.5 - 0.2 + 0.3f64).sin())).abs() < 1e-15);
    }
}
