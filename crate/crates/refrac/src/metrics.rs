//! Evaluation metrics: PSNR, SSIM, surface RMSE, and the per-view report.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use refrac_core::loss;
use refrac_core::mesh::ProxyMesh;
use refrac_core::trace::intersect_mesh;
use refrac_core::{Camera, HeightFieldNet, Ray, Vec3};

use crate::scene::SurfaceDesc;

/// Peak signal-to-noise ratio in dB on [0, 1] images; +inf for identical
/// inputs.
pub fn psnr(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.len() != b.len() {
        bail!("image size mismatch: {} vs {}", a.len(), b.len());
    }
    Ok(loss::psnr(a, b))
}

/// Mean structural similarity (forward only).
pub fn ssim(a: &[[f64; 3]], b: &[[f64; 3]], width: usize, height: usize) -> Result<f64> {
    if a.len() != b.len() || a.len() != width * height {
        bail!("image size mismatch");
    }
    Ok(loss::ssim(a, b, width, height))
}

#[derive(Debug, Clone)]
pub struct ViewMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub per_view: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// World-unit surface error; present only when a GT surface exists.
    pub surface_rmse: Option<SurfaceRmse>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SurfaceRmse {
    pub rmse: f64,
    pub rays_used: usize,
    /// Rays that never hit the trained surface (excluded from the RMSE).
    pub rays_missed: usize,
}

impl MetricReport {
    pub fn from_views(per_view: Vec<ViewMetrics>, surface_rmse: Option<SurfaceRmse>, elapsed_seconds: f64) -> MetricReport {
        let n = per_view.len().max(1) as f64;
        let mean_psnr = per_view.iter().map(|v| v.psnr).sum::<f64>() / n;
        let mean_ssim = per_view.iter().map(|v| v.ssim).sum::<f64>() / n;
        MetricReport {
            per_view,
            mean_psnr,
            mean_ssim,
            surface_rmse,
            elapsed_seconds,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("view,psnr_db,ssim\n");
        for v in &self.per_view {
            let _ = writeln!(s, "{},{:.6},{:.6}", v.name, v.psnr, v.ssim);
        }
        let _ = writeln!(s, "mean,{:.6},{:.6}", self.mean_psnr, self.mean_ssim);
        if let Some(r) = self.surface_rmse {
            let _ = writeln!(s, "surface_rmse,{:.8},used={} missed={}", r.rmse, r.rays_used, r.rays_missed);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// RMSE of the minimum distance between each test ray's intersection with
/// the trained surface and the ground-truth surface. The trained surface is
/// sampled as a dense proxy mesh (no recursion); no-hit rays are excluded
/// and counted.
pub fn surface_rmse(
    net: &HeightFieldNet,
    gt: &SurfaceDesc,
    cameras: &[Camera],
    mesh_res: usize,
) -> Result<SurfaceRmse> {
    if matches!(gt, SurfaceDesc::Mesh { .. }) {
        bail!("mesh ground-truth surfaces are evaluated through objmesh");
    }
    let mut mesh = ProxyMesh::build(net, mesh_res, mesh_res, false);
    mesh.compute_vertex_normals();
    let bvh = mesh.build_bvh();
    let rays: Vec<Ray> = cameras
        .iter()
        .flat_map(|cam| {
            let (w, h) = (cam.width as usize, cam.height as usize);
            (0..w * h).map(move |i| cam.pixel_ray((i % w) as f64, (i / w) as f64))
        })
        .collect();
    let dists: Vec<Option<f64>> = rays
        .par_iter()
        .map(|ray| {
            intersect_mesh(&mesh, &bvh, ray).map(|(_, h)| {
                let p = ray.at(h.t);
                distance_to_analytic(gt, p)
            })
        })
        .collect();
    let used: Vec<f64> = dists.iter().flatten().copied().collect();
    let missed = dists.len() - used.len();
    if used.is_empty() {
        bail!("no test ray hit the trained surface");
    }
    let rmse = (used.iter().map(|d| d * d).sum::<f64>() / used.len() as f64).sqrt();
    Ok(SurfaceRmse {
        rmse,
        rays_used: used.len(),
        rays_missed: missed,
    })
}

/// Minimum distance from a point to an analytic surface: exact for flat,
/// Newton projection on the squared distance for sine.
pub fn distance_to_analytic(gt: &SurfaceDesc, p: Vec3) -> f64 {
    match gt {
        SurfaceDesc::Flat { height } => (p.z - height).abs(),
        SurfaceDesc::Sine {
            base_height,
            amplitude,
            frequency,
            phase,
        } => {
            let (a, b, fx, fy, ph) = (*base_height, *amplitude, frequency[0], frequency[1], *phase);
            let s = |x: f64, y: f64| a + b * (fx * x + fy * y + ph).sin();
            let sx = |x: f64, y: f64| b * fx * (fx * x + fy * y + ph).cos();
            let sy = |x: f64, y: f64| b * fy * (fx * x + fy * y + ph).cos();
            let sxx = |x: f64, y: f64| -b * fx * fx * (fx * x + fy * y + ph).sin();
            let sxy = |x: f64, y: f64| -b * fx * fy * (fx * x + fy * y + ph).sin();
            let syy = |x: f64, y: f64| -b * fy * fy * (fx * x + fy * y + ph).sin();
            // Minimize g(x,y) = (x-px)^2 + (y-py)^2 + (s(x,y)-pz)^2.
            let (mut x, mut y) = (p.x, p.y);
            for _ in 0..30 {
                let dz = s(x, y) - p.z;
                let gx = 2.0 * (x - p.x) + 2.0 * dz * sx(x, y);
                let gy = 2.0 * (y - p.y) + 2.0 * dz * sy(x, y);
                let hxx = 2.0 + 2.0 * (sx(x, y) * sx(x, y) + dz * sxx(x, y));
                let hxy = 2.0 * (sx(x, y) * sy(x, y) + dz * sxy(x, y));
                let hyy = 2.0 + 2.0 * (sy(x, y) * sy(x, y) + dz * syy(x, y));
                let det = hxx * hyy - hxy * hxy;
                if det.abs() < 1e-12 {
                    break;
                }
                let step_x = (gx * hyy - gy * hxy) / det;
                let step_y = (gy * hxx - gx * hxy) / det;
                x -= step_x;
                y -= step_y;
                if step_x.abs() + step_y.abs() < 1e-14 {
                    break;
                }
            }
            let dx = x - p.x;
            let dy = y - p.y;
            let dz = s(x, y) - p.z;
            (dx * dx + dy * dy + dz * dz).sqrt()
        }
        SurfaceDesc::Mesh { .. } => unreachable!(),
    }
}
