//! The refraction-aware forward render and the backward chain tying the
//! surface, refraction, and Gaussian modules together.
//!
//! Each pixel ray either refracts once through the water surface and gathers
//! Gaussians along the bent ray, or (dewatered mode, or matched indices)
//! gathers along the primary ray directly. The matched-index case n1 = n2
//! reuses the dewatered path so both renders are bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::gaussian::{
    alpha_backward, composite, composite_backward, gather_and_sort, CompositeAux, FieldGrads,
    GaussianField, RaySample,
};
use crate::heightfield::{HeightFieldNet, NetGrads};
use crate::refract::{refract, refract_backward, RefractionConfig};
use crate::sh;
use crate::trace::{recursive_subdivision_trace, surface_backward, TraceConfig, TracedSurface};
use crate::vec3::{Ray, Vec3};

#[cfg(feature = "rayon")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderError {
    /// The camera center is at or below the water surface.
    CameraUnderwater,
}

impl core::fmt::Display for RenderError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RenderError::CameraUnderwater => write!(f, "camera center is below the water surface"),
        }
    }
}

/// Scene handles for one render pass. `net: None` renders dewatered.
#[derive(Clone, Copy)]
pub struct RenderScene<'a> {
    pub net: Option<&'a HeightFieldNet>,
    pub field: &'a GaussianField,
    pub refraction: RefractionConfig,
    pub trace: TraceConfig,
}

/// Per-pixel data retained in train mode for the backward pass.
#[derive(Debug, Clone)]
pub struct PixelTape {
    pub samples: Vec<RaySample>,
    pub aux: CompositeAux,
    /// The ray the Gaussians were gathered along; differs from the primary
    /// ray only for refracted pixels.
    pub gather_ray: Ray,
    /// Set when the pixel went through the surface.
    pub refracted: bool,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Linear color per pixel, row major.
    pub colors: Vec<[f64; 3]>,
    /// True where the ray passed through the surface (refracted mode) or
    /// gathered any Gaussian (dewatered mode). False pixels are background.
    pub mask: Vec<bool>,
    /// Surface depth along the primary ray; NaN where there is none.
    pub depth: Vec<f64>,
    pub traced: Option<TracedSurface>,
    pub tapes: Option<Vec<PixelTape>>,
}

fn shade(
    field: &GaussianField,
    ray: &Ray,
    retain: bool,
    refracted: bool,
) -> ([f64; 3], bool, Option<PixelTape>) {
    let samples = gather_and_sort(field, ray);
    let (c, aux) = composite(&samples, field.background);
    let mask = if refracted { true } else { !samples.is_empty() };
    let tape = retain.then(|| PixelTape {
        samples,
        aux,
        gather_ray: *ray,
        refracted,
    });
    (c, mask, tape)
}

pub fn render_forward(
    camera: &Camera,
    scene: &RenderScene,
    train: bool,
) -> Result<RenderOutput, RenderError> {
    let w = camera.width as usize;
    let h = camera.height as usize;
    let npix = w * h;
    let eta = scene.refraction.eta();
    let refracting = scene.net.is_some() && eta != 1.0;

    let rays: Vec<Ray> = (0..npix)
        .map(|i| camera.pixel_ray((i % w) as f64, (i / w) as f64))
        .collect();

    let traced = if refracting {
        let net = scene.net.unwrap();
        let center = camera.center();
        let d = net.domain;
        if center.x >= d.x_min
            && center.x <= d.x_max
            && center.y >= d.y_min
            && center.y <= d.y_max
            && center.z <= net.height_only(center.x, center.y)
        {
            return Err(RenderError::CameraUnderwater);
        }
        let mut cfg = scene.trace;
        cfg.with_tapes = train;
        Some(recursive_subdivision_trace(net, &rays, cfg))
    } else {
        None
    };

    let per_pixel = |i: usize| -> ([f64; 3], bool, f64, Option<PixelTape>) {
        let ray = &rays[i];
        match &traced {
            Some(tr) => match tr.hits[i] {
                Some(hit) => match refract(ray.dir, hit.normal, eta) {
                    Ok(t_dir) => {
                        let refr = Ray::new(hit.point, t_dir);
                        let (c, _, tape) = shade(scene.field, &refr, train, true);
                        (c, true, hit.t, tape)
                    }
                    Err(_) => (scene.field.background, false, hit.t, None),
                },
                None => {
                    // The surface only spans the height-field domain; rays
                    // beside it see the scene directly.
                    let (c, mask, tape) = shade(scene.field, ray, train, false);
                    (c, mask, f64::NAN, tape)
                }
            },
            None => {
                let (c, mask, tape) = shade(scene.field, ray, train, false);
                (c, mask, f64::NAN, tape)
            }
        }
    };

    #[cfg(feature = "rayon")]
    let results: Vec<_> = (0..npix).into_par_iter().map(per_pixel).collect();
    #[cfg(not(feature = "rayon"))]
    let results: Vec<_> = (0..npix).map(per_pixel).collect();

    let mut colors = Vec::with_capacity(npix);
    let mut mask = Vec::with_capacity(npix);
    let mut depth = Vec::with_capacity(npix);
    let mut tapes = train.then(|| Vec::with_capacity(npix));
    for (i, (c, m, t, tape)) in results.into_iter().enumerate() {
        colors.push(c);
        mask.push(m);
        depth.push(t);
        if let Some(tapes) = &mut tapes {
            tapes.push(tape.unwrap_or(PixelTape {
                samples: Vec::new(),
                aux: CompositeAux {
                    transmittance: Vec::new(),
                    used: 0,
                    t_end: 1.0,
                },
                gather_ray: rays[i],
                refracted: false,
            }));
        }
    }
    Ok(RenderOutput {
        width: w,
        height: h,
        colors,
        mask,
        depth,
        traced,
        tapes,
    })
}

/// Renders through a pre-traced surface (for example a substituted mesh):
/// per-pixel refraction at the stored hits, then the usual gather. Evaluation
/// only; the surface is treated as fixed geometry.
pub fn render_with_surface(
    camera: &Camera,
    field: &GaussianField,
    refraction: RefractionConfig,
    traced: &TracedSurface,
) -> RenderOutput {
    let w = camera.width as usize;
    let h = camera.height as usize;
    let npix = w * h;
    assert_eq!(traced.hits.len(), npix, "trace was built for a different ray batch");
    let eta = refraction.eta();

    let per_pixel = |i: usize| -> ([f64; 3], bool, f64) {
        let ray = camera.pixel_ray((i % w) as f64, (i / w) as f64);
        match traced.hits[i] {
            Some(hit) => match refract(ray.dir, hit.normal, eta) {
                Ok(t_dir) => {
                    let refr = Ray::new(hit.point, t_dir);
                    let (c, _, _) = shade(field, &refr, false, true);
                    (c, true, hit.t)
                }
                Err(_) => (field.background, false, hit.t),
            },
            None => {
                let (c, mask, _) = shade(field, &ray, false, false);
                (c, mask, f64::NAN)
            }
        }
    };

    #[cfg(feature = "rayon")]
    let results: Vec<_> = (0..npix).into_par_iter().map(per_pixel).collect();
    #[cfg(not(feature = "rayon"))]
    let results: Vec<_> = (0..npix).map(per_pixel).collect();

    let mut colors = Vec::with_capacity(npix);
    let mut mask = Vec::with_capacity(npix);
    let mut depth = Vec::with_capacity(npix);
    for (c, m, t) in results {
        colors.push(c);
        mask.push(m);
        depth.push(t);
    }
    RenderOutput {
        width: w,
        height: h,
        colors,
        mask,
        depth,
        traced: None,
        tapes: None,
    }
}

/// Gradients produced by one backward pass.
pub struct RenderGrads {
    pub field: FieldGrads,
    pub net: Option<NetGrads>,
}

/// Pushes a per-pixel loss gradient image back to every Gaussian parameter
/// and, for refracted pixels, through Snell's law and the surface into the
/// height-field network parameters.
pub fn render_backward(
    camera: &Camera,
    scene: &RenderScene,
    output: &RenderOutput,
    dl_dimage: &[[f64; 3]],
) -> RenderGrads {
    let npix = output.width * output.height;
    assert_eq!(dl_dimage.len(), npix);
    let tapes = output
        .tapes
        .as_ref()
        .expect("render_backward needs a train-mode forward pass");
    let eta = scene.refraction.eta();
    let coeffs3 = sh::coeff_count(scene.field.sh_degree) * 3;
    let nverts = output
        .traced
        .as_ref()
        .map(|t| t.mesh.vertices.len())
        .unwrap_or(0);

    let pixel_pass = |(field_grads, dl_dz): &mut (FieldGrads, Vec<f64>), i: usize| {
        let dl_dc = dl_dimage[i];
        if dl_dc == [0.0; 3] {
            return;
        }
        let tape = &tapes[i];
        if tape.samples.is_empty() && !tape.refracted {
            return;
        }
        let sample_grads =
            composite_backward(&tape.samples, &tape.aux, scene.field.background, dl_dc);
        let mut dl_dp = Vec3::ZERO;
        let mut dl_dd = Vec3::ZERO;
        for (k, &(dl_da, dl_dcol)) in sample_grads.iter().enumerate() {
            let s = &tape.samples[k];
            let gi = s.index as usize;
            let g = &scene.field.gaussians[gi];
            dl_dd += sh::sh_backward(
                &g.sh,
                scene.field.sh_degree,
                tape.gather_ray.dir,
                dl_dcol,
                &mut field_grads.sh[gi * coeffs3..(gi + 1) * coeffs3],
            );
            let (gg, dp, dd) = alpha_backward(g, &tape.gather_ray, s.clamped, dl_da);
            field_grads.add_pose(gi, &gg);
            dl_dp += dp;
            dl_dd += dd;
        }
        if tape.refracted {
            let traced = output.traced.as_ref().unwrap();
            let hit = traced.hits[i].as_ref().unwrap();
            let primary = camera.pixel_ray(
                (i % output.width) as f64,
                (i / output.width) as f64,
            );
            let (_, dl_dn) = refract_backward(primary.dir, hit.normal, eta, dl_dd);
            surface_backward(traced, &primary, hit, dl_dp, dl_dn, dl_dz);
        }
    };

    #[cfg(feature = "rayon")]
    let (field_grads, dl_dz) = (0..npix)
        .into_par_iter()
        .fold(
            || (FieldGrads::zeros(scene.field), vec![0.0; nverts]),
            |mut acc, i| {
                pixel_pass(&mut acc, i);
                acc
            },
        )
        .reduce(
            || (FieldGrads::zeros(scene.field), vec![0.0; nverts]),
            |mut a, b| {
                a.0.merge(&b.0);
                for (x, y) in a.1.iter_mut().zip(&b.1) {
                    *x += *y;
                }
                a
            },
        );
    #[cfg(not(feature = "rayon"))]
    let (field_grads, dl_dz) = {
        let mut acc = (FieldGrads::zeros(scene.field), vec![0.0; nverts]);
        for i in 0..npix {
            pixel_pass(&mut acc, i);
        }
        acc
    };

    // One MLP backward per touched vertex, using the tape stored when the
    // vertex was lifted.
    let net_grads = match (&output.traced, scene.net) {
        (Some(traced), Some(net)) => {
            let mut grads = NetGrads::zeros_like(net);
            for (v, &g) in dl_dz.iter().enumerate() {
                if g != 0.0 {
                    net.height_backward(&traced.mesh.tapes[v], g, &mut grads);
                }
            }
            Some(grads)
        }
        _ => None,
    };

    RenderGrads {
        field: field_grads,
        net: net_grads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::Aabb;
    use crate::gaussian::Gaussian;
    use crate::heightfield::Domain;
    use crate::math;
    use crate::rng::SplitMix64;
    use crate::trace::NormalMode;

    fn down_camera(z: f64, res: u32) -> Camera {
        Camera::look_at(
            Vec3::new(0.0, 0.0, z),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            res as f64 * 0.8,
            res as f64 * 0.8,
            res,
            res,
        )
    }

    fn trace_cfg(n: usize, levels: usize) -> TraceConfig {
        TraceConfig {
            nx: n,
            ny: n,
            levels,
            normal_mode: NormalMode::Phong,
            with_tapes: false,
        }
    }

    fn flat_net(z0: f64) -> HeightFieldNet {
        HeightFieldNet::init_flat(Domain::centered(2.0), z0, 1.0, &[16, 16], 2, 7)
    }

    fn point_gaussian(mu: Vec3, size: f64, o: f64, dc: [f64; 3]) -> Gaussian {
        Gaussian {
            mu,
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: Vec3::splat(math::ln(size)),
            logit_opacity: math::logit(o),
            sh: alloc::vec![dc[0], dc[1], dc[2]],
        }
    }

    #[test]
    fn empty_field_renders_background() {
        let bg = [0.1, 0.2, 0.3];
        let field = GaussianField::new(Vec::new(), bg, 0);
        let net = flat_net(0.0);
        let cam = down_camera(2.0, 8);
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(10, 1),
        };
        let out = render_forward(&cam, &scene, false).unwrap();
        assert!(out.colors.iter().all(|&c| c == bg));
    }

    #[test]
    fn matched_indices_bit_equal_dewatered() {
        let mut rng = SplitMix64::new(5);
        let gaussians: Vec<Gaussian> = (0..20)
            .map(|_| {
                point_gaussian(
                    Vec3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-2.0, -0.5)),
                    0.2,
                    0.6,
                    [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)],
                )
            })
            .collect();
        let field = GaussianField::new(gaussians, [0.0; 3], 0);
        let net = flat_net(0.0);
        let cam = down_camera(2.0, 16);
        let refracted = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig { n1: 1.2, n2: 1.2 },
            trace: trace_cfg(10, 1),
        };
        let dewatered = RenderScene {
            net: None,
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(10, 1),
        };
        let a = render_forward(&cam, &refracted, false).unwrap();
        let b = render_forward(&cam, &dewatered, false).unwrap();
        assert!(b.mask.iter().any(|&m| m), "degenerate: nothing gathered");
        assert_eq!(a.colors, b.colors);
    }

    #[test]
    fn underwater_camera_rejected() {
        let field = GaussianField::new(Vec::new(), [0.0; 3], 0);
        let net = flat_net(0.5);
        let cam = down_camera(0.2, 8);
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(8, 0),
        };
        assert_eq!(
            render_forward(&cam, &scene, false).unwrap_err(),
            RenderError::CameraUnderwater
        );
    }

    /// Independent planar-refraction shading of a single Gaussian: intersect
    /// z = 0 directly, apply scalar Snell, evaluate the max response.
    fn planar_oracle_alpha(g: &Gaussian, cam: &Camera, px: usize, py: usize, eta: f64) -> f64 {
        let ray = cam.pixel_ray(px as f64, py as f64);
        let t = -ray.origin.z / ray.dir.z;
        let p = ray.at(t);
        let sin1 = math::sqrt(ray.dir.x * ray.dir.x + ray.dir.y * ray.dir.y);
        let sin2 = eta * sin1;
        let cos2 = math::sqrt(1.0 - sin2 * sin2);
        let dir = if sin1 > 1e-12 {
            Vec3::new(
                ray.dir.x / sin1 * sin2,
                ray.dir.y / sin1 * sin2,
                -cos2,
            )
        } else {
            Vec3::new(0.0, 0.0, -1.0)
        };
        let refr = Ray::new(p, dir);
        crate::gaussian::max_response_alpha(g, &refr)
            .map(|(_, a, _)| a)
            .unwrap_or(0.0)
    }

    #[test]
    fn flat_refraction_peak_matches_planar_oracle() {
        let g = point_gaussian(Vec3::new(0.35, -0.2, -1.0), 0.08, 0.9, [0.8, 0.8, 0.8]);
        let field = GaussianField::new(alloc::vec![g.clone()], [0.0; 3], 0);
        let net = flat_net(0.0);
        let cam = down_camera(1.5, 32);
        let eta = RefractionConfig::default().eta();
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(20, 2),
        };
        let out = render_forward(&cam, &scene, false).unwrap();
        let argmax = |vals: &dyn Fn(usize, usize) -> f64| {
            let mut best = (0usize, 0usize);
            let mut bv = -1.0;
            for py in 0..32 {
                for px in 0..32 {
                    let v = vals(px, py);
                    if v > bv {
                        bv = v;
                        best = (px, py);
                    }
                }
            }
            best
        };
        let ours = argmax(&|px, py| out.colors[py * 32 + px][0]);
        let oracle = argmax(&|px, py| planar_oracle_alpha(&g, &cam, px, py, eta));
        let dx = ours.0 as f64 - oracle.0 as f64;
        let dy = ours.1 as f64 - oracle.1 as f64;
        assert!(dx.abs() <= 1.0 && dy.abs() <= 1.0, "{ours:?} vs {oracle:?}");
    }

    #[test]
    fn flat_surface_refracted_dirs_match_closed_form() {
        let field = GaussianField::new(Vec::new(), [0.0; 3], 0);
        let net = flat_net(0.0);
        let cam = down_camera(2.0, 16);
        let eta = RefractionConfig::default().eta();
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(15, 2),
        };
        let out = render_forward(&cam, &scene, false).unwrap();
        let traced = out.traced.as_ref().unwrap();
        for py in 0..16 {
            for px in 0..16 {
                let i = py * 16 + px;
                let Some(hit) = traced.hits[i] else { continue };
                let ray = cam.pixel_ray(px as f64, py as f64);
                let got = refract(ray.dir, hit.normal, eta).unwrap();
                let sin1 = math::sqrt(ray.dir.x * ray.dir.x + ray.dir.y * ray.dir.y);
                let sin2 = eta * sin1;
                let cos2 = math::sqrt(1.0 - sin2 * sin2);
                let want = if sin1 > 1e-12 {
                    Vec3::new(ray.dir.x / sin1 * sin2, ray.dir.y / sin1 * sin2, -cos2)
                } else {
                    Vec3::new(0.0, 0.0, -1.0)
                };
                assert!((got - want).norm() < 1e-9, "pixel {px},{py}");
            }
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let field = GaussianField::new(
            alloc::vec![point_gaussian(Vec3::new(0.0, 0.0, -1.0), 0.3, 0.5, [0.4; 3])],
            [0.0; 3],
            0,
        );
        let net = flat_net(0.0);
        let cam = down_camera(2.0, 8);
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(10, 1),
        };
        let out = render_forward(&cam, &scene, true).unwrap();
        let grads = render_backward(&cam, &scene, &out, &alloc::vec![[0.0; 3]; 64]);
        assert!(grads.field.mu.iter().all(|&v| v == Vec3::ZERO));
        assert!(grads.field.sh.iter().all(|&v| v == 0.0));
        let ng = grads.net.unwrap();
        assert!(ng.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dewatered_backward_has_no_net_grads() {
        let field = GaussianField::new(
            alloc::vec![point_gaussian(Vec3::new(0.0, 0.0, -1.0), 0.6, 0.5, [0.4; 3])],
            [0.0; 3],
            0,
        );
        let cam = down_camera(2.0, 8);
        let scene = RenderScene {
            net: None,
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(10, 1),
        };
        let out = render_forward(&cam, &scene, true).unwrap();
        assert!(out.mask.iter().any(|&m| m), "degenerate: nothing gathered");
        let grads = render_backward(&cam, &scene, &out, &alloc::vec![[1.0; 3]; 64]);
        assert!(grads.net.is_none());
        // Gaussian grads flow even in dewatered mode.
        assert!(grads.field.mu.iter().any(|&v| v != Vec3::ZERO));
    }

    #[test]
    fn substituted_own_mesh_matches_net_render() {
        let mut rng = SplitMix64::new(9);
        let gaussians: Vec<Gaussian> = (0..10)
            .map(|_| {
                point_gaussian(
                    Vec3::new(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-1.5, -0.8)),
                    0.25,
                    0.6,
                    [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)],
                )
            })
            .collect();
        let field = GaussianField::new(gaussians, [0.1; 3], 0);
        let net = flat_net(0.2);
        let cam = down_camera(2.0, 16);
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(12, 0),
        };
        let a = render_forward(&cam, &scene, false).unwrap();
        // Feed the very mesh the net trace produced back through the fixed
        // path; levels=0 so both are a single BVH pass over the same geometry.
        let traced = a.traced.as_ref().unwrap();
        let rays: Vec<Ray> = (0..256)
            .map(|i| cam.pixel_ray((i % 16) as f64, (i / 16) as f64))
            .collect();
        let fixed = crate::trace::trace_fixed_mesh(traced.mesh.clone(), &rays, NormalMode::Phong);
        let b = render_with_surface(&cam, &field, RefractionConfig::default(), &fixed);
        assert_eq!(a.colors, b.colors);
    }

    fn toy_scene_field(seed: u64) -> GaussianField {
        let mut rng = SplitMix64::new(seed);
        let gaussians: Vec<Gaussian> = (0..3)
            .map(|_| {
                let mut g = point_gaussian(
                    Vec3::new(
                        rng.uniform(-0.5, 0.5),
                        rng.uniform(-0.5, 0.5),
                        rng.uniform(-1.5, -0.7),
                    ),
                    rng.uniform(0.15, 0.3),
                    rng.uniform(0.3, 0.7),
                    [
                        rng.uniform(-0.4, 0.4),
                        rng.uniform(-0.4, 0.4),
                        rng.uniform(-0.4, 0.4),
                    ],
                );
                g.rotation = [
                    1.0 + rng.normal() * 0.1,
                    rng.normal() * 0.1,
                    rng.normal() * 0.1,
                    rng.normal() * 0.1,
                ];
                g.log_scale += Vec3::new(rng.normal(), rng.normal(), rng.normal()) * 0.2;
                g
            })
            .collect();
        GaussianField::new(gaussians, [0.05, 0.05, 0.05], 0)
    }

    fn wavy_toy_net(seed: u64) -> HeightFieldNet {
        let mut net =
            HeightFieldNet::init_flat(Domain::centered(2.0), 0.0, 0.05, &[16, 16], 2, seed);
        let mut rng = SplitMix64::new(seed ^ 0xabc);
        let last = net.layers.last_mut().unwrap();
        for w in &mut last.w {
            *w = rng.normal() * 0.3;
        }
        net
    }

    /// Weighted-sum image loss for finite differencing the whole pipeline.
    fn toy_loss(
        net: &HeightFieldNet,
        field: &GaussianField,
        cam: &Camera,
        weights: &[[f64; 3]],
    ) -> f64 {
        let scene = RenderScene {
            net: Some(net),
            field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(20, 1),
        };
        let out = render_forward(cam, &scene, true).unwrap();
        let mut l = 0.0;
        for (c, w) in out.colors.iter().zip(weights) {
            for ch in 0..3 {
                l += c[ch] * w[ch];
            }
        }
        l
    }

    #[test]
    fn end_to_end_gradients_match_fd() {
        let field = toy_scene_field(13);
        let net = wavy_toy_net(29);
        let cam = down_camera(2.0, 8);
        let mut rng = SplitMix64::new(91);
        let weights: Vec<[f64; 3]> = (0..64)
            .map(|_| [rng.normal(), rng.normal(), rng.normal()])
            .collect();

        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(20, 1),
        };
        let out = render_forward(&cam, &scene, true).unwrap();
        let grads = render_backward(&cam, &scene, &out, &weights);
        let ng = grads.net.unwrap().flat();
        let eps = 1e-4;
        let tol = 1e-3;
        let check = |name: &str, got: f64, fd: f64| {
            let denom = fd.abs().max(got.abs()).max(1e-5);
            assert!((fd - got).abs() / denom < tol, "{name}: {got} vs fd {fd}");
        };

        // A spread of MLP weights.
        let params = net.params_flat();
        let idx: Vec<usize> = (0..10)
            .map(|_| rng.next_u64() as usize % params.len())
            .collect();
        for &pi in &idx {
            let mut hi = net.clone();
            let mut p = params.clone();
            p[pi] += eps;
            hi.set_params_flat(&p);
            let mut lo = net.clone();
            p[pi] -= 2.0 * eps;
            lo.set_params_flat(&p);
            let fd = (toy_loss(&hi, &field, &cam, &weights)
                - toy_loss(&lo, &field, &cam, &weights))
                / (2.0 * eps);
            check("mlp weight", ng[pi], fd);
        }

        // Every Gaussian parameter.
        let refresh = |f: &GaussianField| {
            let mut f2 = f.clone();
            f2.rebuild_bvh();
            f2
        };
        for gi in 0..field.len() {
            let fd_of = |mutate: &dyn Fn(&mut Gaussian, f64)| {
                let mut hi = field.clone();
                mutate(&mut hi.gaussians[gi], eps);
                let hi = refresh(&hi);
                let mut lo = field.clone();
                mutate(&mut lo.gaussians[gi], -eps);
                let lo = refresh(&lo);
                (toy_loss(&net, &hi, &cam, &weights) - toy_loss(&net, &lo, &cam, &weights))
                    / (2.0 * eps)
            };
            for a in 0..3 {
                check(
                    "mu",
                    grads.field.mu[gi].get(a),
                    fd_of(&|g, e| match a {
                        0 => g.mu.x += e,
                        1 => g.mu.y += e,
                        _ => g.mu.z += e,
                    }),
                );
                check(
                    "scale",
                    grads.field.log_scale[gi].get(a),
                    fd_of(&|g, e| match a {
                        0 => g.log_scale.x += e,
                        1 => g.log_scale.y += e,
                        _ => g.log_scale.z += e,
                    }),
                );
            }
            for k in 0..4 {
                check(
                    "rotation",
                    grads.field.rotation[gi][k],
                    fd_of(&|g, e| g.rotation[k] += e),
                );
            }
            check(
                "opacity",
                grads.field.logit_opacity[gi],
                fd_of(&|g, e| g.logit_opacity += e),
            );
            for c in 0..3 {
                check(
                    "sh",
                    grads.field.sh[gi * 3 + c],
                    fd_of(&|g, e| g.sh[c] += e),
                );
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let field = toy_scene_field(3);
        let net = wavy_toy_net(4);
        let cam = down_camera(2.0, 16);
        let scene = RenderScene {
            net: Some(&net),
            field: &field,
            refraction: RefractionConfig::default(),
            trace: trace_cfg(15, 2),
        };
        let a = render_forward(&cam, &scene, false).unwrap();
        let b = render_forward(&cam, &scene, false).unwrap();
        assert_eq!(a.colors, b.colors);
    }

    #[test]
    fn random_init_field_is_bounded() {
        let bounds = Aabb {
            min: Vec3::new(-1.0, -1.0, -2.0),
            max: Vec3::new(1.0, 1.0, -0.5),
        };
        let f = GaussianField::random_init(100, bounds, 1, [0.0; 3], 42);
        assert_eq!(f.len(), 100);
        for g in &f.gaussians {
            assert!(bounds.contains(&Aabb { min: g.mu, max: g.mu }));
        }
    }
}
