//! Anisotropic 3D Gaussian primitives with max-response ray evaluation and
//! front-to-back alpha compositing, plus the analytic backward pass for every
//! parameter block and for the ray itself.

use alloc::vec;
use alloc::vec::Vec;

use crate::bvh::{Aabb, Bvh};
use crate::math;
use crate::rng::SplitMix64;
use crate::sh;
use crate::vec3::{Mat3, Ray, Vec3};

/// Response cutoff below which a Gaussian does not contribute to a ray.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Per-sample alpha ceiling keeping (1 - alpha) away from zero.
pub const ALPHA_CLAMP: f64 = 0.999;
/// Transmittance threshold for early termination during compositing.
pub const T_MIN: f64 = 1e-3;
/// AABB extent of each Gaussian in standard deviations.
pub const K_SIGMA: f64 = 3.0;
/// Minimum accepted max-response depth.
pub const T_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mu: Vec3,
    /// Quaternion (w, x, y, z); normalized on use, stored unconstrained.
    pub rotation: [f64; 4],
    /// Log of per-axis standard deviations.
    pub log_scale: Vec3,
    /// Opacity stored as a logit.
    pub logit_opacity: f64,
    /// SH color coefficients, coefficient major (see [`crate::sh`]).
    pub sh: Vec<f64>,
}

impl Gaussian {
    pub fn scale(&self) -> Vec3 {
        Vec3::new(
            math::exp(self.log_scale.x),
            math::exp(self.log_scale.y),
            math::exp(self.log_scale.z),
        )
    }

    pub fn opacity(&self) -> f64 {
        math::sigmoid(self.logit_opacity)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let n = quat_norm(&self.rotation);
        let [w, x, y, z] = [
            self.rotation[0] / n,
            self.rotation[1] / n,
            self.rotation[2] / n,
            self.rotation[3] / n,
        ];
        Mat3::from_rows(
            Vec3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ),
            Vec3::new(
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ),
            Vec3::new(
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ),
        )
    }

    /// World-space AABB of the k-sigma ellipsoid.
    pub fn aabb(&self, k: f64) -> Aabb {
        let r = self.rotation_matrix();
        let s = self.scale();
        let mut half = Vec3::ZERO;
        for i in 0..3 {
            let row = r.rows[i];
            let v = row.x * row.x * s.x * s.x
                + row.y * row.y * s.y * s.y
                + row.z * row.z * s.z * s.z;
            let h = k * math::sqrt(v);
            match i {
                0 => half.x = h,
                1 => half.y = h,
                _ => half.z = h,
            }
        }
        Aabb {
            min: self.mu - half,
            max: self.mu + half,
        }
    }
}

fn quat_norm(q: &[f64; 4]) -> f64 {
    math::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
}

#[derive(Debug, Clone)]
pub struct GaussianField {
    pub gaussians: Vec<Gaussian>,
    pub background: [f64; 3],
    pub sh_degree: usize,
    bvh: Option<Bvh>,
}

impl GaussianField {
    pub fn new(gaussians: Vec<Gaussian>, background: [f64; 3], sh_degree: usize) -> GaussianField {
        let mut f = GaussianField {
            gaussians,
            background,
            sh_degree,
            bvh: None,
        };
        f.rebuild_bvh();
        f
    }

    /// Random initialization inside a world-space box: uniform centers,
    /// identity-ish rotations, isotropic scale from the box diagonal,
    /// mid-range opacity, random gray-ish DC color.
    pub fn random_init(
        n: usize,
        bounds: Aabb,
        sh_degree: usize,
        background: [f64; 3],
        seed: u64,
    ) -> GaussianField {
        let mut rng = SplitMix64::new(seed);
        let diag = (bounds.max - bounds.min).norm();
        let base_scale = math::ln(diag / math::powf(n as f64, 1.0 / 3.0) * 0.5);
        let coeffs = sh::coeff_count(sh_degree) * 3;
        let gaussians = (0..n)
            .map(|_| {
                let mu = Vec3::new(
                    rng.uniform(bounds.min.x, bounds.max.x),
                    rng.uniform(bounds.min.y, bounds.max.y),
                    rng.uniform(bounds.min.z, bounds.max.z),
                );
                let rotation = [
                    1.0 + rng.normal() * 0.01,
                    rng.normal() * 0.01,
                    rng.normal() * 0.01,
                    rng.normal() * 0.01,
                ];
                let mut sh = vec![0.0; coeffs];
                for c in sh.iter_mut().take(3) {
                    *c = rng.uniform(-0.5, 0.5);
                }
                Gaussian {
                    mu,
                    rotation,
                    log_scale: Vec3::splat(base_scale + rng.normal() * 0.1),
                    logit_opacity: math::logit(0.1),
                    sh,
                }
            })
            .collect();
        GaussianField::new(gaussians, background, sh_degree)
    }

    /// Rebuild the spatial index after any parameter change.
    pub fn rebuild_bvh(&mut self) {
        if self.gaussians.is_empty() {
            self.bvh = None;
        } else {
            let boxes: Vec<Aabb> = self.gaussians.iter().map(|g| g.aabb(K_SIGMA)).collect();
            self.bvh = Some(Bvh::build(&boxes));
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Per-ray contribution of one Gaussian at its maximum-response point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub index: u32,
    pub t_max: f64,
    pub alpha: f64,
    /// True when alpha was clamped at [`ALPHA_CLAMP`] (gradient is zero).
    pub clamped: bool,
    pub color: [f64; 3],
}

/// Ray mapped into the Gaussian's canonical frame: p_g = S^-1 R^T (o - mu),
/// d_g = S^-1 R^T d. The direction is deliberately not renormalized.
pub fn canonical_transform(g: &Gaussian, ray: &Ray) -> (Vec3, Vec3) {
    let r = g.rotation_matrix();
    let s = g.scale();
    let w = r.tr_mul_vec(ray.origin - g.mu);
    let v = r.tr_mul_vec(ray.dir);
    (
        Vec3::new(w.x / s.x, w.y / s.y, w.z / s.z),
        Vec3::new(v.x / s.x, v.y / s.y, v.z / s.z),
    )
}

/// Maximum response of the Gaussian along the ray, or None when negligible:
/// alpha = o * exp(-|p_g x d_g|^2 / 2) at t_max = -(p_g . d_g)/|d_g|^2.
pub fn max_response_alpha(g: &Gaussian, ray: &Ray) -> Option<(f64, f64, bool)> {
    let (p_g, d_g) = canonical_transform(g, ray);
    let dd = d_g.dot(d_g);
    if dd < 1e-30 {
        return None;
    }
    let t_max = -p_g.dot(d_g) / dd;
    if t_max <= T_EPSILON {
        return None;
    }
    let cr = p_g.cross(d_g);
    let alpha_raw = g.opacity() * math::exp(-0.5 * cr.dot(cr));
    if alpha_raw < ALPHA_MIN {
        return None;
    }
    let clamped = alpha_raw > ALPHA_CLAMP;
    let alpha = if clamped { ALPHA_CLAMP } else { alpha_raw };
    Some((t_max, alpha, clamped))
}

/// All contributing samples along the ray, front to back, ties broken by
/// Gaussian index. Colors are evaluated from SH at the world direction.
pub fn gather_and_sort(field: &GaussianField, ray: &Ray) -> Vec<RaySample> {
    let mut out = Vec::new();
    let Some(bvh) = &field.bvh else {
        return out;
    };
    bvh.traverse(ray, f64::INFINITY, |gi, t| {
        let g = &field.gaussians[gi];
        if let Some((t_max, alpha, clamped)) = max_response_alpha(g, ray) {
            out.push(RaySample {
                index: gi as u32,
                t_max,
                alpha,
                clamped,
                color: sh::sh_eval(&g.sh, field.sh_degree, ray.dir),
            });
        }
        t
    });
    out.sort_unstable_by(|a, b| {
        a.t_max
            .partial_cmp(&b.t_max)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    out
}

/// What backward needs from the forward compositing pass.
#[derive(Debug, Clone)]
pub struct CompositeAux {
    /// Transmittance in front of each processed sample.
    pub transmittance: Vec<f64>,
    /// Number of samples actually composited before early termination.
    pub used: usize,
    /// Transmittance remaining for the background.
    pub t_end: f64,
}

/// Front-to-back alpha compositing with background and early termination.
pub fn composite(samples: &[RaySample], background: [f64; 3]) -> ([f64; 3], CompositeAux) {
    let mut c = [0.0; 3];
    let mut t = 1.0;
    let mut trans = Vec::with_capacity(samples.len());
    let mut used = 0;
    for s in samples {
        if t < T_MIN {
            break;
        }
        trans.push(t);
        for ch in 0..3 {
            c[ch] += t * s.alpha * s.color[ch];
        }
        t *= 1.0 - s.alpha;
        used += 1;
    }
    for ch in 0..3 {
        c[ch] += t * background[ch];
    }
    (
        c,
        CompositeAux {
            transmittance: trans,
            used,
            t_end: t,
        },
    )
}

/// Backward of [`composite`]: per processed sample, gradients of the loss
/// with respect to its alpha and color.
pub fn composite_backward(
    samples: &[RaySample],
    aux: &CompositeAux,
    background: [f64; 3],
    dl_dc: [f64; 3],
) -> Vec<(f64, [f64; 3])> {
    let mut out = vec![(0.0, [0.0; 3]); aux.used];
    // Suffix accumulator: sum over later samples of T_i alpha_i c_i, plus the
    // background term, per channel.
    let mut suffix = [
        aux.t_end * background[0],
        aux.t_end * background[1],
        aux.t_end * background[2],
    ];
    for k in (0..aux.used).rev() {
        let s = &samples[k];
        let t_k = aux.transmittance[k];
        let mut dl_da = 0.0;
        let mut dl_dcol = [0.0; 3];
        for ch in 0..3 {
            dl_da += dl_dc[ch] * (t_k * s.color[ch] - suffix[ch] / (1.0 - s.alpha));
            dl_dcol[ch] = dl_dc[ch] * s.alpha * t_k;
        }
        out[k] = (dl_da, dl_dcol);
        for ch in 0..3 {
            suffix[ch] += t_k * s.alpha * s.color[ch];
        }
    }
    out
}

/// Gradients for one Gaussian's pose parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianGrad {
    pub mu: Vec3,
    pub rotation: [f64; 4],
    pub log_scale: Vec3,
    pub logit_opacity: f64,
}

/// Backward of [`max_response_alpha`] through dL/dalpha: gradients for the
/// Gaussian's pose and opacity, and for the world ray origin and direction.
pub fn alpha_backward(
    g: &Gaussian,
    ray: &Ray,
    clamped: bool,
    dl_dalpha: f64,
) -> (GaussianGrad, Vec3, Vec3) {
    if clamped || dl_dalpha == 0.0 {
        return (GaussianGrad::default(), Vec3::ZERO, Vec3::ZERO);
    }
    let r = g.rotation_matrix();
    let s = g.scale();
    let u = ray.origin - g.mu;
    let w = r.tr_mul_vec(u);
    let v = r.tr_mul_vec(ray.dir);
    let p_g = Vec3::new(w.x / s.x, w.y / s.y, w.z / s.z);
    let d_g = Vec3::new(v.x / s.x, v.y / s.y, v.z / s.z);
    let cr = p_g.cross(d_g);
    let o = g.opacity();
    let alpha = o * math::exp(-0.5 * cr.dot(cr));

    // alpha = o exp(-|cr|^2/2)
    let dl_dcr = cr * (-alpha * dl_dalpha);
    let dl_dlogit = dl_dalpha * alpha * (1.0 - o);
    // cr = p_g x d_g
    let dl_dp_g = d_g.cross(dl_dcr);
    let dl_dd_g = dl_dcr.cross(p_g);

    // Through S^-1: dL/d(R^T u) etc., and log-scale gradients.
    let a = Vec3::new(dl_dp_g.x / s.x, dl_dp_g.y / s.y, dl_dp_g.z / s.z);
    let b = Vec3::new(dl_dd_g.x / s.x, dl_dd_g.y / s.y, dl_dd_g.z / s.z);
    let dl_dlog_scale = Vec3::new(
        -(p_g.x * dl_dp_g.x + d_g.x * dl_dd_g.x),
        -(p_g.y * dl_dp_g.y + d_g.y * dl_dd_g.y),
        -(p_g.z * dl_dp_g.z + d_g.z * dl_dd_g.z),
    );

    // World-space ray gradients and center gradient.
    let dl_dp = r.mul_vec(a);
    let dl_dd = r.mul_vec(b);
    let dl_dmu = -dl_dp;

    // Rotation: dL/dR_{ji} = u_j a_i + d_j b_i, chained through dR/dq and the
    // quaternion normalization.
    let dl_dr = |j: usize, i: usize| {
        ray.dir.get(j) * b.get(i) + u.get(j) * a.get(i)
    };
    let n = quat_norm(&g.rotation);
    let qh = [
        g.rotation[0] / n,
        g.rotation[1] / n,
        g.rotation[2] / n,
        g.rotation[3] / n,
    ];
    let [qw, qx, qy, qz] = qh;
    // dR/d(qw,qx,qy,qz), rows j, cols i, times 2.
    let dr = [
        [
            [0.0, -qz, qy],
            [qz, 0.0, -qx],
            [-qy, qx, 0.0],
        ],
        [
            [0.0, qy, qz],
            [qy, -2.0 * qx, -qw],
            [qz, qw, -2.0 * qx],
        ],
        [
            [-2.0 * qy, qx, qw],
            [qx, 0.0, qz],
            [-qw, qz, -2.0 * qy],
        ],
        [
            [-2.0 * qz, -qw, qx],
            [qw, -2.0 * qz, qy],
            [qx, qy, 0.0],
        ],
    ];
    let mut dl_dqh = [0.0; 4];
    for k in 0..4 {
        let mut acc = 0.0;
        for j in 0..3 {
            for i in 0..3 {
                acc += dl_dr(j, i) * 2.0 * dr[k][j][i];
            }
        }
        dl_dqh[k] = acc;
    }
    let dot = qh[0] * dl_dqh[0] + qh[1] * dl_dqh[1] + qh[2] * dl_dqh[2] + qh[3] * dl_dqh[3];
    let mut dl_dq = [0.0; 4];
    for k in 0..4 {
        dl_dq[k] = (dl_dqh[k] - qh[k] * dot) / n;
    }

    (
        GaussianGrad {
            mu: dl_dmu,
            rotation: dl_dq,
            log_scale: dl_dlog_scale,
            logit_opacity: dl_dlogit,
        },
        dl_dp,
        dl_dd,
    )
}

/// Accumulated gradients for every parameter of a field, grouped the way the
/// optimizer updates them.
#[derive(Debug, Clone)]
pub struct FieldGrads {
    pub mu: Vec<Vec3>,
    pub rotation: Vec<[f64; 4]>,
    pub log_scale: Vec<Vec3>,
    pub logit_opacity: Vec<f64>,
    pub sh: Vec<f64>,
}

impl FieldGrads {
    pub fn zeros(field: &GaussianField) -> FieldGrads {
        let n = field.len();
        FieldGrads {
            mu: vec![Vec3::ZERO; n],
            rotation: vec![[0.0; 4]; n],
            log_scale: vec![Vec3::ZERO; n],
            logit_opacity: vec![0.0; n],
            sh: vec![0.0; n * sh::coeff_count(field.sh_degree) * 3],
        }
    }

    pub fn add_pose(&mut self, i: usize, g: &GaussianGrad) {
        self.mu[i] += g.mu;
        for k in 0..4 {
            self.rotation[i][k] += g.rotation[k];
        }
        self.log_scale[i] += g.log_scale;
        self.logit_opacity[i] += g.logit_opacity;
    }

    pub fn merge(&mut self, other: &FieldGrads) {
        for (a, b) in self.mu.iter_mut().zip(&other.mu) {
            *a += *b;
        }
        for (a, b) in self.rotation.iter_mut().zip(&other.rotation) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.log_scale.iter_mut().zip(&other.log_scale) {
            *a += *b;
        }
        for (a, b) in self.logit_opacity.iter_mut().zip(&other.logit_opacity) {
            *a += *b;
        }
        for (a, b) in self.sh.iter_mut().zip(&other.sh) {
            *a += *b;
        }
    }

    pub fn scale_by(&mut self, f: f64) {
        for a in &mut self.mu {
            *a = *a * f;
        }
        for a in &mut self.rotation {
            for k in 0..4 {
                a[k] *= f;
            }
        }
        for a in &mut self.log_scale {
            *a = *a * f;
        }
        for a in &mut self.logit_opacity {
            *a *= f;
        }
        for a in &mut self.sh {
            *a *= f;
        }
    }
}
