//! Snell's law in vector form, with the analytic Jacobian used during
//! backpropagation.

use crate::math;
use crate::vec3::Vec3;

/// Refractive indices above and below the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefractionConfig {
    pub n1: f64,
    pub n2: f64,
}

impl Default for RefractionConfig {
    fn default() -> Self {
        // Air over water.
        RefractionConfig { n1: 1.0, n2: 1.333 }
    }
}

impl RefractionConfig {
    pub fn eta(&self) -> f64 {
        self.n1 / self.n2
    }
}

/// The refraction term `1 - eta^2 (1 - cos^2 theta_1)` went negative: the ray
/// reflects instead of transmitting, and its contribution is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TotalInternalReflection;

/// Bends a unit incident direction `incident` about the unit surface normal
/// `normal` with refractive-index ratio `eta = n1/n2`.
///
/// If the normal points along the ray (`N . I > 0`) it is flipped and `eta`
/// inverted, so callers may pass the geometric up-facing normal regardless of
/// which side the ray comes from. The result is renormalized.
pub fn refract(incident: Vec3, normal: Vec3, eta: f64) -> Result<Vec3, TotalInternalReflection> {
    let (n, eta) = orient(incident, normal, eta);
    let cos_i = -n.dot(incident);
    let k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
    if k < 0.0 {
        return Err(TotalInternalReflection);
    }
    let t = incident * eta + n * (eta * cos_i - math::sqrt(k));
    Ok(t.normalized())
}

/// Vector-Jacobian products of [`refract`]: given `dL/dT` returns
/// `(dL/dI, dL/dN)`, accounting for the final renormalization of `T`.
///
/// Must only be called for configurations where refraction succeeded.
pub fn refract_backward(
    incident: Vec3,
    normal: Vec3,
    eta: f64,
    dl_dt: Vec3,
) -> (Vec3, Vec3) {
    let (n, eta, flipped) = orient_tracked(incident, normal, eta);
    let cos_i = -n.dot(incident);
    let k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
    debug_assert!(k >= 0.0, "refract_backward on a TIR configuration");
    let c2 = math::sqrt(k);
    let coeff = eta * cos_i - c2;
    let t_raw = incident * eta + n * coeff;
    let len = t_raw.norm();
    let t_hat = t_raw / len;

    // Through T = T_raw / |T_raw|: J = (I - T T^T) / |T_raw| (symmetric).
    let dl_draw = (dl_dt - t_hat * t_hat.dot(dl_dt)) / len;

    // T_raw = eta I + (eta c1 - c2) N with c1 = -N.I.
    // d c1/dI = -N, d c1/dN = -I, d c2/d c1 = eta^2 c1 / c2.
    let s = if c2 > 0.0 {
        eta - eta * eta * cos_i / c2
    } else {
        0.0
    };
    let nd = n.dot(dl_draw);
    // dT_raw_a/dI_b = eta delta_ab - s N_a N_b
    let dl_di = dl_draw * eta - n * (s * nd);
    // dT_raw_a/dN_b = coeff delta_ab - s N_a I_b
    let mut dl_dn = dl_draw * coeff - incident * (s * nd);
    if flipped {
        dl_dn = -dl_dn;
    }
    (dl_di, dl_dn)
}

fn orient(incident: Vec3, normal: Vec3, eta: f64) -> (Vec3, f64) {
    if normal.dot(incident) > 0.0 {
        (-normal, 1.0 / eta)
    } else {
        (normal, eta)
    }
}

fn orient_tracked(incident: Vec3, normal: Vec3, eta: f64) -> (Vec3, f64, bool) {
    if normal.dot(incident) > 0.0 {
        (-normal, 1.0 / eta, true)
    } else {
        (normal, eta, false)
    }
}
