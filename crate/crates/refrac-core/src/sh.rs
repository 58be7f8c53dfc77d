//! Real spherical harmonics for view-dependent color, degrees 0 through 3,
//! with the usual 3DGS basis constants. Coefficients are stored coefficient
//! major: `sh[k * 3 + channel]`.
//!
//! Colors come out as `0.5 + sum_k b_k(d) sh_k`, i.e. the DC band carries a
//! +0.5 offset so a zero coefficient vector renders mid-gray.

use alloc::vec;
use alloc::vec::Vec;

use crate::vec3::Vec3;

pub const SH_C0: f64 = 0.28209479177387814;
const SH_C1: f64 = 0.4886025119029199;
const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values b_0..b_{(D+1)^2-1} at `d` (assumed unit).
pub fn basis(degree: usize, d: Vec3) -> Vec<f64> {
    assert!(degree <= 3);
    let (x, y, z) = (d.x, d.y, d.z);
    let mut b = vec![0.0; coeff_count(degree)];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (xx - yy);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[9] = SH_C3[0] * y * (3.0 * xx - yy);
        b[10] = SH_C3[1] * x * y * z;
        b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
        b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
        b[14] = SH_C3[5] * z * (xx - yy);
        b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    }
    b
}

/// Gradient of every basis value with respect to the direction components.
fn basis_grad(degree: usize, d: Vec3) -> Vec<Vec3> {
    assert!(degree <= 3);
    let (x, y, z) = (d.x, d.y, d.z);
    let mut g = vec![Vec3::ZERO; coeff_count(degree)];
    if degree >= 1 {
        g[1] = Vec3::new(0.0, -SH_C1, 0.0);
        g[2] = Vec3::new(0.0, 0.0, SH_C1);
        g[3] = Vec3::new(-SH_C1, 0.0, 0.0);
    }
    if degree >= 2 {
        g[4] = Vec3::new(SH_C2[0] * y, SH_C2[0] * x, 0.0);
        g[5] = Vec3::new(0.0, SH_C2[1] * z, SH_C2[1] * y);
        g[6] = Vec3::new(-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z);
        g[7] = Vec3::new(SH_C2[3] * z, 0.0, SH_C2[3] * x);
        g[8] = Vec3::new(2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g[9] = Vec3::new(
            SH_C3[0] * 6.0 * x * y,
            SH_C3[0] * (3.0 * xx - 3.0 * yy),
            0.0,
        );
        g[10] = Vec3::new(SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y);
        g[11] = Vec3::new(
            SH_C3[2] * (-2.0 * x * y),
            SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
            SH_C3[2] * 8.0 * y * z,
        );
        g[12] = Vec3::new(
            SH_C3[3] * (-6.0 * x * z),
            SH_C3[3] * (-6.0 * y * z),
            SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
        );
        g[13] = Vec3::new(
            SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
            SH_C3[4] * (-2.0 * x * y),
            SH_C3[4] * 8.0 * x * z,
        );
        g[14] = Vec3::new(
            SH_C3[5] * 2.0 * x * z,
            SH_C3[5] * (-2.0 * y * z),
            SH_C3[5] * (xx - yy),
        );
        g[15] = Vec3::new(
            SH_C3[6] * (3.0 * xx - 3.0 * yy),
            SH_C3[6] * (-6.0 * x * y),
            0.0,
        );
    }
    g
}

/// View-dependent color from coefficients and a unit direction.
pub fn sh_eval(sh: &[f64], degree: usize, d: Vec3) -> [f64; 3] {
    let b = basis(degree, d);
    debug_assert_eq!(sh.len(), b.len() * 3);
    let mut c = [0.5, 0.5, 0.5];
    for (k, &bk) in b.iter().enumerate() {
        for ch in 0..3 {
            c[ch] += bk * sh[k * 3 + ch];
        }
    }
    c
}

/// Backward of [`sh_eval`]: gradients for every coefficient (accumulated into
/// `dl_dsh`) and for the direction. The direction gradient treats the three
/// components as free variables; the caller owns any normalization chain.
pub fn sh_backward(
    sh: &[f64],
    degree: usize,
    d: Vec3,
    dl_dc: [f64; 3],
    dl_dsh: &mut [f64],
) -> Vec3 {
    let b = basis(degree, d);
    let g = basis_grad(degree, d);
    debug_assert_eq!(sh.len(), b.len() * 3);
    debug_assert_eq!(dl_dsh.len(), sh.len());
    let mut dl_dd = Vec3::ZERO;
    for k in 0..b.len() {
        let mut s = 0.0;
        for ch in 0..3 {
            dl_dsh[k * 3 + ch] += b[k] * dl_dc[ch];
            s += sh[k * 3 + ch] * dl_dc[ch];
        }
        dl_dd += g[k] * s;
    }
    dl_dd
}
