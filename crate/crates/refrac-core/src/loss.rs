//! Image losses (L1, SSIM) with analytic gradients, the opacity penalty, and
//! PSNR. Images are row-major `[r, g, b]` pixel slices in linear [0, 1].

use alloc::vec;
use alloc::vec::Vec;

use crate::gaussian::GaussianField;
use crate::math;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean absolute error and its gradient with respect to `a`.
pub fn loss_l1(a: &[[f64; 3]], b: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    assert_eq!(a.len(), b.len());
    let n = (a.len() * 3) as f64;
    let mut total = 0.0;
    let mut grad = vec![[0.0; 3]; a.len()];
    for i in 0..a.len() {
        for ch in 0..3 {
            let d = a[i][ch] - b[i][ch];
            total += d.abs();
            grad[i][ch] = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
    }
    (total / n, grad)
}

fn gauss_kernel() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in g.iter_mut().enumerate() {
        *v = math::exp(-(i as f64 - c) * (i as f64 - c) / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
        sum += *v;
    }
    for v in &mut g {
        *v /= sum;
    }
    g
}

/// Separable "valid" convolution with the SSIM window.
fn conv_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let vw = w - SSIM_WINDOW + 1;
    let vh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; vw * h];
    for y in 0..h {
        for x in 0..vw {
            let mut s = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                s += kv * src[y * w + x + i];
            }
            tmp[y * vw + x] = s;
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y in 0..vh {
        for x in 0..vw {
            let mut s = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                s += kv * tmp[(y + i) * vw + x];
            }
            out[y * vw + x] = s;
        }
    }
    out
}

/// Transpose of [`conv_valid`]: scatters a valid-size field back onto the
/// full image grid, accumulating into `dst`.
fn conv_scatter(field: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW], dst: &mut [f64]) {
    let vw = w - SSIM_WINDOW + 1;
    let vh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; vw * h];
    for y in 0..vh {
        for x in 0..vw {
            let v = field[y * vw + x];
            if v == 0.0 {
                continue;
            }
            for (i, &kv) in k.iter().enumerate() {
                tmp[(y + i) * vw + x] += kv * v;
            }
        }
    }
    for y in 0..h {
        for x in 0..vw {
            let v = tmp[y * vw + x];
            if v == 0.0 {
                continue;
            }
            for (i, &kv) in k.iter().enumerate() {
                dst[y * w + x + i] += kv * v;
            }
        }
    }
}

/// SSIM between two images over interior windows only (the map is computed
/// where the 11x11 window fits entirely). Returns the mean SSIM.
pub fn ssim(a: &[[f64; 3]], b: &[[f64; 3]], w: usize, h: usize) -> f64 {
    ssim_impl(a, b, w, h, None)
}

/// Structural dissimilarity 1 - SSIM and its analytic gradient with respect
/// to `a`.
pub fn loss_ssim(a: &[[f64; 3]], b: &[[f64; 3]], w: usize, h: usize) -> (f64, Vec<[f64; 3]>) {
    let mut grad = vec![[0.0; 3]; a.len()];
    let s = ssim_impl(a, b, w, h, Some(&mut grad));
    (1.0 - s, grad)
}

fn ssim_impl(
    a: &[[f64; 3]],
    b: &[[f64; 3]],
    w: usize,
    h: usize,
    mut grad: Option<&mut Vec<[f64; 3]>>,
) -> f64 {
    assert_eq!(a.len(), w * h);
    assert_eq!(b.len(), w * h);
    assert!(w >= SSIM_WINDOW && h >= SSIM_WINDOW, "image too small for SSIM");
    let k = gauss_kernel();
    let vw = w - SSIM_WINDOW + 1;
    let vh = h - SSIM_WINDOW + 1;
    let nvalid = (vw * vh) as f64;
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.iter().map(|p| p[ch]).collect();
        let y: Vec<f64> = b.iter().map(|p| p[ch]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
        let mx = conv_valid(&x, w, h, &k);
        let my = conv_valid(&y, w, h, &k);
        let exx = conv_valid(&xx, w, h, &k);
        let eyy = conv_valid(&yy, w, h, &k);
        let exy = conv_valid(&xy, w, h, &k);

        // Partials of the mean SSIM with respect to the three x-dependent
        // fields (mean, raw second moment, raw cross moment).
        let mut u1 = vec![0.0; vw * vh];
        let mut u2 = vec![0.0; vw * vh];
        let mut u3 = vec![0.0; vw * vh];
        for q in 0..vw * vh {
            let (mx, my) = (mx[q], my[q]);
            let sx2 = exx[q] - mx * mx;
            let sy2 = eyy[q] - my * my;
            let sxy = exy[q] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * sxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = sx2 + sy2 + SSIM_C2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if grad.is_some() {
                u1[q] = (s / a1) * 2.0 * my - (s / a2) * 2.0 * my - (s / b1) * 2.0 * mx
                    + (s / b2) * 2.0 * mx;
                u2[q] = -s / b2;
                u3[q] = (s / a2) * 2.0;
            }
        }
        if let Some(grad) = grad.as_deref_mut() {
            let mut f1 = vec![0.0; w * h];
            let mut f2 = vec![0.0; w * h];
            let mut f3 = vec![0.0; w * h];
            conv_scatter(&u1, w, h, &k, &mut f1);
            conv_scatter(&u2, w, h, &k, &mut f2);
            conv_scatter(&u3, w, h, &k, &mut f3);
            // Loss is 1 - mean SSIM, hence the sign flip.
            let scale = -1.0 / (nvalid * 3.0);
            for p in 0..w * h {
                grad[p][ch] += scale * (f1[p] + 2.0 * x[p] * f2[p] + y[p] * f3[p]);
            }
        }
    }
    total / (nvalid * 3.0)
}

/// Mean squared opacity and its gradient through the logit parameterization.
pub fn loss_opacity(field: &GaussianField) -> (f64, Vec<f64>) {
    let n = field.len();
    assert!(n >= 1);
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for (i, g) in field.gaussians.iter().enumerate() {
        let o = g.opacity();
        total += o * o;
        grad[i] = 2.0 * o / n as f64 * o * (1.0 - o);
    }
    (total / n as f64, grad)
}

/// Peak signal-to-noise ratio in dB on [0, 1] images; +inf for identical
/// images.
pub fn psnr(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut mse = 0.0;
    for i in 0..a.len() {
        for ch in 0..3 {
            let d = a[i][ch] - b[i][ch];
            mse += d * d;
        }
    }
    mse /= (a.len() * 3) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * math::log10(mse)
    }
}
