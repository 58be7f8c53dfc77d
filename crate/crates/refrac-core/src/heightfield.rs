//! Neural height field: a frequency-encoded MLP mapping (x, y) to the
//! surface height z, with hand-written forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::SplitMix64;

/// Axis-aligned rectangle in the horizontal plane; inputs are normalized to
/// [-1, 1] over it before frequency encoding. Points outside are clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Domain {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn centered(half_extent: f64) -> Self {
        Domain::new(-half_extent, half_extent, -half_extent, half_extent)
    }
}

/// One dense layer; weights row major, `out x inp`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub inp: usize,
    pub out: usize,
}

impl Layer {
    fn zeros(inp: usize, out: usize) -> Layer {
        Layer {
            w: vec![0.0; inp * out],
            b: vec![0.0; out],
            inp,
            out,
        }
    }

    fn forward(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        debug_assert_eq!(x.len(), self.inp);
        for o in 0..self.out {
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            z.push(acc);
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeightFieldNet {
    pub layers: Vec<Layer>,
    /// Frequency band count L; encoding length is 4L + 2.
    pub bands: usize,
    /// Negative slope of the leaky ReLU on hidden layers.
    pub slope: f64,
    pub domain: Domain,
    /// Output offset: the height of the initial flat surface.
    pub z0: f64,
    /// Output scale applied to the raw network output.
    pub scale: f64,
}

/// Cached activations from one forward pass, consumed by
/// [`HeightFieldNet::height_backward`].
#[derive(Debug, Clone)]
pub struct NetTape {
    /// Normalized, clamped input coordinates.
    xn: f64,
    yn: f64,
    /// Whether each coordinate was clamped (kills its input gradient).
    clamped_x: bool,
    clamped_y: bool,
    encoding: Vec<f64>,
    /// Hidden pre-activations, one vec per hidden layer.
    pre: Vec<Vec<f64>>,
    /// Hidden activations, one vec per hidden layer.
    act: Vec<Vec<f64>>,
}

/// Parameter gradients with the same shapes as the network layers.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<Layer>,
}

impl NetGrads {
    pub fn zeros_like(net: &HeightFieldNet) -> NetGrads {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inp, l.out))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = 0.0);
            l.b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn add(&mut self, other: &NetGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }
}

pub const DEFAULT_HIDDEN: &[usize] = &[256; 6];
pub const DEFAULT_BANDS: usize = 6;
pub const DEFAULT_SLOPE: f64 = 0.01;

impl HeightFieldNet {
    /// Encoding vector length for this net.
    pub fn encoding_len(&self) -> usize {
        4 * self.bands + 2
    }

    /// Kaiming-style random hidden weights; the final layer is zeroed so the
    /// initial surface is exactly the flat plane z = z0.
    pub fn init_flat(
        domain: Domain,
        z0: f64,
        scale: f64,
        hidden: &[usize],
        bands: usize,
        seed: u64,
    ) -> HeightFieldNet {
        assert!(scale > 0.0);
        assert!(!hidden.is_empty());
        let mut rng = SplitMix64::new(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut inp = 4 * bands + 2;
        for &h in hidden {
            let mut layer = Layer::zeros(inp, h);
            let std = math::sqrt(2.0 / inp as f64);
            for w in &mut layer.w {
                *w = rng.normal() * std;
            }
            layers.push(layer);
            inp = h;
        }
        // Final projection stays zero.
        layers.push(Layer::zeros(inp, 1));
        HeightFieldNet {
            layers,
            bands,
            slope: DEFAULT_SLOPE,
            domain,
            z0,
            scale,
        }
    }

    fn normalize(&self, x: f64, y: f64) -> (f64, f64, bool, bool) {
        let nx = 2.0 * (x - self.domain.x_min) / (self.domain.x_max - self.domain.x_min) - 1.0;
        let ny = 2.0 * (y - self.domain.y_min) / (self.domain.y_max - self.domain.y_min) - 1.0;
        let cx = !(-1.0..=1.0).contains(&nx);
        let cy = !(-1.0..=1.0).contains(&ny);
        (nx.clamp(-1.0, 1.0), ny.clamp(-1.0, 1.0), cx, cy)
    }

    /// NeRF-style frequency encoding of a (world-space) input point:
    /// `(x, y, sin(2^l pi x), cos(2^l pi x), sin(2^l pi y), cos(2^l pi y))`
    /// for l = 0..L, on coordinates normalized to [-1, 1].
    pub fn freq_encode(&self, x: f64, y: f64) -> Vec<f64> {
        let (nx, ny, _, _) = self.normalize(x, y);
        let mut out = Vec::with_capacity(self.encoding_len());
        out.push(nx);
        out.push(ny);
        let pi = core::f64::consts::PI;
        for l in 0..self.bands {
            let f = (1u64 << l) as f64 * pi;
            out.push(math::sin(f * nx));
            out.push(math::cos(f * nx));
            out.push(math::sin(f * ny));
            out.push(math::cos(f * ny));
        }
        out
    }

    /// Height query with a tape retained for the backward pass.
    pub fn height(&self, x: f64, y: f64) -> (f64, NetTape) {
        let (nx, ny, cx, cy) = self.normalize(x, y);
        let encoding = self.freq_encode(x, y);
        let n_hidden = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(n_hidden);
        let mut act = Vec::with_capacity(n_hidden);
        let mut cur = encoding.clone();
        for layer in &self.layers[..n_hidden] {
            let mut z = Vec::new();
            layer.forward(&cur, &mut z);
            let a: Vec<f64> = z
                .iter()
                .map(|&v| if v >= 0.0 { v } else { self.slope * v })
                .collect();
            pre.push(z);
            cur = a.clone();
            act.push(a);
        }
        let mut raw = Vec::new();
        self.layers[n_hidden].forward(&cur, &mut raw);
        let z = self.z0 + self.scale * raw[0];
        (
            z,
            NetTape {
                xn: nx,
                yn: ny,
                clamped_x: cx,
                clamped_y: cy,
                encoding,
                pre,
                act,
            },
        )
    }

    /// Height query without gradient bookkeeping (eval path).
    pub fn height_only(&self, x: f64, y: f64) -> f64 {
        let encoding = self.freq_encode(x, y);
        let n_hidden = self.layers.len() - 1;
        let mut cur = encoding;
        let mut z = Vec::new();
        for layer in &self.layers[..n_hidden] {
            layer.forward(&cur, &mut z);
            cur.clear();
            cur.extend(
                z.iter()
                    .map(|&v| if v >= 0.0 { v } else { self.slope * v }),
            );
        }
        self.layers[n_hidden].forward(&cur, &mut z);
        self.z0 + self.scale * z[0]
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the world-space input coordinates.
    pub fn height_backward(
        &self,
        tape: &NetTape,
        dl_dz: f64,
        grads: &mut NetGrads,
    ) -> (f64, f64) {
        let n_hidden = self.layers.len() - 1;
        // dL/d raw output.
        let mut up = vec![dl_dz * self.scale];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input: &[f64] = if i == 0 {
                &tape.encoding
            } else {
                &tape.act[i - 1]
            };
            // Gate through the activation, except on the linear output layer.
            let dz: Vec<f64> = if i == n_hidden {
                up
            } else {
                up.iter()
                    .zip(&tape.pre[i])
                    .map(|(&g, &z)| if z >= 0.0 { g } else { g * self.slope })
                    .collect()
            };
            let g = &mut grads.layers[i];
            let mut down = vec![0.0; layer.inp];
            for o in 0..layer.out {
                let go = dz[o];
                g.b[o] += go;
                let row = &layer.w[o * layer.inp..(o + 1) * layer.inp];
                let grow = &mut g.w[o * layer.inp..(o + 1) * layer.inp];
                for k in 0..layer.inp {
                    grow[k] += go * input[k];
                    down[k] += go * row[k];
                }
            }
            up = down;
        }
        // `up` is now dL/d encoding; chain through the frequency encoding and
        // the domain normalization.
        let pi = core::f64::consts::PI;
        let mut dnx = up[0];
        let mut dny = up[1];
        for l in 0..self.bands {
            let f = (1u64 << l) as f64 * pi;
            let base = 2 + 4 * l;
            dnx += up[base] * f * math::cos(f * tape.xn);
            dnx -= up[base + 1] * f * math::sin(f * tape.xn);
            dny += up[base + 2] * f * math::cos(f * tape.yn);
            dny -= up[base + 3] * f * math::sin(f * tape.yn);
        }
        let sx = if tape.clamped_x {
            0.0
        } else {
            2.0 / (self.domain.x_max - self.domain.x_min)
        };
        let sy = if tape.clamped_y {
            0.0
        } else {
            2.0 / (self.domain.y_max - self.domain.y_min)
        };
        (dnx * sx, dny * sy)
    }

    /// Total parameter count, used for checkpointing and the optimizer.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        assert_eq!(off, params.len());
    }
}

impl NetGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(seed: u64) -> HeightFieldNet {
        let mut net = HeightFieldNet::init_flat(
            Domain::centered(1.0),
            0.5,
            0.2,
            &[16, 16],
            3,
            seed,
        );
        // Randomize the final layer too so gradients are non-trivial.
        let mut rng = SplitMix64::new(seed ^ 0xabcd);
        let last = net.layers.last_mut().unwrap();
        for w in &mut last.w {
            *w = rng.normal() * 0.3;
        }
        for b in &mut last.b {
            *b = rng.normal() * 0.1;
        }
        net
    }

    #[test]
    fn encode_zero_bands_is_normalized_input() {
        let net = HeightFieldNet::init_flat(Domain::new(0.0, 2.0, 0.0, 4.0), 0.0, 1.0, &[4], 0, 1);
        let e = net.freq_encode(1.0, 1.0);
        assert_eq!(e.len(), 2);
        assert!((e[0] - 0.0).abs() < 1e-15);
        assert!((e[1] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn encode_domain_center() {
        let net = HeightFieldNet::init_flat(Domain::centered(2.0), 0.0, 1.0, &[4], 6, 1);
        let e = net.freq_encode(0.0, 0.0);
        assert_eq!(e.len(), 26);
        for l in 0..6 {
            let base = 2 + 4 * l;
            assert_eq!(e[base], 0.0);
            assert_eq!(e[base + 1], 1.0);
            assert_eq!(e[base + 2], 0.0);
            assert_eq!(e[base + 3], 1.0);
        }
    }

    #[test]
    fn encode_matches_scalar_oracle() {
        let net = HeightFieldNet::init_flat(Domain::centered(1.0), 0.0, 1.0, &[4], 6, 1);
        // x = 0.5 in an already-normalized domain.
        let e = net.freq_encode(0.5, -0.25);
        let pi = core::f64::consts::PI;
        for l in 0..6 {
            let f = (1u64 << l) as f64 * pi;
            assert!((e[2 + 4 * l] - (f * 0.5).sin()).abs() < 1e-15);
            assert!((e[3 + 4 * l] - (f * 0.5).cos()).abs() < 1e-15);
            assert!((e[4 + 4 * l] - (f * -0.25).sin()).abs() < 1e-15);
            assert!((e[5 + 4 * l] - (f * -0.25).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_init_is_flat() {
        let net = HeightFieldNet::init_flat(Domain::centered(1.0), 0.7, 0.05, &[32, 32], 4, 9);
        let mut rng = SplitMix64::new(2);
        for _ in 0..100 {
            let x = rng.uniform(-1.5, 1.5);
            let y = rng.uniform(-1.5, 1.5);
            assert_eq!(net.height_only(x, y), 0.7);
        }
    }

    #[test]
    fn same_seed_identical_nets() {
        let a = HeightFieldNet::init_flat(Domain::centered(1.0), 0.0, 1.0, &[8, 8], 2, 5);
        let b = HeightFieldNet::init_flat(Domain::centered(1.0), 0.0, 1.0, &[8, 8], 2, 5);
        assert_eq!(a.params_flat(), b.params_flat());
        let c = HeightFieldNet::init_flat(Domain::centered(1.0), 0.0, 1.0, &[8, 8], 2, 6);
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn forward_deterministic_and_tape_consistent() {
        let net = small_net(3);
        let (z1, _) = net.height(0.3, -0.4);
        let (z2, _) = net.height(0.3, -0.4);
        assert_eq!(z1.to_bits(), z2.to_bits());
        assert_eq!(z1.to_bits(), net.height_only(0.3, -0.4).to_bits());
    }

    /// Independent matrix-arithmetic re-implementation of the forward pass.
    fn forward_oracle(net: &HeightFieldNet, x: f64, y: f64) -> f64 {
        let mut v = net.freq_encode(x, y);
        for (i, layer) in net.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out];
            for o in 0..layer.out {
                next[o] = layer.b[o];
                for k in 0..layer.inp {
                    next[o] += layer.w[o * layer.inp + k] * v[k];
                }
            }
            if i + 1 < net.layers.len() {
                for t in &mut next {
                    if *t < 0.0 {
                        *t *= net.slope;
                    }
                }
            }
            v = next;
        }
        net.z0 + net.scale * v[0]
    }

    #[test]
    fn forward_matches_duplicate_implementation() {
        let net = small_net(17);
        let mut rng = SplitMix64::new(4);
        for _ in 0..20 {
            let x = rng.uniform(-1.0, 1.0);
            let y = rng.uniform(-1.0, 1.0);
            let (z, _) = net.height(x, y);
            assert!((z - forward_oracle(&net, x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_zero_upstream() {
        let net = small_net(5);
        let (_, tape) = net.height(0.1, 0.2);
        let mut grads = NetGrads::zeros_like(&net);
        let (dx, dy) = net.height_backward(&tape, 0.0, &mut grads);
        assert_eq!(dx, 0.0);
        assert_eq!(dy, 0.0);
        assert!(grads.flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_single_linear_layer() {
        // One output layer, no hidden activation gating on it, L = 0:
        // z = z0 + s * (w . (xn, yn) + b); dz/dw = s * input.
        let mut net =
            HeightFieldNet::init_flat(Domain::centered(1.0), 0.0, 1.0, &[2], 0, 1);
        // Collapse to effectively linear: identity-ish hidden layer.
        net.layers[0].w = vec![1.0, 0.0, 0.0, 1.0];
        net.layers[0].b = vec![0.0, 0.0];
        net.layers[1].w = vec![0.4, -0.7];
        net.layers[1].b = vec![0.2];
        let (x, y) = (0.3, 0.6);
        let (_, tape) = net.height(x, y);
        let mut grads = NetGrads::zeros_like(&net);
        net.height_backward(&tape, 1.0, &mut grads);
        // Inputs are positive so the leaky ReLU is identity here.
        assert!((grads.layers[1].w[0] - x).abs() < 1e-12);
        assert!((grads.layers[1].w[1] - y).abs() < 1e-12);
        assert!((grads.layers[1].b[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = small_net(23);
        let mut rng = SplitMix64::new(8);
        let h = 1e-5;
        for _ in 0..20 {
            let x = rng.uniform(-0.9, 0.9);
            let y = rng.uniform(-0.9, 0.9);
            let (_, tape) = net.height(x, y);
            let mut grads = NetGrads::zeros_like(&net);
            let (dx, dy) = net.height_backward(&tape, 1.0, &mut grads);
            let flat = grads.flat();
            let params = net.params_flat();

            // Probe a deterministic subset of parameters.
            let mut probe = net.clone();
            for i in (0..params.len()).step_by(params.len() / 37 + 1) {
                let mut p = params.clone();
                p[i] += h;
                probe.set_params_flat(&p);
                let up = probe.height_only(x, y);
                p[i] -= 2.0 * h;
                probe.set_params_flat(&p);
                let dn = probe.height_only(x, y);
                let fd = (up - dn) / (2.0 * h);
                let scale = fd.abs().max(flat[i].abs()).max(1e-6);
                assert!(
                    (fd - flat[i]).abs() / scale < 1e-5,
                    "param {i}: fd {fd} analytic {}",
                    flat[i]
                );
            }
            // Input gradients.
            let fdx = (net.height_only(x + h, y) - net.height_only(x - h, y)) / (2.0 * h);
            let fdy = (net.height_only(x, y + h) - net.height_only(x, y - h)) / (2.0 * h);
            let sx = fdx.abs().max(dx.abs()).max(1e-6);
            let sy = fdy.abs().max(dy.abs()).max(1e-6);
            assert!((fdx - dx).abs() / sx < 1e-5, "dx {dx} vs fd {fdx}");
            assert!((fdy - dy).abs() / sy < 1e-5, "dy {dy} vs fd {fdy}");
        }
    }
}
