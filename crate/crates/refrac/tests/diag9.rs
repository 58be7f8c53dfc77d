// temporary diagnostic
use refrac::config::GenerateConfig;
use refrac::scene::ViewSpec;
use refrac::synth::{self, GtScene, Pattern};
use refrac_core::adam::AdamState;
use refrac_core::gaussian::{Gaussian, GaussianField};
use refrac_core::refract::RefractionConfig;
use refrac_core::render::{render_backward, render_forward, RenderScene};
use refrac_core::trace::{NormalMode, TraceConfig};
use refrac_core::{Camera, Vec3};

#[test]
#[ignore]
fn probe9() {
    let mut gen = GenerateConfig::default();
    gen.surface = "flat".into();
    let mut gt = GtScene::from_config(&gen).expect("flat scene");
    gt.n1 = gt.n2;
    let plane_z = gen.plane_z;
    let half = 1.15;
    let nside = 368usize;
    let spacing = 2.0 * half / (nside - 1) as f64;
    let sigma = (1.3 * spacing).sqrt();
    let mut gaussians = Vec::with_capacity(nside * nside);
    for j in 0..nside {
        for i in 0..nside {
            let x = -half + spacing * i as f64;
            let y = -half + spacing * j as f64;
            let c = Pattern::Waves.color(x, y, gen.plane_half);
            gaussians.push(Gaussian {
                mu: Vec3::new(x, y, plane_z),
                rotation: [1.0, 0.0, 0.0, 0.0],
                log_scale: Vec3::new(sigma.ln(), sigma.ln(), sigma.ln()),
                logit_opacity: 1.5,
                sh: c.iter().map(|&v| (v - 0.5) / 0.282_094_791_773_878_14).collect(),
            });
        }
    }
    let mut field = GaussianField::new(gaussians, synth::BACKGROUND, 0);
    field.rebuild_bvh();
    let trace = TraceConfig { nx: 20, ny: 20, levels: 1, normal_mode: NormalMode::Phong, with_tapes: false };
    let cams: Vec<Camera> = [
        Vec3::new(0.0, 0.0, 1.2),
        Vec3::new(0.35, 0.1, 1.2),
        Vec3::new(-0.2, 0.3, 1.15),
        Vec3::new(0.1, -0.35, 1.25),
    ]
    .iter()
    .map(|&eye| {
        Camera::look_at(eye, Vec3::new(eye.x * 0.2, eye.y * 0.2, plane_z), Vec3::new(0.0, 1.0, 0.0),
            64.0 * 1.05, 64.0 * 1.05, 64, 64)
    })
    .collect();
    let gt_images: Vec<Vec<[f64; 3]>> = cams.iter()
        .map(|c| gt.render(&ViewSpec::from_camera(c, "train", "x.png")))
        .collect();
    let scene = RenderScene { net: None, field: &field, refraction: RefractionConfig { n1: 1.0, n2: 1.333 }, trace };
    for (ci, (cam, gt_img)) in cams.iter().zip(&gt_images).enumerate() {
        let out = render_forward(cam, &scene, false).unwrap();
        let mut worst = 0.0f64;
        let mut wpix = 0;
        for (k, (c, g)) in out.colors.iter().zip(gt_img).enumerate() {
            for ch in 0..3 {
                let e = (c[ch] - g[ch]).abs();
                if e > worst { worst = e; wpix = k; }
            }
        }
        eprintln!("cam {ci}: pre-polish worst {worst:.4} at pixel ({},{})", wpix % 64, wpix / 64);
    }

    // dump center row of cam0 pre-polish
    {
        let out = render_forward(&cams[0], &RenderScene { net: None, field: &field, refraction: RefractionConfig { n1: 1.0, n2: 1.333 }, trace }, false).unwrap();
        for px in 24..40 {
            let k = 31 * 64 + px;
            let c = out.colors[k];
            let g = &gt_images[0][k];
            eprintln!("px {px}: render ({:.3},{:.3},{:.3}) gt ({:.3},{:.3},{:.3}) mask {}", c[0], c[1], c[2], g[0], g[1], g[2], out.mask[k]);
        }
    }
    // polish
    let npix = 64 * 64;
    let mut sh_flat: Vec<f64> = field.gaussians.iter().flat_map(|g| g.sh.clone()).collect();
    let mut adam = AdamState::new(sh_flat.len());
    for it in 0..240 {
        let k = it % cams.len();
        let scene = RenderScene { net: None, field: &field, refraction: RefractionConfig { n1: 1.0, n2: 1.333 }, trace };
        let out = render_forward(&cams[k], &scene, true).unwrap();
        let dl: Vec<[f64; 3]> = out.colors.iter().zip(&gt_images[k])
            .map(|(c, g)| [2.0 * (c[0] - g[0]) / npix as f64, 2.0 * (c[1] - g[1]) / npix as f64, 2.0 * (c[2] - g[2]) / npix as f64])
            .collect();
        let grads = render_backward(&cams[k], &scene, &out, &dl);
        adam.step(&mut sh_flat, &grads.field.sh, 5e-3);
        for (g, chunk) in field.gaussians.iter_mut().zip(sh_flat.chunks(3)) {
            g.sh.copy_from_slice(chunk);
        }
        if it % 60 == 0 {
            let l: f64 = out.colors.iter().zip(&gt_images[k]).map(|(c, g)| (0..3).map(|ch| (c[ch]-g[ch]).powi(2)).sum::<f64>()).sum();
            eprintln!("it {it} mse {:.6}", l / (3.0 * npix as f64));
        }
    }
    let scene = RenderScene { net: None, field: &field, refraction: RefractionConfig { n1: 1.0, n2: 1.333 }, trace };
    for (ci, (cam, gt_img)) in cams.iter().zip(&gt_images).enumerate() {
        let out = render_forward(cam, &scene, false).unwrap();
        let mut worst = 0.0f64;
        let mut wpix = 0;
        for (k, (c, g)) in out.colors.iter().zip(gt_img).enumerate() {
            for ch in 0..3 {
                let e = (c[ch] - g[ch]).abs();
                if e > worst { worst = e; wpix = k; }
            }
        }
        eprintln!("cam {ci}: post worst {worst:.4} at pixel ({},{})", wpix % 64, wpix / 64);
    }
}
