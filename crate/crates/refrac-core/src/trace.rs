//! Ray-surface intersection against the neural height field via a coarse
//! proxy mesh, BVH global intersection, and recursive midpoint subdivision of
//! hit triangles, plus the backward pass from (point, normal) gradients down
//! to per-vertex height gradients.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::heightfield::HeightFieldNet;
use crate::mesh::{Face, ProxyMesh};
use crate::triangle::{intersect_triangle, TriHit};
use crate::vec3::{Ray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalMode {
    /// Barycentric interpolation of vertex normals (Phong style).
    Phong,
    /// Flat per-face normals (ablation mode).
    Face,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceConfig {
    pub nx: usize,
    pub ny: usize,
    pub levels: usize,
    pub normal_mode: NormalMode,
    /// Retain MLP tapes on every lifted vertex for backpropagation.
    pub with_tapes: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SurfaceHit {
    pub t: f64,
    pub point: Vec3,
    /// Unit shading normal (interpolated or flat per `NormalMode`).
    pub normal: Vec3,
    /// Face index into the traced mesh.
    pub face: u32,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Result of tracing a ray batch: the final refined mesh, per-ray hits, and
/// bookkeeping for the backward pass.
#[derive(Debug, Clone)]
pub struct TracedSurface {
    pub mesh: ProxyMesh,
    pub adjacency: Vec<Vec<u32>>,
    pub hits: Vec<Option<SurfaceHit>>,
    pub normal_mode: NormalMode,
    /// Number of height-field queries performed (cost metric).
    pub query_count: usize,
}

/// Nearest hit of `ray` against `mesh` using its BVH; deterministic face
/// priority (lowest t, then lowest face id).
pub fn intersect_mesh(mesh: &ProxyMesh, bvh: &crate::bvh::Bvh, ray: &Ray) -> Option<(u32, TriHit)> {
    let mut best: Option<(u32, TriHit)> = None;
    bvh.traverse(ray, f64::INFINITY, |fi, t_max| {
        let f = mesh.faces[fi];
        let (a, b, c) = mesh.face_vertices(f);
        if let Some(h) = intersect_triangle(ray, a, b, c) {
            let better = match &best {
                None => true,
                Some((bf, bh)) => h.t < bh.t || (h.t == bh.t && (fi as u32) < *bf),
            };
            if better {
                best = Some((fi as u32, h));
                return h.t + crate::triangle::T_EPSILON;
            }
        }
        t_max
    });
    best
}

/// Recursive subdivision tracing: global coarse BVH intersection followed by
/// `levels` rounds of subdividing hit triangles 1-to-4 at edge midpoints,
/// re-querying the height field for new vertices, and re-testing each ray
/// locally against its parent's children (with a one-shot 1-ring fallback).
pub fn recursive_subdivision_trace(
    net: &HeightFieldNet,
    rays: &[Ray],
    cfg: TraceConfig,
) -> TracedSurface {
    let mut mesh = ProxyMesh::build(net, cfg.nx, cfg.ny, cfg.with_tapes);
    let mut query_count = cfg.nx * cfg.ny;
    let bvh = mesh.build_bvh();

    // Global stage on the coarse mesh.
    let mut cur: Vec<Option<(u32, TriHit)>> = rays
        .iter()
        .map(|ray| intersect_mesh(&mesh, &bvh, ray))
        .collect();

    for _ in 0..cfg.levels {
        // Hit faces survive; everything else is pruned.
        let mut hit_faces: Vec<u32> = cur.iter().flatten().map(|(f, _)| *f).collect();
        hit_faces.sort_unstable();
        hit_faces.dedup();
        if hit_faces.is_empty() {
            mesh.faces.clear();
            break;
        }

        // 1-ring adjacency of the current level (for the miss fallback).
        let mut vert_faces: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &fi in &hit_faces {
            let f = mesh.faces[fi as usize];
            for v in [f.0, f.1, f.2] {
                vert_faces.entry(v).or_default().push(fi);
            }
        }

        // Subdivide each hit face into four, sharing edge midpoints.
        let mut midpoints: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut new_faces: Vec<Face> = Vec::with_capacity(hit_faces.len() * 4);
        let mut children: BTreeMap<u32, [u32; 4]> = BTreeMap::new();
        for &fi in &hit_faces {
            let f = mesh.faces[fi as usize];
            let m01 = midpoint(net, &mut mesh, &mut midpoints, f.0, f.1, cfg.with_tapes, &mut query_count);
            let m12 = midpoint(net, &mut mesh, &mut midpoints, f.1, f.2, cfg.with_tapes, &mut query_count);
            let m20 = midpoint(net, &mut mesh, &mut midpoints, f.2, f.0, cfg.with_tapes, &mut query_count);
            let base = new_faces.len() as u32;
            new_faces.push(Face(f.0, m01, m20));
            new_faces.push(Face(m01, f.1, m12));
            new_faces.push(Face(m20, m12, f.2));
            new_faces.push(Face(m01, m12, m20));
            children.insert(fi, [base, base + 1, base + 2, base + 3]);
        }

        // Local intersection: each ray tests only its parent's children,
        // falling back once to the children of the parent's 1-ring.
        let next: Vec<Option<(u32, TriHit)>> = cur
            .iter()
            .zip(rays)
            .map(|(entry, ray)| {
                let (parent, _) = (*entry)?;
                let direct = best_of(ray, &new_faces, &mesh, children[&parent].iter().copied());
                if direct.is_some() {
                    return direct;
                }
                let pf = mesh.faces[parent as usize];
                let mut candidates: Vec<u32> = Vec::new();
                for v in [pf.0, pf.1, pf.2] {
                    if let Some(fs) = vert_faces.get(&v) {
                        for &nf in fs {
                            if nf != parent {
                                candidates.extend_from_slice(&children[&nf]);
                            }
                        }
                    }
                }
                candidates.sort_unstable();
                candidates.dedup();
                best_of(ray, &new_faces, &mesh, candidates.into_iter())
            })
            .collect();
        mesh.faces = new_faces;
        cur = next;
    }

    let mut mesh = mesh;
    mesh.compute_vertex_normals();
    let adjacency = mesh.vertex_face_adjacency();
    let hits = cur
        .iter()
        .zip(rays)
        .map(|(entry, ray)| {
            entry.map(|(face, h)| make_hit(&mesh, ray, face, h, cfg.normal_mode))
        })
        .collect();
    TracedSurface {
        mesh,
        adjacency,
        hits,
        normal_mode: cfg.normal_mode,
        query_count,
    }
}

/// Traces rays against a fixed, externally supplied mesh: single BVH pass,
/// no subdivision and no height-field queries. Used when the surface is
/// swapped for an arbitrary height-field-like mesh after training.
pub fn trace_fixed_mesh(mut mesh: ProxyMesh, rays: &[Ray], normal_mode: NormalMode) -> TracedSurface {
    mesh.compute_vertex_normals();
    let bvh = mesh.build_bvh();
    let hits = rays
        .iter()
        .map(|ray| {
            intersect_mesh(&mesh, &bvh, ray)
                .map(|(face, h)| make_hit(&mesh, ray, face, h, normal_mode))
        })
        .collect();
    let adjacency = mesh.vertex_face_adjacency();
    TracedSurface {
        mesh,
        adjacency,
        hits,
        normal_mode,
        query_count: 0,
    }
}

fn midpoint(
    net: &HeightFieldNet,
    mesh: &mut ProxyMesh,
    cache: &mut BTreeMap<(u32, u32), u32>,
    a: u32,
    b: u32,
    with_tapes: bool,
    query_count: &mut usize,
) -> u32 {
    let key = if a < b { (a, b) } else { (b, a) };
    if let Some(&v) = cache.get(&key) {
        return v;
    }
    let pa = mesh.vertices[a as usize];
    let pb = mesh.vertices[b as usize];
    let x = 0.5 * (pa.x + pb.x);
    let y = 0.5 * (pa.y + pb.y);
    let z = if with_tapes {
        let (z, tape) = net.height(x, y);
        mesh.tapes.push(tape);
        z
    } else {
        net.height_only(x, y)
    };
    *query_count += 1;
    let id = mesh.vertices.len() as u32;
    mesh.vertices.push(Vec3::new(x, y, z));
    cache.insert(key, id);
    id
}

fn best_of(
    ray: &Ray,
    faces: &[Face],
    mesh: &ProxyMesh,
    candidates: impl Iterator<Item = u32>,
) -> Option<(u32, TriHit)> {
    let mut best: Option<(u32, TriHit)> = None;
    for fi in candidates {
        let f = faces[fi as usize];
        let (a, b, c) = (
            mesh.vertices[f.0 as usize],
            mesh.vertices[f.1 as usize],
            mesh.vertices[f.2 as usize],
        );
        if let Some(h) = intersect_triangle(ray, a, b, c) {
            let better = match &best {
                None => true,
                Some((bf, bh)) => h.t < bh.t || (h.t == bh.t && fi < *bf),
            };
            if better {
                best = Some((fi, h));
            }
        }
    }
    best
}

fn make_hit(mesh: &ProxyMesh, ray: &Ray, face: u32, h: TriHit, mode: NormalMode) -> SurfaceHit {
    let f = mesh.faces[face as usize];
    let normal = match mode {
        NormalMode::Phong => interpolate_normal(mesh, f, h.alpha, h.beta, h.gamma),
        NormalMode::Face => mesh.face_normal_raw(f).normalized(),
    };
    SurfaceHit {
        t: h.t,
        point: ray.at(h.t),
        normal,
        face,
        alpha: h.alpha,
        beta: h.beta,
        gamma: h.gamma,
    }
}

/// Barycentric blend of vertex normals, renormalized.
pub fn interpolate_normal(mesh: &ProxyMesh, f: Face, alpha: f64, beta: f64, gamma: f64) -> Vec3 {
    (mesh.vertex_normals[f.0 as usize] * alpha
        + mesh.vertex_normals[f.1 as usize] * beta
        + mesh.vertex_normals[f.2 as usize] * gamma)
        .normalized()
}

/// Propagates loss gradients at a surface hit down to the heights of the
/// vertices involved: through the intersection depth t (fixed ray, moving
/// plane) and through the shading normal (normalization, barycentric blend,
/// vertex-normal averaging, face-normal cross products). Contributions are
/// accumulated into `dl_dz`, indexed by vertex.
pub fn surface_backward(
    traced: &TracedSurface,
    ray: &Ray,
    hit: &SurfaceHit,
    dl_dp: Vec3,
    dl_dn: Vec3,
    dl_dz: &mut [f64],
) {
    let mesh = &traced.mesh;
    let f = mesh.faces[hit.face as usize];
    let (va, vb, vc) = mesh.face_vertices(f);

    // In-plane height gradient (sx, sy) of the hit triangle.
    let e1 = (vb.x - va.x, vb.y - va.y);
    let e2 = (vc.x - va.x, vc.y - va.y);
    let det = e1.0 * e2.1 - e1.1 * e2.0;
    let dz1 = vb.z - va.z;
    let dz2 = vc.z - va.z;
    let sx = (dz1 * e2.1 - dz2 * e1.1) / det;
    let sy = (e1.0 * dz2 - e2.0 * dz1) / det;
    let denom = ray.dir.z - sx * ray.dir.x - sy * ray.dir.y;

    // dL/d(raw blended normal) through the renormalization, Phong mode only.
    // Face mode defers the whole normal chain to face_normal_backward, which
    // handles its own normalization.
    let dl_dn_raw = match traced.normal_mode {
        NormalMode::Phong => {
            let n_raw = mesh.vertex_normals[f.0 as usize] * hit.alpha
                + mesh.vertex_normals[f.1 as usize] * hit.beta
                + mesh.vertex_normals[f.2 as usize] * hit.gamma;
            let len = n_raw.norm();
            let n_hat = n_raw / len;
            (dl_dn - n_hat * n_hat.dot(dl_dn)) / len
        }
        NormalMode::Face => Vec3::ZERO,
    };

    // Total dL/dt: point moves along the ray, and (in Phong mode) the
    // barycentric weights sweep across the triangle as t changes.
    let mut dl_dt = dl_dp.dot(ray.dir);
    if traced.normal_mode == NormalMode::Phong {
        // 2D barycentric gradients: alpha(p) = cross2(p - vb, vc - vb) / C
        // with C = cross2(va - vb, vc - vb) = -det, similarly for beta.
        let ga = (
            -(vc.y - vb.y) / det,
            (vc.x - vb.x) / det,
        );
        let gb = (
            -(va.y - vc.y) / det,
            (va.x - vc.x) / det,
        );
        let gc = (-ga.0 - gb.0, -ga.1 - gb.1);
        let dxy = (ray.dir.x, ray.dir.y);
        let dw = [
            ga.0 * dxy.0 + ga.1 * dxy.1,
            gb.0 * dxy.0 + gb.1 * dxy.1,
            gc.0 * dxy.0 + gc.1 * dxy.1,
        ];
        for (m, &v) in [f.0, f.1, f.2].iter().enumerate() {
            dl_dt += dw[m] * mesh.vertex_normals[v as usize].dot(dl_dn_raw);
        }
    }

    // t depends on the three hit-face vertex heights through the moving
    // plane: dt/dz_m = w_m / (d_z - s . d_xy).
    let weights = [hit.alpha, hit.beta, hit.gamma];
    for (m, &v) in [f.0, f.1, f.2].iter().enumerate() {
        dl_dz[v as usize] += dl_dt * weights[m] / denom;
    }

    // Normal dependence on vertex heights.
    match traced.normal_mode {
        NormalMode::Phong => {
            for (m, &v) in [f.0, f.1, f.2].iter().enumerate() {
                let dl_dn_m = dl_dn_raw * weights[m];
                accumulate_vertex_normal_backward(traced, v, dl_dn_m, dl_dz);
            }
        }
        NormalMode::Face => {
            face_normal_backward(mesh, f, dl_dn, dl_dz);
        }
    }
}

/// Chains dL/d(vertex normal) through the normalized average of adjacent unit
/// face normals down to the heights of every vertex in the 1-ring.
fn accumulate_vertex_normal_backward(
    traced: &TracedSurface,
    vertex: u32,
    dl_dn_v: Vec3,
    dl_dz: &mut [f64],
) {
    let mesh = &traced.mesh;
    let faces = &traced.adjacency[vertex as usize];
    if faces.is_empty() {
        return;
    }
    let cnt = faces.len() as f64;
    let mut avg = Vec3::ZERO;
    for &fi in faces {
        avg += mesh.face_normal_raw(mesh.faces[fi as usize]).normalized();
    }
    avg = avg / cnt;
    let len = avg.norm();
    let n_hat = avg / len;
    let dl_davg = (dl_dn_v - n_hat * n_hat.dot(dl_dn_v)) / len;
    let per_face = dl_davg / cnt;
    for &fi in faces {
        face_normal_backward(mesh, mesh.faces[fi as usize], per_face, dl_dz);
    }
}

/// Given dL/d(unit face normal), accumulates dL/dz for the face's vertices
/// through the cross product. Only z moves; xy are frozen grid positions.
fn face_normal_backward(mesh: &ProxyMesh, f: Face, dl_dn_hat: Vec3, dl_dz: &mut [f64]) {
    let (va, vb, vc) = mesh.face_vertices(f);
    let c = (vb - va).cross(vc - va);
    let len = c.norm();
    let n_hat = c / len;
    let dl_dc = (dl_dn_hat - n_hat * n_hat.dot(dl_dn_hat)) / len;
    let e1 = vb - va;
    let e2 = vc - va;
    // c = e1 x e2; only the z components of the vertices vary.
    let dc_dzb = Vec3::new(-e2.y, e2.x, 0.0); // d c / d e1.z
    let dc_dzc = Vec3::new(e1.y, -e1.x, 0.0); // d c / d e2.z
    let gb = dl_dc.dot(dc_dzb);
    let gc = dl_dc.dot(dc_dzc);
    dl_dz[f.1 as usize] += gb;
    dl_dz[f.2 as usize] += gc;
    dl_dz[f.0 as usize] += -gb - gc;
}
