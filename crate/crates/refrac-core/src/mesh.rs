//! Proxy mesh: a triangulated grid lifted by height-field queries, the
//! piecewise linear stand-in used for ray-surface intersection.

use alloc::vec;
use alloc::vec::Vec;

use crate::bvh::{Aabb, Bvh};
use crate::heightfield::{HeightFieldNet, NetTape};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face(pub u32, pub u32, pub u32);

#[derive(Debug, Clone)]
pub struct ProxyMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Face>,
    /// Unit vertex normals; empty until [`ProxyMesh::compute_vertex_normals`].
    pub vertex_normals: Vec<Vec3>,
    pub nx: usize,
    pub ny: usize,
    /// Tapes from the lifting height queries, index-aligned with `vertices`.
    /// Empty in eval mode.
    pub tapes: Vec<NetTape>,
}

impl ProxyMesh {
    /// Uniform (nx x ny) grid over the net's domain, each vertex lifted by one
    /// height query. `with_tapes` retains per-vertex MLP tapes for backward.
    pub fn build(net: &HeightFieldNet, nx: usize, ny: usize, with_tapes: bool) -> ProxyMesh {
        assert!(nx >= 2 && ny >= 2);
        let d = net.domain;
        let mut vertices = Vec::with_capacity(nx * ny);
        let mut tapes = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let x = d.x_min + (d.x_max - d.x_min) * i as f64 / (nx - 1) as f64;
                let y = d.y_min + (d.y_max - d.y_min) * j as f64 / (ny - 1) as f64;
                let z = if with_tapes {
                    let (z, tape) = net.height(x, y);
                    tapes.push(tape);
                    z
                } else {
                    net.height_only(x, y)
                };
                vertices.push(Vec3::new(x, y, z));
            }
        }
        let faces = grid_faces(nx, ny);
        ProxyMesh {
            vertices,
            faces,
            vertex_normals: Vec::new(),
            nx,
            ny,
            tapes,
        }
    }

    /// Builds from explicit vertices (used by the surface-editing path, where
    /// the mesh comes from a file rather than the net).
    pub fn from_raw(vertices: Vec<Vec3>, faces: Vec<Face>) -> ProxyMesh {
        ProxyMesh {
            vertices,
            faces,
            vertex_normals: Vec::new(),
            nx: 0,
            ny: 0,
            tapes: Vec::new(),
        }
    }

    pub fn face_vertices(&self, f: Face) -> (Vec3, Vec3, Vec3) {
        (
            self.vertices[f.0 as usize],
            self.vertices[f.1 as usize],
            self.vertices[f.2 as usize],
        )
    }

    /// Unnormalized face normal (CCW winding seen from +z gives positive z).
    pub fn face_normal_raw(&self, f: Face) -> Vec3 {
        let (a, b, c) = self.face_vertices(f);
        (b - a).cross(c - a)
    }

    /// Per-vertex normals as the normalized average of adjacent unit face
    /// normals.
    pub fn compute_vertex_normals(&mut self) {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        let mut count = vec![0u32; self.vertices.len()];
        for &f in &self.faces {
            let n = self.face_normal_raw(f).normalized();
            for v in [f.0, f.1, f.2] {
                acc[v as usize] += n;
                count[v as usize] += 1;
            }
        }
        self.vertex_normals = acc
            .iter()
            .zip(&count)
            .map(|(&a, &c)| {
                if c == 0 {
                    Vec3::new(0.0, 0.0, 1.0)
                } else {
                    (a / c as f64).normalized()
                }
            })
            .collect();
    }

    /// Faces adjacent to each vertex.
    pub fn vertex_face_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (fi, &f) in self.faces.iter().enumerate() {
            for v in [f.0, f.1, f.2] {
                adj[v as usize].push(fi as u32);
            }
        }
        adj
    }

    pub fn build_bvh(&self) -> Bvh {
        let boxes: Vec<Aabb> = self
            .faces
            .iter()
            .map(|&f| {
                let (a, b, c) = self.face_vertices(f);
                Aabb::of_points(&[a, b, c])
            })
            .collect();
        Bvh::build(&boxes)
    }
}

/// Fixed diagonal split (lower-left to upper-right), CCW seen from +z.
pub fn grid_faces(nx: usize, ny: usize) -> Vec<Face> {
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    let idx = |i: usize, j: usize| (j * nx + i) as u32;
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v00 = idx(i, j);
            let v10 = idx(i + 1, j);
            let v01 = idx(i, j + 1);
            let v11 = idx(i + 1, j + 1);
            faces.push(Face(v00, v10, v11));
            faces.push(Face(v00, v11, v01));
        }
    }
    faces
}
