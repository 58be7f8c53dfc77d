//! Wavefront OBJ import/export for surface meshes.
//!
//! Export writes the proxy mesh of a trained surface; import accepts any
//! triangle mesh that is height-field-like (a single z per (x, y) column) so
//! it can stand in for the water surface at render time.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use refrac_core::mesh::{Face, ProxyMesh};
use refrac_core::{HeightFieldNet, Vec3};

pub fn mesh_to_obj(mesh: &ProxyMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f.0 + 1, f.1 + 1, f.2 + 1);
    }
    s
}

/// Samples the trained surface on a regular grid and writes it as OBJ.
pub fn export_surface(net: &HeightFieldNet, res: usize, path: &Path) -> Result<()> {
    let mesh = ProxyMesh::build(net, res, res, false);
    std::fs::write(path, mesh_to_obj(&mesh))
        .with_context(|| format!("writing mesh {}", path.display()))
}

/// Parses a triangle-only OBJ (v and f records; everything else ignored).
pub fn parse_obj(text: &str) -> Result<ProxyMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<Face> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = || -> Result<f64> {
                    parts
                        .next()
                        .ok_or_else(|| anyhow::anyhow!("line {}: short vertex", lineno + 1))?
                        .parse()
                        .with_context(|| format!("line {}: bad vertex number", lineno + 1))
                };
                let (x, y, z) = (coord()?, coord()?, coord()?);
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|tok| {
                        // "i", "i/t", "i/t/n" forms; 1-based.
                        let head = tok.split('/').next().unwrap_or(tok);
                        head.parse::<i64>()
                            .ok()
                            .filter(|&i| i >= 1 && (i as usize) <= vertices.len())
                            .map(|i| (i - 1) as u32)
                            .ok_or_else(|| anyhow::anyhow!("line {}: bad face index '{tok}'", lineno + 1))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    bail!("line {}: only triangle faces are supported", lineno + 1);
                }
                faces.push(Face(idx[0], idx[1], idx[2]));
            }
            _ => {}
        }
    }
    if vertices.is_empty() || faces.is_empty() {
        bail!("mesh has no geometry");
    }
    Ok(ProxyMesh::from_raw(vertices, faces))
}

pub fn load_obj(path: &Path) -> Result<ProxyMesh> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading mesh {}", path.display()))?;
    parse_obj(&text).with_context(|| format!("parsing mesh {}", path.display()))
}

/// Rejects meshes that fold over themselves vertically: any two faces whose
/// xy projections overlap (tested at vertices and centroids) describe two
/// heights over one column and cannot act as a height field.
pub fn validate_heightfield(mesh: &ProxyMesh) -> Result<()> {
    let proj: Vec<[(f64, f64); 3]> = mesh
        .faces
        .iter()
        .map(|f| {
            let (a, b, c) = mesh.face_vertices(*f);
            [(a.x, a.y), (b.x, b.y), (c.x, c.y)]
        })
        .collect();
    let boxes: Vec<(f64, f64, f64, f64)> = proj
        .iter()
        .map(|t| {
            let xs = [t[0].0, t[1].0, t[2].0];
            let ys = [t[0].1, t[1].1, t[2].1];
            (
                xs.iter().cloned().fold(f64::INFINITY, f64::min),
                xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ys.iter().cloned().fold(f64::INFINITY, f64::min),
                ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();
    for i in 0..proj.len() {
        for j in i + 1..proj.len() {
            let (bi, bj) = (boxes[i], boxes[j]);
            if bi.1 <= bj.0 || bj.1 <= bi.0 || bi.3 <= bj.2 || bj.3 <= bi.2 {
                continue;
            }
            // Strict interior containment of a centroid or vertex means two
            // layers over the same column. Shared edges/vertices are fine.
            let centroid = |t: &[(f64, f64); 3]| {
                (
                    (t[0].0 + t[1].0 + t[2].0) / 3.0,
                    (t[0].1 + t[1].1 + t[2].1) / 3.0,
                )
            };
            let mut probes_ij = vec![centroid(&proj[j])];
            probes_ij.extend_from_slice(&proj[j]);
            let mut probes_ji = vec![centroid(&proj[i])];
            probes_ji.extend_from_slice(&proj[i]);
            let hit = probes_ij.iter().any(|p| strictly_inside(&proj[i], *p))
                || probes_ji.iter().any(|p| strictly_inside(&proj[j], *p));
            if hit {
                bail!(
                    "mesh is not a height field: faces {i} and {j} overlap in xy"
                );
            }
        }
    }
    Ok(())
}

fn strictly_inside(tri: &[(f64, f64); 3], p: (f64, f64)) -> bool {
    let sign = |a: (f64, f64), b: (f64, f64)| {
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
    };
    let d0 = sign(tri[0], tri[1]);
    let d1 = sign(tri[1], tri[2]);
    let d2 = sign(tri[2], tri[0]);
    let eps = 1e-12;
    (d0 > eps && d1 > eps && d2 > eps) || (d0 < -eps && d1 < -eps && d2 < -eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use refrac_core::heightfield::Domain;

    #[test]
    fn export_import_round_trip() {
        let net = HeightFieldNet::init_flat(Domain::centered(1.0), 0.3, 1.0, &[8], 2, 1);
        let mesh = ProxyMesh::build(&net, 6, 6, false);
        let text = mesh_to_obj(&mesh);
        let back = parse_obj(&text).unwrap();
        assert_eq!(back.vertices.len(), mesh.vertices.len());
        assert_eq!(back.faces.len(), mesh.faces.len());
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert_eq!(a, b);
        }
        validate_heightfield(&back).unwrap();
    }

    #[test]
    fn vertical_overlap_rejected() {
        // Two stacked triangles over the same column.
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nf 1 2 3\nf 4 5 6\n";
        let mesh = parse_obj(text).unwrap();
        let err = validate_heightfield(&mesh).unwrap_err().to_string();
        assert!(err.contains("height field"), "{err}");
    }

    #[test]
    fn adjacent_faces_accepted() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n";
        let mesh = parse_obj(text).unwrap();
        validate_heightfield(&mesh).unwrap();
    }

    #[test]
    fn quads_and_garbage_rejected() {
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").is_err());
        assert!(parse_obj("f 1 2 3\n").is_err());
        assert!(parse_obj("").is_err());
        assert!(parse_obj("v 0 0\n").is_err());
    }

    #[test]
    fn obj_with_slash_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.faces[0], Face(0, 1, 2));
    }
}
