use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MeshFrame, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

fn render_obj(out: &mut String, mesh: &TriangleMesh, index_offset: usize) {
    for v in &mesh.vertices {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(
            out,
            "f {} {} {}",
            f[0] as usize + 1 + index_offset,
            f[1] as usize + 1 + index_offset,
            f[2] as usize + 1 + index_offset
        );
    }
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# object {} ({:?} frame)", mesh.object_id, mesh.frame);
    render_obj(&mut out, mesh, 0);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// All meshes in one file, one `o` group per object.
pub fn write_scene_obj(path: &Path, meshes: &[TriangleMesh]) -> Result<()> {
    let mut out = String::new();
    let mut offset = 0;
    for mesh in meshes {
        let _ = writeln!(out, "o object_{}", mesh.object_id);
        render_obj(&mut out, mesh, offset);
        offset += mesh.vertices.len();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `v` and `f` records; polygons are fan-triangulated and
/// `v/vt/vn` index forms accepted.
pub fn read_obj(path: &Path, frame: MeshFrame, object_id: u32) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, format!("line {}", lineno + 1), e.to_string()))?;
                if coords.len() != 3 {
                    return Err(Error::parse(path, format!("line {}", lineno + 1), "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| {
                            Error::parse(path, format!("line {}", lineno + 1), format!("bad index {s:?}"))
                        })?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(Error::parse(
                                path,
                                format!("line {}", lineno + 1),
                                format!("index {i} out of range"),
                            ));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(path, format!("line {}", lineno + 1), "face needs 3 indices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh::new(vertices, faces, frame, object_id);
    mesh.validate()
        .map_err(|e| Error::parse(path, "faces", e.to_string()))?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn obj_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.obj");
        let mut m = primitives::uv_sphere(0.123456789, 12, 7);
        m.frame = MeshFrame::World;
        m.object_id = 4;
        write_obj(&path, &m).unwrap();
        let back = read_obj(&path, MeshFrame::World, 4).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn obj_rejects_bad_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obj");
        fs::write(&path, "v 0 0 0\nv 1 0 0\nf 1 2 3\n").unwrap();
        let err = read_obj(&path, MeshFrame::Object, 0).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
