//! Wavefront OBJ export with per-vertex colors.
//!
//! Vertices use the common color extension `v x y z r g b`; faces are
//! 1-indexed triangles. OBJ has no opacity channel, so alpha is dropped;
//! callers that care should warn.

use std::path::Path;

use crate::error::Result;
use crate::meshgen::MeshSoup;

pub fn obj_string(soup: &MeshSoup) -> String {
    let mut out = String::new();
    for v in &soup.vertices {
        let [x, y, z] = v.position;
        let [r, g, b, _] = v.rgba;
        out.push_str(&format!("v {x} {y} {z} {r} {g} {b}\n"));
    }
    for f in &soup.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out
}

pub fn write_obj(path: &Path, soup: &MeshSoup) -> Result<()> {
    std::fs::write(path, obj_string(soup))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen::Vertex;

    fn tiny_soup() -> MeshSoup {
        MeshSoup {
            vertices: vec![
                Vertex {
                    position: [0.0, 1.0, -2.5],
                    rgba: [1.0, 0.5, 0.25, 0.6],
                },
                Vertex {
                    position: [1.0, 0.0, 0.0],
                    rgba: [0.0, 0.0, 0.0, 1.0],
                },
                Vertex {
                    position: [0.125, -3.0, 4.0],
                    rgba: [0.75, 1.0, 0.0, 0.0],
                },
            ],
            faces: vec![[0, 1, 2]],
            face_gaussian_id: vec![0],
        }
    }

    #[test]
    fn vertices_carry_position_and_rgb_but_not_alpha() {
        let text = obj_string(&tiny_soup());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "v 0 1 -2.5 1 0.5 0.25");
        assert_eq!(lines[1], "v 1 0 0 0 0 0");
        assert_eq!(lines[2], "v 0.125 -3 4 0.75 1 0");
        // No line has more than 7 fields: alpha never leaks out.
        for l in &lines {
            assert!(l.split_whitespace().count() <= 7);
        }
    }

    #[test]
    fn faces_are_one_indexed_triangles() {
        let text = obj_string(&tiny_soup());
        assert!(text.lines().any(|l| l == "f 1 2 3"));
    }

    #[test]
    fn file_writing_round_trips_the_string() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.obj");
        let soup = tiny_soup();
        write_obj(&path, &soup).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), obj_string(&soup));
    }
}
