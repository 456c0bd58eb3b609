//! Self-contained glTF 2.0 export: one mesh primitive with positions,
//! per-vertex RGBA colors, and 32-bit indices in a single base64 data URI
//! buffer. The material blends alpha and renders both sides, matching the
//! transparent two-sided soup.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};
use std::path::Path;

use crate::error::{Error, Result};
use crate::meshgen::MeshSoup;

const FLOAT: u32 = 5126;
const UNSIGNED_INT: u32 = 5125;
const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;
const TRIANGLES: u32 = 4;

pub fn gltf_value(soup: &MeshSoup) -> Result<Value> {
    if soup.vertices.is_empty() || soup.faces.is_empty() {
        return Err(Error::Config(
            "refusing to export an empty soup to gltf: accessors need content".into(),
        ));
    }

    let mut buffer = Vec::new();
    let mut min = [f32::INFINITY; 3];
    let mut max = [f32::NEG_INFINITY; 3];
    for v in &soup.vertices {
        for c in 0..3 {
            min[c] = min[c].min(v.position[c]);
            max[c] = max[c].max(v.position[c]);
            buffer.extend_from_slice(&v.position[c].to_le_bytes());
        }
    }
    let colors_offset = buffer.len();
    for v in &soup.vertices {
        for c in v.rgba {
            buffer.extend_from_slice(&c.to_le_bytes());
        }
    }
    let indices_offset = buffer.len();
    for f in &soup.faces {
        for &idx in f {
            buffer.extend_from_slice(&idx.to_le_bytes());
        }
    }

    let vertex_count = soup.vertices.len();
    let index_count = soup.faces.len() * 3;
    let uri = format!(
        "data:application/octet-stream;base64,{}",
        BASE64.encode(&buffer)
    );

    Ok(json!({
        "asset": { "version": "2.0", "generator": "meshsplats" },
        "scene": 0,
        "scenes": [ { "nodes": [0] } ],
        "nodes": [ { "mesh": 0 } ],
        "meshes": [ {
            "primitives": [ {
                "attributes": { "POSITION": 0, "COLOR_0": 1 },
                "indices": 2,
                "material": 0,
                "mode": TRIANGLES
            } ]
        } ],
        "materials": [ {
            "pbrMetallicRoughness": {
                "baseColorFactor": [1.0, 1.0, 1.0, 1.0],
                "metallicFactor": 0.0,
                "roughnessFactor": 1.0
            },
            "alphaMode": "BLEND",
            "doubleSided": true
        } ],
        "buffers": [ { "uri": uri, "byteLength": buffer.len() } ],
        "bufferViews": [
            {
                "buffer": 0,
                "byteOffset": 0,
                "byteLength": colors_offset,
                "target": ARRAY_BUFFER
            },
            {
                "buffer": 0,
                "byteOffset": colors_offset,
                "byteLength": indices_offset - colors_offset,
                "target": ARRAY_BUFFER
            },
            {
                "buffer": 0,
                "byteOffset": indices_offset,
                "byteLength": buffer.len() - indices_offset,
                "target": ELEMENT_ARRAY_BUFFER
            }
        ],
        "accessors": [
            {
                "bufferView": 0,
                "componentType": FLOAT,
                "count": vertex_count,
                "type": "VEC3",
                "min": min.to_vec(),
                "max": max.to_vec()
            },
            {
                "bufferView": 1,
                "componentType": FLOAT,
                "count": vertex_count,
                "type": "VEC4"
            },
            {
                "bufferView": 2,
                "componentType": UNSIGNED_INT,
                "count": index_count,
                "type": "SCALAR"
            }
        ]
    }))
}

pub fn gltf_string(soup: &MeshSoup) -> Result<String> {
    let value = gltf_value(soup)?;
    serde_json::to_string_pretty(&value)
        .map_err(|e| Error::Format(format!("gltf serialization: {e}")))
}

pub fn write_gltf(path: &Path, soup: &MeshSoup) -> Result<()> {
    std::fs::write(path, gltf_string(soup)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen::Vertex;

    fn sample_soup() -> MeshSoup {
        MeshSoup {
            vertices: vec![
                Vertex {
                    position: [0.5, -1.0, 2.0],
                    rgba: [1.0, 0.0, 0.0, 0.5],
                },
                Vertex {
                    position: [-3.0, 0.25, 0.0],
                    rgba: [0.0, 1.0, 0.0, 0.25],
                },
                Vertex {
                    position: [1.5, 4.0, -2.0],
                    rgba: [0.0, 0.0, 1.0, 1.0],
                },
                Vertex {
                    position: [0.0, 0.0, 0.0],
                    rgba: [0.5, 0.5, 0.5, 0.75],
                },
            ],
            faces: vec![[0, 1, 2], [1, 2, 3]],
            face_gaussian_id: vec![0, 1],
        }
    }

    fn decoded_buffer(doc: &Value) -> Vec<u8> {
        let uri = doc["buffers"][0]["uri"].as_str().unwrap();
        let b64 = uri
            .strip_prefix("data:application/octet-stream;base64,")
            .expect("self-contained data uri");
        BASE64.decode(b64).unwrap()
    }

    #[test]
    fn document_structure_follows_the_spec_version_and_layout() {
        let doc = gltf_value(&sample_soup()).unwrap();
        assert_eq!(doc["asset"]["version"], "2.0");
        assert_eq!(doc["meshes"][0]["primitives"][0]["mode"], 4);
        assert_eq!(doc["materials"][0]["alphaMode"], "BLEND");
        assert_eq!(doc["materials"][0]["doubleSided"], true);
        assert_eq!(doc["accessors"][0]["componentType"], 5126);
        assert_eq!(doc["accessors"][0]["type"], "VEC3");
        assert_eq!(doc["accessors"][0]["count"], 4);
        assert_eq!(doc["accessors"][1]["type"], "VEC4");
        assert_eq!(doc["accessors"][2]["componentType"], 5125);
        assert_eq!(doc["accessors"][2]["count"], 6);
        // Buffer views tile the buffer exactly.
        let total = doc["buffers"][0]["byteLength"].as_u64().unwrap();
        let sum: u64 = (0..3)
            .map(|i| doc["bufferViews"][i]["byteLength"].as_u64().unwrap())
            .sum();
        assert_eq!(total, sum);
        assert_eq!(total, (4 * 12 + 4 * 16 + 6 * 4) as u64);
    }

    #[test]
    fn position_min_max_bound_the_vertices() {
        let doc = gltf_value(&sample_soup()).unwrap();
        let min: Vec<f64> = doc["accessors"][0]["min"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let max: Vec<f64> = doc["accessors"][0]["max"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(min, vec![-3.0, -1.0, -2.0]);
        assert_eq!(max, vec![1.5, 4.0, 2.0]);
    }

    #[test]
    fn buffer_bytes_decode_back_to_the_soup() {
        let soup = sample_soup();
        let doc = gltf_value(&soup).unwrap();
        let buf = decoded_buffer(&doc);

        for (i, v) in soup.vertices.iter().enumerate() {
            for c in 0..3 {
                let o = i * 12 + c * 4;
                let got = f32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
                assert_eq!(got.to_bits(), v.position[c].to_bits());
            }
            for c in 0..4 {
                let o = 4 * 12 + i * 16 + c * 4;
                let got = f32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
                assert_eq!(got.to_bits(), v.rgba[c].to_bits());
            }
        }
        let idx_base = 4 * 12 + 4 * 16;
        let mut indices = Vec::new();
        for k in 0..6 {
            let o = idx_base + k * 4;
            indices.push(u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()));
        }
        assert_eq!(indices, vec![0, 1, 2, 1, 2, 3]);
    }

    #[test]
    fn empty_soups_are_refused() {
        let soup = MeshSoup {
            vertices: vec![],
            faces: vec![],
            face_gaussian_id: vec![],
        };
        assert!(matches!(gltf_value(&soup), Err(Error::Config(_))));
    }

    #[test]
    fn file_output_is_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.gltf");
        write_gltf(&path, &sample_soup()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["asset"]["version"], "2.0");
    }
}
