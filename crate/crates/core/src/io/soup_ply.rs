//! The native soup file: binary little-endian PLY with a version marker.
//!
//! Layout, in this exact order:
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! comment meshsplats_soup_version 1
//! element vertex N
//! property float x / y / z
//! property uchar red / green / blue / alpha
//! element face M
//! property list uchar uint vertex_indices
//! property uint gaussian_id
//! end_header
//! ```
//!
//! Positions round-trip bit-exactly; colors and opacities are quantized to
//! a byte with half-up rounding, so a round trip stays within 1/255. Extra
//! comment lines are tolerated anywhere after the format line, but the
//! property schema itself is fixed: readers reject files that deviate rather
//! than guess.

use std::path::Path;

use crate::error::{Error, Result};
use crate::meshgen::{MeshSoup, Vertex};

pub const SOUP_VERSION: u32 = 1;
const VERSION_COMMENT: &str = "comment meshsplats_soup_version";

pub fn soup_to_bytes(soup: &MeshSoup) -> Vec<u8> {
    assert_eq!(soup.faces.len(), soup.face_gaussian_id.len());
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("{VERSION_COMMENT} {SOUP_VERSION}\n"));
    header.push_str(&format!("element vertex {}\n", soup.vertices.len()));
    for name in ["x", "y", "z"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for name in ["red", "green", "blue", "alpha"] {
        header.push_str(&format!("property uchar {name}\n"));
    }
    header.push_str(&format!("element face {}\n", soup.faces.len()));
    header.push_str("property list uchar uint vertex_indices\n");
    header.push_str("property uint gaussian_id\n");
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for v in &soup.vertices {
        for c in v.position {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for c in v.rgba {
            out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    for (f, &gid) in soup.faces.iter().zip(&soup.face_gaussian_id) {
        out.push(3);
        for &idx in f {
            out.extend_from_slice(&idx.to_le_bytes());
        }
        out.extend_from_slice(&gid.to_le_bytes());
    }
    out
}

/// The fixed header schema after the format line, with element counts
/// captured.
struct HeaderInfo {
    vertex_count: usize,
    face_count: usize,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<HeaderInfo> {
    let mut pos = 0usize;
    let mut next_line = || -> Result<String> {
        if pos >= bytes.len() {
            return Err(Error::Parse("soup header ends before end_header".into()));
        }
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("soup header ends before end_header".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::Parse("soup header is not utf-8".into()))?
            .trim_end_matches('\r')
            .to_string();
        pos += nl + 1;
        Ok(line)
    };

    if next_line()? != "ply" {
        return Err(Error::Format("not a ply file".into()));
    }
    if next_line()? != "format binary_little_endian 1.0" {
        return Err(Error::Format(
            "soup files are binary little-endian ply".into(),
        ));
    }

    // The schema lines expected in order; comments may interleave.
    let mut version: Option<u32> = None;
    let expected = [
        "element vertex",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property uchar alpha",
        "element face",
        "property list uchar uint vertex_indices",
        "property uint gaussian_id",
        "end_header",
    ];
    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut want = 0usize;
    while want < expected.len() {
        let line = next_line()?;
        if let Some(v) = line.strip_prefix(VERSION_COMMENT) {
            version = Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad soup version line: {line}")))?,
            );
            continue;
        }
        if line.starts_with("comment") || line.starts_with("obj_info") {
            continue;
        }
        let pattern = expected[want];
        if pattern.starts_with("element") {
            let Some(count) = line
                .strip_prefix(pattern)
                .and_then(|rest| rest.trim().parse::<usize>().ok())
            else {
                return Err(Error::Format(format!(
                    "unexpected soup header line {line:?}, wanted \"{pattern} <count>\""
                )));
            };
            if pattern.ends_with("vertex") {
                vertex_count = count;
            } else {
                face_count = count;
            }
        } else if line != pattern {
            return Err(Error::Format(format!(
                "unexpected soup header line {line:?}, wanted {pattern:?}"
            )));
        }
        want += 1;
    }

    match version {
        None => Err(Error::Format(
            "missing meshsplats_soup_version marker; not a soup file".into(),
        )),
        Some(v) if v != SOUP_VERSION => Err(Error::Format(format!(
            "unsupported soup version {v}, this build reads version {SOUP_VERSION}"
        ))),
        Some(_) => Ok(HeaderInfo {
            vertex_count,
            face_count,
            body_offset: pos,
        }),
    }
}

pub fn soup_from_bytes(bytes: &[u8]) -> Result<MeshSoup> {
    let info = parse_header(bytes)?;
    let body = &bytes[info.body_offset..];
    let vertex_bytes = info.vertex_count * 16;
    let face_bytes = info.face_count * 17;
    if body.len() < vertex_bytes + face_bytes {
        return Err(Error::Parse(format!(
            "soup data truncated: expected {} bytes for {} vertices and {} faces, found {}",
            vertex_bytes + face_bytes,
            info.vertex_count,
            info.face_count,
            body.len()
        )));
    }

    let mut vertices = Vec::with_capacity(info.vertex_count);
    for i in 0..info.vertex_count {
        let row = &body[i * 16..i * 16 + 16];
        let f = |o: usize| f32::from_le_bytes(row[o..o + 4].try_into().unwrap());
        vertices.push(Vertex {
            position: [f(0), f(4), f(8)],
            rgba: [
                row[12] as f32 / 255.0,
                row[13] as f32 / 255.0,
                row[14] as f32 / 255.0,
                row[15] as f32 / 255.0,
            ],
        });
    }

    let faces_body = &body[vertex_bytes..];
    let mut faces = Vec::with_capacity(info.face_count);
    let mut ids = Vec::with_capacity(info.face_count);
    for i in 0..info.face_count {
        let row = &faces_body[i * 17..i * 17 + 17];
        if row[0] != 3 {
            return Err(Error::Format(format!(
                "face {i} has {} vertices, soup faces are triangles",
                row[0]
            )));
        }
        let u = |o: usize| u32::from_le_bytes(row[o..o + 4].try_into().unwrap());
        let face = [u(1), u(5), u(9)];
        for &v in &face {
            if v as usize >= info.vertex_count {
                return Err(Error::Format(format!(
                    "face {i} references vertex {v} of {}",
                    info.vertex_count
                )));
            }
        }
        faces.push(face);
        ids.push(u(13));
    }

    Ok(MeshSoup {
        vertices,
        faces,
        face_gaussian_id: ids,
    })
}

pub fn write_soup(path: &Path, soup: &MeshSoup) -> Result<()> {
    std::fs::write(path, soup_to_bytes(soup))?;
    Ok(())
}

pub fn read_soup(path: &Path) -> Result<MeshSoup> {
    let bytes = std::fs::read(path)?;
    soup_from_bytes(&bytes)
}
