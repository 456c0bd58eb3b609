//! Checkpoint reader for the de-facto Gaussian Splatting PLY layout:
//! binary little-endian, one `vertex` element, all fields float32. Field
//! order is free; higher-order SH (`f_rest_*`), normals, and any other
//! unknown scalar properties are skipped by stride.

use crate::error::{Error, Result};

use super::{LogScales, RawGaussianRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    Char,
    UChar,
    Short,
    UShort,
    Int,
    UInt,
    Float,
    Double,
}

impl ScalarType {
    fn parse(tok: &str) -> Option<Self> {
        Some(match tok {
            "char" | "int8" => ScalarType::Char,
            "uchar" | "uint8" => ScalarType::UChar,
            "short" | "int16" => ScalarType::Short,
            "ushort" | "uint16" => ScalarType::UShort,
            "int" | "int32" => ScalarType::Int,
            "uint" | "uint32" => ScalarType::UInt,
            "float" | "float32" => ScalarType::Float,
            "double" | "float64" => ScalarType::Double,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::Char | ScalarType::UChar => 1,
            ScalarType::Short | ScalarType::UShort => 2,
            ScalarType::Int | ScalarType::UInt | ScalarType::Float => 4,
            ScalarType::Double => 8,
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: ScalarType,
    offset: usize,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    stride: usize,
}

struct Header {
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut lines = Vec::new();
    let mut body_offset = None;
    while pos < bytes.len() {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("missing end_header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| Error::Parse("non-UTF-8 header line".into()))?
            .trim_end_matches('\r');
        pos += nl + 1;
        if line == "end_header" {
            body_offset = Some(pos);
            break;
        }
        lines.push(line.to_string());
    }
    let body_offset = body_offset.ok_or_else(|| Error::Parse("missing end_header".into()))?;

    let mut lines = lines.into_iter();
    if lines.next().as_deref() != Some("ply") {
        return Err(Error::Parse("not a PLY file (missing 'ply' magic)".into()));
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(Error::Format(format!(
                        "unsupported PLY format '{kind}', expected binary_little_endian"
                    )));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Parse("element line without a name".into()))?;
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("element '{name}' has no valid count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    stride: 0,
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| Error::Parse("property before any element".into()))?;
                let ty_tok = tok
                    .next()
                    .ok_or_else(|| Error::Parse("property line without a type".into()))?;
                if ty_tok == "list" {
                    if elem.name == "vertex" {
                        return Err(Error::Format(
                            "list property in the vertex element is unsupported".into(),
                        ));
                    }
                    continue;
                }
                let ty = ScalarType::parse(ty_tok).ok_or_else(|| {
                    Error::Parse(format!("unknown property type '{ty_tok}'"))
                })?;
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Parse("property line without a name".into()))?;
                elem.props.push(Property {
                    name: name.to_string(),
                    ty,
                    offset: elem.stride,
                });
                elem.stride += ty.size();
            }
            Some(other) => {
                return Err(Error::Parse(format!("unrecognized header line '{other}'")));
            }
            None => {}
        }
    }
    if !format_seen {
        return Err(Error::Parse("missing format line".into()));
    }
    Ok(Header {
        elements,
        body_offset,
    })
}

fn require_float(elem: &Element, name: &str) -> Result<usize> {
    let prop = elem
        .props
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Parse(format!("vertex element is missing required property '{name}'")))?;
    if prop.ty != ScalarType::Float {
        return Err(Error::Format(format!(
            "property '{name}' must be float32, found {:?}",
            prop.ty
        )));
    }
    Ok(prop.offset)
}

const REQUIRED: [&str; 12] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "rot_0",
    "rot_1", "rot_2",
];

/// Reads the raw records of a Gaussian Splatting checkpoint.
///
/// Returns the records in file order. Whether the checkpoint is 2-scale
/// (flattened) or 3-scale is decided by the presence of `scale_2`.
pub fn parse_gs_ply(bytes: &[u8]) -> Result<Vec<RawGaussianRecord>> {
    let header = parse_header(bytes)?;

    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Parse("missing 'vertex' element".into()))?;
    if header.elements[..vertex_pos].iter().any(|e| e.count > 0) {
        return Err(Error::Format(
            "elements with data before 'vertex' are unsupported".into(),
        ));
    }
    let elem = &header.elements[vertex_pos];

    let mut off = [0usize; 12];
    for (slot, name) in off.iter_mut().zip(REQUIRED) {
        *slot = require_float(elem, name)?;
    }
    let rot3 = require_float(elem, "rot_3")?;
    let scale2 = match elem.props.iter().find(|p| p.name == "scale_2") {
        Some(_) => Some(require_float(elem, "scale_2")?),
        None => None,
    };

    let body = &bytes[header.body_offset..];
    let need = elem.count * elem.stride;
    if body.len() < need {
        return Err(Error::Parse(format!(
            "vertex data truncated: expected {} bytes for {} vertices, found {}",
            need,
            elem.count,
            body.len()
        )));
    }

    let f32_at = |row: &[u8], offset: usize| -> f32 {
        f32::from_le_bytes(row[offset..offset + 4].try_into().unwrap())
    };

    let mut records = Vec::with_capacity(elem.count);
    for i in 0..elem.count {
        let row = &body[i * elem.stride..(i + 1) * elem.stride];
        let g = |k: usize| f32_at(row, off[k]);
        let log_scales = match scale2 {
            Some(s2) => LogScales::Three([g(7), g(8), f32_at(row, s2)]),
            None => LogScales::Two([g(7), g(8)]),
        };
        records.push(RawGaussianRecord {
            position: [g(0), g(1), g(2)],
            f_dc: [g(3), g(4), g(5)],
            raw_opacity: g(6),
            log_scales,
            rotation: [g(9), g(10), g(11), f32_at(row, rot3)],
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{activate_cloud, Mode};
    use rand::{Rng, SeedableRng};

    /// Independent checkpoint writer used as the round-trip oracle. Builds
    /// the header as plain strings and the body with manual byte pushes; the
    /// `order` slice controls property order and may include filler names
    /// (written as 0.0).
    fn write_checkpoint(records: &[RawGaussianRecord], order: &[&str]) -> Vec<u8> {
        let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
        header.push_str(&format!("element vertex {}\n", records.len()));
        for name in order {
            header.push_str(&format!("property float {name}\n"));
        }
        header.push_str("end_header\n");

        let mut out = header.into_bytes();
        for r in records {
            for name in order {
                let v: f32 = match *name {
                    "x" => r.position[0],
                    "y" => r.position[1],
                    "z" => r.position[2],
                    "f_dc_0" => r.f_dc[0],
                    "f_dc_1" => r.f_dc[1],
                    "f_dc_2" => r.f_dc[2],
                    "opacity" => r.raw_opacity,
                    "scale_0" => match r.log_scales {
                        LogScales::Two(s) => s[0],
                        LogScales::Three(s) => s[0],
                    },
                    "scale_1" => match r.log_scales {
                        LogScales::Two(s) => s[1],
                        LogScales::Three(s) => s[1],
                    },
                    "scale_2" => match r.log_scales {
                        LogScales::Two(_) => panic!("2-scale record has no scale_2"),
                        LogScales::Three(s) => s[2],
                    },
                    "rot_0" => r.rotation[0],
                    "rot_1" => r.rotation[1],
                    "rot_2" => r.rotation[2],
                    "rot_3" => r.rotation[3],
                    _ => 0.0,
                };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    const CANONICAL: [&str; 14] = [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
        "rot_0", "rot_1", "rot_2", "rot_3",
    ];

    fn random_records(n: usize, seed: u64, scales: usize) -> Vec<RawGaussianRecord> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut f = move || -> f32 { rng.gen_range(-5.0..5.0) };
        (0..n)
            .map(|_| RawGaussianRecord {
                position: [f(), f(), f()],
                f_dc: [f(), f(), f()],
                raw_opacity: f(),
                log_scales: if scales == 2 {
                    LogScales::Two([f(), f()])
                } else {
                    LogScales::Three([f(), f(), f()])
                },
                rotation: [f() + 6.0, f(), f(), f()],
            })
            .collect()
    }

    fn bits(r: &RawGaussianRecord) -> Vec<u32> {
        let mut v: Vec<f32> = r.position.to_vec();
        v.extend(r.f_dc);
        v.push(r.raw_opacity);
        match r.log_scales {
            LogScales::Two(s) => v.extend(s),
            LogScales::Three(s) => v.extend(s),
        }
        v.extend(r.rotation);
        v.iter().map(|f| f.to_bits()).collect()
    }

    #[test]
    fn hundred_random_records_round_trip_bit_exact() {
        let records = random_records(100, 7, 3);
        let parsed = parse_gs_ply(&write_checkpoint(&records, &CANONICAL)).unwrap();
        assert_eq!(parsed.len(), 100);
        for (a, b) in records.iter().zip(&parsed) {
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn property_order_does_not_matter() {
        let records = random_records(10, 11, 3);
        let shuffled = [
            "rot_3", "scale_2", "f_dc_1", "x", "opacity", "rot_0", "z", "scale_0", "f_dc_0",
            "rot_1", "y", "scale_1", "f_dc_2", "rot_2",
        ];
        let a = parse_gs_ply(&write_checkpoint(&records, &CANONICAL)).unwrap();
        let b = parse_gs_ply(&write_checkpoint(&records, &shuffled)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_properties_are_skipped() {
        let records = random_records(10, 13, 3);
        let mut padded: Vec<&str> = vec!["x", "y", "z", "nx", "ny", "nz"];
        padded.extend(["f_dc_0", "f_dc_1", "f_dc_2"]);
        let rest: Vec<String> = (0..45).map(|i| format!("f_rest_{i}")).collect();
        padded.extend(rest.iter().map(|s| s.as_str()));
        padded.extend([
            "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
        ]);
        let parsed = parse_gs_ply(&write_checkpoint(&records, &padded)).unwrap();
        for (a, b) in records.iter().zip(&parsed) {
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn two_scale_checkpoints_are_recognized_as_flat() {
        let records = random_records(5, 17, 2);
        let order: Vec<&str> = CANONICAL
            .iter()
            .copied()
            .filter(|n| *n != "scale_2")
            .collect();
        let parsed = parse_gs_ply(&write_checkpoint(&records, &order)).unwrap();
        assert!(matches!(parsed[0].log_scales, LogScales::Two(_)));
        let cloud = activate_cloud(&parsed).unwrap();
        assert_eq!(cloud.source_mode, Mode::Flat);
    }

    #[test]
    fn single_vertex_fields_map_to_the_right_slots() {
        let record = RawGaussianRecord {
            position: [1.0, 2.0, 3.0],
            f_dc: [0.25, -0.25, 0.125],
            raw_opacity: 0.75,
            log_scales: LogScales::Three([-1.0, -2.0, -3.0]),
            rotation: [1.0, 0.0, 0.0, 0.0],
        };
        let parsed = parse_gs_ply(&write_checkpoint(&[record.clone()], &CANONICAL)).unwrap();
        assert_eq!(parsed, vec![record]);
    }

    #[test]
    fn missing_opacity_is_reported_by_name() {
        let records = random_records(3, 19, 3);
        let order: Vec<&str> = CANONICAL
            .iter()
            .copied()
            .filter(|n| *n != "opacity")
            .collect();
        let err = parse_gs_ply(&write_checkpoint(&records, &order)).unwrap_err();
        assert!(err.to_string().contains("'opacity'"), "{err}");
    }

    #[test]
    fn truncated_body_reports_expected_and_actual_byte_counts() {
        let records = random_records(4, 23, 3);
        let mut bytes = write_checkpoint(&records, &CANONICAL);
        bytes.truncate(bytes.len() - 7);
        let err = parse_gs_ply(&bytes).unwrap_err();
        let msg = err.to_string();
        let expected = 4 * CANONICAL.len() * 4;
        assert!(msg.contains(&expected.to_string()), "{msg}");
        assert!(msg.contains(&(expected - 7).to_string()), "{msg}");
    }

    #[test]
    fn ascii_ply_is_rejected() {
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        let err = parse_gs_ply(ascii).unwrap_err();
        assert!(err.to_string().contains("binary_little_endian"));
    }

    #[test]
    fn big_endian_ply_is_rejected() {
        let be = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(parse_gs_ply(be).is_err());
    }

    #[test]
    fn list_property_in_vertex_element_is_rejected() {
        let bytes =
            b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty list uchar int idx\nend_header\n";
        let err = parse_gs_ply(bytes).unwrap_err();
        assert!(err.to_string().contains("list"));
    }

    #[test]
    fn leading_element_with_data_is_rejected() {
        let bytes = b"ply\nformat binary_little_endian 1.0\nelement camera 1\nproperty float cx\nelement vertex 0\nend_header\n";
        assert!(parse_gs_ply(bytes).is_err());
    }

    #[test]
    fn zero_norm_quaternion_error_carries_the_record_index() {
        let mut records = random_records(3, 29, 3);
        records[2].rotation = [0.0; 4];
        let parsed = parse_gs_ply(&write_checkpoint(&records, &CANONICAL)).unwrap();
        let err = activate_cloud(&parsed).unwrap_err();
        assert!(err.to_string().contains("record 2"), "{err}");
    }
}
