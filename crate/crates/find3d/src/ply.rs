//! PLY point clouds, ASCII and binary little-endian.
//!
//! Vertices carry `x y z`, optionally `nx ny nz` (zero when absent) and
//! `red green blue` (8-bit, mapped to [0, 1]; zero when absent). Other
//! vertex properties and other elements are read and ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use find3d_core::cloud::{Point, PointCloud};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(Error::Ply(format!("unknown property type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<bool> {
        line.clear();
        let n = r.read_line(line).map_err(|e| Error::Ply(e.to_string()))?;
        Ok(n > 0)
    };
    if !next(&mut line)? || line.trim() != "ply" {
        return Err(Error::Ply("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next(&mut line)? {
            return Err(Error::Ply("header ends before `end_header`".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::Ply(format!("unsupported format `{other}`"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Ply(format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, _name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before any element".into()))?
                .props
                .push(Property::List(Scalar::parse(count)?, Scalar::parse(item)?)),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before any element".into()))?
                .props
                .push(Property::Scalar(Scalar::parse(ty)?, name.to_string())),
            _ => return Err(Error::Ply(format!("unrecognized header line `{}`", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| Error::Ply("missing format line".into()))?;
    Ok(Header { format, elements })
}

/// Scalar property values of every row of one element.
fn read_element<R: BufRead>(r: &mut R, format: PlyFormat, el: &Element) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(el.count);
    let eof = || Error::Ply(format!("file ends inside element `{}`", el.name));
    match format {
        PlyFormat::Ascii => {
            let mut line = String::new();
            for _ in 0..el.count {
                line.clear();
                if r.read_line(&mut line).map_err(|e| Error::Ply(e.to_string()))? == 0 {
                    return Err(eof());
                }
                let mut toks = line.split_whitespace();
                let mut num = || -> Result<f64> {
                    let t = toks.next().ok_or_else(|| Error::Ply(format!("short row in `{}`", el.name)))?;
                    t.parse().map_err(|_| Error::Ply(format!("bad number `{t}`")))
                };
                let mut row = Vec::new();
                for p in &el.props {
                    match p {
                        Property::Scalar(..) => row.push(num()?),
                        Property::List(..) => {
                            let n = num()? as usize;
                            for _ in 0..n {
                                num()?;
                            }
                        }
                    }
                }
                rows.push(row);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf = [0u8; 8];
            let mut read = |ty: Scalar, r: &mut R| -> Result<f64> {
                r.read_exact(&mut buf[..ty.size()]).map_err(|_| eof())?;
                Ok(ty.read_le(&buf))
            };
            for _ in 0..el.count {
                let mut row = Vec::new();
                for p in &el.props {
                    match p {
                        Property::Scalar(ty, _) => row.push(read(*ty, r)?),
                        Property::List(ct, it) => {
                            let n = read(*ct, r)? as usize;
                            for _ in 0..n {
                                read(*it, r)?;
                            }
                        }
                    }
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn read_ply_from<R: Read>(reader: R) -> Result<PointCloud> {
    let mut r = BufReader::new(reader);
    let header = read_header(&mut r)?;
    for el in &header.elements {
        let rows = read_element(&mut r, header.format, el)?;
        if el.name != "vertex" {
            continue;
        }
        let names: Vec<(&str, Scalar)> = el
            .props
            .iter()
            .filter_map(|p| match p {
                Property::Scalar(t, n) => Some((n.as_str(), *t)),
                Property::List(..) => None,
            })
            .collect();
        let col = |n: &str| names.iter().position(|(m, _)| *m == n);
        let need = |n: &str| col(n).ok_or_else(|| Error::Ply(format!("vertex has no `{n}` property")));
        let pos = [need("x")?, need("y")?, need("z")?];
        let nrm = [col("nx"), col("ny"), col("nz")];
        let rgb = [col("red"), col("green"), col("blue")];
        let color_scale = |c: usize| match names[c].1 {
            Scalar::F32 | Scalar::F64 => 1.0,
            Scalar::U16 | Scalar::I16 => 1.0 / 65535.0,
            _ => 1.0 / 255.0,
        };
        let points = rows
            .iter()
            .map(|row| {
                Point::new(
                    pos.map(|c| row[c]),
                    nrm.map(|c| c.map_or(0.0, |c| row[c])),
                    rgb.map(|c| c.map_or(0.0, |c| row[c] * color_scale(c))),
                )
            })
            .collect();
        return Ok(PointCloud::new(points)?);
    }
    Err(Error::Ply("no vertex element".into()))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let f = File::open(path).map_err(Error::io(path))?;
    read_ply_from(f).map_err(|e| match e {
        Error::Ply(m) => Error::format(path, m),
        other => other,
    })
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes positions and normals as `float` and colors as `uchar`;
/// `colors` replaces the cloud's own colors when given.
pub fn write_ply_to<W: Write>(w: W, cloud: &PointCloud, format: PlyFormat, colors: Option<&[[u8; 3]]>) -> Result<()> {
    let mut w = BufWriter::new(w);
    let io = |e: std::io::Error| Error::Ply(e.to_string());
    if colors.is_some_and(|c| c.len() != cloud.len()) {
        return Err(Error::Ply("color override length differs from point count".into()));
    }
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(w, "ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len()).map_err(io)?;
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(w, "property float {p}").map_err(io)?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}").map_err(io)?;
    }
    writeln!(w, "end_header").map_err(io)?;
    for (i, p) in cloud.points().iter().enumerate() {
        let c = colors.map_or_else(|| p.color.map(to_u8), |c| c[i]);
        let f: Vec<f32> = p.position.iter().chain(&p.normal).map(|&v| v as f32).collect();
        match format {
            PlyFormat::Ascii => {
                let nums: Vec<String> = f.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{} {} {} {}", nums.join(" "), c[0], c[1], c[2]).map_err(io)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in f {
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
                w.write_all(&c).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat, colors: Option<&[[u8; 3]]>) -> Result<()> {
    let f = File::create(path).map_err(Error::io(path))?;
    write_ply_to(f, cloud, format, colors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![
            Point::new([0.5, -0.25, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 128.0 / 255.0]),
            Point::new([-1.5, 2.0, 0.125], [1.0, 0.0, 0.0], [0.0, 1.0, 0.2]),
        ])
        .unwrap()
    }

    #[test]
    fn round_trips_both_formats() {
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let mut buf = Vec::new();
            write_ply_to(&mut buf, &cloud(), fmt, None).unwrap();
            let back = read_ply_from(buf.as_slice()).unwrap();
            assert_eq!(back.points()[0], cloud().points()[0]);
            assert_eq!(back.points()[1].position, cloud().points()[1].position);
            assert!((back.points()[1].color[2] - 51.0 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_normals_and_colors_are_zero_and_faces_are_skipped() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty double x\nproperty double y\n\
                    property double z\nproperty float intensity\nelement face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n1 2 3 0.5\n4 5 6 0.1\n3 0 1 1\n";
        let c = read_ply_from(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[1].position, [4.0, 5.0, 6.0]);
        assert_eq!(c.points()[1].normal, [0.0; 3]);
        assert_eq!(c.points()[1].color, [0.0; 3]);
    }

    #[test]
    fn binary_with_leading_list_element() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\nelement tag 1\nproperty list uchar ushort ids\n\
                        element vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
            .to_vec();
        buf.extend([2u8, 1, 0, 2, 0]);
        for v in [1.0f32, 2.0, 3.0] {
            buf.extend(v.to_le_bytes());
        }
        let c = read_ply_from(buf.as_slice()).unwrap();
        assert_eq!(c.points()[0].position, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_ply_from(&b"plx\n"[..]).is_err());
        assert!(read_ply_from(&b"ply\nformat binary_big_endian 1.0\nend_header\n"[..]).is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(read_ply_from(short.as_bytes()).is_err());
        let no_z = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n";
        assert!(read_ply_from(no_z.as_bytes()).is_err());
    }

    #[test]
    fn color_override_is_written() {
        let mut buf = Vec::new();
        write_ply_to(&mut buf, &cloud(), PlyFormat::Ascii, Some(&[[1, 2, 3], [4, 5, 6]])).unwrap();
        let back = read_ply_from(buf.as_slice()).unwrap();
        assert!((back.points()[1].color[0] - 4.0 / 255.0).abs() < 1e-12);
        assert!(write_ply_to(Vec::new(), &cloud(), PlyFormat::Ascii, Some(&[[0, 0, 0]])).is_err());
    }
}
