//! PLY point clouds: binary little-endian output; binary (either endianness)
//! and ASCII input.
//!
//! Output vertices carry `x y z` (float), `red green blue` (uchar) and, when
//! present, `nx ny nz` (float). Readers accept any scalar types for these
//! properties, ignore unknown ones and skip non-vertex elements.

use std::path::Path;

use lidarfield_core::recon::PointCloud;
use nalgebra::Vector3;

use crate::error::{read, write, Error, Result};

pub fn encode(cloud: &PointCloud) -> Vec<u8> {
    let normals = cloud.normals.as_ref();
    let mut out = Vec::with_capacity(64 + cloud.len() * 27);
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", cloud.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    if normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());
    for i in 0..cloud.len() {
        for v in cloud.positions[i].iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&cloud.colors[i]);
        if let Some(n) = normals {
            for v in n[i].iter() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    write(path, &encode(cloud))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    decode(&read(path)?).map_err(|msg| Error::format(path, msg))
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                (if little { <$t>::from_le_bytes(a) } else { <$t>::from_be_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    /// `(count type, item type)` for list properties.
    list: Option<(Scalar, Scalar)>,
    kind: Scalar,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    Binary { little: bool },
}

fn parse_header(text: &str) -> std::result::Result<(Format, Vec<Element>), String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic".into());
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::Binary { little: true },
                    "binary_big_endian" => Format::Binary { little: false },
                    other => return Err(format!("unsupported format '{other}'")),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count '{count}'"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or("property before any element")?;
                let ct = Scalar::parse(ct).ok_or_else(|| format!("unknown type '{ct}'"))?;
                let it = Scalar::parse(it).ok_or_else(|| format!("unknown type '{it}'"))?;
                el.props.push(Property {
                    name: name.to_string(),
                    list: Some((ct, it)),
                    kind: it,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before any element")?;
                let kind = Scalar::parse(ty).ok_or_else(|| format!("unknown type '{ty}'"))?;
                el.props.push(Property {
                    name: name.to_string(),
                    list: None,
                    kind,
                });
            }
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(format!("unrecognized header line '{line}'")),
        }
    }
    Ok((format.ok_or("missing format line")?, elements))
}

/// Column indices of the vertex properties we understand.
struct Layout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    normal: Option<[usize; 3]>,
}

fn layout(el: &Element) -> std::result::Result<Layout, String> {
    let find = |names: &[&str]| el.props.iter().position(|p| p.list.is_none() && names.contains(&p.name.as_str()));
    let triple = |a: &[&str], b: &[&str], c: &[&str]| match (find(a), find(b), find(c)) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    Ok(Layout {
        xyz: triple(&["x"], &["y"], &["z"]).ok_or("vertex element lacks x/y/z")?,
        rgb: triple(&["red", "r"], &["green", "g"], &["blue", "b"]),
        normal: triple(&["nx"], &["ny"], &["nz"]),
    })
}

fn color_value(kind: Scalar, v: f64) -> u8 {
    match kind {
        Scalar::F32 | Scalar::F64 => (v.clamp(0.0, 1.0) * 255.0).round() as u8,
        _ => v.clamp(0.0, 255.0) as u8,
    }
}

fn push_vertex(cloud: &mut PointCloud, el: &Element, lay: &Layout, row: &[f64]) {
    cloud.positions.push(Vector3::new(row[lay.xyz[0]], row[lay.xyz[1]], row[lay.xyz[2]]));
    cloud.colors.push(match lay.rgb {
        Some(c) => [0, 1, 2].map(|k| color_value(el.props[c[k]].kind, row[c[k]])),
        None => [255; 3],
    });
    if let (Some(n), Some(ns)) = (lay.normal, cloud.normals.as_mut()) {
        ns.push(Vector3::new(row[n[0]], row[n[1]], row[n[2]]));
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<PointCloud, String> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("missing end_header")?;
    let mut body = end + END.len();
    while body < bytes.len() && bytes[body] != b'\n' {
        body += 1;
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end + END.len()]).map_err(|_| "header is not text")?;
    let (format, elements) = parse_header(header)?;
    let mut cloud = PointCloud::default();
    let mut pos = body.min(bytes.len());
    let mut ascii_tokens = match format {
        Format::Ascii => Some(
            std::str::from_utf8(&bytes[pos..])
                .map_err(|_| "ASCII body is not text")?
                .split_whitespace(),
        ),
        Format::Binary { .. } => None,
    };
    let mut seen_vertex = false;
    for el in &elements {
        let is_vertex = el.name == "vertex" && !seen_vertex;
        let lay = if is_vertex {
            seen_vertex = true;
            let l = layout(el)?;
            if l.normal.is_some() {
                cloud.normals = Some(Vec::with_capacity(el.count));
            }
            Some(l)
        } else {
            None
        };
        let mut row = vec![0.0; el.props.len()];
        for _ in 0..el.count {
            for (j, p) in el.props.iter().enumerate() {
                match (&mut ascii_tokens, format) {
                    (Some(tokens), _) => {
                        let mut next = || -> std::result::Result<f64, String> {
                            tokens
                                .next()
                                .ok_or_else(|| "ASCII body ends early".to_string())?
                                .parse::<f64>()
                                .map_err(|e| e.to_string())
                        };
                        if p.list.is_some() {
                            let n = next()? as usize;
                            for _ in 0..n {
                                next()?;
                            }
                        } else {
                            row[j] = next()?;
                        }
                    }
                    (None, Format::Binary { little }) => {
                        let mut take = |k: Scalar| -> std::result::Result<f64, String> {
                            let s = k.size();
                            if pos + s > bytes.len() {
                                return Err("binary body ends early".into());
                            }
                            let v = k.read(&bytes[pos..], little);
                            pos += s;
                            Ok(v)
                        };
                        if let Some((ct, it)) = p.list {
                            let n = take(ct)? as usize;
                            for _ in 0..n {
                                take(it)?;
                            }
                        } else {
                            row[j] = take(p.kind)?;
                        }
                    }
                    (None, Format::Ascii) => unreachable!(),
                }
            }
            if let Some(l) = &lay {
                push_vertex(&mut cloud, el, l, &row);
            }
        }
    }
    if !seen_vertex {
        return Err("no vertex element".into());
    }
    Ok(cloud)
}
