//! Minimal PLY reader/writer for point clouds and triangle meshes, covering
//! the `ascii` and `binary_little_endian` 1.0 formats.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::IoError;
use crate::geometry::{PointCloud, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn read_le(self, r: &mut impl Read) -> std::io::Result<f64> {
        macro_rules! rd {
            ($t:ty) => {{
                let mut b = [0u8; std::mem::size_of::<$t>()];
                r.read_exact(&mut b)?;
                <$t>::from_le_bytes(b) as f64
            }};
        }
        Ok(match self {
            Self::I8 => rd!(i8),
            Self::U8 => rd!(u8),
            Self::I16 => rd!(i16),
            Self::U16 => rd!(u16),
            Self::I32 => rd!(i32),
            Self::U32 => rd!(u32),
            Self::F32 => rd!(f32),
            Self::F64 => rd!(f64),
        })
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Raw element data: one row of f64 values per element; list properties are
/// flattened into `lists` (one entry per row).
struct ElementData {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    lists: Vec<Vec<f64>>,
}

impl ElementData {
    fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn parse_header(r: &mut impl BufRead) -> Result<(PlyFormat, Vec<Element>), IoError> {
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> Result<(), IoError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(IoError::Format("unexpected end of PLY header".into()));
        }
        Ok(())
    };
    read_line(&mut line)?;
    if line.trim() != "ply" {
        return Err(IoError::Format("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        read_line(&mut line)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, _] => return Err(IoError::Format(format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| IoError::Format(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", c, i, _name] => {
                let el = elements.last_mut().ok_or_else(|| IoError::Format("property before element".into()))?;
                let (count, item) = Scalar::parse(c).zip(Scalar::parse(i)).ok_or_else(|| IoError::Format(format!("bad list types {c} {i}")))?;
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| IoError::Format("property before element".into()))?;
                let ty = Scalar::parse(ty).ok_or_else(|| IoError::Format(format!("bad property type {ty}")))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(IoError::Format(format!("unrecognized header line: {}", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| IoError::Format("missing format line".into()))?;
    Ok((format, elements))
}

fn read_body(r: &mut impl BufRead, format: PlyFormat, elements: &[Element]) -> Result<Vec<(String, ElementData)>, IoError> {
    let mut out = Vec::new();
    let mut text = String::new();
    if format == PlyFormat::Ascii {
        r.read_to_string(&mut text)?;
    }
    let mut tokens = text.split_whitespace();
    let mut next_ascii = || -> Result<f64, IoError> {
        tokens
            .next()
            .ok_or_else(|| IoError::Format("truncated PLY body".into()))?
            .parse::<f64>()
            .map_err(|e| IoError::Format(e.to_string()))
    };
    for el in elements {
        let names = el
            .props
            .iter()
            .filter_map(|p| match p {
                Property::Scalar { name, .. } => Some(name.clone()),
                Property::List { .. } => None,
            })
            .collect();
        let mut data = ElementData { names, rows: Vec::with_capacity(el.count), lists: Vec::new() };
        for _ in 0..el.count {
            let mut row = Vec::new();
            let mut list = Vec::new();
            for p in &el.props {
                match (p, format) {
                    (Property::Scalar { .. }, PlyFormat::Ascii) => row.push(next_ascii()?),
                    (Property::Scalar { ty, .. }, PlyFormat::BinaryLittleEndian) => row.push(ty.read_le(r)?),
                    (Property::List { .. }, PlyFormat::Ascii) => {
                        let n = next_ascii()? as usize;
                        for _ in 0..n {
                            list.push(next_ascii()?);
                        }
                    }
                    (Property::List { count, item, .. }, PlyFormat::BinaryLittleEndian) => {
                        let n = count.read_le(r)? as usize;
                        for _ in 0..n {
                            list.push(item.read_le(r)?);
                        }
                    }
                }
            }
            data.rows.push(row);
            data.lists.push(list);
        }
        out.push((el.name.clone(), data));
    }
    Ok(out)
}

fn read_elements(path: &Path) -> Result<Vec<(String, ElementData)>, IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let (format, elements) = parse_header(&mut r)?;
    read_body(&mut r, format, &elements)
}

fn vertices_of(data: &ElementData) -> Result<PointCloud, IoError> {
    let col = |n: &str| data.column(n);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(IoError::Format("vertex element lacks x/y/z".into())),
    };
    let mut cloud = PointCloud::from_points(data.rows.iter().map(|r| Vector3::new(r[x], r[y], r[z])).collect());
    if let (Some(a), Some(b), Some(c)) = (col("nx"), col("ny"), col("nz")) {
        cloud.normals = Some(data.rows.iter().map(|r| Vector3::new(r[a], r[b], r[c])).collect());
    }
    if let Some(i) = col("intensity") {
        cloud.intensities = Some(data.rows.iter().map(|r| r[i] as f32).collect());
    }
    if let Some(i) = col("scanner_id") {
        cloud.scanner_ids = Some(data.rows.iter().map(|r| r[i] as u8).collect());
    }
    if let Some(i) = col("t") {
        cloud.times = Some(data.rows.iter().map(|r| r[i]).collect());
    }
    Ok(cloud)
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud, IoError> {
    let elements = read_elements(path.as_ref())?;
    let (_, vertex) = elements
        .iter()
        .find(|(n, _)| n == "vertex")
        .ok_or_else(|| IoError::Format("no vertex element".into()))?;
    vertices_of(vertex)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, IoError> {
    let elements = read_elements(path.as_ref())?;
    let (_, vertex) = elements
        .iter()
        .find(|(n, _)| n == "vertex")
        .ok_or_else(|| IoError::Format("no vertex element".into()))?;
    let cloud = vertices_of(vertex)?;
    let mut triangles = Vec::new();
    if let Some((_, faces)) = elements.iter().find(|(n, _)| n == "face") {
        for list in &faces.lists {
            // fan-triangulate polygons
            for k in 1..list.len().saturating_sub(1) {
                triangles.push([list[0] as u32, list[k] as u32, list[k + 1] as u32]);
            }
        }
    }
    let uvs = match (vertex.column("u"), vertex.column("v")) {
        (Some(u), Some(v)) => Some(vertex.rows.iter().map(|r| [r[u], r[v]]).collect()),
        _ => None,
    };
    TriangleMesh::with_uvs(cloud.points, triangles, uvs).map_err(|e| IoError::Format(e.to_string()))
}

enum Column<'a> {
    F64(&'a str, Box<dyn Fn(usize) -> f64 + 'a>),
    F32(&'a str, Box<dyn Fn(usize) -> f32 + 'a>),
    U8(&'a str, Box<dyn Fn(usize) -> u8 + 'a>),
}

impl Column<'_> {
    fn header(&self) -> String {
        match self {
            Column::F64(n, _) => format!("property double {n}"),
            Column::F32(n, _) => format!("property float {n}"),
            Column::U8(n, _) => format!("property uchar {n}"),
        }
    }

    fn write(&self, i: usize, format: PlyFormat, w: &mut impl Write, first: bool) -> std::io::Result<()> {
        match format {
            PlyFormat::Ascii => {
                if !first {
                    w.write_all(b" ")?;
                }
                match self {
                    Column::F64(_, f) => write!(w, "{:?}", f(i)),
                    Column::F32(_, f) => write!(w, "{:?}", f(i)),
                    Column::U8(_, f) => write!(w, "{}", f(i)),
                }
            }
            PlyFormat::BinaryLittleEndian => match self {
                Column::F64(_, f) => w.write_all(&f(i).to_le_bytes()),
                Column::F32(_, f) => w.write_all(&f(i).to_le_bytes()),
                Column::U8(_, f) => w.write_all(&[f(i)]),
            },
        }
    }
}

fn write_ply(
    path: &Path,
    format: PlyFormat,
    count: usize,
    columns: &[Column<'_>],
    faces: &[[u32; 3]],
) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(
        w,
        "format {} 1.0",
        match format {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        }
    )?;
    writeln!(w, "element vertex {count}")?;
    for c in columns {
        writeln!(w, "{}", c.header())?;
    }
    if !faces.is_empty() {
        writeln!(w, "element face {}", faces.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..count {
        for (k, c) in columns.iter().enumerate() {
            c.write(i, format, &mut w, k == 0)?;
        }
        if format == PlyFormat::Ascii {
            writeln!(w)?;
        }
    }
    for f in faces {
        match format {
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?,
            PlyFormat::BinaryLittleEndian => {
                w.write_all(&[3u8])?;
                for &i in f {
                    w.write_all(&(i as i32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes x/y/z plus whichever optional attributes the cloud carries
/// (nx/ny/nz, intensity, scanner_id, t).
pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<(), IoError> {
    let p = &cloud.points;
    let mut cols: Vec<Column> = vec![
        Column::F64("x", Box::new(move |i| p[i].x)),
        Column::F64("y", Box::new(move |i| p[i].y)),
        Column::F64("z", Box::new(move |i| p[i].z)),
    ];
    if let Some(n) = &cloud.normals {
        cols.push(Column::F64("nx", Box::new(move |i| n[i].x)));
        cols.push(Column::F64("ny", Box::new(move |i| n[i].y)));
        cols.push(Column::F64("nz", Box::new(move |i| n[i].z)));
    }
    if let Some(v) = &cloud.intensities {
        cols.push(Column::F32("intensity", Box::new(move |i| v[i])));
    }
    if let Some(v) = &cloud.scanner_ids {
        cols.push(Column::U8("scanner_id", Box::new(move |i| v[i])));
    }
    if let Some(v) = &cloud.times {
        cols.push(Column::F64("t", Box::new(move |i| v[i])));
    }
    write_ply(path.as_ref(), format, p.len(), &cols, &[])
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, format: PlyFormat) -> Result<(), IoError> {
    let p = &mesh.vertices;
    let mut cols: Vec<Column> = vec![
        Column::F64("x", Box::new(move |i| p[i].x)),
        Column::F64("y", Box::new(move |i| p[i].y)),
        Column::F64("z", Box::new(move |i| p[i].z)),
    ];
    if let Some(uv) = &mesh.uvs {
        cols.push(Column::F64("u", Box::new(move |i| uv[i][0])));
        cols.push(Column::F64("v", Box::new(move |i| uv[i][1])));
    }
    write_ply(path.as_ref(), format, p.len(), &cols, &mesh.triangles)
}
