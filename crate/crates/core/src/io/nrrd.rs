use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::Array3;

use super::write_atomically;
use crate::error::{Error, Result};
use crate::volume::GridGeometry;

/// Typed voxel grid in `(z, y, x)` order.
#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    U8(Array3<u8>),
    I8(Array3<i8>),
    U16(Array3<u16>),
    I16(Array3<i16>),
    U32(Array3<u32>),
    I32(Array3<i32>),
    F32(Array3<f32>),
    F64(Array3<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Raw,
    Gzip,
}

macro_rules! each_grid {
    ($grid:expr, $a:ident => $body:expr) => {
        match $grid {
            Grid::U8($a) => $body,
            Grid::I8($a) => $body,
            Grid::U16($a) => $body,
            Grid::I16($a) => $body,
            Grid::U32($a) => $body,
            Grid::I32($a) => $body,
            Grid::F32($a) => $body,
            Grid::F64($a) => $body,
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "uchar" | "unsigned char" | "uint8" | "uint8_t" => Self::U8,
            "signed char" | "int8" | "int8_t" => Self::I8,
            "ushort" | "unsigned short" | "unsigned short int" | "uint16" | "uint16_t" => Self::U16,
            "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
                Self::I16
            }
            "uint" | "unsigned int" | "uint32" | "uint32_t" => Self::U32,
            "int" | "signed int" | "int32" | "int32_t" => Self::I32,
            "float" => Self::F32,
            "double" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::U8 | Self::I8 => 1,
            Self::U16 | Self::I16 => 2,
            Self::U32 | Self::I32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

impl Grid {
    pub fn shape(&self) -> [usize; 3] {
        let (z, y, x) = each_grid!(self, a => a.dim());
        [z, y, x]
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Grid::U8(_) => "uint8",
            Grid::I8(_) => "int8",
            Grid::U16(_) => "uint16",
            Grid::I16(_) => "int16",
            Grid::U32(_) => "uint32",
            Grid::I32(_) => "int32",
            Grid::F32(_) => "float",
            Grid::F64(_) => "double",
        }
    }

    /// Interpret the grid as class labels: every value must be a
    /// non-negative integer that fits in u16.
    #[allow(clippy::useless_conversion)]
    pub fn to_labels(&self) -> Result<Array3<u16>> {
        let conv =
            |v: f64| (v >= 0.0 && v <= u16::MAX as f64 && v.fract() == 0.0).then_some(v as u16);
        let mut out = Array3::zeros(self.shape());
        let mut bad = None;
        each_grid!(self, a => {
            for (o, v) in out.iter_mut().zip(a.iter()) {
                match conv(f64::from(*v)) {
                    Some(l) => *o = l,
                    None => {
                        bad = Some(f64::from(*v));
                        break;
                    }
                }
            }
        });
        match bad {
            Some(v) => Err(Error::invalid(format!(
                "voxel value {v} is not a valid class label"
            ))),
            None => Ok(out),
        }
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        each_grid!(self, a => a.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    fn from_bytes(kind: Scalar, shape: [usize; 3], bytes: &[u8], big_endian: bool) -> Grid {
        macro_rules! decode {
            ($t:ty, $var:ident) => {{
                const N: usize = std::mem::size_of::<$t>();
                let values = bytes
                    .chunks_exact(N)
                    .map(|c| {
                        let b: [u8; N] = c.try_into().unwrap();
                        if big_endian {
                            <$t>::from_be_bytes(b)
                        } else {
                            <$t>::from_le_bytes(b)
                        }
                    })
                    .collect();
                Grid::$var(Array3::from_shape_vec(shape, values).unwrap())
            }};
        }
        match kind {
            Scalar::U8 => decode!(u8, U8),
            Scalar::I8 => decode!(i8, I8),
            Scalar::U16 => decode!(u16, U16),
            Scalar::I16 => decode!(i16, I16),
            Scalar::U32 => decode!(u32, U32),
            Scalar::I32 => decode!(i32, I32),
            Scalar::F32 => decode!(f32, F32),
            Scalar::F64 => decode!(f64, F64),
        }
    }
}

fn parse_floats(path: &Path, field: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::format(path, format!("field `{field}`: `{t}` is not a number")))
        })
        .collect()
}

fn parse_directions(path: &Path, value: &str) -> Result<Vec<f64>> {
    let mut norms = Vec::new();
    for tok in value.split_whitespace() {
        let inner = tok
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| {
                Error::format(
                    path,
                    format!("field `space directions`: `{tok}` is not a vector"),
                )
            })?;
        let comps = inner
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| {
                Error::format(
                    path,
                    format!("field `space directions`: `{tok}` is not numeric"),
                )
            })?;
        norms.push(comps.iter().map(|c| c * c).sum::<f64>().sqrt());
    }
    Ok(norms)
}

/// Read a three-dimensional NRRD file with attached raw or gzip data.
pub fn read_nrrd(path: &Path) -> Result<(Grid, GridGeometry)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| Error::io(path, e))?;
    let magic = line.trim_end();
    if !magic.starts_with("NRRD000") {
        return Err(Error::format(path, "missing NRRD magic line"));
    }

    let mut kind = None;
    let mut dimension = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut encoding = None;
    let mut big_endian = false;
    let mut spacings = None;
    let mut directions = None;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        let l = line.trim_end_matches(['\n', '\r']);
        if n == 0 || l.is_empty() {
            break;
        }
        if l.starts_with('#') || l.contains(":=") {
            continue;
        }
        let Some((key, value)) = l.split_once(": ") else {
            return Err(Error::format(path, format!("malformed header line `{l}`")));
        };
        let value = value.trim();
        match key {
            "type" => {
                kind = Some(Scalar::parse(value).ok_or_else(|| {
                    Error::format(path, format!("field `type`: unsupported type `{value}`"))
                })?)
            }
            "dimension" => {
                let d: usize = value
                    .parse()
                    .map_err(|_| Error::format(path, format!("field `dimension`: `{value}`")))?;
                if d != 3 {
                    return Err(Error::format(
                        path,
                        format!("field `dimension`: {d} is unsupported, expected 3"),
                    ));
                }
                dimension = Some(d);
            }
            "sizes" => {
                sizes = Some(
                    value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::format(path, format!("field `sizes`: `{value}`")))?,
                )
            }
            "encoding" => {
                encoding = Some(match value {
                    "raw" => Encoding::Raw,
                    "gzip" | "gz" => Encoding::Gzip,
                    other => {
                        return Err(Error::format(
                            path,
                            format!("field `encoding`: `{other}` is unsupported"),
                        ));
                    }
                })
            }
            "endian" => {
                big_endian = match value {
                    "little" => false,
                    "big" => true,
                    other => return Err(Error::format(path, format!("field `endian`: `{other}`"))),
                }
            }
            "spacings" => spacings = Some(parse_floats(path, key, value)?),
            "space directions" => directions = Some(parse_directions(path, value)?),
            "data file" | "datafile" => {
                return Err(Error::format(
                    path,
                    "field `data file`: detached data is unsupported",
                ));
            }
            "line skip" | "lineskip" | "byte skip" | "byteskip" if value != "0" => {
                return Err(Error::format(
                    path,
                    format!("field `{key}`: non-zero skips are unsupported"),
                ));
            }
            _ => {}
        }
    }

    let kind = kind.ok_or_else(|| Error::format(path, "missing field `type`"))?;
    dimension.ok_or_else(|| Error::format(path, "missing field `dimension`"))?;
    let sizes = sizes.ok_or_else(|| Error::format(path, "missing field `sizes`"))?;
    let encoding = encoding.ok_or_else(|| Error::format(path, "missing field `encoding`"))?;
    if sizes.len() != 3 {
        return Err(Error::format(
            path,
            format!("field `sizes`: {} entries for dimension 3", sizes.len()),
        ));
    }
    // NRRD lists the fastest axis first.
    let shape = [sizes[2], sizes[1], sizes[0]];
    let spacing_xyz = match (spacings, directions) {
        (Some(s), _) => s,
        (None, Some(d)) => d,
        (None, None) => vec![1.0; 3],
    };
    if spacing_xyz.len() != 3 {
        return Err(Error::format(
            path,
            "spacing fields must have three entries",
        ));
    }
    let geometry = GridGeometry::new(shape, [spacing_xyz[2], spacing_xyz[1], spacing_xyz[0]])
        .map_err(|e| Error::format(path, e.to_string()))?;

    let expected = geometry.len() * kind.size();
    let mut bytes = Vec::with_capacity(expected);
    match encoding {
        Encoding::Raw => reader.read_to_end(&mut bytes),
        Encoding::Gzip => GzDecoder::new(reader).read_to_end(&mut bytes),
    }
    .map_err(|e| Error::format(path, format!("data section: {e}")))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "data section holds {} bytes, header implies {expected}",
                bytes.len()
            ),
        ));
    }
    Ok((Grid::from_bytes(kind, shape, &bytes, big_endian), geometry))
}

/// Write a grid as NRRD with attached data, little-endian.
pub fn write_nrrd(
    grid: &Grid,
    geometry: &GridGeometry,
    path: &Path,
    encoding: Encoding,
) -> Result<()> {
    if grid.shape() != geometry.shape() {
        return Err(Error::consistency(format!(
            "grid shape {:?} does not match geometry {:?}",
            grid.shape(),
            geometry.shape()
        )));
    }
    let [nz, ny, nx] = geometry.shape();
    let [sz, sy, sx] = geometry.spacing();
    let mut header = format!(
        "NRRD0004\ntype: {}\ndimension: 3\nsizes: {nx} {ny} {nz}\nspacings: {sx} {sy} {sz}\n",
        grid.type_name()
    );
    if grid.type_name() != "uint8" && grid.type_name() != "int8" {
        header.push_str("endian: little\n");
    }
    header.push_str(match encoding {
        Encoding::Raw => "encoding: raw\n\n",
        Encoding::Gzip => "encoding: gzip\n\n",
    });
    let data = grid.to_le_bytes();
    write_atomically(path, |tmp| {
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(tmp).map_err(|e| Error::io(path, e))?);
        f.write_all(header.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        match encoding {
            Encoding::Raw => f.write_all(&data).map_err(|e| Error::io(path, e))?,
            Encoding::Gzip => {
                let mut gz = GzEncoder::new(&mut f, Compression::default());
                gz.write_all(&data).map_err(|e| Error::io(path, e))?;
                gz.finish().map_err(|e| Error::io(path, e))?;
            }
        }
        f.flush().map_err(|e| Error::io(path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_handwritten_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.nrrd");
        let mut bytes = b"NRRD0004\n# comment\ntype: uchar\ndimension: 3\nsizes: 2 2 2\nspacings: 0.02022 0.02022 0.02022\nencoding: raw\n\n".to_vec();
        bytes.extend(0u8..8);
        std::fs::write(&path, bytes).unwrap();
        let (grid, geo) = read_nrrd(&path).unwrap();
        assert_eq!(geo.spacing(), [0.02022; 3]);
        let Grid::U8(a) = grid else { panic!() };
        assert_eq!(a[[1, 0, 1]], 5);
    }

    #[test]
    fn space_directions_give_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.nrrd");
        let mut bytes = b"NRRD0005\ntype: short\ndimension: 3\nsizes: 1 1 1\nspace directions: (0.5,0,0) (0,0.25,0) (0,0,2)\nendian: big\nencoding: raw\n\n".to_vec();
        bytes.extend(300i16.to_be_bytes());
        std::fs::write(&path, bytes).unwrap();
        let (grid, geo) = read_nrrd(&path).unwrap();
        assert_eq!(geo.spacing(), [2.0, 0.25, 0.5]);
        assert_eq!(grid, Grid::I16(Array3::from_elem((1, 1, 1), 300)));
    }

    #[test]
    fn rejects_dimension_four_and_bad_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.nrrd");
        std::fs::write(
            &path,
            b"NRRD0004\ntype: uchar\ndimension: 4\nsizes: 1 1 1 1\nencoding: raw\n\n\0",
        )
        .unwrap();
        let err = read_nrrd(&path).unwrap_err().to_string();
        assert!(err.contains("dimension"), "{err}");
        std::fs::write(
            &path,
            b"NRRD0004\ntype: uchar\ndimension: 3\nsizes: 1 1 1\nencoding: bzip2\n\n\0",
        )
        .unwrap();
        let err = read_nrrd(&path).unwrap_err().to_string();
        assert!(err.contains("encoding"), "{err}");
    }

    #[test]
    fn gzip_roundtrip_all_types() {
        let dir = tempfile::tempdir().unwrap();
        let geo = GridGeometry::new([2, 3, 4], [0.1, 0.2, 0.3]).unwrap();
        let f = |(z, y, x): (usize, usize, usize)| (z * 12 + y * 4 + x) as i32 - 5;
        let grids = [
            Grid::U8(Array3::from_shape_fn((2, 3, 4), |i| f(i) as u8)),
            Grid::I8(Array3::from_shape_fn((2, 3, 4), |i| f(i) as i8)),
            Grid::U16(Array3::from_shape_fn((2, 3, 4), |i| f(i) as u16)),
            Grid::I16(Array3::from_shape_fn((2, 3, 4), |i| f(i) as i16)),
            Grid::U32(Array3::from_shape_fn((2, 3, 4), |i| f(i) as u32)),
            Grid::I32(Array3::from_shape_fn((2, 3, 4), f)),
            Grid::F32(Array3::from_shape_fn((2, 3, 4), |i| f(i) as f32 / 3.0)),
            Grid::F64(Array3::from_shape_fn((2, 3, 4), |i| f(i) as f64 / 3.0)),
        ];
        for g in grids {
            for enc in [Encoding::Raw, Encoding::Gzip] {
                let path = dir.path().join(format!("{}.nrrd", g.type_name()));
                write_nrrd(&g, &geo, &path, enc).unwrap();
                let (back, bgeo) = read_nrrd(&path).unwrap();
                assert_eq!(back, g);
                assert_eq!(bgeo, geo);
            }
        }
    }

    #[test]
    fn label_conversion() {
        assert!(Grid::F32(Array3::from_elem((1, 1, 1), 1.5))
            .to_labels()
            .is_err());
        assert!(Grid::I8(Array3::from_elem((1, 1, 1), -1))
            .to_labels()
            .is_err());
        assert_eq!(
            Grid::F64(Array3::from_elem((1, 1, 2), 2.0))
                .to_labels()
                .unwrap(),
            Array3::from_elem((1, 1, 2), 2)
        );
    }
}
