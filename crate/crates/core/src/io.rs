//! Readers and writers for tensors, point clouds, masks, cameras, label maps
//! and dendrograms.

use std::fmt;
use std::fs;
use std::io::{BufRead, Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::graph::{FeatureMap, PointCloud};
use crate::hierarchy::{BinaryPartitionTree, DendrogramNode};
use crate::mask::Mask;
use crate::masktree::MaskSet;
use crate::segmentation::LabelMap;

pub const TENSOR_MAGIC: &[u8; 4] = b"UFT1";
pub const CAMERA_CONVENTION: &str = "-z forward, +y up";

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- tensors

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    U16,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::U16 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::U16),
            c => Err(Error::format(format!("unknown dtype code {c}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U16 => 2,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::U16 => "u16",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U16(Vec<u16>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U16(_) => DType::U16,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Floating payload widened to f64.
    pub fn to_f64(&self) -> Result<Vec<f64>> {
        match self {
            TensorData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            TensorData::F64(v) => Ok(v.clone()),
            TensorData::U16(_) => Err(Error::DType {
                expected: "f32 or f64".into(),
                found: "u16".into(),
            }),
        }
    }
}

/// Row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<u64>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<u64>, data: TensorData) -> Result<Self> {
        if shape.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("{} dimensions exceed 255", shape.len())));
        }
        let count = element_count(&shape)?;
        if count != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} holds {count} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[u64] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn encode(&self) -> Vec<u8> {
        let dt = self.dtype();
        let mut out = Vec::with_capacity(6 + 8 * self.shape.len() + self.data.len() * dt.size());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(dt.code());
        out.push(self.shape.len() as u8);
        for d in &self.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 {
            return Err(Error::Truncated {
                expected: 6,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::format(format!("bad tensor magic {:?}", &bytes[..4])));
        }
        let dt = DType::from_code(bytes[4])?;
        let ndim = bytes[5] as usize;
        let header = 6 + 8 * ndim;
        if bytes.len() < header {
            return Err(Error::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        let shape: Vec<u64> = bytes[6..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let count = element_count(&shape)?;
        let expected = count
            .checked_mul(dt.size())
            .and_then(|n| n.checked_add(header))
            .ok_or_else(|| Error::format(format!("shape {shape:?} is too large")))?;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::format(format!(
                "{} trailing bytes after tensor payload",
                bytes.len() - expected
            )));
        }
        let payload = &bytes[header..];
        let data = match dt {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect(),
            ),
            DType::U16 => TensorData::U16(
                payload
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes(c.try_into().expect("2-byte chunk")))
                    .collect(),
            ),
        };
        Ok(Tensor { shape, data })
    }

    fn expect_ndim(&self, ndim: usize, role: &str) -> Result<()> {
        if self.shape.len() != ndim {
            return Err(Error::invalid(format!(
                "{role} tensor needs {ndim} dimensions, found shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

fn element_count(shape: &[u64]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| usize::try_from(d).ok().and_then(|d| acc.checked_mul(d)))
        .ok_or_else(|| Error::format(format!("shape {shape:?} is too large")))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::decode(&read_bytes(path)?)
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    write_bytes(path, &tensor.encode())
}

/// `(height, width, dim)` float tensor to a feature map.
pub fn feature_map_from_tensor(t: &Tensor) -> Result<FeatureMap> {
    t.expect_ndim(3, "feature")?;
    let s = t.shape();
    FeatureMap::new(s[0] as usize, s[1] as usize, s[2] as usize, t.data().to_f64()?)
}

pub fn feature_map_to_tensor(fmap: &FeatureMap, dtype: DType) -> Result<Tensor> {
    let shape = vec![fmap.height() as u64, fmap.width() as u64, fmap.dim() as u64];
    Tensor::new(shape, float_data(fmap.data(), dtype)?)
}

fn float_data(values: &[f64], dtype: DType) -> Result<TensorData> {
    match dtype {
        DType::F32 => Ok(TensorData::F32(values.iter().map(|&x| x as f32).collect())),
        DType::F64 => Ok(TensorData::F64(values.to_vec())),
        DType::U16 => Err(Error::DType {
            expected: "f32 or f64".into(),
            found: "u16".into(),
        }),
    }
}

/// Depth map stored as a `(height, width)` float tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

pub fn depth_from_tensor(t: &Tensor) -> Result<DepthMap> {
    t.expect_ndim(2, "depth")?;
    Ok(DepthMap {
        height: t.shape()[0] as usize,
        width: t.shape()[1] as usize,
        values: t.data().to_f64()?,
    })
}

pub fn depth_to_tensor(depth: &DepthMap, dtype: DType) -> Result<Tensor> {
    Tensor::new(
        vec![depth.height as u64, depth.width as u64],
        float_data(&depth.values, dtype)?,
    )
}

/// `(height, width)` u16 tensor to a label map.
pub fn labels_from_tensor(t: &Tensor) -> Result<LabelMap> {
    t.expect_ndim(2, "label")?;
    let TensorData::U16(v) = t.data() else {
        return Err(Error::DType {
            expected: "u16".into(),
            found: t.dtype().to_string(),
        });
    };
    LabelMap::new(
        t.shape()[0] as usize,
        t.shape()[1] as usize,
        v.iter().map(|&x| x as u32).collect(),
    )
}

pub fn labels_to_tensor(labels: &LabelMap) -> Result<Tensor> {
    Tensor::new(
        vec![labels.height() as u64, labels.width() as u64],
        TensorData::U16(narrow_labels(labels.labels())?),
    )
}

fn narrow_labels(labels: &[u32]) -> Result<Vec<u16>> {
    labels
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::LabelOverflow(l as u64)))
        .collect()
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    feature_map_from_tensor(&read_tensor(path)?)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    depth_from_tensor(&read_tensor(path)?)
}

// ---------------------------------------------------------------- PLY

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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format(format!("unknown PLY type {other:?}"))),
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

    /// Parses at the declared precision so `float` text round-trips exactly.
    fn parse_text(self, t: &str) -> Result<f64> {
        let bad = || Error::format(format!("bad PLY value {t:?}"));
        match self {
            Scalar::F32 => t.parse::<f32>().map(|v| v as f64).map_err(|_| bad()),
            Scalar::F64 => t.parse::<f64>().map_err(|_| bad()),
            _ => t.parse::<i64>().map(|v| v as f64).map_err(|_| bad()),
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

#[derive(Debug)]
struct PlyHeader {
    format: PlyFormat,
    elements: Vec<PlyElement>,
}

fn parse_ply_header(reader: &mut impl BufRead) -> Result<PlyHeader> {
    let mut line = String::new();
    let next_line = |reader: &mut dyn BufRead, line: &mut String| -> Result<bool> {
        line.clear();
        let n = reader
            .read_line(line)
            .map_err(|e| Error::format(format!("PLY header: {e}")))?;
        Ok(n > 0)
    };
    if !next_line(reader, &mut line)? || line.trim_end() != "ply" {
        return Err(Error::format("missing 'ply' magic line"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        if !next_line(reader, &mut line)? {
            return Err(Error::format("PLY header has no end_header"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::format(format!("unsupported PLY format {other:?}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => {
                let el = elements.last().ok_or_else(|| Error::format("property before element"))?;
                if el.name == "vertex" {
                    return Err(Error::format("list properties on vertices are not supported"));
                }
                // list elements are only allowed after the vertices and are never read
                elements.last_mut().expect("checked").props.push((String::new(), Scalar::U8));
            }
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::format("property before element"))?
                .props
                .push((name.to_string(), Scalar::parse(ty)?)),
            _ => return Err(Error::format(format!("unrecognized PLY header line {:?}", line.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| Error::format("PLY header has no format line"))?;
    Ok(PlyHeader { format, elements })
}

/// Column positions of the vertex properties the cloud needs.
struct VertexLayout {
    xyz: [usize; 3],
    features: Vec<usize>,
    label: Option<usize>,
}

fn vertex_layout(el: &PlyElement) -> Result<VertexLayout> {
    let find = |n: &str| el.props.iter().position(|(p, _)| p == n);
    let mut xyz = [0; 3];
    for (slot, n) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(n).ok_or_else(|| Error::format(format!("PLY vertices lack property {n:?}")))?;
    }
    let mut features = Vec::new();
    while let Some(i) = find(&format!("f{}", features.len())) {
        features.push(i);
    }
    if features.is_empty() {
        return Err(Error::format("PLY vertices carry no feature properties f0..; feature dimension 0 is not supported"));
    }
    Ok(VertexLayout {
        xyz,
        features,
        label: find("label"),
    })
}

pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud> {
    let mut cursor = Cursor::new(bytes);
    let header = parse_ply_header(&mut cursor)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::format("PLY has no vertex element"))?;
    if vi != 0 && header.format == PlyFormat::BinaryLittleEndian {
        return Err(Error::format("vertex must be the first element of a binary PLY"));
    }
    let el = &header.elements[vi];
    let layout = vertex_layout(el)?;
    let body = &bytes[cursor.position() as usize..];
    let rows: Vec<Vec<f64>> = match header.format {
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = el.props.iter().map(|(_, s)| s.size()).sum();
            let need = stride * el.count;
            if body.len() < need {
                return Err(Error::Truncated {
                    expected: need,
                    actual: body.len(),
                });
            }
            body[..need]
                .chunks_exact(stride)
                .map(|row| {
                    let mut off = 0;
                    el.props
                        .iter()
                        .map(|(_, s)| {
                            let v = s.read_le(&row[off..]);
                            off += s.size();
                            v
                        })
                        .collect()
                })
                .collect()
        }
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::format("ascii PLY body is not UTF-8"))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            // skip the lines of elements declared before the vertices
            let before: usize = header.elements[..vi].iter().map(|e| e.count).sum();
            for _ in 0..before {
                lines.next();
            }
            (0..el.count)
                .map(|i| {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::format(format!("ascii PLY ends at vertex {i} of {}", el.count)))?;
                    let vals = line
                        .split_whitespace()
                        .zip(el.props.iter().map(|(_, s)| *s).chain(std::iter::repeat(Scalar::F64)))
                        .map(|(t, s)| s.parse_text(t))
                        .collect::<Result<Vec<f64>>>()?;
                    if vals.len() != el.props.len() {
                        return Err(Error::format(format!(
                            "vertex {i} has {} values, header declares {}",
                            vals.len(),
                            el.props.len()
                        )));
                    }
                    Ok(vals)
                })
                .collect::<Result<_>>()?
        }
    };
    let positions = rows
        .iter()
        .map(|r| [r[layout.xyz[0]], r[layout.xyz[1]], r[layout.xyz[2]]])
        .collect();
    let features = rows
        .iter()
        .flat_map(|r| layout.features.iter().map(move |&i| r[i]))
        .collect();
    let cloud = PointCloud::new(positions, layout.features.len(), features)?;
    match layout.label {
        Some(li) => {
            let labels = rows
                .iter()
                .map(|r| {
                    let v = r[li];
                    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                        Err(Error::format(format!("label {v} is not a nonnegative integer")))
                    } else {
                        Ok(v as u32)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            cloud.with_labels(labels)
        }
        None => Ok(cloud),
    }
}

/// Positions and features are written as `float`, labels as `ushort`.
pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    if cloud.dim() == 0 {
        return Err(Error::invalid("cannot write a cloud with feature dimension 0"));
    }
    let labels = cloud.labels().map(narrow_labels).transpose()?;
    let mut out = String::from("ply\n");
    out.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    for n in ["x", "y", "z"] {
        out.push_str(&format!("property float {n}\n"));
    }
    for i in 0..cloud.dim() {
        out.push_str(&format!("property float f{i}\n"));
    }
    if labels.is_some() {
        out.push_str("property ushort label\n");
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for i in 0..cloud.len() {
        let values = cloud.positions()[i].iter().chain(cloud.feature(i)).map(|&v| v as f32);
        match format {
            PlyFormat::BinaryLittleEndian => {
                for v in values {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(l) = &labels {
                    bytes.extend_from_slice(&l[i].to_le_bytes());
                }
            }
            PlyFormat::Ascii => {
                let mut row: Vec<String> = values.map(|v| v.to_string()).collect();
                if let Some(l) = &labels {
                    row.push(l[i].to_string());
                }
                bytes.extend_from_slice(row.join(" ").as_bytes());
                bytes.push(b'\n');
            }
        }
    }
    Ok(bytes)
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    decode_ply(&read_bytes(path)?)
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_bytes(path, &encode_ply(cloud, format)?)
}

// ---------------------------------------------------------------- masks

/// View ids may be written as strings or integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViewId {
    Int(u64),
    Text(String),
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewId::Int(i) => write!(f, "{i}"),
            ViewId::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RleEntry {
    pub rle: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub view_id: ViewId,
    pub height: usize,
    pub width: usize,
    pub masks: Vec<RleEntry>,
}

/// Masks that decoded, plus the index and reason of each that did not.
#[derive(Debug)]
pub struct LoadedMasks {
    pub set: MaskSet,
    pub rejected: Vec<(usize, Error)>,
}

impl MaskFile {
    pub fn from_masks(view_id: ViewId, height: usize, width: usize, masks: &[Mask]) -> Self {
        MaskFile {
            view_id,
            height,
            width,
            masks: masks.iter().map(|m| RleEntry { rle: m.to_rle() }).collect(),
        }
    }

    /// Decodes every mask independently; only whole-file problems are errors.
    pub fn decode(&self) -> Result<LoadedMasks> {
        let mut masks = Vec::new();
        let mut rejected = Vec::new();
        for (i, e) in self.masks.iter().enumerate() {
            match Mask::from_rle(self.height, self.width, &e.rle) {
                Ok(m) if m.area() == 0 => rejected.push((i, Error::invalid("mask is empty"))),
                Ok(m) => masks.push(m),
                Err(err) => rejected.push((i, err)),
            }
        }
        for (i, e) in &rejected {
            log::warn!("view {}: mask {i} skipped: {e}", self.view_id);
        }
        let set = MaskSet::new(self.view_id.to_string(), self.height, self.width, masks)?;
        Ok(LoadedMasks { set, rejected })
    }

    /// Decodes all masks, failing on the first bad one.
    pub fn decode_strict(&self) -> Result<Vec<Mask>> {
        self.masks
            .iter()
            .map(|e| Mask::from_rle(self.height, self.width, &e.rle))
            .collect()
    }
}

pub fn read_mask_file(path: &Path) -> Result<MaskFile> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

pub fn read_masks(path: &Path) -> Result<LoadedMasks> {
    read_mask_file(path)?.decode()
}

pub fn write_masks(path: &Path, file: &MaskFile) -> Result<()> {
    write_bytes(path, &serde_json::to_vec(file)?)
}

// ---------------------------------------------------------------- cameras

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub fl_x: f64,
    pub fl_y: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: usize,
    pub h: usize,
    pub transform: Vec<f64>,
    #[serde(default = "default_convention")]
    pub convention: String,
}

fn default_convention() -> String {
    CAMERA_CONVENTION.to_string()
}

impl CameraFile {
    pub fn to_camera(&self) -> Result<CameraModel> {
        if self.convention != CAMERA_CONVENTION {
            return Err(Error::invalid(format!(
                "unsupported camera convention {:?}, expected {CAMERA_CONVENTION:?}",
                self.convention
            )));
        }
        if self.transform.len() != 16 {
            return Err(Error::invalid(format!(
                "camera transform has {} entries, expected 16",
                self.transform.len()
            )));
        }
        let m = std::array::from_fn(|r| std::array::from_fn(|c| self.transform[r * 4 + c]));
        CameraModel::new(self.fl_x, self.fl_y, self.cx, self.cy, self.w, self.h, m)
    }

    pub fn from_camera(cam: &CameraModel) -> Self {
        CameraFile {
            fl_x: cam.fl_x,
            fl_y: cam.fl_y,
            cx: cam.cx,
            cy: cam.cy,
            w: cam.width,
            h: cam.height,
            transform: cam.cam_to_world.iter().flatten().copied().collect(),
            convention: default_convention(),
        }
    }
}

pub fn read_camera(path: &Path) -> Result<CameraModel> {
    let file: CameraFile = serde_json::from_slice(&read_bytes(path)?)?;
    file.to_camera()
}

pub fn write_camera(path: &Path, cam: &CameraModel) -> Result<()> {
    write_bytes(path, &serde_json::to_vec_pretty(&CameraFile::from_camera(cam))?)
}

// ---------------------------------------------------------------- label PNGs

fn png_error(e: impl fmt::Display) -> Error {
    Error::format(format!("png: {e}"))
}

/// 16-bit grayscale PNG whose pixel values are the label ids.
pub fn encode_label_png(labels: &LabelMap) -> Result<Vec<u8>> {
    let narrow = narrow_labels(labels.labels())?;
    let (w, h) = dims_u32(labels.width(), labels.height())?;
    let data: Vec<u8> = narrow.iter().flat_map(|v| v.to_be_bytes()).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(png_error)?;
        writer.write_image_data(&data).map_err(png_error)?;
    }
    Ok(out)
}

fn dims_u32(w: usize, h: usize) -> Result<(u32, u32)> {
    match (u32::try_from(w), u32::try_from(h)) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(Error::invalid(format!("image size {w}x{h} cannot be written as PNG"))),
    }
}

pub fn decode_label_png(bytes: &[u8]) -> Result<LabelMap> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_error)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(format!(
            "label PNG must be 16-bit grayscale, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("label PNG is too large"))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(png_error)?;
    let labels = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
        .collect();
    LabelMap::new(h, w, labels)
}

pub fn write_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
    write_bytes(path, &encode_label_png(labels)?)
}

pub fn read_label_png(path: &Path) -> Result<LabelMap> {
    decode_label_png(&read_bytes(path)?)
}

/// Display color of a label; 0 is black and every other id gets a fixed
/// pseudo-random color.
pub fn label_color(label: u32) -> [u8; 3] {
    if label == 0 {
        return [0, 0, 0];
    }
    // splitmix64 finalizer
    let mut z = (label as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    // keep colors away from black so segments stay visible
    [(z as u8) | 0x40, ((z >> 8) as u8) | 0x40, ((z >> 16) as u8) | 0x40]
}

pub fn encode_color_png(labels: &LabelMap) -> Result<Vec<u8>> {
    let (w, h) = dims_u32(labels.width(), labels.height())?;
    let data: Vec<u8> = labels.labels().iter().flat_map(|&l| label_color(l)).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_error)?;
        writer.write_image_data(&data).map_err(png_error)?;
    }
    Ok(out)
}

/// Decodes an 8-bit RGB PNG into `(width, height, rgb bytes)`.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(png_error)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format("expected an 8-bit RGB PNG"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::format("PNG too large"))?];
    let frame = reader.next_frame(&mut buf).map_err(png_error)?;
    buf.truncate(frame.buffer_size());
    Ok((w, h, buf))
}

// ---------------------------------------------------------------- dendrograms

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DendrogramFile {
    pub leaf_count: usize,
    pub nodes: Vec<DendrogramNode>,
}

impl DendrogramFile {
    pub fn from_tree(bpt: &BinaryPartitionTree) -> Self {
        DendrogramFile {
            leaf_count: bpt.leaf_count(),
            nodes: bpt.to_dendrogram(),
        }
    }
}

pub fn write_dendrogram_json(path: &Path, bpt: &BinaryPartitionTree) -> Result<()> {
    write_bytes(path, &serde_json::to_vec(&DendrogramFile::from_tree(bpt))?)
}

pub fn read_dendrogram_json(path: &Path) -> Result<DendrogramFile> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
