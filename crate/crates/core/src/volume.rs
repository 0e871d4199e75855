//! Voxel-grid data model and the elementary class-probability conversions.
//!
//! Every dense array is stored in `(z, y, x)` order, x fastest. Multi-channel
//! arrays carry the channel as the leading axis: `[C, z, y, x]`.

use ndarray::{Array3, Array4, ArrayView3, Axis};

use crate::error::{Error, Result};

/// Edge length of one voxel in the in-situ CT scans, in millimeters.
pub const CT_VOXEL_PITCH_MM: f64 = 0.020_22;

/// Class index of the matrix / background phase.
pub const MATRIX: u16 = 0;
/// Class index of weft yarns.
pub const WEFT: u16 = 1;
/// Class index of fill yarns.
pub const FILL: u16 = 2;

/// Shape `(nz, ny, nx)` and physical spacing `(sz, sy, sx)` in mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    shape: [usize; 3],
    spacing: [f64; 3],
}

impl GridGeometry {
    pub fn new(shape: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!(
                "grid shape {shape:?} has an empty axis"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!(
                "voxel spacing {spacing:?} must be finite and positive"
            )));
        }
        shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&n| n <= isize::MAX as usize)
            .ok_or_else(|| Error::invalid(format!("grid shape {shape:?} overflows")))?;
        Ok(Self { shape, spacing })
    }

    pub fn isotropic(shape: [usize; 3], pitch_mm: f64) -> Result<Self> {
        Self::new(shape, [pitch_mm; 3])
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Total voxel count N.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_spacing(self, spacing: [f64; 3]) -> Result<Self> {
        Self::new(self.shape, spacing)
    }

    pub(crate) fn dim(&self) -> (usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2])
    }
}

/// Unravel a flat `(z, y, x)` index.
pub(crate) fn unravel(shape: [usize; 3], flat: usize) -> [usize; 3] {
    let x = flat % shape[2];
    let y = (flat / shape[2]) % shape[1];
    let z = flat / (shape[2] * shape[1]);
    [z, y, x]
}

fn check_shape(geometry: &GridGeometry, got: &[usize], what: &str) -> Result<()> {
    if got != geometry.shape() {
        return Err(Error::consistency(format!(
            "{what} shape {got:?} does not match grid shape {:?}",
            geometry.shape()
        )));
    }
    Ok(())
}

/// Dense grid of integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    geometry: GridGeometry,
    labels: Array3<u16>,
    num_classes: usize,
}

impl LabelVolume {
    pub fn new(geometry: GridGeometry, labels: Array3<u16>, num_classes: usize) -> Result<Self> {
        check_shape(&geometry, labels.shape(), "label")?;
        if num_classes == 0 || num_classes > u16::MAX as usize + 1 {
            return Err(Error::invalid(format!(
                "unsupported class count {num_classes}"
            )));
        }
        let labels = labels.as_standard_layout().into_owned();
        if let Some((i, &c)) = labels
            .iter()
            .enumerate()
            .find(|(_, &c)| c as usize >= num_classes)
        {
            return Err(Error::invalid(format!(
                "label {c} at voxel {:?} is not below the class count {num_classes}",
                unravel(geometry.shape(), i)
            )));
        }
        Ok(Self {
            geometry,
            labels,
            num_classes,
        })
    }

    /// Wrap a label array, taking the class count as `max(3, max_label + 1)`.
    pub fn from_array(labels: Array3<u16>, spacing: [f64; 3]) -> Result<Self> {
        let (nz, ny, nx) = labels.dim();
        let geometry = GridGeometry::new([nz, ny, nx], spacing)?;
        let max = labels.iter().copied().max().unwrap_or(0) as usize;
        Self::new(geometry, labels, (max + 1).max(3))
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn labels(&self) -> &Array3<u16> {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn into_labels(self) -> Array3<u16> {
        self.labels
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        self.geometry = self.geometry.with_spacing(spacing)?;
        Ok(self)
    }

    /// Binary indicator grid of one class.
    pub fn indicator(&self, class: u16) -> Result<Array3<u8>> {
        if class as usize >= self.num_classes {
            return Err(Error::invalid(format!(
                "class {class} is not below the class count {}",
                self.num_classes
            )));
        }
        Ok(self.labels.mapv(|c| u8::from(c == class)))
    }
}

/// Per-class binary indicator channels, `[C, z, y, x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotMask {
    geometry: GridGeometry,
    channels: Array4<u8>,
}

impl OneHotMask {
    /// Validates that every voxel is claimed by exactly one channel.
    pub fn new(geometry: GridGeometry, channels: Array4<u8>) -> Result<Self> {
        check_shape(&geometry, &channels.shape()[1..], "mask")?;
        let num_classes = channels.shape()[0];
        if num_classes == 0 {
            return Err(Error::invalid("mask has no channels"));
        }
        let channels = channels.as_standard_layout().into_owned();
        let n = geometry.len();
        let flat = channels.as_slice().expect("standard layout");
        for i in 0..n {
            let mut set = 0u32;
            for c in 0..num_classes {
                match flat[c * n + i] {
                    0 => {}
                    1 => set += 1,
                    v => {
                        return Err(Error::invalid(format!(
                            "mask value {v} at channel {c}, voxel {:?} is not binary",
                            unravel(geometry.shape(), i)
                        )))
                    }
                }
            }
            if set != 1 {
                return Err(Error::invalid(format!(
                    "voxel {:?} is set in {set} mask channels, expected exactly one",
                    unravel(geometry.shape(), i)
                )));
            }
        }
        Ok(Self { geometry, channels })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn num_classes(&self) -> usize {
        self.channels.shape()[0]
    }

    pub fn channels(&self) -> &Array4<u8> {
        &self.channels
    }

    pub fn channel(&self, class: usize) -> ArrayView3<'_, u8> {
        self.channels.index_axis(Axis(0), class)
    }

    pub(crate) fn flat(&self) -> &[u8] {
        self.channels.as_slice().expect("standard layout")
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        self.geometry = self.geometry.with_spacing(spacing)?;
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Logits,
    Probabilities,
}

/// Per-class real-valued channels, `[C, z, y, x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityField {
    geometry: GridGeometry,
    channels: Array4<f64>,
    kind: FieldKind,
}

/// Per-voxel channel sum tolerance for probability fields.
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

impl ProbabilityField {
    pub fn new(geometry: GridGeometry, channels: Array4<f64>, kind: FieldKind) -> Result<Self> {
        check_shape(&geometry, &channels.shape()[1..], "field")?;
        if channels.shape()[0] == 0 {
            return Err(Error::invalid("field has no channels"));
        }
        let channels = channels.as_standard_layout().into_owned();
        let field = Self {
            geometry,
            channels,
            kind,
        };
        if kind == FieldKind::Probabilities {
            field.check_probabilities()?;
        }
        Ok(field)
    }

    fn check_probabilities(&self) -> Result<()> {
        let n = self.geometry.len();
        let flat = self.flat();
        for i in 0..n {
            let mut sum = 0.0;
            for c in 0..self.num_classes() {
                let p = flat[c * n + i];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!(
                        "probability {p} at channel {c}, voxel {:?} is outside [0, 1]",
                        unravel(self.geometry.shape(), i)
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
                return Err(Error::invalid(format!(
                    "probabilities at voxel {:?} sum to {sum}",
                    unravel(self.geometry.shape(), i)
                )));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.channels.shape()[0]
    }

    pub fn channels(&self) -> &Array4<f64> {
        &self.channels
    }

    pub fn into_channels(self) -> Array4<f64> {
        self.channels
    }

    pub(crate) fn flat(&self) -> &[f64] {
        self.channels.as_slice().expect("standard layout")
    }
}

/// Per-voxel softmax over the channel axis, evaluated in max-shifted form.
pub fn softmax_field(logits: &ProbabilityField) -> Result<ProbabilityField> {
    let c_count = logits.num_classes();
    if c_count < 2 {
        return Err(Error::invalid("softmax needs at least two classes"));
    }
    let n = logits.geometry.len();
    let src = logits.flat();
    if let Some(i) = src.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite logit at channel {}, voxel {:?}",
            i / n,
            unravel(logits.geometry.shape(), i % n)
        )));
    }
    let mut out = vec![0.0; src.len()];
    let mut scratch = vec![0.0; c_count];
    for i in 0..n {
        let max = (0..c_count)
            .map(|c| src[c * n + i])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (c, e) in scratch.iter_mut().enumerate() {
            *e = (src[c * n + i] - max).exp();
            sum += *e;
        }
        for (c, e) in scratch.iter().enumerate() {
            out[c * n + i] = e / sum;
        }
    }
    let channels = Array4::from_shape_vec(logits.channels.raw_dim(), out).expect("same shape");
    Ok(ProbabilityField {
        geometry: logits.geometry,
        channels,
        kind: FieldKind::Probabilities,
    })
}

/// Per-voxel argmax over channels; ties go to the lowest class index.
pub fn argmax_decode(field: &ProbabilityField) -> Result<LabelVolume> {
    let c_count = field.num_classes();
    if c_count < 2 {
        return Err(Error::invalid("argmax needs at least two classes"));
    }
    let n = field.geometry.len();
    let src = field.flat();
    let labels: Vec<u16> = (0..n)
        .map(|i| {
            let mut best = 0usize;
            let mut best_v = src[i];
            for c in 1..c_count {
                let v = src[c * n + i];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            best as u16
        })
        .collect();
    let labels = Array3::from_shape_vec(field.geometry.dim(), labels).expect("same shape");
    LabelVolume::new(field.geometry, labels, c_count)
}

pub fn one_hot_encode(labels: &LabelVolume) -> OneHotMask {
    let c_count = labels.num_classes;
    let (nz, ny, nx) = labels.geometry.dim();
    let n = labels.geometry.len();
    let mut data = vec![0u8; c_count * n];
    for (i, &c) in labels.labels.iter().enumerate() {
        data[c as usize * n + i] = 1;
    }
    OneHotMask {
        geometry: labels.geometry,
        channels: Array4::from_shape_vec((c_count, nz, ny, nx), data).expect("same shape"),
    }
}
