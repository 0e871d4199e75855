//! Volume fractions and the two-point correlation function S2.
//!
//! S2 of a phase indicator `M` is the probability that two points separated by
//! the lag `r` both fall in the phase: `S2(r) = 1/N sum_x M(x) M(x + r)`.
//! [`s2_fft`] evaluates it through the power spectrum of `M`; [`s2_brute`]
//! evaluates the spatial average directly and serves as the reference.

use ndarray::{Array3, ArrayView3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::circular_autocorrelation;
use crate::nesting::Spectrum1D;
use crate::sum::NeumaierSum;
use crate::volume::{unravel, GridGeometry, LabelVolume, OneHotMask};

/// Largest voxel count [`s2_brute`] accepts (32^3).
pub const BRUTE_FORCE_MAX_VOXELS: usize = 32 * 32 * 32;

/// How lags that leave the grid are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Wrap-around (circular) correlation over the original grid.
    #[default]
    Periodic,
    /// Zero-padded correlation over lags `-(n-1)..=(n-1)` per axis. With
    /// `unbiased`, every lag is divided by its overlap count instead of N.
    Aperiodic { unbiased: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAxis {
    Z,
    Y,
    X,
}

impl GridAxis {
    pub fn index(self) -> usize {
        match self {
            GridAxis::Z => 0,
            GridAxis::Y => 1,
            GridAxis::X => 2,
        }
    }
}

/// Three-dimensional S2 with zero lag at `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationField {
    geometry: GridGeometry,
    values: Array3<f64>,
    center: [usize; 3],
    source_class: Option<u16>,
}

impl CorrelationField {
    pub fn new(
        geometry: GridGeometry,
        values: Array3<f64>,
        source_class: Option<u16>,
    ) -> Result<Self> {
        let (nz, ny, nx) = values.dim();
        if [nz, ny, nx] != geometry.shape() {
            return Err(Error::consistency(format!(
                "correlation values {:?} do not match grid {:?}",
                [nz, ny, nx],
                geometry.shape()
            )));
        }
        let center = geometry.shape().map(|n| n / 2);
        Ok(Self {
            geometry,
            values,
            center,
            source_class,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    /// Index of the zero lag.
    pub fn center(&self) -> [usize; 3] {
        self.center
    }

    pub fn source_class(&self) -> Option<u16> {
        self.source_class
    }

    pub fn zero_lag(&self) -> f64 {
        self.values[self.center]
    }

    /// Value at an integer lag, if the lag lies on the grid.
    pub fn at_lag(&self, lag: [isize; 3]) -> Option<f64> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let i = self.center[a] as isize + lag[a];
            if i < 0 || i >= self.geometry.shape()[a] as isize {
                return None;
            }
            idx[a] = i as usize;
        }
        Some(self.values[idx])
    }

    /// Divide every value by the maximum, as in normalized S2 plots.
    pub fn normalized(&self) -> Self {
        let max = self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out = self.clone();
        if max > 0.0 {
            out.values.mapv_inplace(|v| v / max);
        }
        out
    }
}

/// Per-class volume fractions and optional per-class S2.
#[derive(Clone, Debug)]
pub struct DescriptorSet {
    pub volume_fractions: Vec<f64>,
    pub correlations: Vec<Option<CorrelationField>>,
}

/// Fraction of voxels in each class channel.
pub fn volume_fractions(mask: &OneHotMask) -> Vec<f64> {
    let n = mask.geometry().len();
    mask.flat()
        .chunks_exact(n)
        .map(|ch| ch.iter().map(|&v| v as u64).sum::<u64>() as f64 / n as f64)
        .collect()
}

fn check_binary(channel: &ArrayView3<'_, u8>) -> Result<()> {
    let (nz, ny, nx) = channel.dim();
    if let Some((i, v)) = channel.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::invalid(format!(
            "indicator value {v} at voxel {:?} is not binary",
            unravel([nz, ny, nx], i)
        )));
    }
    Ok(())
}

fn overlap_count(shape: [usize; 3], lag: [isize; 3]) -> f64 {
    (0..3)
        .map(|a| (shape[a] as isize - lag[a].abs()) as f64)
        .product()
}

/// Average `S2(r)` and `S2(-r)` to remove round-off asymmetry.
fn symmetrize(values: &mut Array3<f64>, center: [usize; 3]) {
    let (nz, ny, nx) = values.dim();
    let shape = [nz, ny, nx];
    let mirror = |i: usize, a: usize| (2 * center[a] + shape[a] - i) % shape[a];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let m = [mirror(z, 0), mirror(y, 1), mirror(x, 2)];
                if (m[0], m[1], m[2]) > (z, y, x) {
                    let avg = 0.5 * (values[[z, y, x]] + values[m]);
                    values[[z, y, x]] = avg;
                    values[m] = avg;
                }
            }
        }
    }
}

/// Two-point correlation via the power spectrum of the indicator.
pub fn s2_fft(
    channel: ArrayView3<'_, u8>,
    spacing: [f64; 3],
    boundary: Boundary,
) -> Result<CorrelationField> {
    check_binary(&channel)?;
    let (nz, ny, nx) = channel.dim();
    let shape = [nz, ny, nx];
    let n = (nz * ny * nx) as f64;

    match boundary {
        Boundary::Periodic => {
            let raw = circular_autocorrelation(&channel.mapv(f64::from));
            let center = shape.map(|d| d / 2);
            let mut values = Array3::<f64>::zeros((nz, ny, nx));
            for ((z, y, x), &v) in raw.indexed_iter() {
                let idx = [
                    (z + center[0]) % nz,
                    (y + center[1]) % ny,
                    (x + center[2]) % nx,
                ];
                values[idx] = v / n;
            }
            symmetrize(&mut values, center);
            CorrelationField::new(GridGeometry::new(shape, spacing)?, values, None)
        }
        Boundary::Aperiodic { unbiased } => {
            let padded_shape = shape.map(|d| 2 * d);
            let mut padded =
                Array3::<f64>::zeros((padded_shape[0], padded_shape[1], padded_shape[2]));
            for ((z, y, x), &v) in channel.indexed_iter() {
                padded[[z, y, x]] = f64::from(v);
            }
            let raw = circular_autocorrelation(&padded);
            let out_shape = shape.map(|d| 2 * d - 1);
            let center = shape.map(|d| d - 1);
            let mut values = Array3::<f64>::zeros((out_shape[0], out_shape[1], out_shape[2]));
            for ((z, y, x), v) in values.indexed_iter_mut() {
                let lag = [
                    z as isize - center[0] as isize,
                    y as isize - center[1] as isize,
                    x as isize - center[2] as isize,
                ];
                let src = [0, 1, 2].map(|a| lag[a].rem_euclid(padded_shape[a] as isize) as usize);
                let norm = if unbiased {
                    overlap_count(shape, lag)
                } else {
                    n
                };
                *v = raw[src] / norm;
            }
            symmetrize(&mut values, center);
            CorrelationField::new(GridGeometry::new(out_shape, spacing)?, values, None)
        }
    }
}

/// Direct spatial average over all voxel pairs; the reference for [`s2_fft`].
pub fn s2_brute(
    channel: ArrayView3<'_, u8>,
    spacing: [f64; 3],
    boundary: Boundary,
) -> Result<CorrelationField> {
    let (nz, ny, nx) = channel.dim();
    let shape = [nz, ny, nx];
    let n_vox = nz * ny * nx;
    if n_vox > BRUTE_FORCE_MAX_VOXELS {
        return Err(Error::Refused(format!(
            "brute-force S2 on {n_vox} voxels exceeds the {BRUTE_FORCE_MAX_VOXELS}-voxel guard"
        )));
    }
    check_binary(&channel)?;
    let n = n_vox as f64;
    let (out_shape, center) = match boundary {
        Boundary::Periodic => (shape, shape.map(|d| d / 2)),
        Boundary::Aperiodic { .. } => (shape.map(|d| 2 * d - 1), shape.map(|d| d - 1)),
    };
    let lag_range = |a: usize| -(center[a] as isize)..(out_shape[a] - center[a]) as isize;
    let mut values = Array3::<f64>::zeros((out_shape[0], out_shape[1], out_shape[2]));
    for dz in lag_range(0) {
        for dy in lag_range(1) {
            for dx in lag_range(2) {
                let lag = [dz, dy, dx];
                let mut hits = 0u64;
                for ((z, y, x), &m) in channel.indexed_iter() {
                    if m == 0 {
                        continue;
                    }
                    let p = [z as isize + dz, y as isize + dy, x as isize + dx];
                    let target = match boundary {
                        Boundary::Periodic => {
                            Some([0, 1, 2].map(|a| p[a].rem_euclid(shape[a] as isize) as usize))
                        }
                        Boundary::Aperiodic { .. } => {
                            if (0..3).all(|a| p[a] >= 0 && p[a] < shape[a] as isize) {
                                Some([0, 1, 2].map(|a| p[a] as usize))
                            } else {
                                None
                            }
                        }
                    };
                    if let Some(t) = target {
                        hits += u64::from(channel[t]);
                    }
                }
                let norm = match boundary {
                    Boundary::Aperiodic { unbiased: true } => overlap_count(shape, lag),
                    _ => n,
                };
                let idx = [0, 1, 2].map(|a| (lag[a] + center[a] as isize) as usize);
                values[idx] = hits as f64 / norm;
            }
        }
    }
    CorrelationField::new(GridGeometry::new(out_shape, spacing)?, values, None)
}

/// S2 of one class of a label volume.
pub fn class_s2(labels: &LabelVolume, class: u16, boundary: Boundary) -> Result<CorrelationField> {
    let indicator = labels.indicator(class)?;
    let mut field = s2_fft(indicator.view(), labels.geometry().spacing(), boundary)?;
    field.source_class = Some(class);
    Ok(field)
}

/// Volume fractions of every class plus S2 of the requested classes.
pub fn describe(
    labels: &LabelVolume,
    classes: &[u16],
    boundary: Boundary,
) -> Result<DescriptorSet> {
    let mask = crate::volume::one_hot_encode(labels);
    let volume_fractions = volume_fractions(&mask);
    let computed: Vec<(u16, CorrelationField)> = classes
        .par_iter()
        .map(|&c| class_s2(labels, c, boundary).map(|f| (c, f)))
        .collect::<Result<_>>()?;
    let mut correlations = vec![None; labels.num_classes()];
    for (c, f) in computed {
        correlations[c as usize] = Some(f);
    }
    Ok(DescriptorSet {
        volume_fractions,
        correlations,
    })
}

/// Mean over all lags of the squared difference of two S2 fields.
pub fn descriptor_mse(a: &CorrelationField, b: &CorrelationField) -> Result<f64> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::consistency(format!(
            "correlation shapes differ: {:?} vs {:?}",
            a.geometry.shape(),
            b.geometry.shape()
        )));
    }
    let mut acc = NeumaierSum::default();
    for (x, y) in a.values.iter().zip(b.values.iter()) {
        let d = x - y;
        acc.add(d * d);
    }
    Ok(acc.value() / a.values.len() as f64)
}

/// The line of S2 through zero lag along one axis, with physical lags in mm.
pub fn axis_spectrum(corr: &CorrelationField, axis: GridAxis) -> Spectrum1D {
    let a = axis.index();
    let n = corr.geometry.shape()[a];
    let pitch = corr.geometry.spacing()[a];
    let c = corr.center;
    let mut lags = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut idx = c;
        idx[a] = i;
        lags.push((i as f64 - c[a] as f64) * pitch);
        values.push(corr.values[idx]);
    }
    Spectrum1D::new(lags, values, pitch).expect("grid lags are strictly increasing")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::one_hot_encode;
    use ndarray::Array3;

    const UNIT: [f64; 3] = [1.0; 3];

    #[test]
    fn full_phase_is_one_everywhere() {
        let ones = Array3::<u8>::ones((4, 4, 4));
        let s2 = s2_fft(ones.view(), UNIT, Boundary::Periodic).unwrap();
        assert!(s2.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let brute = s2_brute(
            Array3::<u8>::ones((2, 2, 2)).view(),
            UNIT,
            Boundary::Periodic,
        )
        .unwrap();
        assert!(brute.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_voxel_is_a_delta() {
        let mut m = Array3::<u8>::zeros((8, 8, 8));
        m[[3, 5, 1]] = 1;
        let s2 = s2_fft(m.view(), UNIT, Boundary::Periodic).unwrap();
        assert!((s2.zero_lag() - 1.0 / 512.0).abs() < 1e-15);
        for (idx, &v) in s2.values().indexed_iter() {
            if [idx.0, idx.1, idx.2] != s2.center() {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stripe_pattern_enumerated_by_hand() {
        let m = Array3::from_shape_vec((1, 1, 6), vec![1u8, 0, 1, 0, 1, 0]).unwrap();
        let s2 = s2_brute(m.view(), UNIT, Boundary::Periodic).unwrap();
        let expected = [0.5, 0.0, 0.5, 0.0, 0.5, 0.0];
        for (lag, want) in expected.iter().enumerate() {
            let lag = lag as isize;
            // lags beyond the grid half wrap to their negatives
            let got = s2
                .at_lag([0, 0, lag])
                .or_else(|| s2.at_lag([0, 0, lag - 6]))
                .unwrap();
            assert_eq!(got, *want, "lag {lag}");
        }
        let fft = s2_fft(m.view(), UNIT, Boundary::Periodic).unwrap();
        for (a, b) in fft.values().iter().zip(s2.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_binary_channel_is_rejected() {
        let mut m = Array3::<u8>::zeros((2, 2, 2));
        m[[1, 0, 1]] = 2;
        let err = s2_fft(m.view(), UNIT, Boundary::Periodic)
            .unwrap_err()
            .to_string();
        assert!(err.contains("[1, 0, 1]"), "{err}");
    }

    #[test]
    fn brute_force_guard() {
        let m = Array3::<u8>::zeros((33, 32, 32));
        assert!(matches!(
            s2_brute(m.view(), UNIT, Boundary::Periodic),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn aperiodic_matches_brute_force() {
        let m = Array3::from_shape_fn((3, 4, 5), |(z, y, x)| {
            u8::from((z * 7 + y * 3 + x) % 3 == 0)
        });
        for unbiased in [false, true] {
            let b = Boundary::Aperiodic { unbiased };
            let f = s2_fft(m.view(), UNIT, b).unwrap();
            let r = s2_brute(m.view(), UNIT, b).unwrap();
            assert_eq!(f.geometry().shape(), [5, 7, 9]);
            for (x, y) in f.values().iter().zip(r.values()) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn volume_fractions_by_counting() {
        let labels = Array3::from_shape_vec((2, 2, 2), vec![1u16, 1, 1, 1, 2, 2, 2, 2]).unwrap();
        let lv = LabelVolume::from_array(labels, UNIT).unwrap();
        assert_eq!(volume_fractions(&one_hot_encode(&lv)), vec![0.0, 0.5, 0.5]);
        let zeros = LabelVolume::from_array(Array3::zeros((3, 3, 3)), UNIT).unwrap();
        assert_eq!(
            volume_fractions(&one_hot_encode(&zeros)),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn mse_of_shifted_field() {
        let g = GridGeometry::isotropic([2, 2, 2], 1.0).unwrap();
        let a = CorrelationField::new(g, Array3::from_elem((2, 2, 2), 0.3), None).unwrap();
        let b = CorrelationField::new(g, Array3::from_elem((2, 2, 2), 0.4), None).unwrap();
        assert_eq!(descriptor_mse(&a, &a).unwrap(), 0.0);
        assert!((descriptor_mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        let g3 = GridGeometry::isotropic([3, 2, 2], 1.0).unwrap();
        let c = CorrelationField::new(g3, Array3::zeros((3, 2, 2)), None).unwrap();
        assert!(matches!(descriptor_mse(&a, &c), Err(Error::Consistency(_))));
    }

    #[test]
    fn axis_spectrum_passes_through_zero_lag() {
        let m = Array3::from_shape_fn((6, 5, 4), |(z, y, x)| u8::from((z + y + x) % 2 == 0));
        let s2 = s2_fft(m.view(), [0.5, 1.0, 1.0], Boundary::Periodic).unwrap();
        let spec = axis_spectrum(&s2, GridAxis::Z);
        let zero = spec.lags().iter().position(|&l| l == 0.0).unwrap();
        assert_eq!(spec.values()[zero], s2.zero_lag());
        assert_eq!(spec.lags()[0], -1.5);
        for k in 1..3 {
            assert!((spec.values()[zero - k] - spec.values()[zero + k]).abs() < 1e-10);
        }
    }
}
