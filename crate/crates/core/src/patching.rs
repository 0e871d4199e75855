//! Sliding-window patch grids, mirror padding and Gaussian-weighted stitching.

use ndarray::{s, Array3, Array4, ArrayView3, ArrayView4};

use crate::error::{Error, Result};
use crate::volume::{FieldKind, GridGeometry, ProbabilityField};

/// Default Gaussian sigma as a fraction of the patch extent.
pub const DEFAULT_SIGMA_SCALE: f64 = 0.125;
/// Default mirror padding, voxels.
pub const DEFAULT_PAD: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub volume_shape: [usize; 3],
    pub patch_shape: [usize; 3],
    pub stride: [usize; 3],
    pub offsets: Vec<[usize; 3]>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Voxels shared by two neighbouring patches along each axis.
    pub fn overlap(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.patch_shape[a].saturating_sub(self.stride[a]))
    }
}

fn axis_offsets(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + patch <= dim)
        .collect();
    let last = *out.last().expect("patch fits");
    if last + patch < dim {
        out.push(dim - patch);
    }
    out
}

/// Regular offsets every `stride` voxels plus a final patch flush with the
/// far border when the regular ones fall short of it.
pub fn patch_grid(
    volume_shape: [usize; 3],
    patch_shape: [usize; 3],
    stride: [usize; 3],
) -> Result<PatchGrid> {
    for a in 0..3 {
        if patch_shape[a] == 0 || stride[a] == 0 {
            return Err(Error::invalid("patch shape and stride must be positive"));
        }
        if patch_shape[a] > volume_shape[a] {
            return Err(Error::invalid(format!(
                "patch {patch_shape:?} is larger than volume {volume_shape:?}"
            )));
        }
    }
    let per_axis = [0, 1, 2].map(|a| axis_offsets(volume_shape[a], patch_shape[a], stride[a]));
    let mut offsets = Vec::with_capacity(per_axis.iter().map(Vec::len).product());
    for &z in &per_axis[0] {
        for &y in &per_axis[1] {
            for &x in &per_axis[2] {
                offsets.push([z, y, x]);
            }
        }
    }
    Ok(PatchGrid {
        volume_shape,
        patch_shape,
        stride,
        offsets,
    })
}

/// Reflect an index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Pad every axis by `width` voxels on both sides with mirrored content.
pub fn mirror_pad<T: Clone>(grid: ArrayView3<'_, T>, width: usize) -> Result<Array3<T>> {
    let (nz, ny, nx) = grid.dim();
    if [nz, ny, nx].iter().any(|&d| width >= d) {
        return Err(Error::invalid(format!(
            "padding width {width} must be below every dimension of {:?}",
            [nz, ny, nx]
        )));
    }
    let w = width as isize;
    Ok(Array3::from_shape_fn(
        (nz + 2 * width, ny + 2 * width, nx + 2 * width),
        |(z, y, x)| {
            grid[[
                reflect(z as isize - w, nz),
                reflect(y as isize - w, ny),
                reflect(x as isize - w, nx),
            ]]
            .clone()
        },
    ))
}

/// Remove `width` voxels from both sides of every spatial axis.
pub fn crop_center<T: Clone>(grid: ArrayView3<'_, T>, width: usize) -> Result<Array3<T>> {
    let (nz, ny, nx) = grid.dim();
    if [nz, ny, nx].iter().any(|&d| 2 * width >= d) {
        return Err(Error::invalid(format!(
            "cannot crop {width} voxels from {:?}",
            [nz, ny, nx]
        )));
    }
    Ok(grid
        .slice(s![width..nz - width, width..ny - width, width..nx - width])
        .to_owned())
}

/// Separable Gaussian weights centered on the patch; sigma per axis is
/// `sigma_scale * extent`. The center sits at `(dim - 1) / 2`, so the weights
/// are mirror-symmetric and equal 1 at the center voxel of odd extents.
pub fn gaussian_window(patch_shape: [usize; 3], sigma_scale: f64) -> Result<Array3<f64>> {
    if !(sigma_scale > 0.0) {
        return Err(Error::invalid(format!(
            "sigma scale {sigma_scale} must be positive"
        )));
    }
    let profiles = patch_shape.map(|d| {
        let c = (d as f64 - 1.0) / 2.0;
        let sigma = sigma_scale * d as f64;
        (0..d)
            .map(|u| (-(u as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect::<Vec<f64>>()
    });
    Ok(Array3::from_shape_fn(
        (patch_shape[0], patch_shape[1], patch_shape[2]),
        |(z, y, x)| profiles[0][z] * profiles[1][y] * profiles[2][x],
    ))
}

/// Per-patch class scores `[C, pz, py, px]` placed at `offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorePatch {
    pub offset: [usize; 3],
    pub scores: Array4<f64>,
}

/// Weighted average of overlapping patch scores.
///
/// Patches are accumulated in offset order, so the result does not depend on
/// the order of `patches`. Probability inputs are renormalized per voxel.
pub fn stitch(
    patches: &[ScorePatch],
    window: &Array3<f64>,
    out_shape: [usize; 3],
    kind: FieldKind,
    spacing: [f64; 3],
) -> Result<ProbabilityField> {
    let first = patches
        .first()
        .ok_or_else(|| Error::invalid("no patches to stitch"))?;
    let c_count = first.scores.shape()[0];
    let (pz, py, px) = window.dim();
    for p in patches {
        let sh = p.scores.shape();
        if sh != [c_count, pz, py, px] {
            return Err(Error::consistency(format!(
                "patch at {:?} has scores {:?}, expected {:?}",
                p.offset,
                sh,
                [c_count, pz, py, px]
            )));
        }
        if (0..3).any(|a| p.offset[a] + sh[a + 1] > out_shape[a]) {
            return Err(Error::invalid(format!(
                "patch at {:?} extends beyond {out_shape:?}",
                p.offset
            )));
        }
    }
    let mut order: Vec<&ScorePatch> = patches.iter().collect();
    order.sort_by_key(|p| p.offset);

    let mut acc = Array4::<f64>::zeros((c_count, out_shape[0], out_shape[1], out_shape[2]));
    let mut weight = Array3::<f64>::zeros((out_shape[0], out_shape[1], out_shape[2]));
    for p in order {
        let [oz, oy, ox] = p.offset;
        let region = s![oz..oz + pz, oy..oy + py, ox..ox + px];
        weight
            .slice_mut(region)
            .zip_mut_with(window, |w, &v| *w += v);
        for c in 0..c_count {
            let mut dst = acc.slice_mut(s![c, oz..oz + pz, oy..oy + py, ox..ox + px]);
            ndarray::Zip::from(&mut dst)
                .and(&p.scores.slice(s![c, .., .., ..]))
                .and(window)
                .for_each(|d, &sc, &w| *d += w * sc);
        }
    }
    if let Some(((z, y, x), _)) = weight.indexed_iter().find(|(_, &w)| w <= 0.0) {
        return Err(Error::Coverage([z, y, x]));
    }
    for c in 0..c_count {
        acc.slice_mut(s![c, .., .., ..])
            .zip_mut_with(&weight, |v, &w| *v /= w);
    }
    if kind == FieldKind::Probabilities {
        let sums = acc.sum_axis(ndarray::Axis(0));
        for c in 0..c_count {
            acc.slice_mut(s![c, .., .., ..])
                .zip_mut_with(&sums, |v, &t| {
                    if t > 0.0 {
                        *v = (*v / t).clamp(0.0, 1.0);
                    }
                });
        }
    }
    ProbabilityField::new(GridGeometry::new(out_shape, spacing)?, acc, kind)
}

/// Cut one patch `[C, pz, py, px]` out of a multi-channel grid.
pub fn extract_patch<T: Clone>(
    grid: ArrayView4<'_, T>,
    offset: [usize; 3],
    patch_shape: [usize; 3],
) -> Array4<T> {
    let [oz, oy, ox] = offset;
    let [pz, py, px] = patch_shape;
    grid.slice(s![.., oz..oz + pz, oy..oy + py, ox..ox + px])
        .to_owned()
}

/// Settings for [`sliding_window`].
#[derive(Clone, Copy, Debug)]
pub struct SlidingWindow {
    pub patch: [usize; 3],
    pub stride: [usize; 3],
    pub pad: usize,
    pub sigma_scale: f64,
    pub kind: FieldKind,
}

/// Mirror-pad `volume`, run `predict` on every patch of the padded grid,
/// stitch the scores and crop back to the original extent.
pub fn sliding_window<T, F>(
    volume: ArrayView3<'_, T>,
    spacing: [f64; 3],
    cfg: &SlidingWindow,
    mut predict: F,
) -> Result<ProbabilityField>
where
    T: Clone,
    F: FnMut(ArrayView3<'_, T>) -> Result<Array4<f64>>,
{
    let padded = if cfg.pad > 0 {
        mirror_pad(volume, cfg.pad)?
    } else {
        volume.to_owned()
    };
    let (nz, ny, nx) = padded.dim();
    let grid = patch_grid([nz, ny, nx], cfg.patch, cfg.stride)?;
    let window = gaussian_window(cfg.patch, cfg.sigma_scale)?;
    let [pz, py, px] = cfg.patch;
    let mut patches = Vec::with_capacity(grid.len());
    for &offset in &grid.offsets {
        let [oz, oy, ox] = offset;
        let view = padded.slice(s![oz..oz + pz, oy..oy + py, ox..ox + px]);
        patches.push(ScorePatch {
            offset,
            scores: predict(view)?,
        });
    }
    let full = stitch(&patches, &window, [nz, ny, nx], cfg.kind, spacing)?;
    if cfg.pad == 0 {
        return Ok(full);
    }
    let w = cfg.pad;
    let channels = full
        .channels()
        .slice(s![.., w..nz - w, w..ny - w, w..nx - w])
        .to_owned();
    let (_, cz, cy, cx) = channels.dim();
    ProbabilityField::new(
        GridGeometry::new([cz, cy, cx], spacing)?,
        channels,
        cfg.kind,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_patch_count() {
        let g = patch_grid([500, 256, 256], [128; 3], [48; 3]).unwrap();
        assert_eq!(g.len(), 144);
        assert_eq!(g.overlap(), [80; 3]);
        assert_eq!(g.offsets.last(), Some(&[372, 128, 128]));
    }

    #[test]
    fn patch_equal_to_volume() {
        let g = patch_grid([7, 5, 3], [7, 5, 3], [2, 2, 2]).unwrap();
        assert_eq!(g.offsets, vec![[0, 0, 0]]);
    }

    #[test]
    fn stride_equal_to_patch_tiles() {
        let g = patch_grid([8, 8, 8], [4; 3], [4; 3]).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.overlap(), [0; 3]);
    }

    #[test]
    fn oversized_patch() {
        assert!(patch_grid([8, 8, 8], [9, 4, 4], [1; 3]).is_err());
    }

    #[test]
    fn mirror_pad_row() {
        let row = Array3::from_shape_vec((1, 1, 3), vec![1, 2, 3]).unwrap();
        // width must stay below every axis, so pad a thicker block
        let block = Array3::from_shape_fn((3, 3, 3), |(_, _, x)| row[[0, 0, x]]);
        let p = mirror_pad(block.view(), 2).unwrap();
        let line: Vec<i32> = p.slice(s![3, 3, ..]).to_vec();
        assert_eq!(line, vec![3, 2, 1, 2, 3, 2, 1]);
        assert_eq!(mirror_pad(block.view(), 0).unwrap(), block);
        assert!(mirror_pad(block.view(), 3).is_err());
    }

    #[test]
    fn window_peak_and_symmetry() {
        let w = gaussian_window([5, 7, 9], DEFAULT_SIGMA_SCALE).unwrap();
        assert_eq!(w[[2, 3, 4]], 1.0);
        assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
        let flat = gaussian_window([4, 6, 8], 1e6).unwrap();
        assert!(flat.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        assert!(gaussian_window([4, 4, 4], 0.0).is_err());
    }

    #[test]
    fn single_patch_passes_through() {
        let scores =
            Array4::from_shape_fn((2, 3, 3, 3), |(c, z, y, x)| (c + z * 9 + y * 3 + x) as f64);
        let w = gaussian_window([3, 3, 3], 0.2).unwrap();
        let out = stitch(
            &[ScorePatch {
                offset: [0; 3],
                scores: scores.clone(),
            }],
            &w,
            [3, 3, 3],
            FieldKind::Logits,
            [1.0; 3],
        )
        .unwrap();
        for (a, b) in out.channels().iter().zip(scores.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uncovered_voxel_is_reported() {
        let w = gaussian_window([2, 2, 2], 0.2).unwrap();
        let p = ScorePatch {
            offset: [0; 3],
            scores: Array4::zeros((1, 2, 2, 2)),
        };
        let err = stitch(&[p], &w, [3, 2, 2], FieldKind::Logits, [1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::Coverage([2, 0, 0])));
    }

    #[test]
    fn sliding_window_identity_model() {
        let vol = Array3::from_shape_fn((10, 9, 8), |(z, y, x)| ((z + 2 * y + 3 * x) % 3) as u16);
        let cfg = SlidingWindow {
            patch: [6, 6, 6],
            stride: [3, 3, 3],
            pad: 2,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            kind: FieldKind::Probabilities,
        };
        let out = sliding_window(vol.view(), [1.0; 3], &cfg, |patch| {
            let (z, y, x) = patch.dim();
            Ok(Array4::from_shape_fn((3, z, y, x), |(c, i, j, k)| {
                f64::from(patch[[i, j, k]] as usize == c)
            }))
        })
        .unwrap();
        let labels = crate::volume::argmax_decode(&out).unwrap();
        assert_eq!(labels.labels(), &vol);
    }
}
