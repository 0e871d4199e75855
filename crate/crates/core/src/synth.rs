//! Idealized stacked plain-weave label volumes with known geometry.
//!
//! Weft yarns (class 1) run along y, fill yarns (class 2) along x. Both have
//! elliptical cross-sections and sinusoidal centerlines of period
//! `2 * yarn_spacing`; neighbouring yarns of one family are in opposite phase,
//! and the two families cross in opposite phase, which gives the over/under
//! pattern. Layers are stacked along z at pitch `layer_thickness - interpenetration`.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nesting::{NOMINAL_PLY_THICKNESS_MM, YARN_SPACING_MM};
use crate::volume::{GridGeometry, LabelVolume, CT_VOXEL_PITCH_MM, FILL, MATRIX, WEFT};

#[derive(Clone, Debug, PartialEq)]
pub struct WeaveSpec {
    /// Center-to-center distance of neighbouring yarns, mm.
    pub yarn_spacing: f64,
    pub layer_thickness: f64,
    pub yarn_width: f64,
    pub yarn_height: f64,
    pub ondulation_amplitude: f64,
    pub layers: usize,
    /// In-plane `(dx, dy)` shift per layer, mm. Empty means no shift.
    pub layer_offsets: Vec<(f64, f64)>,
    /// Vertical overlap of adjacent layers, mm.
    pub interpenetration: f64,
    pub voxel_pitch: f64,
}

impl Default for WeaveSpec {
    /// Single layer of the 7 threads/cm fabric at CT resolution. Yarn height
    /// and amplitude are chosen so one layer spans exactly `layer_thickness`.
    fn default() -> Self {
        Self {
            yarn_spacing: YARN_SPACING_MM,
            layer_thickness: NOMINAL_PLY_THICKNESS_MM,
            yarn_width: 1.2,
            yarn_height: NOMINAL_PLY_THICKNESS_MM / 2.0,
            ondulation_amplitude: NOMINAL_PLY_THICKNESS_MM / 4.0,
            layers: 1,
            layer_offsets: Vec::new(),
            interpenetration: 0.0,
            voxel_pitch: CT_VOXEL_PITCH_MM,
        }
    }
}

impl WeaveSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("yarn spacing", self.yarn_spacing),
            ("layer thickness", self.layer_thickness),
            ("yarn width", self.yarn_width),
            ("yarn height", self.yarn_height),
            ("voxel pitch", self.voxel_pitch),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} {v} must be positive")));
            }
        }
        if !(self.ondulation_amplitude >= 0.0 && self.interpenetration >= 0.0) {
            return Err(Error::invalid(
                "amplitude and interpenetration must be non-negative",
            ));
        }
        if self.layers == 0 {
            return Err(Error::invalid("at least one layer is required"));
        }
        if self.yarn_width > self.yarn_spacing {
            return Err(Error::invalid("yarn width exceeds yarn spacing"));
        }
        if self.yarn_height > self.layer_thickness {
            return Err(Error::invalid("yarn height exceeds layer thickness"));
        }
        if self.interpenetration >= self.layer_thickness {
            return Err(Error::invalid(
                "interpenetration must be below the layer thickness",
            ));
        }
        if !self.layer_offsets.is_empty() && self.layer_offsets.len() != self.layers {
            return Err(Error::invalid(format!(
                "{} layer offsets for {} layers",
                self.layer_offsets.len(),
                self.layers
            )));
        }
        Ok(())
    }

    /// Distance between the mid-planes of adjacent layers, mm.
    pub fn layer_pitch(&self) -> f64 {
        self.layer_thickness - self.interpenetration
    }

    /// Total stack thickness `n t - (n - 1) i`, mm.
    pub fn stack_extent(&self) -> f64 {
        (self.layers - 1) as f64 * self.layer_pitch() + self.layer_thickness
    }

    /// In-plane repeat of the weave, mm.
    pub fn period(&self) -> f64 {
        2.0 * self.yarn_spacing
    }

    /// Replace the layer offsets with uniform draws over one weave period.
    pub fn with_random_offsets(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = self.period();
        self.layer_offsets = (0..self.layers)
            .map(|_| (rng.gen_range(0.0..period), rng.gen_range(0.0..period)))
            .collect();
        self
    }

    fn offset(&self, layer: usize) -> (f64, f64) {
        self.layer_offsets.get(layer).copied().unwrap_or((0.0, 0.0))
    }
}

/// Analytic nesting factor of the constructed stack.
pub fn nesting_ground_truth(spec: &WeaveSpec) -> f64 {
    let n = spec.layers as f64;
    (n * spec.layer_thickness - (n - 1.0) * spec.interpenetration) / (n * spec.layer_thickness)
}

/// Per-layer precomputed in-plane terms of one yarn family.
struct FamilyProfile {
    /// Signed distance from the nearest yarn axis, along the cross axis.
    across: Vec<f64>,
    /// `(-1)^k` for the yarn index `k`, along the cross axis.
    sign: Vec<f64>,
    /// `sin(pi u / s)` along the yarn axis.
    wave: Vec<f64>,
}

fn family_profile(
    n_across: usize,
    n_along: usize,
    shift_across: f64,
    shift_along: f64,
    spec: &WeaveSpec,
) -> FamilyProfile {
    let s = spec.yarn_spacing;
    let pitch = spec.voxel_pitch;
    let mut across = Vec::with_capacity(n_across);
    let mut sign = Vec::with_capacity(n_across);
    for i in 0..n_across {
        let u = (i as f64 + 0.5) * pitch - shift_across;
        let k = (u / s).floor();
        across.push(u - (k + 0.5) * s);
        sign.push(if (k as i64).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        });
    }
    let wave = (0..n_along)
        .map(|j| (PI * ((j as f64 + 0.5) * pitch - shift_along) / s).sin())
        .collect();
    FamilyProfile { across, sign, wave }
}

/// Voxelize a stack of plain-weave layers by center-point sampling.
///
/// A voxel whose center lies in several yarns takes the yarn with the
/// smallest normalized elliptical distance to its axis.
pub fn generate_plain_weave(spec: &WeaveSpec, out_shape: [usize; 3]) -> Result<LabelVolume> {
    spec.validate()?;
    let geometry = GridGeometry::isotropic(out_shape, spec.voxel_pitch)?;
    let [nz, ny, nx] = out_shape;
    let pitch = spec.voxel_pitch;
    let period = spec.period();
    if (nx as f64 + 0.5) * pitch < period || (ny as f64 + 0.5) * pitch < period {
        return Err(Error::invalid(format!(
            "in-plane extent {:?} voxels is smaller than one unit cell ({:.1} voxels)",
            [ny, nx],
            period / pitch
        )));
    }
    let extent = spec.stack_extent();
    if extent > nz as f64 * pitch + 1e-9 {
        return Err(Error::invalid(format!(
            "stack of {extent:.4} mm does not fit in {nz} voxels along z"
        )));
    }

    let a = spec.yarn_width / 2.0;
    let b = spec.yarn_height / 2.0;
    let amp = spec.ondulation_amplitude;
    let layer_pitch = spec.layer_pitch();
    let first_center = (nz as f64 * pitch - extent) / 2.0 + spec.layer_thickness / 2.0;
    let reach = amp + b;

    // weft runs along y: across = x, along = y; fill runs along x: across = y, along = x
    let profiles: Vec<(FamilyProfile, FamilyProfile)> = (0..spec.layers)
        .map(|j| {
            let (dx, dy) = spec.offset(j);
            (
                family_profile(nx, ny, dx, dy, spec),
                family_profile(ny, nx, dy, dx, spec),
            )
        })
        .collect();

    let mut labels = vec![MATRIX; nz * ny * nx];
    labels
        .par_chunks_mut(ny * nx)
        .enumerate()
        .for_each(|(z, slab)| {
            let zc = (z as f64 + 0.5) * pitch;
            let lo = ((zc - first_center - reach) / layer_pitch).ceil().max(0.0) as usize;
            let hi = ((zc - first_center + reach) / layer_pitch).floor();
            if hi < 0.0 || lo >= spec.layers {
                return;
            }
            let hi = (hi as usize).min(spec.layers - 1);
            for y in 0..ny {
                for x in 0..nx {
                    let mut best = (f64::INFINITY, MATRIX);
                    for (j, (weft, fill)) in profiles.iter().enumerate().take(hi + 1).skip(lo) {
                        let mid = first_center + j as f64 * layer_pitch;
                        let zw = mid + amp * weft.sign[x] * weft.wave[y];
                        let dw = (weft.across[x] / a).powi(2) + ((zc - zw) / b).powi(2);
                        if dw <= 1.0 && dw < best.0 {
                            best = (dw, WEFT);
                        }
                        let zf = mid - amp * fill.sign[y] * fill.wave[x];
                        let df = (fill.across[y] / a).powi(2) + ((zc - zf) / b).powi(2);
                        if df <= 1.0 && df < best.0 {
                            best = (df, FILL);
                        }
                    }
                    slab[y * nx + x] = best.1;
                }
            }
        });
    let labels = Array3::from_shape_vec((nz, ny, nx), labels).expect("sized above");
    LabelVolume::new(geometry, labels, 3)
}
