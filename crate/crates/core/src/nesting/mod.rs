//! Layer thickness and nesting factor from S2 spectra along the stacking axis.

mod peaks;
mod spectrum;

pub use peaks::{
    detect_peaks, first_positive_peak, width_to_sigma_factor, PeakEstimate, WIDTH_LEVEL,
};
pub use spectrum::{interpolate_spectrum, NaturalCubicSpline, Spectrum1D, DEFAULT_INTERP_FACTOR};

use crate::descriptors::{axis_spectrum, class_s2, Boundary, GridAxis};
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Areal weight of the plain-weave fabric, g/m^2.
pub const AREAL_WEIGHT_GSM: f64 = 285.0;
/// Carbon fiber density, g/cm^3.
pub const FIBER_DENSITY_G_CM3: f64 = 1.77;
/// Nominal single-ply thickness of the uncompacted fabric, mm.
pub const NOMINAL_PLY_THICKNESS_MM: f64 = 0.38;
/// Center-to-center yarn spacing at 7 threads/cm, mm.
pub const YARN_SPACING_MM: f64 = 10.0 / 7.0;

/// Stack description for a compaction stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompactionSpec {
    pub layers: u32,
    /// Areal weight, g/m^2.
    pub areal_weight: f64,
    /// Fiber density, g/cm^3.
    pub fiber_density: f64,
    /// Target fiber volume content in (0, 1].
    pub target_fvc: f64,
    /// Measured tamp gap (compacted stack thickness), mm.
    pub gap_mm: f64,
}

impl CompactionSpec {
    /// Fabric constants of the studied textile with the gap set from [`laminate_thickness`].
    pub fn reference_fabric(layers: u32, target_fvc: f64) -> Result<Self> {
        let mut spec = Self {
            layers,
            areal_weight: AREAL_WEIGHT_GSM,
            fiber_density: FIBER_DENSITY_G_CM3,
            target_fvc,
            gap_mm: 1.0,
        };
        spec.gap_mm = laminate_thickness(&spec)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::invalid("layer count must be positive"));
        }
        for (name, v) in [
            ("areal weight", self.areal_weight),
            ("fiber density", self.fiber_density),
            ("gap", self.gap_mm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} {v} must be positive")));
            }
        }
        if !(self.target_fvc > 0.0 && self.target_fvc <= 1.0) {
            return Err(Error::Domain(format!(
                "fiber volume content {} must lie in (0, 1]",
                self.target_fvc
            )));
        }
        Ok(())
    }
}

/// Laminate thickness `n rho_A / (rho_f phi)` in mm.
///
/// With `rho_A` in g/m^2 and `rho_f` in g/cm^3 the ratio comes out in
/// cm^3/m^2 = 1e-3 mm.
pub fn laminate_thickness(spec: &CompactionSpec) -> Result<f64> {
    if spec.target_fvc == 0.0 {
        return Err(Error::Domain("fiber volume content of zero".into()));
    }
    if spec.layers == 0 || !(spec.areal_weight > 0.0) || !(spec.fiber_density > 0.0) {
        return Err(Error::invalid(
            "layers, areal weight and fiber density must be positive",
        ));
    }
    if !(spec.target_fvc > 0.0 && spec.target_fvc <= 1.0) {
        return Err(Error::Domain(format!(
            "fiber volume content {} must lie in (0, 1]",
            spec.target_fvc
        )));
    }
    Ok(spec.layers as f64 * spec.areal_weight / (spec.fiber_density * spec.target_fvc) * 1e-3)
}

/// Layer thickness and its standard deviation, both in mm.
pub fn layer_thickness(peak: &PeakEstimate, voxel_pitch: f64) -> (f64, f64) {
    (
        peak.lag_voxels.abs() * voxel_pitch,
        peak.sigma_voxels * voxel_pitch,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestingReport {
    pub layer_thickness_mm: f64,
    pub layer_sigma_mm: f64,
    pub nesting_factor: f64,
    pub nesting_sigma: f64,
    pub inputs: CompactionSpec,
    pub peak: Option<PeakEstimate>,
}

/// `N_F = gap / (n t)` with first-order propagation of the thickness uncertainty.
pub fn nesting_factor(t: f64, sigma_t: f64, spec: &CompactionSpec) -> Result<NestingReport> {
    if t == 0.0 {
        return Err(Error::Domain("layer thickness of zero".into()));
    }
    if !(t > 0.0) || !(sigma_t >= 0.0) {
        return Err(Error::invalid(format!(
            "layer thickness {t} +- {sigma_t} is not valid"
        )));
    }
    spec.validate()?;
    let nf = spec.gap_mm / (spec.layers as f64 * t);
    Ok(NestingReport {
        layer_thickness_mm: t,
        layer_sigma_mm: sigma_t,
        nesting_factor: nf,
        nesting_sigma: nf * sigma_t / t,
        inputs: *spec,
        peak: None,
    })
}

/// Interpolate, find the first off-center peak and derive the nesting report.
pub fn nesting_from_spectrum(
    spectrum: &Spectrum1D,
    interp_factor: usize,
    spec: &CompactionSpec,
) -> Result<NestingReport> {
    let fine = interpolate_spectrum(spectrum, interp_factor)?;
    let peaks = detect_peaks(&fine);
    let peak = *first_positive_peak(&peaks)
        .ok_or_else(|| Error::invalid("no off-center peak in the S2 spectrum"))?;
    let (t, sigma_t) = layer_thickness(&peak, spectrum.voxel_pitch());
    let mut report = nesting_factor(t, sigma_t, spec)?;
    report.peak = Some(peak);
    Ok(report)
}

/// Full chain on a label volume: S2 of `class`, z-axis spectrum, peak, nesting factor.
pub fn nesting_from_labels(
    labels: &LabelVolume,
    class: u16,
    boundary: Boundary,
    interp_factor: usize,
    spec: &CompactionSpec,
) -> Result<NestingReport> {
    let s2 = class_s2(labels, class, boundary)?;
    nesting_from_spectrum(&axis_spectrum(&s2, GridAxis::Z), interp_factor, spec)
}

impl NestingReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let mut kv = vec![
            ("layer_thickness_mm", self.layer_thickness_mm.to_string()),
            ("layer_sigma_mm", self.layer_sigma_mm.to_string()),
            ("nesting_factor", self.nesting_factor.to_string()),
            ("nesting_sigma", self.nesting_sigma.to_string()),
            ("layers", self.inputs.layers.to_string()),
            ("gap_mm", self.inputs.gap_mm.to_string()),
            ("areal_weight", self.inputs.areal_weight.to_string()),
            ("fiber_density", self.inputs.fiber_density.to_string()),
            ("fvc", self.inputs.target_fvc.to_string()),
        ];
        if let Some(p) = &self.peak {
            kv.extend([
                ("peak_voxels", p.lag_voxels.to_string()),
                ("peak_raw_voxels", p.raw_lag_voxels.to_string()),
                ("peak_sigma_voxels", p.sigma_voxels.to_string()),
                ("peak_height", p.height.to_string()),
            ]);
        }
        kv
    }

    /// `key=value` lines.
    pub fn to_kv_block(&self) -> String {
        self.key_values()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn csv_header(&self) -> String {
        self.key_values()
            .iter()
            .map(|(k, _)| *k)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        self.key_values()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }
}
