//! Off-center peak search on symmetric S2 spectra.
//!
//! Each peak is modelled locally as a Gaussian `h exp(-(x - mu)^2 / 2 sigma^2)`.
//! The points where the spectrum falls to 99 % of the peak height sit at
//! `mu +- sigma sqrt(-2 ln 0.99)`, which fixes both `mu` and `sigma`.

use super::Spectrum1D;

/// Relative height at which the peak width is measured.
pub const WIDTH_LEVEL: f64 = 0.99;

/// `sqrt(-2 ln 0.99)`: half-width of a Gaussian at 99 % height, in units of sigma.
pub fn width_to_sigma_factor() -> f64 {
    (-2.0 * WIDTH_LEVEL.ln()).sqrt()
}

/// A detected peak. Locations are signed lags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakEstimate {
    /// Midpoint of the two 99 %-height crossings, in mm.
    pub lag_mm: f64,
    /// Same location in original voxel units.
    pub lag_voxels: f64,
    /// Lag of the highest sample, in mm.
    pub raw_lag_mm: f64,
    pub raw_lag_voxels: f64,
    pub height: f64,
    pub sigma_mm: f64,
    pub sigma_voxels: f64,
}

/// Where the spectrum first drops below `level` walking from `start` in `step` direction.
fn crossing(spec: &Spectrum1D, start: usize, level: f64, step: isize) -> Option<f64> {
    let (lags, values) = (spec.lags(), spec.values());
    let mut prev = start;
    loop {
        let next = prev as isize + step;
        if next < 0 || next as usize >= values.len() {
            return None;
        }
        let next = next as usize;
        if values[next] < level {
            let t = (values[prev] - level) / (values[prev] - values[next]);
            return Some(lags[prev] + t * (lags[next] - lags[prev]));
        }
        prev = next;
    }
}

/// Last index reached walking outward from `start` while values do not increase.
fn first_minimum(values: &[f64], start: usize, step: isize) -> usize {
    let mut i = start;
    loop {
        let next = i as isize + step;
        if next < 0 || next as usize >= values.len() || values[next as usize] > values[i] {
            return i;
        }
        i = next as usize;
    }
}

/// Maxima below this fraction of the largest |value| are interpolation dust.
const RELATIVE_FLOOR: f64 = 1e-9;

/// Local maxima outside the central (zero-lag) lobe, sorted by `|lag|`.
///
/// The zero-lag lobe extends to the first local minimum on each side. Peaks
/// whose 99 %-height crossing cannot be found on either side are dropped.
pub fn detect_peaks(spec: &Spectrum1D) -> Vec<PeakEstimate> {
    let (lags, values) = (spec.lags(), spec.values());
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let center = lags
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("non-empty");
    let right_start = first_minimum(values, center, 1);
    let left_start = first_minimum(values, center, -1);

    let floor = RELATIVE_FLOOR * values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let factor = width_to_sigma_factor();
    let pitch = spec.voxel_pitch();
    let mut peaks: Vec<PeakEstimate> = (1..n - 1)
        .filter(|&i| i > right_start || i < left_start)
        .filter(|&i| values[i - 1] < values[i] && values[i] > values[i + 1] && values[i] > floor)
        .filter_map(|i| {
            let level = WIDTH_LEVEL * values[i];
            let left = crossing(spec, i, level, -1);
            let right = crossing(spec, i, level, 1);
            let (lo, hi) = match (left, right) {
                (Some(l), Some(r)) => (l, r),
                (Some(l), None) => (l, 2.0 * lags[i] - l),
                (None, Some(r)) => (2.0 * lags[i] - r, r),
                (None, None) => return None,
            };
            let mu = 0.5 * (lo + hi);
            let sigma = 0.5 * (hi - lo) / factor;
            Some(PeakEstimate {
                lag_mm: mu,
                lag_voxels: mu / pitch,
                raw_lag_mm: lags[i],
                raw_lag_voxels: lags[i] / pitch,
                height: values[i],
                sigma_mm: sigma,
                sigma_voxels: sigma / pitch,
            })
        })
        .collect();
    peaks.sort_by(|a, b| {
        a.raw_lag_mm
            .abs()
            .total_cmp(&b.raw_lag_mm.abs())
            .then((a.raw_lag_mm < 0.0).cmp(&(b.raw_lag_mm < 0.0)))
    });
    peaks
}

/// The nearest peak on the positive-lag side.
pub fn first_positive_peak(peaks: &[PeakEstimate]) -> Option<&PeakEstimate> {
    peaks.iter().find(|p| p.raw_lag_mm > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nesting::interpolate_spectrum;

    fn symmetric(f: impl Fn(f64) -> f64, half: i32, pitch: f64) -> Spectrum1D {
        let lags: Vec<f64> = (-half..=half).map(|i| i as f64 * pitch).collect();
        let values = (-half..=half).map(|i| f(i as f64)).collect();
        Spectrum1D::new(lags, values, pitch).unwrap()
    }

    #[test]
    fn sigma_factor_value() {
        assert!((width_to_sigma_factor() - 0.141_776_837_695_735_4).abs() < 1e-15);
    }

    #[test]
    fn monotone_decay_has_no_peaks() {
        let s = symmetric(|x| (-x.abs() / 4.0).exp(), 30, 1.0);
        assert!(detect_peaks(&interpolate_spectrum(&s, 8).unwrap()).is_empty());
    }

    #[test]
    fn central_lobe_is_excluded() {
        let s = symmetric(
            |x| (-x * x / 8.0).exp() + 0.5 * (-(x.abs() - 12.0).powi(2) / 8.0).exp(),
            40,
            1.0,
        );
        let peaks = detect_peaks(&interpolate_spectrum(&s, 16).unwrap());
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].lag_voxels - 12.0).abs() < 0.05);
        assert!(peaks[0].raw_lag_mm > 0.0);
        assert!((peaks[1].lag_voxels + 12.0).abs() < 0.05);
        assert!(first_positive_peak(&peaks).unwrap().raw_lag_mm > 0.0);
    }

    #[test]
    fn gaussian_bump_is_recovered_on_a_fine_grid() {
        let pitch = 0.02;
        let s = symmetric(|x| (-(x.abs() - 15.0).powi(2) / 8.0).exp(), 40, pitch);
        let peaks = detect_peaks(&interpolate_spectrum(&s, 32).unwrap());
        let p = first_positive_peak(&peaks).unwrap();
        assert!((p.lag_voxels - 15.0).abs() < 0.1, "{p:?}");
        assert!((p.sigma_voxels - 2.0).abs() < 0.1, "{p:?}");
        assert!((p.lag_mm - 15.0 * pitch).abs() < 0.1 * pitch);
    }

    #[test]
    fn scale_does_not_move_peaks() {
        let s = symmetric(
            |x| 0.3 + 0.2 * (x * 0.4).cos() * (-x.abs() / 30.0).exp(),
            40,
            1.0,
        );
        let a = detect_peaks(&interpolate_spectrum(&s, 8).unwrap());
        let b = detect_peaks(&interpolate_spectrum(&s.scaled(7.5), 8).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!((p.lag_mm - q.lag_mm).abs() < 1e-9);
            assert!((p.sigma_mm - q.sigma_mm).abs() < 1e-9);
        }
    }
}
