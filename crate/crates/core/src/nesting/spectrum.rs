use crate::error::{Error, Result};

/// Refinement factor applied to S2 spectra before peak search.
pub const DEFAULT_INTERP_FACTOR: usize = 32;

/// One-dimensional S2 samples against physical lag.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum1D {
    lags: Vec<f64>,
    values: Vec<f64>,
    voxel_pitch: f64,
}

impl Spectrum1D {
    /// `lags` in mm, strictly increasing; `voxel_pitch` is the mm spacing of
    /// the original (uninterpolated) samples.
    pub fn new(lags: Vec<f64>, values: Vec<f64>, voxel_pitch: f64) -> Result<Self> {
        if lags.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} lags but {} values",
                lags.len(),
                values.len()
            )));
        }
        if lags.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spectrum lags must be strictly increasing"));
        }
        if !(voxel_pitch.is_finite() && voxel_pitch > 0.0) {
            return Err(Error::invalid(format!(
                "voxel pitch {voxel_pitch} must be positive"
            )));
        }
        Ok(Self {
            lags,
            values,
            voxel_pitch,
        })
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn voxel_pitch(&self) -> f64 {
        self.voxel_pitch
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            lags: self.lags.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
            voxel_pitch: self.voxel_pitch,
        }
    }
}

/// Natural cubic spline through `(xs, ys)`.
#[derive(Clone, Debug)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::invalid(format!(
                "spline needs at least 3 matching points, got {n}"
            )));
        }
        // Tridiagonal system for interior second derivatives, Thomas algorithm.
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for i in 1..m {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut second = vec![0.0; n];
        for i in (0..m).rev() {
            let next = if i + 1 < m { second[i + 2] } else { 0.0 };
            second[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            second,
        })
    }

    fn eval_segment(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    /// Evaluate at `x`; outside the knots the end segments are extended.
    pub fn eval(&self, x: f64) -> f64 {
        let seg = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(self.xs.len() - 2),
        };
        self.eval_segment(seg, x)
    }
}

/// Refine a spectrum `factor`-fold with a natural cubic spline. Original
/// samples are kept verbatim at their nodes.
pub fn interpolate_spectrum(spec: &Spectrum1D, factor: usize) -> Result<Spectrum1D> {
    if factor == 0 {
        return Err(Error::invalid("interpolation factor must be at least 1"));
    }
    if spec.len() < 4 {
        return Err(Error::invalid(format!(
            "cubic interpolation needs at least 4 samples, got {}",
            spec.len()
        )));
    }
    if factor == 1 {
        return Ok(spec.clone());
    }
    let spline = NaturalCubicSpline::new(&spec.lags, &spec.values)?;
    let n = spec.len();
    let mut lags = Vec::with_capacity((n - 1) * factor + 1);
    let mut values = Vec::with_capacity(lags.capacity());
    for i in 0..n - 1 {
        let (x0, x1) = (spec.lags[i], spec.lags[i + 1]);
        lags.push(x0);
        values.push(spec.values[i]);
        for k in 1..factor {
            let x = x0 + (x1 - x0) * k as f64 / factor as f64;
            lags.push(x);
            values.push(spline.eval_segment(i, x));
        }
    }
    lags.push(spec.lags[n - 1]);
    values.push(spec.values[n - 1]);
    Spectrum1D::new(lags, values, spec.voxel_pitch)
}
