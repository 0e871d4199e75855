//! Three-dimensional circular autocorrelation through the convolution theorem.
//!
//! The x axis (contiguous) goes through a real-to-complex transform, the y and
//! z axes through complex transforms on the half spectrum.

use ndarray::{Array3, ArrayViewMut1, Axis};
use realfft::RealFftPlanner;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

fn transform_lanes(data: &mut Array3<Complex<f64>>, axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let len = data.shape()[axis];
    if len == 1 {
        return;
    }
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for mut lane in data.lanes_mut(Axis(axis)) {
        copy_out(&lane, &mut buf);
        fft.process_with_scratch(&mut buf, &mut scratch);
        copy_in(&mut lane, &buf);
    }
}

fn copy_out(lane: &ArrayViewMut1<'_, Complex<f64>>, buf: &mut [Complex<f64>]) {
    for (b, v) in buf.iter_mut().zip(lane.iter()) {
        *b = *v;
    }
}

fn copy_in(lane: &mut ArrayViewMut1<'_, Complex<f64>>, buf: &[Complex<f64>]) {
    for (v, b) in lane.iter_mut().zip(buf) {
        *v = *b;
    }
}

/// Raw circular autocorrelation `A(r) = sum_x f(x) f(x + r)` with wrap-around.
pub(crate) fn circular_autocorrelation(input: &Array3<f64>) -> Array3<f64> {
    let (nz, ny, nx) = input.dim();
    let nxh = nx / 2 + 1;

    let mut real_planner = RealFftPlanner::<f64>::new();
    let r2c = real_planner.plan_fft_forward(nx);
    let c2r = real_planner.plan_fft_inverse(nx);
    let mut planner = FftPlanner::<f64>::new();

    let mut spec = Array3::<Complex<f64>>::zeros((nz, ny, nxh));
    {
        let mut row_in = r2c.make_input_vec();
        let mut row_out = r2c.make_output_vec();
        let mut scratch = r2c.make_scratch_vec();
        for (src, mut dst) in input.rows().into_iter().zip(spec.rows_mut()) {
            for (r, v) in row_in.iter_mut().zip(src.iter()) {
                *r = *v;
            }
            r2c.process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
                .expect("buffer lengths match the plan");
            for (d, v) in dst.iter_mut().zip(&row_out) {
                *d = *v;
            }
        }
    }
    let fwd_y = planner.plan_fft_forward(ny);
    let fwd_z = planner.plan_fft_forward(nz);
    transform_lanes(&mut spec, 1, &fwd_y);
    transform_lanes(&mut spec, 0, &fwd_z);

    spec.mapv_inplace(|c| Complex::new(c.norm_sqr(), 0.0));

    let inv_y = planner.plan_fft_inverse(ny);
    let inv_z = planner.plan_fft_inverse(nz);
    transform_lanes(&mut spec, 0, &inv_z);
    transform_lanes(&mut spec, 1, &inv_y);

    let scale = 1.0 / (nz * ny * nx) as f64;
    let mut out = Array3::<f64>::zeros((nz, ny, nx));
    let mut row_in = c2r.make_input_vec();
    let mut row_out = c2r.make_output_vec();
    let mut scratch = c2r.make_scratch_vec();
    for (src, mut dst) in spec.rows().into_iter().zip(out.rows_mut()) {
        for (r, v) in row_in.iter_mut().zip(src.iter()) {
            *r = *v;
        }
        // DC and Nyquist bins of a Hermitian row are real; drop round-off.
        row_in[0].im = 0.0;
        if nx % 2 == 0 {
            row_in[nxh - 1].im = 0.0;
        }
        c2r.process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
            .expect("buffer lengths match the plan");
        for (d, v) in dst.iter_mut().zip(&row_out) {
            *d = v * scale;
        }
    }
    out
}
