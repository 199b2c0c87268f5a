use crate::error::{Error, Result};
use crate::grid::{RoadNetwork, Trajectory};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Lowest-frequency Fourier coefficients of a coordinate sequence.
///
/// Each axis contributes `dim / 4` complex coefficients normalized by the
/// sequence length, laid out as `(re, im)` pairs; the x block precedes the
/// y block. Coefficients beyond the sequence length are zero.
pub fn dft_features(points: &[[f64; 2]], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 4 != 0 {
        return Err(Error::config(format!("DFT representation size must be a positive multiple of 4, got {dim}")));
    }
    if points.is_empty() {
        return Err(Error::contract("cannot transform an empty trajectory"));
    }
    let n = points.len();
    let keep = dim / 4;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = Vec::with_capacity(dim);
    for axis in 0..2 {
        let mut buf: Vec<Complex<f64>> = points.iter().map(|p| Complex::new(p[axis], 0.0)).collect();
        fft.process(&mut buf);
        for k in 0..keep {
            let c = buf.get(k).map_or(Complex::new(0.0, 0.0), |c| c / n as f64);
            out.push(c.re);
            out.push(c.im);
        }
    }
    Ok(out)
}

/// DFT features of the cell centers of `traj`.
pub fn dft_representation(net: &RoadNetwork, traj: &Trajectory, dim: usize) -> Result<Vec<f64>> {
    let points: Vec<[f64; 2]> = traj.grid_cells(net).into_iter().map(|c| net.spec().center(c)).collect();
    dft_features(&points, dim)
}
