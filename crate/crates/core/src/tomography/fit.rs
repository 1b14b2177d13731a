//! Weighted least-squares fit of `B + A cos(x - θ₀)` to fringe counts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::counting::FringePoint;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
const REL_TOL: f64 = 1e-12;
/// Amplitudes below this fraction of `max(|B|, 1)` leave `θ₀` undefined.
const UNDEFINED_PHASE: f64 = 1e-12;

/// One point of a background-subtracted fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    /// Sweep variable (radians).
    pub x: f64,
    /// Background-subtracted counts.
    pub y: f64,
    /// Raw background counts, used in the variance model.
    pub background: f64,
    /// Factor applied to the background before subtraction.
    pub scale: f64,
}

impl FringeSample {
    /// Noise-free sample with no background.
    pub fn exact(x: f64, y: f64) -> Self {
        FringeSample { x, y, background: 0.0, scale: 0.0 }
    }

    pub fn from_point(point: &FringePoint, x: f64) -> Self {
        FringeSample { x, y: point.net(), background: point.background_counts, scale: point.scale() }
    }

    fn variance(&self, model: f64) -> f64 {
        let k = self.scale;
        (model + k * self.background + k * k * self.background).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub offset: f64,
    /// Fringe phase in `(-π, π]`; meaningless when `phase_defined` is false.
    pub theta0: f64,
    pub phase_defined: bool,
    pub visibility: f64,
    pub visibility_err: f64,
    /// `(max - min)/(max + min)` of the samples.
    pub raw_visibility: f64,
    /// Covariance of `(A, B, θ₀)`.
    pub covariance: [[f64; 3]; 3],
    /// Linear parameters `(B, a, b)` of `B + a cos x + b sin x`.
    pub linear: [f64; 3],
    pub linear_covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl FringeFit {
    pub fn amplitude_err(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn offset_err(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn theta0_err(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    /// Complex fringe amplitude `a + ib = A e^{iθ₀}`.
    pub fn phasor(&self) -> (f64, f64) {
        (self.linear[1], self.linear[2])
    }
}

fn design_row(x: f64) -> Vector3<f64> {
    Vector3::new(1.0, x.cos(), x.sin())
}

fn distinct_phases(samples: &[FringeSample]) -> usize {
    let mut xs: Vec<f64> = samples.iter().map(|s| s.x.rem_euclid(2.0 * PI)).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let mut count = 0;
    let mut last: Option<f64> = None;
    for x in &xs {
        if last.is_none_or(|l| (x - l).abs() > 1e-9) {
            count += 1;
        }
        last = Some(*x);
    }
    if count > 1 && (xs[0] + 2.0 * PI - xs[xs.len() - 1]).abs() <= 1e-9 {
        count -= 1;
    }
    count
}

fn solve(samples: &[FringeSample], weights: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let mut xtwx = Matrix3::zeros();
    let mut xtwy = Vector3::zeros();
    for (s, w) in samples.iter().zip(weights) {
        let r = design_row(s.x);
        xtwx += r * r.transpose() * *w;
        xtwy += r * (s.y * w);
    }
    let inv = xtwx
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("fringe design matrix is singular".into()))?;
    Ok((inv * xtwy, inv))
}

/// Fits the fringe by iteratively reweighted least squares with Poisson
/// variances. `extra` adds the covariance of a correction that was
/// subtracted from `y` beforehand: `y` moved by `S δ` with `Cov(δ)` given.
pub fn fit_samples(samples: &[FringeSample], extra: Option<(&DMatrix<f64>, &DMatrix<f64>)>) -> Result<FringeFit> {
    if distinct_phases(samples) < 4 {
        return Err(Error::Degenerate("a fringe fit needs at least 4 distinct phases".into()));
    }
    // first Fourier component as the starting point
    let n = samples.len() as f64;
    let mut params = Vector3::new(
        samples.iter().map(|s| s.y).sum::<f64>() / n,
        2.0 / n * samples.iter().map(|s| s.y * s.x.cos()).sum::<f64>(),
        2.0 / n * samples.iter().map(|s| s.y * s.x.sin()).sum::<f64>(),
    );
    let mut inv = Matrix3::zeros();
    let mut weights = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        weights = samples.iter().map(|s| 1.0 / s.variance(design_row(s.x).dot(&params))).collect();
        let (next, cov) = solve(samples, &weights)?;
        let change = (next - params).norm();
        let scale = next.norm().max(f64::MIN_POSITIVE);
        params = next;
        inv = cov;
        if change <= REL_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(MAX_ITERATIONS));
    }

    let mut lin_cov = inv;
    if let Some((s_mat, cov_d)) = extra {
        // δp = -(XᵀWX)⁻¹ XᵀW S δ
        let m = samples.len();
        let mut xtw = DMatrix::zeros(3, m);
        for (k, (s, w)) in samples.iter().zip(&weights).enumerate() {
            let r = design_row(s.x);
            for c in 0..3 {
                xtw[(c, k)] = r[c] * w;
            }
        }
        let inv_d = DMatrix::from_iterator(3, 3, inv.iter().copied());
        let l = &inv_d * xtw * s_mat;
        let add = &l * cov_d * l.transpose();
        for r in 0..3 {
            for c in 0..3 {
                lin_cov[(r, c)] += add[(r, c)];
            }
        }
    }

    let (b0, a, b) = (params[0], params[1], params[2]);
    let amp = a.hypot(b);
    let phase_defined = amp > UNDEFINED_PHASE * b0.abs().max(1.0);
    let theta0 = if phase_defined { b.atan2(a) } else { 0.0 };
    // Jacobian of (A, B, θ₀) with respect to (B, a, b)
    let jac = if phase_defined {
        Matrix3::new(0.0, a / amp, b / amp, 1.0, 0.0, 0.0, 0.0, -b / (amp * amp), a / (amp * amp))
    } else {
        Matrix3::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    };
    let cov = jac * lin_cov * jac.transpose();
    if !(b0 > 0.0) {
        return Err(Error::Degenerate(format!("fringe offset {b0} is not positive")));
    }
    let visibility = amp / b0;
    let grad = Vector3::new(1.0 / b0, -amp / (b0 * b0), 0.0);
    let visibility_err = (grad.transpose() * cov * grad)[(0, 0)].max(0.0).sqrt();

    let ys = samples.iter().map(|s| s.y);
    let max = ys.clone().fold(f64::MIN, f64::max);
    let min = ys.fold(f64::MAX, f64::min);
    let raw_visibility = if max + min != 0.0 { (max - min) / (max + min) } else { 0.0 };
    let chi2 = samples
        .iter()
        .zip(&weights)
        .map(|(s, w)| (s.y - design_row(s.x).dot(&params)).powi(2) * w)
        .sum();

    let to_arr = |m: &Matrix3<f64>| [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]];
    Ok(FringeFit {
        amplitude: if phase_defined { amp } else { 0.0 },
        offset: b0,
        theta0,
        phase_defined,
        visibility: if phase_defined { visibility } else { 0.0 },
        visibility_err,
        raw_visibility,
        covariance: to_arr(&cov),
        linear: [b0, a, b],
        linear_covariance: to_arr(&lin_cov),
        chi2,
        dof: samples.len().saturating_sub(3),
        iterations,
    })
}

pub fn fit_fringe(samples: &[FringeSample]) -> Result<FringeFit> {
    fit_samples(samples, None)
}

/// Samples with `x` taken from each point's oscillator phases.
pub fn samples_from_points(points: &[FringePoint], x: impl Fn(&[f64]) -> f64) -> Vec<FringeSample> {
    points.iter().map(|p| FringeSample::from_point(p, x(&p.lo_phases))).collect()
}

/// Design-matrix helper used when propagating subtracted corrections.
pub fn column_matrix(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r])
}

pub fn vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}
