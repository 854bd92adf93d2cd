//! Dense optical flow in the Farneback family.
//!
//! Each pixel neighborhood is approximated by a quadratic
//! `f(x) ~ x^T A x + b^T x + c` (Gaussian-weighted least squares). If the
//! second frame is the first shifted by `d`, the fits satisfy
//! `A (d - d0) = -(b2 - b1) / 2` where `b2` is sampled at `x + d0`.
//! The normal equations of that relation are averaged over a window and
//! solved per pixel, coarse to fine over a Gaussian pyramid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{bilinear_sample, correlate_cols, correlate_rows, gaussian_blur, resize_plane, GrayImage};

/// Normal matrices with a determinant below this keep the prior displacement.
pub const SINGULAR_DET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub iterations_per_level: usize,
    pub poly_window: usize,
    pub poly_sigma: f64,
    pub averaging_window: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            iterations_per_level: 3,
            poly_window: 5,
            poly_sigma: 1.1,
            averaging_window: 15,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::Domain("pyramid_levels must be >= 1".into()));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::Domain(format!("pyramid_scale must be in (0,1), got {}", self.pyramid_scale)));
        }
        for (name, w) in [("poly_window", self.poly_window), ("averaging_window", self.averaging_window)] {
            if w < 3 || w % 2 == 0 {
                return Err(Error::Domain(format!("{name} must be odd and >= 3, got {w}")));
            }
        }
        if !(self.poly_sigma > 0.0) {
            return Err(Error::Domain("poly_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major displacement field; `data` interleaves `(dx, dy)` in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 2 * width * height],
        }
    }

    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        let data = std::iter::repeat_n([dx, dy], width * height).flatten().collect();
        Self { width, height, data }
    }

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 2 * width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} flow needs {} values, got {}",
                2 * width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("flow contains non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = 2 * (y * self.width + x);
        (self.data[i], self.data[i + 1])
    }

    fn component(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(2).map(|&v| v as f64).collect()
    }
}

/// Per-pixel quadratic model. Each entry is `[a11, a12, a22, b1, b2, c]`
/// with `A = [[a11, a12], [a12, a22]]`; `x` runs along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<[f64; 6]>,
}

impl PolyCoeffs {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 6] {
        self.coeffs[y * self.width + x]
    }

    pub fn a(&self, x: usize, y: usize) -> [[f64; 2]; 2] {
        let p = self.at(x, y);
        [[p[0], p[1]], [p[1], p[2]]]
    }

    pub fn b(&self, x: usize, y: usize) -> [f64; 2] {
        let p = self.at(x, y);
        [p[3], p[4]]
    }

    pub fn c(&self, x: usize, y: usize) -> f64 {
        self.at(x, y)[5]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<GrayImage>,
    /// Fewer levels than requested because a level fell below the minimum side.
    pub truncated: bool,
}

/// Anti-aliasing blur applied before each downsampling step.
pub fn pyramid_sigma(scale: f64) -> f64 {
    0.5 * (1.0 / (scale * scale) - 1.0).sqrt()
}

pub fn gaussian_pyramid(img: &GrayImage, levels: usize, scale: f64, min_side: usize) -> Result<Pyramid> {
    if levels < 1 {
        return Err(Error::Domain("pyramid needs at least one level".into()));
    }
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::Domain(format!("pyramid scale must be in (0,1), got {scale}")));
    }
    if img.width.min(img.height) < min_side {
        return Err(Error::Domain(format!(
            "image {}x{} smaller than minimum side {min_side}",
            img.width, img.height
        )));
    }
    let sigma = pyramid_sigma(scale);
    let mut out = vec![img.clone()];
    let mut truncated = false;
    while out.len() < levels {
        let prev = out.last().expect("non-empty");
        let w = (prev.width as f64 * scale).round() as usize;
        let h = (prev.height as f64 * scale).round() as usize;
        if w.min(h) < min_side {
            truncated = true;
            break;
        }
        let blurred = gaussian_blur(prev, sigma);
        out.push(crate::frame::resize_bilinear(&blurred, w, h));
    }
    Ok(Pyramid { levels: out, truncated })
}

/// Constant normal-equation inverse and separable kernels for one
/// `(window, sigma)` pair.
struct PolyBasis {
    g0: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    inverse: [[f64; 6]; 6],
}

impl PolyBasis {
    fn new(window: usize, sigma: f64) -> Result<Self> {
        let r = (window / 2) as isize;
        let g: Vec<f64> = (-r..=r).map(|u| (-((u * u) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let g1: Vec<f64> = (-r..=r).zip(&g).map(|(u, w)| w * u as f64).collect();
        let g2: Vec<f64> = (-r..=r).zip(&g).map(|(u, w)| w * (u * u) as f64).collect();

        // Basis order: 1, x, y, x^2, y^2, xy.
        let mut gram = [[0.0; 6]; 6];
        for (j, v) in (-r..=r).enumerate() {
            for (i, u) in (-r..=r).enumerate() {
                let (x, y) = (u as f64, v as f64);
                let phi = [1.0, x, y, x * x, y * y, x * y];
                let w = g[i] * g[j];
                for a in 0..6 {
                    for b in 0..6 {
                        gram[a][b] += w * phi[a] * phi[b];
                    }
                }
            }
        }
        let inverse = invert6(gram).ok_or_else(|| Error::Domain("polynomial basis is singular".into()))?;
        Ok(Self { g0: g, g1, g2, inverse })
    }
}

fn invert6(m: [[f64; 6]; 6]) -> Option<[[f64; 6]; 6]> {
    let mut a = m;
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for k in 0..6 {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for row in 0..6 {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..6 {
                        a[row][k] -= f * a[col][k];
                        inv[row][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Gaussian-weighted least-squares quadratic fit at every pixel, reflect padding.
pub fn poly_expansion(img: &GrayImage, window: usize, sigma: f64) -> Result<PolyCoeffs> {
    if window % 2 == 0 || window < 3 {
        return Err(Error::Domain(format!("polynomial window must be odd and >= 3, got {window}")));
    }
    if window > img.width.min(img.height) {
        return Err(Error::Domain(format!(
            "polynomial window {window} exceeds image {}x{}",
            img.width, img.height
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain("polynomial sigma must be positive".into()));
    }
    let basis = PolyBasis::new(window, sigma)?;
    let (w, h) = (img.width, img.height);
    let src: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();

    // Horizontal passes with g*u^p, then vertical passes with g*v^q.
    let h0 = correlate_rows(&src, w, h, &basis.g0);
    let h1 = correlate_rows(&src, w, h, &basis.g1);
    let h2 = correlate_rows(&src, w, h, &basis.g2);
    let s = [
        correlate_cols(&h0, w, h, &basis.g0), // 1
        correlate_cols(&h1, w, h, &basis.g0), // x
        correlate_cols(&h0, w, h, &basis.g1), // y
        correlate_cols(&h2, w, h, &basis.g0), // x^2
        correlate_cols(&h0, w, h, &basis.g2), // y^2
        correlate_cols(&h1, w, h, &basis.g1), // xy
    ];

    let inv = &basis.inverse;
    let coeffs = (0..w * h)
        .map(|p| {
            let mut r = [0.0; 6];
            for (a, ra) in r.iter_mut().enumerate() {
                *ra = (0..6).map(|b| inv[a][b] * s[b][p]).sum();
            }
            [r[3], 0.5 * r[5], r[4], r[1], r[2], r[0]]
        })
        .collect();
    Ok(PolyCoeffs {
        width: w,
        height: h,
        coeffs,
    })
}

fn box_average(src: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let k = vec![1.0 / window as f64; window];
    correlate_cols(&correlate_rows(src, width, height, &k), width, height, &k)
}

/// One refinement step: returns `prior + correction` per pixel.
pub fn flow_step(p1: &PolyCoeffs, p2: &PolyCoeffs, prior: &FlowField, averaging_window: usize) -> Result<FlowField> {
    let (w, h) = (p1.width, p1.height);
    if (p2.width, p2.height) != (w, h) || (prior.width, prior.height) != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "flow step inputs disagree: {}x{}, {}x{}, prior {}x{}",
            w, h, p2.width, p2.height, prior.width, prior.height
        )));
    }
    if averaging_window % 2 == 0 || averaging_window < 1 {
        return Err(Error::Domain(format!("averaging window must be odd, got {averaging_window}")));
    }

    let planes2: [Vec<f64>; 5] = std::array::from_fn(|k| p2.coeffs.iter().map(|c| c[k]).collect());
    let n = w * h;
    // Normal-equation terms: G = A^T A (g11, g12, g22), rhs = A^T db.
    let mut terms: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = prior.get(x, y);
            let sx = x as f64 + dx as f64;
            let sy = y as f64 + dy as f64;
            let q: [f64; 5] = std::array::from_fn(|k| bilinear_sample(&planes2[k], w, h, sx, sy));
            let c1 = p1.coeffs[i];
            let a11 = 0.5 * (c1[0] + q[0]);
            let a12 = 0.5 * (c1[1] + q[1]);
            let a22 = 0.5 * (c1[2] + q[2]);
            let db1 = -0.5 * (q[3] - c1[3]);
            let db2 = -0.5 * (q[4] - c1[4]);
            terms[0][i] = a11 * a11 + a12 * a12;
            terms[1][i] = a11 * a12 + a12 * a22;
            terms[2][i] = a12 * a12 + a22 * a22;
            terms[3][i] = a11 * db1 + a12 * db2;
            terms[4][i] = a12 * db1 + a22 * db2;
        }
    }
    let avg = terms.map(|t| box_average(&t, w, h, averaging_window));

    let mut out = prior.clone();
    for i in 0..n {
        let (g11, g12, g22) = (avg[0][i], avg[1][i], avg[2][i]);
        let det = g11 * g22 - g12 * g12;
        if det < SINGULAR_DET {
            continue;
        }
        let (h1, h2) = (avg[3][i], avg[4][i]);
        let cx = (g22 * h1 - g12 * h2) / det;
        let cy = (g11 * h2 - g12 * h1) / det;
        out.data[2 * i] += cx as f32;
        out.data[2 * i + 1] += cy as f32;
    }
    Ok(out)
}

/// Bilinear resize with vector components scaled by the per-axis size ratio.
pub fn resize_flow(field: &FlowField, new_width: usize, new_height: usize) -> FlowField {
    if field.width == new_width && field.height == new_height {
        return field.clone();
    }
    let sx = new_width as f64 / field.width as f64;
    let sy = new_height as f64 / field.height as f64;
    let dx = resize_plane(&field.component(0), field.width, field.height, new_width, new_height);
    let dy = resize_plane(&field.component(1), field.width, field.height, new_width, new_height);
    let data = dx
        .iter()
        .zip(&dy)
        .flat_map(|(&a, &b)| [(a * sx) as f32, (b * sy) as f32])
        .collect();
    FlowField {
        width: new_width,
        height: new_height,
        data,
    }
}

/// Displacement `d` with `frame2(x + d) ~ frame1(x)`, coarse to fine.
pub fn farneback_flow(frame1: &GrayImage, frame2: &GrayImage, config: &FlowConfig) -> Result<FlowField> {
    config.validate()?;
    if (frame1.width, frame1.height) != (frame2.width, frame2.height) {
        return Err(Error::DimensionMismatch(format!(
            "frames differ: {}x{} vs {}x{}",
            frame1.width, frame1.height, frame2.width, frame2.height
        )));
    }
    let pyr1 = gaussian_pyramid(frame1, config.pyramid_levels, config.pyramid_scale, config.poly_window)?;
    let pyr2 = gaussian_pyramid(frame2, config.pyramid_levels, config.pyramid_scale, config.poly_window)?;

    let coarsest = pyr1.levels.last().expect("non-empty pyramid");
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    for (l1, l2) in pyr1.levels.iter().zip(&pyr2.levels).rev() {
        flow = resize_flow(&flow, l1.width, l1.height);
        let c1 = poly_expansion(l1, config.poly_window, config.poly_sigma)?;
        let c2 = poly_expansion(l2, config.poly_window, config.poly_sigma)?;
        for _ in 0..config.iterations_per_level {
            flow = flow_step(&c1, &c2, &flow, config.averaging_window)?;
        }
    }
    Ok(flow)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub mean_magnitude: f64,
    pub max_magnitude: f64,
    /// Magnitude-weighted direction histogram over 8 bins of 45 degrees,
    /// bin 0 starting at +x; uniform when the field is all zero.
    pub angle_histogram: [f64; 8],
}

pub fn flow_stats(field: &FlowField) -> FlowStats {
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    let mut hist = [0.0; 8];
    for v in field.data.chunks_exact(2) {
        let (dx, dy) = (v[0] as f64, v[1] as f64);
        let mag = (dx * dx + dy * dy).sqrt();
        sum += mag;
        max = max.max(mag);
        if mag > 0.0 {
            hist[angle_bin(dx, dy)] += mag;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    } else {
        hist = [1.0 / 8.0; 8];
    }
    let n = (field.width * field.height).max(1) as f64;
    FlowStats {
        mean_magnitude: sum / n,
        max_magnitude: max,
        angle_histogram: hist,
    }
}

pub fn angle_bin(dx: f64, dy: f64) -> usize {
    let angle = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
    ((angle / std::f64::consts::FRAC_PI_4) as usize).min(7)
}
