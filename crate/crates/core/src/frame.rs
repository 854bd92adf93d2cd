//! Float image buffers, separable filtering, bilinear resampling and
//! PPM/PGM frame I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("image contains non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Interleaved RGB image, row-major, channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self { width, height, data }
    }

    /// Splits into three planar channels.
    pub fn planes(&self) -> [GrayImage; 3] {
        std::array::from_fn(|c| GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        })
    }

    pub fn from_planes(planes: &[GrayImage; 3]) -> Self {
        let (width, height) = (planes[0].width, planes[0].height);
        let mut data = Vec::with_capacity(3 * width * height);
        for i in 0..width * height {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Self { width, height, data }
    }
}

/// Rec.601 luma.
pub fn to_gray(rgb: &RgbImage) -> Result<GrayImage> {
    if rgb.data.len() != 3 * rgb.width * rgb.height {
        return Err(Error::DimensionMismatch(format!(
            "RGB buffer length {} does not match {}x{}x3",
            rgb.data.len(),
            rgb.width,
            rgb.height
        )));
    }
    let data = rgb
        .data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect();
    Ok(GrayImage {
        width: rgb.width,
        height: rgb.height,
        data,
    })
}

/// Mirror index without repeating the edge sample (`-1 -> 1`, `n -> n - 2`).
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let k = i.rem_euclid(period);
    if k >= n as isize {
        (period - k) as usize
    } else {
        k as usize
    }
}

/// Horizontal correlation `out[y][x] = sum_k kernel[k] * src[y][x + k - r]`
/// with reflect padding. `kernel.len()` must be odd.
pub fn correlate_rows(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                acc += w * row[reflect(x as isize + k as isize - r, width)];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Vertical counterpart of [`correlate_rows`].
pub fn correlate_cols(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for (k, &w) in kernel.iter().enumerate() {
        for y in 0..height {
            let sy = reflect(y as isize + k as isize - r, height);
            let src_row = &src[sy * width..(sy + 1) * width];
            let dst_row = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += w * s;
            }
        }
    }
    out
}

/// Normalized sampled Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let kernel = gaussian_kernel(sigma);
    let src: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
    let tmp = correlate_rows(&src, img.width, img.height, &kernel);
    let out = correlate_cols(&tmp, img.width, img.height, &kernel);
    GrayImage {
        width: img.width,
        height: img.height,
        data: out.into_iter().map(|v| v as f32).collect(),
    }
}

/// Samples a row-major plane at a real-valued position, clamping to the border.
#[inline]
pub fn bilinear_sample(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = data[y0 * width + x0] * (1.0 - fx) + data[y0 * width + x1] * fx;
    let bottom = data[y1 * width + x0] * (1.0 - fx) + data[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Pixel-center aligned bilinear resize of a row-major plane.
pub fn resize_plane(src: &[f64], width: usize, height: usize, new_width: usize, new_height: usize) -> Vec<f64> {
    let sx = width as f64 / new_width as f64;
    let sy = height as f64 / new_height as f64;
    let mut out = Vec::with_capacity(new_width * new_height);
    for y in 0..new_height {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..new_width {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            out.push(bilinear_sample(src, width, height, fx, fy));
        }
    }
    out
}

pub fn resize_bilinear(img: &GrayImage, new_width: usize, new_height: usize) -> GrayImage {
    if img.width == new_width && img.height == new_height {
        return img.clone();
    }
    let src: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
    let out = resize_plane(&src, img.width, img.height, new_width, new_height);
    GrayImage {
        width: new_width,
        height: new_height,
        data: out.into_iter().map(|v| v as f32).collect(),
    }
}

pub fn resize_rgb(img: &RgbImage, new_width: usize, new_height: usize) -> RgbImage {
    if img.width == new_width && img.height == new_height {
        return img.clone();
    }
    let planes = img.planes().map(|p| resize_bilinear(&p, new_width, new_height));
    RgbImage::from_planes(&planes)
}

/// File name for frame `index` inside a frame directory.
pub fn frame_file_name(index: usize, color: bool) -> String {
    format!("frame_{index:06}.{}", if color { "ppm" } else { "pgm" })
}

/// Loads an 8-bit PPM or PGM frame as RGB in `[0, 1]` (gray frames are replicated).
pub fn load_frame(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    RgbImage::new(w as usize, h as usize, data)
}

/// Writes an 8-bit binary PPM (P6).
pub fn save_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::DimensionMismatch("RGB buffer size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_weights() {
        let white = to_gray(&RgbImage::filled(3, 2, [1.0; 3])).unwrap();
        assert!(white.data.iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let black = to_gray(&RgbImage::filled(3, 2, [0.0; 3])).unwrap();
        assert!(black.data.iter().all(|&v| v == 0.0));
        let red = to_gray(&RgbImage::filled(3, 2, [1.0, 0.0, 0.0])).unwrap();
        assert!(red.data.iter().all(|&v| (v - 0.299).abs() < 1e-7));
        let bad = RgbImage {
            width: 2,
            height: 2,
            data: vec![0.0; 5],
        };
        assert!(to_gray(&bad).is_err());
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(-4, 1), 0);
    }

    #[test]
    fn separable_matches_naive_2d() {
        let (w, h) = (13, 9);
        let src: Vec<f64> = (0..w * h).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let k = gaussian_kernel(1.3);
        let r = (k.len() / 2) as isize;
        let fast = correlate_cols(&correlate_rows(&src, w, h, &k), w, h, &k);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    for (i, ki) in k.iter().enumerate() {
                        let sx = reflect(x as isize + i as isize - r, w);
                        let sy = reflect(y as isize + j as isize - r, h);
                        acc += ki * kj * src[sy * w + sx];
                    }
                }
                assert!((acc - fast[y * w + x]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resize_preserves_constant() {
        let img = GrayImage::filled(17, 11, 0.4);
        let small = resize_bilinear(&img, 8, 5);
        assert!(small.data.iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn frame_io_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(frame_file_name(3, true));
        assert!(path.ends_with("frame_000003.ppm"));
        let img = RgbImage::new(2, 1, vec![0.0, 0.5, 1.0, 1.0, 0.2, 0.0]).unwrap();
        save_ppm(&path, &img).unwrap();
        let back = load_frame(&path).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        assert!(load_frame(&dir.path().join("missing.ppm")).is_err());
    }
}
