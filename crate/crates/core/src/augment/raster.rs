//! 8-bit raster type and the resampling primitives: affine warp, bilinear
//! resize and separable Gaussian blur.
//!
//! Pixel `(i, j)` has its center at normalized `((i + 0.5) / W, (j + 0.5) / H)`.

use rayon::prelude::*;

use super::AugmentError;
use crate::geometry::{AffineMatrix, Point};

/// Row-major interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, AugmentError> {
        if width == 0 || height == 0 {
            return Err(AugmentError::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(AugmentError::Channels(channels));
        }
        if data.len() != width * height * channels {
            return Err(AugmentError::DataLength {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self, AugmentError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self, AugmentError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }
    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies out the pixel rectangle `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image, AugmentError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(AugmentError::CropOutOfBounds);
        }
        let row = w * self.channels;
        let mut data = Vec::with_capacity(row * h);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[start..start + row]);
        }
        Image::new(w, h, self.channels, data)
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Warps `img` by `m` (normalized image frame, pivoting at the center) with a black fill.
pub fn warp_image(img: &Image, m: &AffineMatrix<f64>) -> Result<Image, AugmentError> {
    warp_image_with_fill(img, m, 0)
}

/// Inverse-mapping warp: each output pixel center is mapped back through
/// `m⁻¹` and sampled bilinearly. Neighbors that fall outside the input
/// contribute `fill`.
pub fn warp_image_with_fill(img: &Image, m: &AffineMatrix<f64>, fill: u8) -> Result<Image, AugmentError> {
    if m.is_identity() {
        return Ok(img.clone());
    }
    let inv = m.about_center().inverse()?;
    let (w, h, ch) = (img.width, img.height, img.channels);
    let (wf, hf) = (w as f64, h as f64);
    let mut out = vec![0u8; w * h * ch];
    out.par_chunks_mut(w * ch).enumerate().for_each(|(j, row)| {
        let v = (j as f64 + 0.5) / hf;
        for i in 0..w {
            let u = (i as f64 + 0.5) / wf;
            let p = inv.apply(Point::new(u, v));
            let sx = p.x * wf - 0.5;
            let sy = p.y * hf - 0.5;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            for c in 0..ch {
                let mut acc = 0.0;
                for &(tx, ty, wt) in &taps {
                    let s = if tx >= 0.0 && ty >= 0.0 && tx < wf && ty < hf {
                        img.get(tx as usize, ty as usize, c)
                    } else {
                        fill
                    };
                    acc += wt * s as f64;
                }
                row[i * ch + c] = to_u8(acc);
            }
        }
    });
    Image::new(w, h, ch, out)
}

/// Bilinear resize to `size × size`.
///
/// Sample grid: output pixel `d` reads source coordinate `(d + 0.5) · in/out − 0.5`,
/// clamped to `[0, in − 1]` (half-pixel centers, edge replication).
pub fn resize(img: &Image, size: usize) -> Result<Image, AugmentError> {
    if size == 0 {
        return Err(AugmentError::BadSize(size));
    }
    if img.width == size && img.height == size {
        return Ok(img.clone());
    }
    let ch = img.channels;
    let axis = |n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / size as f64;
        (0..size)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(img.width);
    let ys = axis(img.height);
    let mut out = vec![0u8; size * size * ch];
    out.par_chunks_mut(size * ch).enumerate().for_each(|(j, row)| {
        let (y0, y1, fy) = ys[j];
        for (i, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..ch {
                let top = (1.0 - fx) * img.get(x0, y0, c) as f64 + fx * img.get(x1, y0, c) as f64;
                let bot = (1.0 - fx) * img.get(x0, y1, c) as f64 + fx * img.get(x1, y1, c) as f64;
                row[i * ch + c] = to_u8((1.0 - fy) * top + fy * bot);
            }
        }
    });
    Image::new(size, size, ch, out)
}

/// Normalized Gaussian taps for a blur of the given pixel radius:
/// half-width `radius`, σ = `radius / 2`. Length is `2·radius + 1`.
pub fn gaussian_kernel(radius: usize) -> Vec<f64> {
    if radius == 0 {
        return vec![1.0];
    }
    let sigma = radius as f64 / 2.0;
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders. Radius 0 is the identity.
pub fn gaussian_blur(img: &Image, radius: usize) -> Image {
    if radius == 0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(radius);
    let r = radius as isize;
    let (w, h, ch) = (img.width, img.height, img.channels);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0f64; w * h * ch];
    horiz.par_chunks_mut(w * ch).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + k as isize - r, w);
                    acc += wt * img.get(sx, y, c) as f64;
                }
                row[x * ch + c] = acc;
            }
        }
    });

    let mut out = vec![0u8; w * h * ch];
    out.par_chunks_mut(w * ch).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + k as isize - r, h);
                    acc += wt * horiz[(sy * w + x) * ch + c];
                }
                row[x * ch + c] = to_u8(acc);
            }
        }
    });
    Image {
        width: w,
        height: h,
        channels: ch,
        data: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, ch: usize) -> Image {
        Image::from_fn(w, h, ch, |x, y, c| ((x * 37 + y * 11 + c * 50) % 256) as u8).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            Image::new(2, 2, 1, vec![0; 3]),
            Err(AugmentError::DataLength { .. })
        ));
        assert!(matches!(
            Image::new(2, 2, 2, vec![0; 8]),
            Err(AugmentError::Channels(2))
        ));
        assert!(matches!(Image::new(0, 2, 1, vec![]), Err(AugmentError::EmptyImage)));
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = gradient(13, 7, 3);
        assert_eq!(warp_image(&img, &AffineMatrix::identity()).unwrap(), img);
    }

    #[test]
    fn constant_image_stays_constant_in_interior() {
        let img = Image::filled(40, 40, 1, 137).unwrap();
        let out = warp_image(&img, &AffineMatrix::rotation(0.3)).unwrap();
        // pixels within the inscribed circle never touch the fill
        for y in 0..40 {
            for x in 0..40 {
                let (dx, dy) = (x as f64 + 0.5 - 20.0, y as f64 + 0.5 - 20.0);
                if dx.hypot(dy) < 18.0 {
                    assert_eq!(out.get(x, y, 0), 137);
                }
            }
        }
        assert_eq!(out.get(0, 0, 0), 0);
    }

    // Inverse map written out by hand for a 4×4 image and sh_x = 0.5.
    #[test]
    fn shear_warp_matches_inverse_map_oracle() {
        let img = gradient(4, 4, 1);
        let out = warp_image(&img, &AffineMatrix::shear(0.5, 0.0).unwrap()).unwrap();
        // output pixel (3, 3) center in normalized coords, relative to the pivot
        let (u, v) = (3.5 / 4.0 - 0.5, 3.5 / 4.0 - 0.5);
        // inverse of [[1, 0.5], [0, 1]] is [[1, -0.5], [0, 1]]
        let (px, py) = (u - 0.5 * v + 0.5, v + 0.5);
        let (sx, sy): (f64, f64) = (px * 4.0 - 0.5, py * 4.0 - 0.5);
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let at = |x: f64, y: f64| -> f64 {
            if x < 0.0 || y < 0.0 || x > 3.0 || y > 3.0 {
                0.0
            } else {
                img.get(x as usize, y as usize, 0) as f64
            }
        };
        let want = (1.0 - fx) * (1.0 - fy) * at(x0, y0)
            + fx * (1.0 - fy) * at(x0 + 1.0, y0)
            + (1.0 - fx) * fy * at(x0, y0 + 1.0)
            + fx * fy * at(x0 + 1.0, y0 + 1.0);
        assert_eq!(out.get(3, 3, 0), want.round() as u8);
    }

    #[test]
    fn warp_then_inverse_recovers_interior() {
        let img = Image::from_fn(96, 96, 1, |x, y, _| {
            (128.0 + 60.0 * ((x as f64) / 9.0).sin() * ((y as f64) / 7.0).cos()) as u8
        })
        .unwrap();
        let m = AffineMatrix::rotation(8f64.to_radians()) * AffineMatrix::shear(0.05, -0.04).unwrap();
        let back = warp_image(&warp_image(&img, &m).unwrap(), &m.inverse().unwrap()).unwrap();
        let mut err = 0.0;
        let mut n = 0.0;
        for y in 24..72 {
            for x in 24..72 {
                err += (img.get(x, y, 0) as f64 - back.get(x, y, 0) as f64).abs();
                n += 1.0;
            }
        }
        assert!(err / n <= 3.0, "mae {}", err / n);
    }

    #[test]
    fn blur_radius_zero_and_constant() {
        let img = gradient(9, 5, 3);
        assert_eq!(gaussian_blur(&img, 0), img);
        let flat = Image::filled(11, 8, 3, 201).unwrap();
        for r in 1..=5 {
            assert_eq!(gaussian_blur(&flat, r), flat);
        }
    }

    #[test]
    fn blur_impulse_matches_kernel_weights() {
        let img = Image::new(5, 1, 1, vec![0, 0, 255, 0, 0]).unwrap();
        let out = gaussian_blur(&img, 2);
        // direct evaluation: exp(-k²/2) for k in -2..=2 (σ = 1), normalized
        let raw: Vec<f64> = (-2i32..=2).map(|k| (-(k * k) as f64 / 2.0).exp()).collect();
        let s: f64 = raw.iter().sum();
        let want: Vec<u8> = raw.iter().map(|r| (r / s * 255.0).round() as u8).collect();
        assert_eq!(out.data(), &want[..]);
        assert_eq!(out.data(), &[14, 62, 103, 62, 14]);
    }

    #[test]
    fn blur_keeps_interior_mean() {
        let img = Image::from_fn(64, 64, 1, |x, y, _| ((x * 7 + y * 13) % 200) as u8).unwrap();
        let out = gaussian_blur(&img, 5);
        let mean = |im: &Image| {
            let mut s = 0.0;
            for y in 16..48 {
                for x in 16..48 {
                    s += im.get(x, y, 0) as f64;
                }
            }
            s / (32.0 * 32.0)
        };
        assert!((mean(&img) - mean(&out)).abs() <= 1.0);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gradient(6, 6, 3);
        assert_eq!(resize(&img, 6).unwrap(), img);
        let flat = Image::filled(7, 3, 1, 99).unwrap();
        assert!(resize(&flat, 10).unwrap().data().iter().all(|&v| v == 99));
    }

    #[test]
    fn resize_checkerboard_matches_bilinear_formula() {
        let img = Image::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
        let out = resize(&img, 4).unwrap();
        let coord = |d: f64| ((d + 0.5) * 0.5 - 0.5f64).clamp(0.0, 1.0);
        let src = |x: usize, y: usize| img.get(x, y, 0) as f64;
        for j in 0..4 {
            for i in 0..4 {
                let (sx, sy) = (coord(i as f64), coord(j as f64));
                let v = (1.0 - sx) * (1.0 - sy) * src(0, 0)
                    + sx * (1.0 - sy) * src(1, 0)
                    + (1.0 - sx) * sy * src(0, 1)
                    + sx * sy * src(1, 1);
                assert_eq!(out.get(i, j, 0), v.round() as u8, "pixel ({i},{j})");
            }
        }
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(3, 0, 0), 255);
    }

    #[test]
    fn crop_bounds() {
        let img = gradient(4, 4, 1);
        let c = img.crop(2, 2, 2, 2).unwrap();
        assert_eq!(c.get(0, 0, 0), img.get(2, 2, 0));
        assert!(img.crop(3, 0, 2, 1).is_err());
    }
}
