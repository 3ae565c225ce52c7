//! Filter-based structural extraction: Sobel gradients, Canny with
//! hysteresis, and Laplacian-of-Gaussian zero crossings.
//!
//! Every filter uses replicate padding at the border. Sobel kernels are scaled
//! by 1/8 so gradient components are central-difference slopes in intensity
//! per pixel, which keeps thresholds on a [0, 1] scale.

mod pgm;

pub use pgm::{read_pgm, write_pgm_ascii, write_pgm_binary};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::io;
use crate::numeric::Matrix;

/// H × W grayscale image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

/// Luma weights for RGB → gray.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

impl GrayImage {
    /// Values are clamped into [0, 1]; both sides must be at least 3.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < 3 || width < 3 {
            return Err(Error::invalid(format!(
                "image {height}x{width} is smaller than the 3x3 kernel"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::mismatch(
                "image pixel count",
                height * width,
                pixels.len(),
            ));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixel".into()));
        }
        Ok(GrayImage {
            height,
            width,
            pixels: pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut px = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                px.push(f(r, c));
            }
        }
        Self::new(height, width, px)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::new(m.rows(), m.cols(), m.as_slice().to_vec())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.height, self.width, self.pixels.clone())
            .expect("pixel buffer matches dimensions")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::from_matrix(&io::read_csv_matrix(text)?)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }
}

/// Binary edge mask with the source image's dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    mask: Vec<bool>,
}

impl EdgeMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.mask[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Columns holding at least one edge pixel.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.width)
            .filter(|&c| (0..self.height).any(|r| self.get(r, c)))
            .collect()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self
                .mask
                .iter()
                .map(|&m| if m { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// Scalar field on the image grid with replicate-padded reads.
#[derive(Debug, Clone)]
struct Field {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Field {
    fn from_image(img: &GrayImage) -> Self {
        Field {
            h: img.height,
            w: img.width,
            v: img.pixels.clone(),
        }
    }

    #[inline]
    fn at(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.h as isize - 1) as usize;
        let c = c.clamp(0, self.w as isize - 1) as usize;
        self.v[r * self.w + c]
    }

    /// Correlation with a (2·rr+1) × (2·rc+1) kernel stored row-major.
    fn filter(&self, kernel: &[f64], rr: usize, rc: usize) -> Field {
        let kw = 2 * rc + 1;
        let mut out = vec![0.0; self.h * self.w];
        for r in 0..self.h {
            for c in 0..self.w {
                let mut acc = 0.0;
                for dr in 0..=2 * rr {
                    for dc in 0..kw {
                        let k = kernel[dr * kw + dc];
                        if k != 0.0 {
                            acc += k * self.at(
                                r as isize + dr as isize - rr as isize,
                                c as isize + dc as isize - rc as isize,
                            );
                        }
                    }
                }
                out[r * self.w + c] = acc;
            }
        }
        Field {
            h: self.h,
            w: self.w,
            v: out,
        }
    }

    fn gaussian_blur(&self, sigma: f64) -> Field {
        let radius = (3.0 * sigma).ceil() as usize;
        let mut k: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let x = i as f64 - radius as f64;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= total);
        self.filter(&k, 0, radius).filter(&k, radius, 0)
    }
}

/// Sobel derivatives (right − left, down − up), evaluated as paired
/// differences so that flat regions give exactly zero.
fn sobel(f: &Field) -> (Field, Field) {
    let mut gx = vec![0.0; f.h * f.w];
    let mut gy = vec![0.0; f.h * f.w];
    for r in 0..f.h as isize {
        for c in 0..f.w as isize {
            let dx = |dr: isize| f.at(r + dr, c + 1) - f.at(r + dr, c - 1);
            let dy = |dc: isize| f.at(r + 1, c + dc) - f.at(r - 1, c + dc);
            let i = r as usize * f.w + c as usize;
            gx[i] = (dx(-1) + 2.0 * dx(0) + dx(1)) / 8.0;
            gy[i] = (dy(-1) + 2.0 * dy(0) + dy(1)) / 8.0;
        }
    }
    let field = |v| Field { h: f.h, w: f.w, v };
    (field(gx), field(gy))
}

/// Per-pixel gradient magnitude √(gx² + gy²), row-major.
pub fn sobel_magnitude(img: &GrayImage) -> Matrix {
    let (gx, gy) = sobel(&Field::from_image(img));
    let mag = gx.v.iter().zip(&gy.v).map(|(x, y)| x.hypot(*y)).collect();
    Matrix::from_vec(img.height, img.width, mag).expect("field matches image size")
}

/// Quantized gradient direction: 0°, 45°, 90°, 135°; boundaries go to the
/// lower bin.
fn direction_bin(gx: f64, gy: f64) -> usize {
    let mut angle = gy.atan2(gx).to_degrees();
    if angle < 0.0 {
        angle += 180.0;
    }
    if angle <= 22.5 || angle >= 157.5 {
        0
    } else if angle <= 67.5 {
        1
    } else if angle <= 112.5 {
        2
    } else {
        3
    }
}

/// Canny edge detector on [0, 1] gradient magnitudes.
pub fn canny(img: &GrayImage, sigma: f64, low: f64, high: f64) -> Result<EdgeMap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(0.0 <= low && low < high) || !high.is_finite() {
        return Err(Error::invalid(format!(
            "thresholds must satisfy 0 <= low < high, got low={low}, high={high}"
        )));
    }
    let blurred = Field::from_image(img).gaussian_blur(sigma);
    let (gx, gy) = sobel(&blurred);
    let (h, w) = (img.height, img.width);
    let mag = Field {
        h,
        w,
        v: gx.v.iter().zip(&gy.v).map(|(x, y)| x.hypot(*y)).collect(),
    };

    // non-maximum suppression: ≥ the backward neighbour, > the forward one,
    // so a plateau two pixels wide keeps exactly one of them
    let mut thin = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let m = mag.v[r * w + c];
            if m <= 0.0 {
                continue;
            }
            let (dr, dc): (isize, isize) = match direction_bin(gx.v[r * w + c], gy.v[r * w + c]) {
                0 => (0, 1),
                1 => (1, 1),
                2 => (1, 0),
                _ => (1, -1),
            };
            let (ri, ci) = (r as isize, c as isize);
            let forward = mag.at(ri + dr, ci + dc);
            let backward = mag.at(ri - dr, ci - dc);
            if m >= backward && m > forward {
                thin[r * w + c] = m;
            }
        }
    }

    // hysteresis: 8-connected flood from strong pixels through weak ones
    let mut mask = vec![false; h * w];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            mask[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !mask[j] && thin[j] >= low && thin[j] > 0.0 {
                    mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap {
        height: h,
        width: w,
        mask,
    })
}

/// Zero-mean Laplacian-of-Gaussian kernel truncated at 4σ.
fn log_kernel(sigma: f64) -> (Vec<f64>, usize) {
    let radius = (4.0 * sigma).ceil() as usize;
    let size = 2 * radius + 1;
    let s2 = sigma * sigma;
    let mut k = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (y, x) = (i as f64 - radius as f64, j as f64 - radius as f64);
            let q = (x * x + y * y) / (2.0 * s2);
            k.push(-(1.0 - q) * (-q).exp() / (std::f64::consts::PI * s2 * s2));
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    (k, radius)
}

/// Marks the positive side of every 4-neighbour sign change of the LoG
/// response whose jump is at least `min_slope`.
pub fn log_zero_crossings(img: &GrayImage, sigma: f64, min_slope: f64) -> Result<EdgeMap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(min_slope >= 0.0) {
        return Err(Error::invalid(format!(
            "min_slope must be >= 0, got {min_slope}"
        )));
    }
    let (k, radius) = log_kernel(sigma);
    let resp = Field::from_image(img).filter(&k, radius, radius);
    let (h, w) = (img.height, img.width);
    let mut mask = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let p = resp.v[r * w + c];
            if p <= 0.0 {
                continue;
            }
            let neighbours = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)];
            mask[r * w + c] = neighbours.iter().any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    return false;
                }
                let q = resp.v[nr as usize * w + nc as usize];
                q < 0.0 && p - q >= min_slope
            });
        }
    }
    Ok(EdgeMap {
        height: h,
        width: w,
        mask,
    })
}
