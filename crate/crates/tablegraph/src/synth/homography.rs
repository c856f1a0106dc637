//! Planar homographies for the perspective-distorted table category.
//!
//! A homography is fitted to four point correspondences by direct linear
//! transform with `h33` pinned to 1, giving an 8x8 linear system. Images
//! are warped by inverse mapping with bilinear interpolation; pixels that
//! fall outside the source read as white.

use super::{GrayImage, SynthError};

#[derive(Clone, Debug)]
pub struct Homography {
    /// Row-major 3x3 matrix.
    m: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    /// Fits the homography mapping each `src[i]` onto `dst[i]`.
    pub fn from_correspondences(
        src: &[[f64; 2]; 4],
        dst: &[[f64; 2]; 4],
    ) -> Result<Self, SynthError> {
        let mut a = [[0.0f64; 8]; 8];
        let mut b = [0.0f64; 8];
        for (i, (&[x, y], &[u, v])) in src.iter().zip(dst).enumerate() {
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y];
            b[2 * i] = u;
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y];
            b[2 * i + 1] = v;
        }
        let h = solve8(&mut a, &mut b)?;
        Ok(Self {
            m: [h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0],
        })
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.m;
        let w = m[6] * p[0] + m[7] * p[1] + m[8];
        [
            (m[0] * p[0] + m[1] * p[1] + m[2]) / w,
            (m[3] * p[0] + m[4] * p[1] + m[5]) / w,
        ]
    }

    pub fn inverse(&self) -> Result<Self, SynthError> {
        let m = &self.m;
        let cof = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        let det = m[0] * cof[0] + m[1] * cof[3] + m[2] * cof[6];
        if det.abs() < 1e-12 {
            return Err(SynthError::DegenerateQuad);
        }
        let mut inv = [0.0; 9];
        for i in 0..9 {
            inv[i] = cof[i] / det;
        }
        Ok(Self { m: inv })
    }
}

/// Gaussian elimination with partial pivoting; near-zero pivots mean the
/// four correspondences are degenerate (collinear points).
fn solve8(a: &mut [[f64; 8]; 8], b: &mut [f64; 8]) -> Result<[f64; 8], SynthError> {
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-9 {
            return Err(SynthError::DegenerateQuad);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 8];
    for col in (0..8).rev() {
        let mut acc = b[col];
        for k in col + 1..8 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// Warps `src` through `h`, producing an image of the same size. Each
/// output pixel is bilinearly sampled at its preimage under `h`.
pub fn warp_image(src: &GrayImage, h: &Homography) -> Result<GrayImage, SynthError> {
    let inv = h.inverse()?;
    let (height, width) = (src.height(), src.width());
    let mut out = GrayImage::new(height, width);
    for y in 0..height {
        for x in 0..width {
            let [sx, sy] = inv.apply([x as f64, y as f64]);
            out.set(x, y, bilinear(src, sx, sy));
        }
    }
    Ok(out)
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> u8 {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if x < -1.0 || y < -1.0 || x > w || y > h {
        return 255;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let sample = |ix: f64, iy: f64| -> f64 {
        if ix < 0.0 || iy < 0.0 || ix >= w || iy >= h {
            255.0
        } else {
            img.get(ix as usize, iy as usize) as f64
        }
    };
    let v00 = sample(x0, y0);
    let v10 = sample(x0 + 1.0, y0);
    let v01 = sample(x0, y0 + 1.0);
    let v11 = sample(x0 + 1.0, y0 + 1.0);
    let top = v00 * (1.0 - fx) + v10 * fx;
    let bot = v01 * (1.0 - fx) + v11 * fx;
    (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
}
