//! Orthonormal 8x8 type-II DCT and its inverse, computed in double
//! precision via separable 1-D transforms.

use std::sync::LazyLock;

/// C[u][x] = a(u) * cos((2x+1) u pi / 16), with a(0) = sqrt(1/8), a(u>0) = 1/2.
static COS_TABLE: LazyLock<[[f64; 8]; 8]> = LazyLock::new(|| {
    let mut c = [[0.0f64; 8]; 8];
    for (u, row) in c.iter_mut().enumerate() {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = alpha
                * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    c
});

/// Shifts unsigned samples to the signed range used by the transform.
pub fn level_shift(samples: &[u8; 64]) -> [f64; 64] {
    let mut out = [0.0f64; 64];
    for (o, &s) in out.iter_mut().zip(samples.iter()) {
        *o = s as f64 - 128.0;
    }
    out
}

/// Forward 2D DCT of a level-shifted 8x8 block (row-major), orthonormal scaling.
pub fn forward(block: &[f64; 64]) -> [f64; 64] {
    let c = &*COS_TABLE;
    // rows of tmp: tmp[u][x] = sum_y C[u][y] * block[y][x]
    let mut tmp = [0.0f64; 64];
    for u in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += c[u][y] * block[y * 8 + x];
            }
            tmp[u * 8 + x] = acc;
        }
    }
    // out[u][v] = sum_x tmp[u][x] * C[v][x]
    let mut out = [0.0f64; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += tmp[u * 8 + x] * c[v][x];
            }
            out[u * 8 + v] = acc;
        }
    }
    out
}

/// Inverse of [`forward`]; returns level-shifted samples.
pub fn inverse(coeffs: &[f64; 64]) -> [f64; 64] {
    let c = &*COS_TABLE;
    // tmp[y][v] = sum_u C[u][y] * coeffs[u][v]
    let mut tmp = [0.0f64; 64];
    for y in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += c[u][y] * coeffs[u * 8 + v];
            }
            tmp[y * 8 + v] = acc;
        }
    }
    // out[y][x] = sum_v tmp[y][v] * C[v][x]
    let mut out = [0.0f64; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += tmp[y * 8 + v] * c[v][x];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}
