//! Coefficient quantization with round-half-away-from-zero semantics.

use crate::qmatrix::QMatrix;

/// Rounds to the nearest integer, ties away from zero.
#[inline]
pub fn round_half_away(x: f64) -> i32 {
    x.round() as i32
}

/// Divides each coefficient by its quantization step and rounds.
pub fn quantize(coeffs: &[f64; 64], q: &QMatrix) -> [i32; 64] {
    let mut out = [0i32; 64];
    for i in 0..64 {
        out[i] = round_half_away(coeffs[i] / q.steps()[i] as f64);
    }
    out
}

/// Multiplies quantized values back by their steps.
pub fn dequantize(values: &[i32; 64], q: &QMatrix) -> [f64; 64] {
    let mut out = [0.0f64; 64];
    for i in 0..64 {
        out[i] = values[i] as f64 * q.steps()[i] as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::QMatrix;

    #[test]
    fn rounding_rule() {
        assert_eq!(round_half_away(2.5), 3);
        assert_eq!(round_half_away(-2.5), -3);
        assert_eq!(round_half_away(3.4), 3);
        assert_eq!(round_half_away(-3.4), -3);
        assert_eq!(round_half_away(0.0), 0);
    }

    #[test]
    fn quantize_examples() {
        let q = QMatrix::uniform(5).unwrap();
        let mut f = [0.0f64; 64];
        f[9] = 17.0;
        f[10] = -17.0;
        let v = quantize(&f, &q);
        assert_eq!(v[9], 3);
        assert_eq!(v[10], -3);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 0 || i == 9 || i == 10));

        let ones = QMatrix::uniform(1).unwrap();
        let mut f = [0.0f64; 64];
        f[0] = 2.5;
        assert_eq!(quantize(&f, &ones)[0], 3);
    }

    #[test]
    fn dequantize_inverts_steps() {
        let q = QMatrix::uniform(7).unwrap();
        let mut v = [0i32; 64];
        v[3] = -4;
        let f = dequantize(&v, &q);
        assert_eq!(f[3], -28.0);
    }
}
