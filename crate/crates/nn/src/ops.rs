//! Small dense kernels shared by the layers. All matmuls accumulate into
//! the output slice; callers zero it when overwrite semantics are wanted.

use crate::scalar::Real;
use crate::tensor::Tensor;

/// c (m x n) += a (m x k) * b (k x n)
pub fn matmul_acc<F: Real>(a: &[F], m: usize, k: usize, b: &[F], n: usize, c: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row.iter()) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
}

/// c (m x n) += a^T * b, where a is (k x m) and b is (k x n)
pub fn matmul_ta_acc<F: Real>(a: &[F], k: usize, m: usize, b: &[F], n: usize, c: &mut [F]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row.iter()) {
                *c_ij += a_pi * b_pj;
            }
        }
    }
}

/// c (m x n) += a * b^T, where a is (m x k) and b is (n x k)
pub fn matmul_tb_acc<F: Real>(a: &[F], m: usize, k: usize, b: &[F], n: usize, c: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::ZERO;
            for (&x, &y) in a_row.iter().zip(b_row.iter()) {
                acc += x * y;
            }
            c[i * n + j] += acc;
        }
    }
}

/// Concatenates two rank-4 tensors along the channel axis.
pub fn channel_concat<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    let (n, ca, h, w) = a.dims4();
    let (nb, cb, hb, wb) = b.dims4();
    assert_eq!((n, h, w), (nb, hb, wb), "concat spatial/batch mismatch");
    let mut out = Tensor::zeros(&[n, ca + cb, h, w]);
    let plane = h * w;
    for i in 0..n {
        let dst = out.sample_mut(i);
        dst[..ca * plane].copy_from_slice(a.sample(i));
        dst[ca * plane..].copy_from_slice(b.sample(i));
    }
    out
}

/// Splits a rank-4 gradient along the channel axis at `first_channels`.
pub fn channel_split<F: Real>(g: &Tensor<F>, first_channels: usize) -> (Tensor<F>, Tensor<F>) {
    let (n, c, h, w) = g.dims4();
    assert!(first_channels <= c);
    let rest = c - first_channels;
    let mut a = Tensor::zeros(&[n, first_channels, h, w]);
    let mut b = Tensor::zeros(&[n, rest, h, w]);
    let plane = h * w;
    for i in 0..n {
        let src = g.sample(i);
        a.sample_mut(i).copy_from_slice(&src[..first_channels * plane]);
        b.sample_mut(i).copy_from_slice(&src[first_channels * plane..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        matmul_acc(&a, 2, 2, &b, 2, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0f64, 0.5, -1.0, 2.0, 0.0, 3.0]; // 3x2
        let mut direct = [0.0f64; 4];
        matmul_acc(&a, 2, 3, &b, 2, &mut direct);

        // a^T stored as (3 x 2) -> pass through matmul_ta
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut via_ta = [0.0f64; 4];
        matmul_ta_acc(&at, 3, 2, &b, 2, &mut via_ta);
        assert_eq!(direct, via_ta);

        // b^T stored as (2 x 3) -> pass through matmul_tb
        let bt = [1.0f64, -1.0, 0.0, 0.5, 2.0, 3.0];
        let mut via_tb = [0.0f64; 4];
        matmul_tb_acc(&a, 2, 3, &bt, 2, &mut via_tb);
        assert_eq!(direct, via_tb);
    }

    #[test]
    fn concat_then_split_roundtrips() {
        let a = Tensor::<f32>::from_vec(&[1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::<f32>::from_vec(&[1, 1, 1, 2], vec![9.0, 8.0]);
        let cat = channel_concat(&a, &b);
        assert_eq!(cat.shape(), &[1, 3, 1, 2]);
        let (sa, sb) = channel_split(&cat, 2);
        assert_eq!(sa, a);
        assert_eq!(sb, b);
    }
}
