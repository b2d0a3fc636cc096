//! One-off measurement harness (run with --ignored --nocapture) used to
//! freeze empirical bounds asserted in roundtrip.rs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use requant_codec::encoder::encode;
use requant_codec::{PixelPatch, QMatrix, standard_qmatrix};

fn random_patch(w: usize, h: usize, rng: &mut ChaCha12Rng) -> PixelPatch {
    let samples: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..=255)).collect();
    PixelPatch::new(w, h, samples).unwrap()
}

#[test]
#[ignore]
fn measure_roundtrip_error_bounds() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let ones = QMatrix::uniform(1).unwrap();
    let qf100 = standard_qmatrix(100).unwrap();
    let mut max_err_ones = 0i32;
    let mut max_err_qf100 = 0i32;
    for _ in 0..50 {
        let p = random_patch(64, 64, &mut rng);
        for (q, slot) in [(&ones, &mut max_err_ones), (&qf100, &mut max_err_qf100)] {
            let back = encode(&p, q).decode_pixels().unwrap();
            let err = p
                .samples()
                .iter()
                .zip(back.samples())
                .map(|(&a, &b)| (a as i32 - b as i32).abs())
                .max()
                .unwrap();
            *slot = (*slot).max(err);
        }
    }
    println!("max abs pixel error, q=all-ones over 50 seeds: {max_err_ones}");
    println!("max abs pixel error, q=QF100 over 50 seeds: {max_err_qf100}");
}

#[test]
#[ignore]
fn measure_double_quantization_stats() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let q4 = QMatrix::uniform(4).unwrap();
    let q2 = QMatrix::uniform(2).unwrap();

    let mut even = 0u64;
    let mut total_ac = 0u64;
    for _ in 0..50 {
        let p = random_patch(64, 64, &mut rng);
        let grid = encode(&p, &q4).recompress(&q2).unwrap().decode_coefficients().unwrap();
        for block in grid.blocks() {
            for (i, &v) in block.iter().enumerate() {
                if i == 0 {
                    continue;
                }
                total_ac += 1;
                if v % 2 == 0 {
                    even += 1;
                }
            }
        }
    }
    println!("even AC fraction (q1=4 -> q2=2): {:.6}", even as f64 / total_ac as f64);

    let mut unchanged = 0u64;
    let mut total = 0u64;
    for _ in 0..50 {
        let p = random_patch(64, 64, &mut rng);
        let q = standard_qmatrix(rng.random_range(51..=100)).unwrap();
        let first = encode(&p, &q);
        let a = first.decode_coefficients().unwrap();
        let b = first.recompress(&q).unwrap().decode_coefficients().unwrap();
        for (ba, bb) in a.blocks().zip(b.blocks()) {
            for i in 0..64 {
                total += 1;
                if ba[i] == bb[i] {
                    unchanged += 1;
                }
            }
        }
    }
    println!("unchanged fraction (q1=q2): {:.6}", unchanged as f64 / total as f64);
}
