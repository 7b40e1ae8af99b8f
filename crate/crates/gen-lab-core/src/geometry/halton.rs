//! Generalized Halton sequences for well-spread point initialization.
//!
//! Coordinate d uses the radical inverse in the d-th prime base. A nonzero
//! seed scrambles each base with a digit permutation fixing 0 (so trailing
//! zeros stay zero) and offsets the start index; seed 0 is the plain
//! unscrambled sequence starting at index 1.

use crate::rng::DetRng;

const BASES: [u64; 2] = [2, 3];

fn radical_inverse(base: u64, mut index: u64, perm: &[u64]) -> f64 {
    let mut result = 0.0;
    let mut denom = 1.0;
    while index > 0 {
        denom *= base as f64;
        result += perm[(index % base) as usize] as f64 / denom;
        index /= base;
    }
    result
}

fn digit_permutation(base: u64, seed: u64) -> Vec<u64> {
    let mut perm: Vec<u64> = (0..base).collect();
    if seed != 0 {
        let mut rng = DetRng::derive(seed, &[0x4a17_70e5_u64, base]);
        // Shuffle only 1..base so that digit 0 maps to 0.
        for i in (2..base as usize).rev() {
            let j = 1 + rng.below(i);
            perm.swap(i, j);
        }
    }
    perm
}

/// First `n` points of the (optionally scrambled) Halton sequence in
/// [0,1]^dims, returned row-major.
pub fn halton_points(n: usize, dims: usize, seed: u64) -> Vec<f64> {
    assert!(
        dims >= 1 && dims <= BASES.len(),
        "unsupported dimension count {dims}"
    );
    let perms: Vec<Vec<u64>> = BASES[..dims]
        .iter()
        .map(|&b| digit_permutation(b, seed))
        .collect();
    let offset = if seed == 0 {
        0
    } else {
        DetRng::derive(seed, &[0x0f_f5e7]).below(4096) as u64
    };
    let mut out = Vec::with_capacity(n * dims);
    for i in 0..n as u64 {
        for d in 0..dims {
            out.push(radical_inverse(BASES[d], 1 + offset + i, &perms[d]));
        }
    }
    out
}
