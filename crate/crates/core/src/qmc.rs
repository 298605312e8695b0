//! Sobol low-discrepancy points (Joe-Kuo direction numbers, Gray-code order).

use crate::error::{Error, Result};

const BITS: usize = 32;

// (degree s, coefficient a, initial direction integers m_1..m_s) for dimensions 2..=8.
const DIRECTIONS: [(usize, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

pub const MAX_SOBOL_DIM: usize = DIRECTIONS.len() + 1;

fn direction_vectors(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim - 1];
    for k in 0..BITS {
        v[k] = if k < s {
            m[k] << (BITS - 1 - k)
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for i in 1..s {
                if (a >> (s - 1 - i)) & 1 == 1 {
                    x ^= v[k - i];
                }
            }
            x
        };
    }
    v
}

/// The first `count` points of the `d`-dimensional Sobol sequence, starting at the origin.
pub fn sobol_points(d: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > MAX_SOBOL_DIM {
        return Err(Error::param(format!("Sobol points are available for 1..={MAX_SOBOL_DIM} dimensions, got {d}")));
    }
    if count > u32::MAX as usize {
        return Err(Error::param("too many Sobol points requested"));
    }
    let dirs: Vec<[u32; BITS]> = (0..d).map(direction_vectors).collect();
    let mut state = vec![0u32; d];
    let mut points = Vec::with_capacity(count);
    let scale = 1.0 / (1u64 << BITS) as f64;
    for i in 0..count {
        points.push(state.iter().map(|&x| x as f64 * scale).collect());
        let c = (!(i as u32)).trailing_zeros() as usize;
        for (x, dir) in state.iter_mut().zip(&dirs) {
            *x ^= dir[c];
        }
    }
    Ok(points)
}
