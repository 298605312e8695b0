//! Maximal ranks, pseudo-observations and tie diagnostics.

use crate::error::{Error, Result};

/// An `n x d` sample stored row-major; row `i` is the observation at time `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl ObservationMatrix {
    /// Builds a matrix from row-major values. Negative zeros are stored as `+0.0`
    /// so that bitwise equality agrees with `<=` when detecting ties.
    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("a sample needs at least one observation"));
        }
        if d < 2 {
            return Err(Error::param(format!("dimension must be at least 2, got {d}")));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at row {}, column {}", bad / d + 1, bad % d + 1)));
        }
        let values = values.into_iter().map(|v| if v == 0.0 { 0.0 } else { v }).collect();
        Ok(ObservationMatrix { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            crate::error::check_dim(d, row.len())?;
            values.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Rows `k..=l` (1-based, inclusive) as a new matrix.
    pub fn window(&self, k: usize, l: usize) -> Result<Self> {
        check_window(k, l, self.n)?;
        Ok(ObservationMatrix { n: l - k + 1, d: self.d, values: self.values[(k - 1) * self.d..l * self.d].to_vec() })
    }
}

fn check_window(k: usize, l: usize, n: usize) -> Result<()> {
    if k >= 1 && k <= l && l <= n {
        Ok(())
    } else {
        Err(Error::InvalidWindow { k, l, n })
    }
}

/// Maximal ranks of a window of `m` observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    m: usize,
    d: usize,
    ranks: Vec<u32>,
    ties: Vec<bool>,
}

impl RankMatrix {
    /// Wraps precomputed ranks (row-major). Every rank must lie in `1..=m` and the
    /// largest rank of each column must equal `m`, as maximal ranks always do.
    /// A column is flagged as tied unless it is a permutation of `1..=m`.
    pub fn from_ranks(m: usize, d: usize, ranks: Vec<u32>) -> Result<Self> {
        if m == 0 || d < 2 {
            return Err(Error::param(format!("rank matrix needs m >= 1 and d >= 2, got m={m}, d={d}")));
        }
        if ranks.len() != m * d {
            return Err(Error::DimensionMismatch { expected: m * d, got: ranks.len() });
        }
        let mut ties = vec![false; d];
        for (j, tie) in ties.iter_mut().enumerate() {
            let mut seen = vec![false; m + 1];
            let mut max = 0;
            for i in 0..m {
                let r = ranks[i * d + j] as usize;
                if r == 0 || r > m {
                    return Err(Error::domain(format!("rank {r} outside 1..={m}")));
                }
                *tie |= std::mem::replace(&mut seen[r], true);
                max = max.max(r);
            }
            if max != m {
                return Err(Error::domain(format!("column {} has maximal rank {max}, expected {m}", j + 1)));
            }
        }
        Ok(RankMatrix { m, d, ranks, ties })
    }

    /// Window length.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.ranks.chunks_exact(self.d)
    }

    pub fn ties_present(&self) -> &[bool] {
        &self.ties
    }

    pub fn has_ties(&self) -> bool {
        self.ties.iter().any(|&t| t)
    }
}

/// Maximal ranks within rows `k..=l` (1-based, inclusive):
/// `R_ij = #{t in k..=l : X_tj <= X_ij}`.
pub fn maximal_ranks(sample: &ObservationMatrix, window: (usize, usize)) -> Result<RankMatrix> {
    let (k, l) = window;
    check_window(k, l, sample.n)?;
    let m = l - k + 1;
    let d = sample.d;
    let mut ranks = vec![0u32; m * d];
    let mut ties = vec![false; d];
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for j in 0..d {
        let value = |i: usize| sample.get(k - 1 + i, j);
        order.clear();
        order.extend(0..m);
        order.sort_unstable_by(|&a, &b| value(a).total_cmp(&value(b)));
        // Every member of a block of equal values gets the position of the block's last element.
        let mut start = 0;
        while start < m {
            let v = value(order[start]).to_bits();
            let mut end = start + 1;
            while end < m && value(order[end]).to_bits() == v {
                end += 1;
            }
            if end - start > 1 {
                ties[j] = true;
            }
            for &i in &order[start..end] {
                ranks[i * d + j] = end as u32;
            }
            start = end;
        }
    }
    Ok(RankMatrix { m, d, ranks, ties })
}

/// `(R_ij - offset) / m` for every entry, row-major as rows; `offset` is 0 or 1/2.
pub fn pseudo_observations(ranks: &RankMatrix, offset: f64) -> Result<Vec<Vec<f64>>> {
    if offset != 0.0 && offset != 0.5 {
        return Err(Error::param(format!("offset must be 0 or 0.5, got {offset}")));
    }
    let m = ranks.m as f64;
    Ok(ranks.rows().map(|row| row.iter().map(|&r| (r as f64 - offset) / m).collect()).collect())
}

/// Per-column flags: true iff the column holds two bitwise-equal values.
pub fn detect_ties(sample: &ObservationMatrix) -> Vec<bool> {
    (0..sample.d)
        .map(|j| {
            let mut column: Vec<u64> = (0..sample.n).map(|i| sample.get(i, j).to_bits()).collect();
            column.sort_unstable();
            column.windows(2).any(|w| w[0] == w[1])
        })
        .collect()
}
