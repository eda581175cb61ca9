//! Banded symmetric positive-definite matrices and their Cholesky factor.
//!
//! The TPFA pressure matrix on an `nx x ny` grid in natural ordering has
//! half-bandwidth `nx`, so a dense band factorization costs `O(n nx^2)`.

/// Lower band of a symmetric matrix: entry `(i, j)` with `i - b <= j <= i`
/// is stored at `i * (b + 1) + b - (i - j)`, so each row segment is
/// contiguous and ordered by column.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bandwidth, band: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + self.bandwidth - (i - j)
    }

    /// Row `i` of the band, columns `i - b ..= i` (leading entries of the
    /// first rows are padding).
    fn row(&self, i: usize) -> &[f64] {
        let w = self.bandwidth + 1;
        &self.band[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.band[self.slot(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.band[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.band[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.band[self.slot(i, i)]).fold(0.0, f64::max)
    }

    /// Cholesky factorization `A = L L^T`. Returns `None` when a pivot falls
    /// below `1e-12` times the largest diagonal entry.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let b = self.bandwidth;
        let mut l = self.band.clone();
        let tol = 1e-12 * self.max_diagonal();
        if !(tol > 0.0) {
            return None;
        }
        let w = b + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                // columns max(lo, j - b) .. j are shared by rows i and j
                let klo = lo.max(j.saturating_sub(b));
                let (ri, rj) = (i * w + b - i, j * w + b - j);
                let s: f64 = l[ri + klo..ri + j].iter().zip(&l[rj + klo..rj + j]).map(|(x, y)| x * y).sum();
                let s = l[ri + j] - s;
                if i == j {
                    if !(s > tol) {
                        return None;
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Some(BandedCholesky { factor: BandedSpd { n: self.n, bandwidth: b, band: l } })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let f = &self.factor;
        let (n, b) = (f.n, f.bandwidth);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = f.row(i);
            let s: f64 = row[lo + b - i..b].iter().zip(&y[lo..i]).map(|(a, v)| a * v).sum();
            y[i] = (y[i] - s) / row[b];
        }
        for i in (0..n).rev() {
            let hi = (i + b).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= f.band[f.slot(k, i)] * y[k];
            }
            y[i] = s / f.band[f.slot(i, i)];
        }
        y
    }
}

/// `||A x - b|| / ||b||` (or `||A x||` when `b = 0`).
pub fn relative_residual(a: &BandedSpd, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}
