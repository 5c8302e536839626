//! Banded and cyclic-tridiagonal solvers for the velocity operators.
//!
//! The matrices assembled from upwind fluxes are M-matrices, so Gaussian
//! elimination without pivoting is stable.

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("zero pivot at row {row} (value {pivot:e})")]
pub struct SingularMatrix {
    pub row: usize,
    pub pivot: f64,
}

/// A square matrix with `bw` sub- and super-diagonals, assembled entry by
/// entry and then factored in place.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i}, {j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.data[self.idx(i, j)] * x[j];
            }
            y[i] = s;
        }
    }

    /// LU factorization without pivoting.
    pub fn factor(mut self) -> Result<BandLu, SingularMatrix> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(SingularMatrix { row: k, pivot });
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

/// Factored band matrix.
#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let (n, bw) = (m.n, m.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for k in lo..i {
                s -= m.data[m.idx(i, k)] * b[k];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= m.data[m.idx(i, j)] * b[j];
            }
            b[i] = s / m.data[m.idx(i, i)];
        }
    }
}

/// Tridiagonal matrix with periodic corners, solved by Sherman-Morrison.
#[derive(Clone, Debug)]
pub struct CyclicLu {
    lu: BandLu,
    z: Vec<f64>,
    v_last: f64,
}

impl CyclicLu {
    /// `sub[i] = A[i][i-1]`, `diag[i] = A[i][i]`, `sup[i] = A[i][i+1]`, all
    /// indices modulo `n`.
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self, SingularMatrix> {
        let n = diag.len();
        assert!(n >= 3);
        let alpha = sup[n - 1]; // A[n-1][0]
        let beta = sub[0]; // A[0][n-1]
        let gamma = -diag[0];
        let mut b = BandMatrix::zeros(n, 1);
        for i in 0..n {
            b.add(i, i, diag[i]);
            if i > 0 {
                b.add(i, i - 1, sub[i]);
            }
            if i + 1 < n {
                b.add(i, i + 1, sup[i]);
            }
        }
        // A = B + u v^T with u = (gamma, 0, .., alpha), v = (1, 0, .., beta / gamma).
        b.add(0, 0, -gamma);
        b.add(n - 1, n - 1, -alpha * beta / gamma);
        let lu = b.factor()?;
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = alpha;
        lu.solve_in_place(&mut z);
        Ok(CyclicLu {
            lu,
            z,
            v_last: beta / gamma,
        })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.lu.solve_in_place(b);
        let n = b.len();
        let vy = b[0] + self.v_last * b[n - 1];
        let vz = self.z[0] + self.v_last * self.z[n - 1];
        let f = vy / (1.0 + vz);
        for (bi, zi) in b.iter_mut().zip(&self.z) {
            *bi -= f * zi;
        }
    }
}

/// Either factorization behind one interface.
#[derive(Clone, Debug)]
pub enum Factorization {
    Band(BandLu),
    Cyclic(CyclicLu),
}

impl Factorization {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            Factorization::Band(f) => f.solve_in_place(b),
            Factorization::Cyclic(f) => f.solve_in_place(b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_solve_matches_product() {
        let n = 12;
        let mut a = BandMatrix::zeros(n, 3);
        for i in 0..n {
            a.add(i, i, 10.0 + i as f64);
            for d in 1..=3 {
                if i + d < n {
                    a.add(i, i + d, -1.0 / d as f64);
                    a.add(i + d, i, -0.5 / d as f64);
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul(&x, &mut b);
        let lu = a.factor().unwrap();
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn cyclic_solve() {
        let n = 7;
        let sub: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let sup: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| sub[i] * x[(i + n - 1) % n] + diag[i] * x[i] + sup[i] * x[(i + 1) % n])
            .collect();
        let lu = CyclicLu::new(&sub, &diag, &sup).unwrap();
        let mut y = b.clone();
        lu.solve_in_place(&mut y);
        for (u, v) in y.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13, "{y:?}");
        }
    }

    #[test]
    fn singular_reported() {
        let a = BandMatrix::zeros(3, 1);
        assert_eq!(a.factor().unwrap_err().row, 0);
    }
}
