//! Banded LU with partial pivoting and a 1-norm condition estimate.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` superdiagonals.
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns
/// hold the fill-in created by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = i as isize - self.kl as isize;
        let off = j as isize - lo;
        (off >= 0 && (off as usize) < self.width).then(|| i * self.width + off as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band"
        );
        let s = self.slot(i, j).unwrap();
        self.data[s] += v;
    }

    /// Largest absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut cols = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, c) in cols.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *c += self.get(i, j).abs();
            }
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place. Exactly zero pivots are reported as singular.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let mut lower = vec![0.0; n * kl.max(1)];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularBvp { condition: f64::INFINITY });
            }
            piv[k] = p;
            let right = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.slot(k, j).unwrap(), self.slot(p, j).unwrap());
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last {
                let s = self.slot(i, k).unwrap();
                let f = self.data[s] / pivot;
                self.data[s] = 0.0;
                lower[k * kl + (i - k - 1)] = f;
                if f != 0.0 {
                    for j in k + 1..=right {
                        let u = self.get(k, j);
                        if u != 0.0 {
                            let t = self.slot(i, j).unwrap();
                            self.data[t] -= f * u;
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            upper: self,
            lower,
            piv,
        })
    }
}

/// Factors `L_{n-1} P_{n-1} ... L_0 P_0 A = U`.
#[derive(Debug, Clone)]
pub struct BandLu {
    upper: BandMatrix,
    lower: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn span(&self, k: usize) -> (usize, usize) {
        let u = &self.upper;
        ((k + u.kl).min(u.n - 1), (k + u.kl + u.ku).min(u.n - 1))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let u = &self.upper;
        let n = u.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let (last, _) = self.span(k);
            for i in k + 1..=last {
                x[i] -= self.lower[k * u.kl + (i - k - 1)] * x[k];
            }
        }
        for k in (0..n).rev() {
            let (_, right) = self.span(k);
            let s: f64 = (k + 1..=right).map(|j| u.get(k, j) * x[j]).sum();
            x[k] = (x[k] - s) / u.get(k, k);
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let u = &self.upper;
        let n = u.n;
        let mut w = b.to_vec();
        for k in 0..n {
            let lo = k.saturating_sub(u.kl + u.ku);
            let s: f64 = (lo..k).map(|i| u.get(i, k) * w[i]).sum();
            w[k] = (w[k] - s) / u.get(k, k);
        }
        for k in (0..n).rev() {
            let (last, _) = self.span(k);
            let s: f64 = (k + 1..=last).map(|i| self.lower[k * u.kl + (i - k - 1)] * w[i]).sum();
            w[k] -= s;
            w.swap(k, self.piv[k]);
        }
        w
    }

    /// Hager's estimate of `||A^-1||_1`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.upper.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum();
            let sign: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&sign);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> (BandMatrix, DMatrix<f64>) {
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                let v = rng.gen_range(-1.0..1.0);
                b.add(i, j, v);
                d[(i, j)] = v;
            }
        }
        (b, d)
    }

    #[test]
    fn solves_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, kl, ku) in [(1, 0, 0), (7, 2, 1), (30, 3, 3), (25, 5, 2)] {
            let (b, d) = random_band(n, kl, ku, &mut rng);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = b.clone().factor().unwrap();
            let x = lu.solve(&rhs);
            let ax = b.mul_vec(&x);
            for (a, r) in ax.iter().zip(&rhs) {
                assert!((a - r).abs() < 1e-9);
            }
            let xt = lu.solve_transpose(&rhs);
            let atx = d.transpose() * nalgebra::DVector::from_column_slice(&xt);
            for (a, r) in atx.iter().zip(&rhs) {
                assert!((a - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn condition_estimate_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, d) = random_band(20, 2, 2, &mut rng);
        let inv = d.try_inverse().unwrap();
        let exact = (0..20)
            .map(|j| inv.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let est = b.factor().unwrap().inverse_norm1_estimate();
        assert!(est <= exact * (1.0 + 1e-12) && est >= 0.1 * exact, "{est} vs {exact}");
    }

    #[test]
    fn zero_matrix_is_singular() {
        assert!(BandMatrix::zeros(3, 1, 1).factor().is_err());
    }

    proptest::proptest! {
        /// Diagonally dominant band matrices solve to roundoff.
        #[test]
        fn dominant_band_solves(n in 1usize..40, kl in 0usize..5, ku in 0usize..5, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut b, _) = random_band(n, kl, ku, &mut rng);
            for i in 0..n {
                b.add(i, i, (kl + ku + 1) as f64 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
            }
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = b.clone().factor().unwrap().solve(&rhs);
            for (a, r) in b.mul_vec(&x).iter().zip(&rhs) {
                proptest::prop_assert!((a - r).abs() < 1e-12);
            }
        }
    }
}
