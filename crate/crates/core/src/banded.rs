//! Banded LU with partial pivoting (row interchanges inside the band).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row r stores columns r-kl ..= r+kl+ku (room for pivot fill-in)
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (2 * kl + ku + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.kl + self.ku);
        r * self.width() + (c + self.kl - r)
    }

    /// Adds `v` at `(r, c)`; `c` must lie within `r-kl ..= r+ku`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(c + self.kl >= r && c <= r + self.ku, "entry ({r}, {c}) outside the band");
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.kl < r || c > r + self.kl + self.ku {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// `y = A x` (before factorization).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.data[self.idx(r, c)] * x[c]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.idx(i, i)].abs();
            for r in i + 1..=last_row {
                let v = self.data[self.idx(r, i)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Integration {
                    rho: i as f64,
                    reason: "singular banded system".into(),
                });
            }
            piv[i] = p;
            if p != i {
                for c in i..=last_col {
                    let (a, b) = (self.idx(i, c), self.idx(p, c));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.idx(i, i)];
            for r in i + 1..=last_row {
                let k = self.idx(r, i);
                let m = self.data[k] / d;
                self.data[k] = m;
                if m != 0.0 {
                    for c in i + 1..=last_col {
                        let u = self.data[self.idx(i, c)];
                        let k2 = self.idx(r, c);
                        self.data[k2] -= m * u;
                    }
                }
            }
        }
        Ok(BandLu { a: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.a;
        let n = a.n;
        for i in 0..n {
            b.swap(i, self.piv[i]);
            let bi = b[i];
            if bi != 0.0 {
                for r in i + 1..=(i + a.kl).min(n - 1) {
                    b[r] -= a.data[a.idx(r, i)] * bi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for c in i + 1..=(i + a.kl + a.ku).min(n - 1) {
                s -= a.data[a.idx(i, c)] * b[c];
            }
            b[i] = s / a.data[a.idx(i, i)];
        }
    }
}
