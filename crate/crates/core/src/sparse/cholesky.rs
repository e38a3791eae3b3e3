//! Envelope (profile) Cholesky factorization.
//!
//! Lexicographically numbered grid matrices have a narrow envelope, and
//! row-oriented Cholesky creates fill only inside it.

use crate::error::{invalid, LodError, Result};
use crate::sparse::SparseMatrix;

/// Reusable `A = L Lᵀ` decomposition of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Offset of row `i` in `values`; row `i` stores columns `first[i]..=i`.
    start: Vec<usize>,
    values: Vec<f64>,
}

/// Factorizes a symmetric positive definite matrix. Only the lower triangle
/// is read.
pub fn spd_factorize(a: &SparseMatrix) -> Result<Factorization> {
    let n = a.nrows();
    if a.ncols() != n {
        return invalid(format!("cannot factorize a {}x{} matrix", n, a.ncols()));
    }
    let mut first = Vec::with_capacity(n);
    let mut start = Vec::with_capacity(n + 1);
    start.push(0);
    for i in 0..n {
        let (cols, _) = a.row(i);
        let f = cols.first().copied().unwrap_or(i).min(i);
        first.push(f);
        start.push(start[i] + (i - f + 1));
    }
    let mut values = vec![0.0; start[n]];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if c <= i {
                values[start[i] + c - first[i]] = v;
            }
        }
    }

    for i in 0..n {
        let fi = first[i];
        let (head, row_i) = values.split_at_mut(start[i]);
        for j in fi..i {
            let fj = first[j];
            let lo = fi.max(fj);
            let row_j = &head[start[j]..start[j + 1]];
            let s: f64 = row_i[lo - fi..j - fi]
                .iter()
                .zip(&row_j[lo - fj..j - fj])
                .map(|(x, y)| x * y)
                .sum();
            row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
        }
        let aii = row_i[i - fi];
        let s: f64 = row_i[..i - fi].iter().map(|x| x * x).sum();
        let d = aii - s;
        if !(d > 1e-14 * aii.abs()) || !d.is_finite() {
            return Err(LodError::Factorization { row: i, pivot: d });
        }
        row_i[i - fi] = d.sqrt();
    }
    Ok(Factorization {
        n,
        first,
        start,
        values,
    })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n, "solve dimension mismatch");
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi]
                .iter()
                .zip(&x[fi..i])
                .map(|(l, y)| l * y)
                .sum();
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (xk, l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= l * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{norm2, TripletBuilder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplace_2d(n: usize) -> SparseMatrix {
        let mut b = TripletBuilder::new(n * n, n * n);
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                b.push(p, p, 4.0);
                if i > 0 {
                    b.push(p, p - 1, -1.0);
                }
                if i + 1 < n {
                    b.push(p, p + 1, -1.0);
                }
                if j > 0 {
                    b.push(p, p - n, -1.0);
                }
                if j + 1 < n {
                    b.push(p, p + n, -1.0);
                }
            }
        }
        b.build()
    }

    #[test]
    fn identity_and_two_by_two() {
        let f = spd_factorize(&SparseMatrix::identity(4)).unwrap();
        assert_eq!(f.solve(&[1.0, -2.0, 3.0, 0.5]), vec![1.0, -2.0, 3.0, 0.5]);
        let mut b = TripletBuilder::new(2, 2);
        for (i, j, v) in [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)] {
            b.push(i, j, v);
        }
        let x = spd_factorize(&b.build()).unwrap().solve(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_and_roundtrip() {
        let a = laplace_2d(20);
        let f = spd_factorize(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let x: Vec<f64> = (0..a.nrows())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let b = a.matvec(&x);
            let y = f.solve(&b);
            let r: Vec<f64> = a.matvec(&y).iter().zip(&b).map(|(p, q)| p - q).collect();
            assert!(norm2(&r) <= 1e-10 * norm2(&b));
            assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-10));
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut b = TripletBuilder::new(2, 2);
        for (i, j, v) in [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)] {
            b.push(i, j, v);
        }
        match spd_factorize(&b.build()) {
            Err(LodError::Factorization { row, pivot }) => {
                assert_eq!(row, 1);
                assert!(pivot < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(spd_factorize(&SparseMatrix::zeros(2, 2)).is_err());
    }
}
