//! Smallest eigenpairs of a symmetric-definite pencil `A x = λ M x`.
//!
//! Small problems are solved densely. Larger ones use shift-invert Lanczos
//! in the M-inner product with full reorthogonalization and thick restarts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, LodError, Result};
use crate::sparse::{dot, norm2, spd_factorize, Factorization, SparseMatrix};

/// Problems up to this size go through the dense path.
pub const DENSE_LIMIT: usize = 400;

#[derive(Clone, Debug)]
pub struct EigOptions {
    pub n_ev: usize,
    pub tol: f64,
    /// Maximum number of restarts.
    pub max_iter: usize,
    /// Shift; must lie below the wanted part of the spectrum. It is halved
    /// until `A - shift·M` factorizes.
    pub shift: f64,
    pub seed: u64,
    /// Krylov basis size; defaults to `max(2·n_ev + 10, 30)`.
    pub krylov_dim: Option<usize>,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            n_ev: 1,
            tol: 1e-8,
            max_iter: 500,
            shift: 0.0,
            seed: 0x5eed,
            krylov_dim: None,
        }
    }
}

impl EigOptions {
    pub fn with_n_ev(n_ev: usize) -> Self {
        Self {
            n_ev,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub lambdas: Vec<f64>,
    /// M-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    /// `‖A x − λ M x‖₂ / ‖A x‖₂` per pair.
    pub residuals: Vec<f64>,
    /// Restarts used (0 on the dense path).
    pub iterations: usize,
}

pub fn generalized_eig_smallest(
    a: &SparseMatrix,
    m: &SparseMatrix,
    opts: &EigOptions,
) -> Result<EigenPairs> {
    let n = a.nrows();
    if a.ncols() != n || m.nrows() != n || m.ncols() != n {
        return invalid("eigenproblem matrices must be square and of equal size");
    }
    if opts.n_ev == 0 || opts.n_ev > n || !(opts.tol > 0.0) {
        return invalid(format!("need 1 <= n_ev <= {n} and tol > 0"));
    }
    if n <= DENSE_LIMIT {
        dense_eig(a, m, opts.n_ev)
    } else {
        lanczos(a, m, opts)
    }
}

fn relative_residual(a: &SparseMatrix, m: &SparseMatrix, lambda: f64, x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let mx = m.matvec(x);
    let r: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - lambda * q).collect();
    let scale = norm2(&ax);
    if scale == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / scale
    }
}

/// Dense solve of the pencil; also used as a test oracle.
pub fn dense_eig(a: &SparseMatrix, m: &SparseMatrix, n_ev: usize) -> Result<EigenPairs> {
    let chol = nalgebra::Cholesky::new(m.to_dense())
        .ok_or_else(|| LodError::Solver("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| LodError::Solver("singular mass factor".into()))?;
    let mut c = &linv * a.to_dense() * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt_inv = linv.transpose();
    let mut lambdas = Vec::with_capacity(n_ev);
    let mut vectors = Vec::with_capacity(n_ev);
    let mut residuals = Vec::with_capacity(n_ev);
    for &i in order.iter().take(n_ev) {
        let x = &lt_inv * eig.eigenvectors.column(i);
        let x: Vec<f64> = x.iter().copied().collect();
        lambdas.push(eig.eigenvalues[i]);
        residuals.push(relative_residual(a, m, eig.eigenvalues[i], &x));
        vectors.push(x);
    }
    Ok(EigenPairs {
        lambdas,
        vectors,
        residuals,
        iterations: 0,
    })
}

fn shifted_factorization(
    a: &SparseMatrix,
    m: &SparseMatrix,
    shift: f64,
) -> Result<(Factorization, f64)> {
    let mut sigma = shift;
    let mut last_err = None;
    for _ in 0..40 {
        let k = if sigma == 0.0 {
            a.clone()
        } else {
            a.add_scaled(1.0, m, -sigma)
        };
        match spd_factorize(&k) {
            Ok(f) => return Ok((f, sigma)),
            Err(e) => last_err = Some(e),
        }
        if sigma == 0.0 {
            break;
        }
        sigma = if sigma.abs() < 1e-8 { 0.0 } else { 0.5 * sigma };
    }
    Err(last_err.unwrap())
}

fn lanczos(a: &SparseMatrix, m: &SparseMatrix, opts: &EigOptions) -> Result<EigenPairs> {
    let n = a.nrows();
    let nev = opts.n_ev;
    let ncv = opts
        .krylov_dim
        .unwrap_or((2 * nev + 10).max(30))
        .clamp(nev + 2, n);
    let keep = nev + (ncv - nev) / 2;
    let (fact, _sigma) = shifted_factorization(a, m, opts.shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(ncv + 1);
    let mut mbasis: Vec<Vec<f64>> = Vec::with_capacity(ncv + 1);
    let mut h = DMatrix::<f64>::zeros(ncv + 1, ncv);

    let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (v0, mv0) = m_normalize(m, start);
    basis.push(v0);
    mbasis.push(mv0);

    let mut j0 = 0;
    let mut inner_tol = opts.tol;
    let mut best: Vec<f64> = vec![f64::INFINITY; nev];
    for iter in 1..=opts.max_iter {
        for j in j0..ncv {
            let mut w = fact.solve(&mbasis[j]);
            let mut coef = vec![0.0; j + 1];
            for _ in 0..2 {
                for i in 0..=j {
                    let c = dot(&w, &mbasis[i]);
                    coef[i] += c;
                    axpy(-c, &basis[i], &mut w);
                }
            }
            for i in 0..=j {
                h[(i, j)] = coef[i];
            }
            let mw = m.matvec(&w);
            let beta = dot(&w, &mw).max(0.0).sqrt();
            let scale = coef.iter().fold(0.0f64, |s, c| s.max(c.abs()));
            if beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
                // Invariant subspace: continue with a fresh orthogonal direction.
                let mut r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                for _ in 0..2 {
                    for i in 0..=j {
                        let c = dot(&r, &mbasis[i]);
                        axpy(-c, &basis[i], &mut r);
                    }
                }
                let (v, mv) = m_normalize(m, r);
                h[(j + 1, j)] = 0.0;
                push_or_set(&mut basis, j + 1, v);
                push_or_set(&mut mbasis, j + 1, mv);
            } else {
                h[(j + 1, j)] = beta;
                push_or_set(&mut basis, j + 1, w.iter().map(|x| x / beta).collect());
                push_or_set(&mut mbasis, j + 1, mw.iter().map(|x| x / beta).collect());
            }
        }

        let t = h.view((0, 0), (ncv, ncv)).into_owned();
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..ncv).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
        let beta = h[(ncv, ncv - 1)];
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let y = DMatrix::from_fn(ncv, ncv, |r, c| eig.eigenvectors[(r, order[c])]);

        let estimates: Vec<f64> = (0..nev)
            .map(|i| (beta * y[(ncv - 1, i)]).abs() / theta[i].abs())
            .collect();
        if estimates.iter().all(|&e| e <= inner_tol) && theta[..nev].iter().all(|&t| t > 0.0) {
            let mut pairs: Vec<(f64, Vec<f64>)> = (0..nev)
                .map(|i| {
                    let x = combine(&basis[..ncv], y.column(i).as_slice());
                    let (x, _) = m_normalize(m, x);
                    let lambda = a.bilinear(&x, &x);
                    (lambda, x)
                })
                .collect();
            pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
            let residuals: Vec<f64> = pairs
                .iter()
                .map(|(l, x)| relative_residual(a, m, *l, x))
                .collect();
            for (b, r) in best.iter_mut().zip(&residuals) {
                *b = b.min(*r);
            }
            if residuals.iter().all(|&r| r <= opts.tol) {
                let (lambdas, vectors) = pairs.into_iter().unzip();
                return Ok(EigenPairs {
                    lambdas,
                    vectors,
                    residuals,
                    iterations: iter,
                });
            }
            inner_tol *= 0.1;
        }

        // Thick restart with the `keep` leading Ritz vectors.
        let new_basis: Vec<Vec<f64>> = (0..keep)
            .map(|i| combine(&basis[..ncv], y.column(i).as_slice()))
            .collect();
        let new_mbasis: Vec<Vec<f64>> = (0..keep)
            .map(|i| combine(&mbasis[..ncv], y.column(i).as_slice()))
            .collect();
        let last = basis.swap_remove(ncv);
        let mlast = mbasis.swap_remove(ncv);
        basis = new_basis;
        mbasis = new_mbasis;
        basis.push(last);
        mbasis.push(mlast);
        h.fill(0.0);
        for i in 0..keep {
            h[(i, i)] = theta[i];
            h[(keep, i)] = beta * y[(ncv - 1, i)];
            h[(i, keep)] = h[(keep, i)];
        }
        j0 = keep;
    }
    Err(LodError::Convergence {
        iterations: opts.max_iter,
        worst: best.iter().cloned().fold(0.0, f64::max),
        residuals: best,
    })
}

fn push_or_set(v: &mut Vec<Vec<f64>>, idx: usize, x: Vec<f64>) {
    if idx < v.len() {
        v[idx] = x;
    } else {
        v.push(x);
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn combine(basis: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (v, &c) in basis.iter().zip(coef) {
        axpy(c, v, &mut out);
    }
    out
}

fn m_normalize(m: &SparseMatrix, mut x: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut mx = m.matvec(&x);
    let s = dot(&x, &mx).sqrt();
    x.iter_mut().for_each(|v| *v /= s);
    mx.iter_mut().for_each(|v| *v /= s);
    (x, mx)
}
