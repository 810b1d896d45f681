//! Krylov and dense solvers on complex coefficient vectors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::C64;

pub fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

/// Hermitian inner product `x^H y`.
pub fn dotc(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `y += a x`
pub fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

/// Normalizes in place and returns the previous norm.
pub fn normalize(x: &mut [C64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        scale(C64::new(1.0 / n, 0.0), x);
    }
    n
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-13, restart: 60, max_iter: 1200 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, recomputed from the operator.
    pub relative_residual: f64,
    /// `sigma_max / sigma_min` of the last Arnoldi Hessenberg (a lower bound on
    /// the condition number of the preconditioned operator).
    pub condition_estimate: f64,
}

/// Right-preconditioned restarted GMRES for `A x = b`; `precond` applies an
/// approximation of `A^{-1}`.
pub fn gmres<A, M>(apply: A, precond: M, b: &[C64], x0: Option<&[C64]>, opts: GmresOptions) -> Result<GmresOutcome>
where
    A: Fn(&[C64], &mut [C64]),
    M: Fn(&[C64], &mut [C64]),
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| zeros(n));
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x: zeros(n), iterations: 0, relative_residual: 0.0, condition_estimate: 1.0 });
    }
    let mut total = 0;
    let mut cond = 1.0;
    let mut tmp = zeros(n);
    let mut w = zeros(n);
    loop {
        // r = b - A x
        apply(&x, &mut tmp);
        let mut r: Vec<C64> = b.iter().zip(&tmp).map(|(bi, ti)| bi - ti).collect();
        let rnorm = norm(&r);
        if rnorm <= opts.tol * bnorm {
            return Ok(GmresOutcome { x, iterations: total, relative_residual: rnorm / bnorm, condition_estimate: cond });
        }
        if total >= opts.max_iter {
            return Err(Error::NoConvergence { iterations: total, residual: rnorm / bnorm });
        }
        scale(C64::new(1.0 / rnorm, 0.0), &mut r);
        let m = opts.restart;
        let mut basis: Vec<Vec<C64>> = vec![r];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(rnorm, 0.0);
        let mut hraw = DMatrix::<C64>::zeros(m + 1, m);
        let mut used = 0;
        for j in 0..m {
            precond(&basis[j], &mut tmp);
            apply(&tmp, &mut w);
            // modified Gram-Schmidt, twice
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dotc(v, &w);
                    h[i][j] += hij;
                    axpy(-hij, v, &mut w);
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = C64::new(wn, 0.0);
            for i in 0..=j + 1 {
                hraw[(i, j)] = h[i][j];
            }
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (c, s, rr) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = rr;
            h[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -s * g[j];
            g[j] = c.conj() * g[j];
            used = j + 1;
            total += 1;
            if g[j + 1].norm() <= 0.5 * opts.tol * bnorm || wn == 0.0 || total >= opts.max_iter {
                break;
            }
            let mut v = w.clone();
            scale(C64::new(1.0 / wn, 0.0), &mut v);
            basis.push(v);
        }
        // back substitution
        let mut y = vec![C64::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[i][k] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        let mut z = zeros(n);
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut z);
        }
        precond(&z, &mut tmp);
        axpy(C64::new(1.0, 0.0), &tmp, &mut x);
        cond = hessenberg_condition(&hraw.columns(0, used).rows(0, used + 1).into_owned()).max(cond);
    }
}

/// Rotation with `conj(c) a + conj(s) b = r` and `-s a + c b = 0`, `c` real.
fn givens(a: C64, b: C64) -> (C64, C64, C64) {
    if b.norm() == 0.0 {
        return (C64::new(1.0, 0.0), C64::new(0.0, 0.0), a);
    }
    if a.norm() == 0.0 {
        return (C64::new(0.0, 0.0), b / b.norm(), C64::new(b.norm(), 0.0));
    }
    let rho = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let phase = a / a.norm();
    (C64::new(a.norm() / rho, 0.0), phase.conj() * b / rho, phase * rho)
}

fn hessenberg_condition(h: &DMatrix<C64>) -> f64 {
    if h.ncols() == 0 {
        return 1.0;
    }
    let sv = h.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Dense complex LU with partial pivoting.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    norm1: f64,
}

impl DenseLu {
    /// Factorizes a row-major `n x n` matrix.
    pub fn new(n: usize, mut a: Vec<C64>) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let norm1 = (0..n).map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>()).fold(0.0, f64::max);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, a[i * n + k].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pv == 0.0 {
                return Err(Error::NearSingular { cond: f64::INFINITY });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = C64::new(1.0, 0.0) / a[k * n + k];
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n..(k + 1) * n];
            for row in bottom.chunks_mut(n) {
                let l = row[k] * inv;
                row[k] = l;
                if l.norm_sqr() == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    row[j] -= l * pivot_row[j];
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        // A = P^T L U  =>  A^H = U^H L^H P
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = acc / self.lu[i * n + i].conj();
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = acc;
        }
        let mut x = zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Hager–Higham estimate of the 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|c| c.norm()).sum::<f64>();
            let xi: Vec<C64> = y.iter().map(|c| if c.norm() == 0.0 { C64::new(1.0, 0.0) } else { c / c.norm() }).collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z.iter().enumerate().map(|(i, c)| (i, c.norm())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            if zmax <= dotc(&z, &x).re || j == last_j {
                break;
            }
            last_j = j;
            x = zeros(n);
            x[j] = C64::new(1.0, 0.0);
        }
        est * self.norm1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> Vec<C64> {
        (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let d = if i == j { 4.0 } else { 0.0 };
                C64::new(d + ((i * 7 + j * 3) as f64).sin(), ((i + 2 * j) as f64).cos() * 0.5)
            })
            .collect()
    }

    fn matvec(n: usize, a: &[C64], x: &[C64], y: &mut [C64]) {
        for i in 0..n {
            y[i] = (0..n).map(|j| a[i * n + j] * x[j]).sum();
        }
    }

    #[test]
    fn lu_solves_and_adjoint_solves() {
        let n = 12;
        let a = test_matrix(n);
        let lu = DenseLu::new(n, a.clone()).unwrap();
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let x = lu.solve(&b);
        let mut ax = zeros(n);
        matvec(n, &a, &x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-12));
        let xa = lu.solve_adjoint(&b);
        for i in 0..n {
            let v: C64 = (0..n).map(|j| a[j * n + i].conj() * xa[j]).sum();
            assert!((v - b[i]).norm() < 1e-12);
        }
        let c = lu.condition_estimate();
        assert!(c > 1.0 && c.is_finite());
    }

    #[test]
    fn condition_estimate_flags_singular_scale() {
        let n = 3;
        let a = vec![
            C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0),
            C64::new(2.0, 0.0), C64::new(4.0, 0.0), C64::new(6.0 + 1e-13, 0.0),
            C64::new(0.0, 1.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0),
        ];
        let lu = DenseLu::new(n, a).unwrap();
        assert!(lu.condition_estimate() > 1e12);
    }

    #[test]
    fn gmres_matches_lu() {
        let n = 40;
        let a = test_matrix(n);
        let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sqrt(), -1.0)).collect();
        let out = gmres(
            |x, y| matvec(n, &a, x, y),
            |x, y| y.copy_from_slice(x),
            &b,
            None,
            GmresOptions { restart: 15, ..Default::default() },
        )
        .unwrap();
        let x = DenseLu::new(n, a).unwrap().solve(&b);
        assert!(out.relative_residual < 1e-12);
        assert!(out.x.iter().zip(&x).all(|(p, q)| (p - q).norm() < 1e-10));
    }
}
