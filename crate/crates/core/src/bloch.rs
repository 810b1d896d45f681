//! Truncated Bloch induction operator `A^eps` on one periodic cell and its
//! eigenvalues near the homogenized prediction.

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::alpha::{alpha_direct, InductionSystem};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::field::{cross, CVec3, FourierVectorField, TorusSpec, C64};
use crate::large_scale::predict_mode_at;
use crate::linalg::{self, gmres, GmresOptions};

/// Largest truncation for which [`BlochOperator::dense`] is allowed.
pub const DENSE_MAX_K: usize = 4;

/// Matrix-free `A^eps b = i kappa x (U x b) - |kappa|^2 / Rm b` with
/// `kappa = 2 pi k / T + eps xi`, acting on coefficient vectors laid out
/// like [`FourierVectorField`].
#[derive(Clone, Debug)]
pub struct BlochOperator {
    pub torus: TorusSpec,
    pub r_m: f64,
    pub xi: [f64; 3],
    pub epsilon: f64,
    flow: Vec<CVec3>,
    // (output mode, source mode, flow entry)
    pairs: Vec<(u32, u32, u32)>,
    base: Vec<[f64; 3]>,
    kappa: Vec<[f64; 3]>,
    diag: Vec<f64>,
}

impl BlochOperator {
    pub fn assemble(flow: &FourierVectorField, r_m: f64, xi: [f64; 3], epsilon: f64, k: usize) -> Result<Self> {
        if !(r_m.is_finite() && r_m > 0.0) {
            return Err(Error::Validation(format!("r_m must be positive, got {r_m}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) || xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("epsilon and xi must be finite, epsilon >= 0".into()));
        }
        let torus = flow.torus.with_trunc(k);
        let modes = flow.nonzero();
        let mut pairs = Vec::new();
        for out in 0..torus.modes() {
            let kv = torus.wavevector(out);
            for (f, (p, _)) in modes.iter().enumerate() {
                if let Some(src) = torus.index([kv[0] - p[0], kv[1] - p[1], kv[2] - p[2]]) {
                    pairs.push((out as u32, src as u32, f as u32));
                }
            }
        }
        let base: Vec<[f64; 3]> = torus.wavevectors().map(|kv| torus.angular(kv)).collect();
        let kappa: Vec<[f64; 3]> = base.iter().map(|b| std::array::from_fn(|d| b[d] + epsilon * xi[d])).collect();
        let diag = kappa.iter().map(|q| -(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) / r_m).collect();
        Ok(BlochOperator {
            torus,
            r_m,
            xi,
            epsilon,
            flow: modes.into_iter().map(|(_, v)| v).collect(),
            pairs,
            base,
            kappa,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        3 * self.torus.modes()
    }

    /// Diagonal diffusion part `-|kappa_k|^2 / Rm`.
    pub fn diffusion(&self) -> &[f64] {
        &self.diag
    }

    fn cross_flow(&self, v: &[C64]) -> Vec<C64> {
        let mut w = linalg::zeros(v.len());
        for &(o, s, f) in &self.pairs {
            let (o, s) = (3 * o as usize, 3 * s as usize);
            let p = cross(&self.flow[f as usize], &[v[s], v[s + 1], v[s + 2]]);
            for d in 0..3 {
                w[o + d] += p[d];
            }
        }
        w
    }

    fn curl_kappa(kap: &[f64; 3], w: &[C64]) -> CVec3 {
        let c = [
            w[2] * kap[1] - w[1] * kap[2],
            w[0] * kap[2] - w[2] * kap[0],
            w[1] * kap[0] - w[0] * kap[1],
        ];
        c.map(|x| x * C64::i())
    }

    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        let w = self.cross_flow(v);
        for (m, kap) in self.kappa.iter().enumerate() {
            let c = Self::curl_kappa(kap, &w[3 * m..3 * m + 3]);
            for d in 0..3 {
                out[3 * m + d] = c[d] + v[3 * m + d] * self.diag[m];
            }
        }
    }

    /// `A^H w = -U x (i kappa x w) + diag w`: `i kappa x` is Hermitian per mode
    /// and cross product with a real field is anti-Hermitian.
    pub fn apply_adjoint(&self, v: &[C64], out: &mut [C64]) {
        let mut c = linalg::zeros(v.len());
        for (m, kap) in self.kappa.iter().enumerate() {
            let x = Self::curl_kappa(kap, &v[3 * m..3 * m + 3]);
            c[3 * m..3 * m + 3].copy_from_slice(&x);
        }
        let w = self.cross_flow(&c);
        for m in 0..self.kappa.len() {
            for d in 0..3 {
                out[3 * m + d] = -w[3 * m + d] + v[3 * m + d] * self.diag[m];
            }
        }
    }

    /// The pieces `(A0 v, A1 v, A2 v)` of `A^eps = A0 + eps A1 + eps^2 A2`.
    pub fn apply_parts(&self, v: &[C64]) -> [Vec<C64>; 3] {
        let w = self.cross_flow(v);
        let n = v.len();
        let (mut a0, mut a1, mut a2) = (linalg::zeros(n), linalg::zeros(n), linalg::zeros(n));
        let xi2 = self.xi.iter().map(|x| x * x).sum::<f64>();
        for (m, b) in self.base.iter().enumerate() {
            let c0 = Self::curl_kappa(b, &w[3 * m..3 * m + 3]);
            let c1 = Self::curl_kappa(&self.xi, &w[3 * m..3 * m + 3]);
            let b2 = b.iter().map(|x| x * x).sum::<f64>();
            let xb = b.iter().zip(&self.xi).map(|(x, y)| x * y).sum::<f64>();
            for d in 0..3 {
                let vd = v[3 * m + d];
                a0[3 * m + d] = c0[d] - vd * (b2 / self.r_m);
                a1[3 * m + d] = c1[d] - vd * (2.0 * xb / self.r_m);
                a2[3 * m + d] = -vd * (xi2 / self.r_m);
            }
        }
        [a0, a1, a2]
    }

    /// Dense matrix (oracle use, `K <= DENSE_MAX_K`).
    pub fn dense(&self) -> Result<DMatrix<C64>> {
        if self.torus.trunc > DENSE_MAX_K {
            return Err(Error::Validation(format!("dense assembly limited to K <= {DENSE_MAX_K}")));
        }
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = linalg::zeros(n);
        let mut col = linalg::zeros(n);
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            e[j] = C64::new(0.0, 0.0);
            m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
        }
        Ok(m)
    }

    /// `max_k |kappa_k . v(k)| / ||v||`.
    pub fn divergence_defect(&self, v: &[C64]) -> f64 {
        let n = linalg::norm(v);
        if n == 0.0 {
            return 0.0;
        }
        self.kappa
            .iter()
            .enumerate()
            .map(|(m, k)| (v[3 * m] * k[0] + v[3 * m + 1] * k[1] + v[3 * m + 2] * k[2]).norm())
            .fold(0.0, f64::max)
            / n
    }

    pub fn residual(&self, mu: C64, v: &[C64]) -> f64 {
        let mut av = linalg::zeros(v.len());
        self.apply(v, &mut av);
        linalg::axpy(-mu, v, &mut av);
        linalg::norm(&av)
    }

    fn mean_slot(&self) -> usize {
        3 * self.torus.index([0, 0, 0]).expect("truncation contains k = 0")
    }

    /// `(A_ff - sigma) x` on the fluctuation part; mean entries pass through.
    fn apply_ff_shifted(&self, sigma: C64, x: &[C64], y: &mut [C64]) {
        let z = self.mean_slot();
        let mut xf = x.to_vec();
        xf[z..z + 3].fill(C64::new(0.0, 0.0));
        self.apply(&xf, y);
        linalg::axpy(-sigma, &xf, y);
        y[z..z + 3].copy_from_slice(&x[z..z + 3]);
    }

    fn solve_ff(&self, sigma: C64, b: &[C64], tol: f64) -> Result<Vec<C64>> {
        let z = self.mean_slot() / 3;
        let opts = GmresOptions { tol, ..Default::default() };
        let out = gmres(
            |x, y| self.apply_ff_shifted(sigma, x, y),
            |x, y| {
                for (m, d) in self.diag.iter().enumerate() {
                    let s = if m == z { C64::new(1.0, 0.0) } else { C64::new(*d, 0.0) - sigma };
                    for c in 0..3 {
                        y[3 * m + c] = x[3 * m + c] / s;
                    }
                }
            },
            b,
            None,
            opts,
        )?;
        Ok(out.x)
    }

    /// Factorizes `A - sigma` by eliminating the fluctuation block:
    /// `W = (A_ff - sigma)^-1 A_fm`, `S = A_mm - sigma - A_mf W`.
    pub fn shift_solver(&self, sigma: C64, tol: f64) -> Result<ShiftSolver<'_>> {
        let n = self.dim();
        let z = self.mean_slot();
        let mut w = Vec::with_capacity(3);
        let mut s = Matrix3::<C64>::zeros();
        let mut col = linalg::zeros(n);
        for c in 0..3 {
            let mut e = linalg::zeros(n);
            e[z + c] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for d in 0..3 {
                s[(d, c)] = col[z + d];
            }
            s[(c, c)] -= sigma;
            col[z..z + 3].fill(C64::new(0.0, 0.0));
            let wc = self.solve_ff(sigma, &col, tol)?;
            // A_mf w_c
            let mut wf = wc.clone();
            wf[z..z + 3].fill(C64::new(0.0, 0.0));
            self.apply(&wf, &mut col);
            for d in 0..3 {
                s[(d, c)] -= col[z + d];
            }
            w.push(wf);
        }
        let s_inv = s.try_inverse().ok_or_else(|| Error::SingularShift(format!("{sigma}")))?;
        if !s_inv.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::SingularShift(format!("{sigma}")));
        }
        Ok(ShiftSolver { op: self, sigma, w, s_inv, tol })
    }
}

/// `(A - sigma)^-1` through the mean/fluctuation Schur complement.
pub struct ShiftSolver<'a> {
    op: &'a BlochOperator,
    pub sigma: C64,
    w: Vec<Vec<C64>>,
    s_inv: Matrix3<C64>,
    tol: f64,
}

impl ShiftSolver<'_> {
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let op = self.op;
        let z = op.mean_slot();
        let mut bf = b.to_vec();
        bf[z..z + 3].fill(C64::new(0.0, 0.0));
        let mut y = op.solve_ff(self.sigma, &bf, self.tol)?;
        y[z..z + 3].fill(C64::new(0.0, 0.0));
        let mut ay = linalg::zeros(b.len());
        op.apply(&y, &mut ay);
        let rm = nalgebra::Vector3::from_fn(|d, _| b[z + d] - ay[z + d]);
        let xm = self.s_inv * rm;
        for c in 0..3 {
            linalg::axpy(-xm[c], &self.w[c], &mut y);
        }
        y[z..z + 3].copy_from_slice(xm.as_slice());
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-8, max_iter: 500, inner_tol: 1e-11 }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub mu: C64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
    pub shift: C64,
}

fn start_vector(n: usize) -> Vec<C64> {
    let mut s: u64 = 0x2545_f491_4f6c_dd1d;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut v: Vec<C64> = (0..n).map(|_| C64::new(next(), next())).collect();
    linalg::normalize(&mut v);
    v
}

/// Shift-invert power iteration around `target`. Singular shifts are
/// retried with a deterministic jitter sequence.
pub fn eigensolve_near(op: &BlochOperator, target: C64, start: Option<&[C64]>, opts: EigenOptions) -> Result<EigenResult> {
    let scale = target.norm().max(1e-3);
    let mut last = Error::SingularShift(format!("{target}"));
    for attempt in 0..4 {
        let jitter = if attempt == 0 {
            C64::new(0.0, 0.0)
        } else {
            C64::from_polar(1e-7 * scale * attempt as f64, 0.7 * attempt as f64)
        };
        match shift_invert(op, target + jitter, start, opts) {
            Err(e @ Error::SingularShift(_)) => last = e,
            other => return other,
        }
    }
    Err(last)
}

fn shift_invert(op: &BlochOperator, target: C64, start: Option<&[C64]>, opts: EigenOptions) -> Result<EigenResult> {
    let mut sigma = target;
    let n = op.dim();
    let mut v = match start {
        Some(s) if s.len() == n && linalg::norm(s) > 0.0 => s.to_vec(),
        Some(_) => return Err(Error::Validation("start vector has the wrong size or is zero".into())),
        None => start_vector(n),
    };
    linalg::normalize(&mut v);
    let mut av = linalg::zeros(n);
    let mut best = f64::INFINITY;
    let singular = |e: Error, sigma: C64| match e {
        Error::NoConvergence { .. } => Error::SingularShift(format!("{sigma}")),
        other => other,
    };
    let mut solver = op.shift_solver(sigma, opts.inner_tol).map_err(|e| singular(e, sigma))?;
    let mut rayleigh = true;
    for it in 1..=opts.max_iter {
        if solver.sigma != sigma {
            match op.shift_solver(sigma, opts.inner_tol) {
                Ok(s) => solver = s,
                Err(Error::NoConvergence { .. }) | Err(Error::SingularShift(_)) => {
                    sigma = solver.sigma;
                    rayleigh = false;
                }
                Err(e) => return Err(e),
            }
        }
        let mut y = match solver.solve(&v) {
            Ok(y) => y,
            // a moved shift too close to the spectrum can stall the inner
            // solve: fall back to the fixed target
            Err(Error::NoConvergence { .. }) if rayleigh && sigma != target => {
                rayleigh = false;
                sigma = target;
                solver = op.shift_solver(sigma, opts.inner_tol).map_err(|e| singular(e, sigma))?;
                solver.solve(&v).map_err(|e| singular(e, sigma))?
            }
            Err(e) => return Err(singular(e, sigma)),
        };
        let ny = linalg::normalize(&mut y);
        if !ny.is_finite() || ny > 1e15 {
            return Err(Error::SingularShift(format!("{sigma}")));
        }
        v = y;
        op.apply(&v, &mut av);
        let mu = linalg::dotc(&v, &av);
        linalg::axpy(-mu, &v, &mut av);
        let residual = linalg::norm(&av);
        best = best.min(residual);
        // once the iterate is locked onto one eigenpair, move the shift to its
        // Rayleigh quotient (fast local convergence)
        if rayleigh && residual < 1e-3 * mu.norm().max(1e-3) && (mu - target).norm() < 0.5 * target.norm().max(1e-3) {
            // but not so close that the inner solve stalls
            sigma = mu + C64::new(residual.max(1e-4 * mu.norm().max(1e-3)), 0.0);
        }
        if residual <= opts.tol {
            // fix the phase: largest component real positive
            let (_, piv) = v.iter().enumerate().fold((0.0, C64::new(1.0, 0.0)), |acc, (_, c)| {
                if c.norm() > acc.0 * (1.0 + 1e-12) { (c.norm(), *c) } else { acc }
            });
            let ph = piv.conj() / piv.norm();
            linalg::scale(ph, &mut v);
            return Ok(EigenResult { mu, vector: v, residual, iterations: it, shift: sigma });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: best })
}

/// Index of the cell mean in the coefficient layout.
fn mean_index(op: &BlochOperator) -> usize {
    op.torus.index([0, 0, 0]).expect("truncation contains k = 0")
}

/// Result of the `eps = 0` kernel analysis.
#[derive(Clone, Debug)]
pub struct KernelCheck {
    /// Estimate of the smallest singular value of the fluctuation block.
    pub sigma_min_fluct: f64,
    /// Eigenvalues of `A0` with modulus below `threshold`.
    pub near_zero: usize,
    pub threshold: f64,
    /// Kernel vectors `e_c + L e_c`, one per axis.
    pub vectors: Vec<Vec<C64>>,
    pub residuals: [f64; 3],
}

/// `A0` is block lower triangular in (mean, fluctuation): the mean rows vanish,
/// so its spectrum is `{0, 0, 0}` together with the spectrum of the
/// fluctuation block `A_ff`. Every eigenvalue of `A_ff` has modulus at least
/// `sigma_min(A_ff)`, estimated here by inverse iteration on `A_ff^H A_ff`.
pub fn kernel_check(flow: &FourierVectorField, r_m: f64, k: usize, threshold: f64) -> Result<KernelCheck> {
    let op = BlochOperator::assemble(flow, r_m, [0.0; 3], 0.0, k)?;
    let n = op.dim();
    let z = mean_index(&op);
    let precond = |x: &[C64], y: &mut [C64]| {
        for (m, d) in op.diag.iter().enumerate() {
            let s = if m == z { 1.0 } else { *d };
            for c in 0..3 {
                y[3 * m + c] = x[3 * m + c] / s;
            }
        }
    };
    // A_ff acting on the fluctuation part; mean entries pass through as identity
    let aff = |x: &[C64], y: &mut [C64]| {
        let mut xf = x.to_vec();
        xf[3 * z..3 * z + 3].fill(C64::new(0.0, 0.0));
        op.apply(&xf, y);
        y[3 * z..3 * z + 3].copy_from_slice(&x[3 * z..3 * z + 3]);
    };
    let aff_h = |x: &[C64], y: &mut [C64]| {
        let mut xf = x.to_vec();
        xf[3 * z..3 * z + 3].fill(C64::new(0.0, 0.0));
        op.apply_adjoint(&xf, y);
        y[3 * z..3 * z + 3].copy_from_slice(&x[3 * z..3 * z + 3]);
    };
    let opts = GmresOptions { tol: 1e-12, ..Default::default() };

    let mut vectors = Vec::new();
    let mut residuals = [0.0; 3];
    for c in 0..3 {
        let mut e = linalg::zeros(n);
        e[3 * z + c] = C64::new(1.0, 0.0);
        let mut rhs = linalg::zeros(n);
        op.apply(&e, &mut rhs);
        linalg::scale(C64::new(-1.0, 0.0), &mut rhs);
        let f = gmres(aff, precond, &rhs, None, opts)?.x;
        let mut v = f;
        v[3 * z + c] = C64::new(1.0, 0.0);
        let mut av = linalg::zeros(n);
        op.apply(&v, &mut av);
        residuals[c] = linalg::norm(&av);
        vectors.push(v);
    }

    let mut x = start_vector(n);
    x[3 * z..3 * z + 3].fill(C64::new(0.0, 0.0));
    linalg::normalize(&mut x);
    let mut growth = 0.0;
    for _ in 0..60 {
        let y = gmres(aff_h, precond, &x, None, opts)?.x;
        let mut w = gmres(aff, precond, &y, None, opts)?.x;
        w[3 * z..3 * z + 3].fill(C64::new(0.0, 0.0));
        let g = linalg::normalize(&mut w);
        x = w;
        let done = (g - growth).abs() <= 1e-6 * g;
        growth = g;
        if done {
            break;
        }
    }
    let sigma_min_fluct = 1.0 / growth.sqrt();
    let near_zero = 3 + usize::from(sigma_min_fluct < threshold);
    Ok(KernelCheck { sigma_min_fluct, near_zero, threshold, vectors, residuals })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub mu: [f64; 2],
    pub mu_over_eps: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
    pub divergence_defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub rate: [f64; 2],
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log|mu/eps - rate|` against `log eps`.
    pub slope: f64,
    pub intercept: f64,
    pub all_growing: bool,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| vec![r.eps, r.mu[0], r.mu[1], r.mu_over_eps[0], r.mu_over_eps[1], r.residual])
            .collect();
        crate::io::to_csv(&["eps", "re_mu", "im_mu", "re_mu_over_eps", "im_mu_over_eps", "residual"], &rows)
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Continues the growing eigenvalue over decreasing `eps_list` starting
/// from the prediction `eps * rate`.
pub fn sweep_with_rate(
    flow: &FourierVectorField,
    r_m: f64,
    xi: [f64; 3],
    k: usize,
    eps_list: &[f64],
    rate: C64,
    opts: EigenOptions,
) -> Result<SweepReport> {
    if eps_list.len() < 2 || eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Validation("eps_list must be positive and strictly decreasing, length >= 2".into()));
    }
    if !(rate.re > 0.0) {
        return Err(Error::NoUnstableBranch);
    }
    let mut rows = Vec::new();
    let mut prev: Option<Vec<C64>> = None;
    let mut prev_ratio: Option<C64> = None;
    for &eps in eps_list {
        let op = BlochOperator::assemble(flow, r_m, xi, eps, k)?;
        let res = eigensolve_near(&op, rate * eps, prev.as_deref(), opts).map_err(|e| match e {
            Error::NoConvergence { residual, .. } => Error::BranchLoss { eps, residual },
            other => other,
        })?;
        let ratio = res.mu / eps;
        if let Some(p) = prev_ratio {
            if (ratio - p).norm() > 0.5 * rate.norm() {
                return Err(Error::BranchLoss { eps, residual: (ratio - p).norm() });
            }
        }
        if res.residual > 1e-4 {
            return Err(Error::BranchLoss { eps, residual: res.residual });
        }
        rows.push(SweepRow {
            eps,
            mu: [res.mu.re, res.mu.im],
            mu_over_eps: [ratio.re, ratio.im],
            residual: res.residual,
            iterations: res.iterations,
            divergence_defect: op.divergence_defect(&res.vector),
        });
        prev_ratio = Some(ratio);
        prev = Some(res.vector);
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let ly: Vec<f64> = rows
        .iter()
        .map(|r| (C64::new(r.mu_over_eps[0], r.mu_over_eps[1]) - rate).norm().max(1e-300).ln())
        .collect();
    let (slope, intercept, _) = linear_fit(&lx, &ly);
    let all_growing = rows.iter().all(|r| r.mu[0] > 0.0);
    Ok(SweepReport { rate: [rate.re, rate.im], rows, slope, intercept, all_growing })
}

/// Full sweep: computes `alpha` at `(r_m, K)`, the predicted rate at `xi`,
/// then continues the eigenvalue over `eps_list`.
pub fn convergence_sweep(
    flow: &FourierVectorField,
    r_m: f64,
    xi: [f64; 3],
    k: usize,
    eps_list: &[f64],
    tol: &Tolerances,
) -> Result<SweepReport> {
    let sys = InductionSystem::new(flow, k)?;
    let alpha = alpha_direct(&sys, r_m, tol)?;
    let rate = predicted_rate(&alpha.alpha, xi)?;
    sweep_with_rate(flow, r_m, xi, k, eps_list, rate, EigenOptions::default())
}

/// `lambda_+ - i xi . gamma`, or `NoUnstableBranch` when no growing mode exists.
pub fn predicted_rate(alpha: &Matrix3<f64>, xi: [f64; 3]) -> Result<C64> {
    match predict_mode_at(alpha, xi) {
        Ok(m) => Ok(m.rate),
        Err(Error::DegenerateAlpha(_)) | Err(Error::OutsideCone(_)) => Err(Error::NoUnstableBranch),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::build_v;

    fn vflow(k: usize) -> FourierVectorField {
        let t = TorusSpec::two_pi(k);
        let mut u = build_v(&t, 0, 1).unwrap();
        u += &build_v(&t, 0, 2).unwrap();
        u += &build_v(&t, 0, 3).unwrap();
        u
    }

    #[test]
    fn zero_flow_is_diagonal() {
        let t = TorusSpec::unit(2);
        let op = BlochOperator::assemble(&FourierVectorField::zeros(&t), 2.0, [1.0, 0.5, 0.0], 0.1, 2).unwrap();
        let i = t.index([1, 0, 0]).unwrap();
        let mut e = linalg::zeros(op.dim());
        e[3 * i + 1] = C64::new(1.0, 0.0);
        let mut out = linalg::zeros(op.dim());
        op.apply(&e, &mut out);
        let k = 2.0 * std::f64::consts::PI + 0.1;
        let expect = -(k * k + 0.05f64.powi(2)) / 2.0;
        assert!((out[3 * i + 1].re - expect).abs() < 1e-12);
        let target = C64::new(expect + 1e-3, 0.0);
        let r = eigensolve_near(&op, target, None, EigenOptions::default()).unwrap();
        assert!((r.mu.re - expect).abs() < 1e-10 && r.mu.im.abs() < 1e-10);
    }

    #[test]
    fn parts_sum_to_operator() {
        let u = vflow(3);
        let eps = 0.37;
        let op = BlochOperator::assemble(&u, 3.0, [0.4, -1.0, 0.7], eps, 3).unwrap();
        let v = start_vector(op.dim());
        let [a0, a1, a2] = op.apply_parts(&v);
        let mut full = linalg::zeros(op.dim());
        op.apply(&v, &mut full);
        let diff: f64 = (0..v.len()).map(|i| (full[i] - a0[i] - a1[i] * eps - a2[i] * eps * eps).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        let q = linalg::dotc(&v, &a2).re;
        assert!((q + (0.16 + 1.0 + 0.49) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_identity() {
        let u = vflow(3);
        let op = BlochOperator::assemble(&u, 1.5, [0.3, 0.2, 0.1], 0.2, 3).unwrap();
        let x = start_vector(op.dim());
        let mut y: Vec<C64> = x.iter().rev().map(|c| c * C64::new(0.3, -1.1)).collect();
        linalg::normalize(&mut y);
        let (mut ax, mut ahy) = (linalg::zeros(op.dim()), linalg::zeros(op.dim()));
        op.apply(&x, &mut ax);
        op.apply_adjoint(&y, &mut ahy);
        let lhs = linalg::dotc(&y, &ax);
        let rhs = linalg::dotc(&ahy, &x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn kernel_of_a0() {
        let u = vflow(3);
        let kc = kernel_check(&u, 1.0, 3, 1e-6).unwrap();
        assert_eq!(kc.near_zero, 3);
        assert!(kc.residuals.iter().all(|r| *r < 1e-8));
        assert!(kc.sigma_min_fluct > 1e-3);
    }

    #[test]
    fn fit_line() {
        let (s, b, r2) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_rejects_zero_flow() {
        let t = TorusSpec::two_pi(2);
        let r = convergence_sweep(&FourierVectorField::zeros(&t), 1.0, [1.0, 1.0, 1.0], 2, &[0.1, 0.05], &Tolerances::default());
        assert!(matches!(r, Err(Error::NoUnstableBranch)));
    }
}
