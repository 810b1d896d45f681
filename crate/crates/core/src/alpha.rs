//! Alpha tensor of a periodic flow.
//!
//! The corrector `B~ = L(theta) b` solves
//! `(1/Rm) Lap B~ + curl(U x B~) = -curl(U x b)` on zero-mean fields, and
//! `alpha b = mean(U x B~)`. Writing `A f = -Lap^{-1} curl(U x f)` the system
//! becomes `(I - Rm A) B~ = Rm A b`, which is what both the direct solve and
//! the Neumann series work with.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::field::{cross, cross_re, cross_sparse_into, norm2_re, CVec3, FourierVectorField, TorusSpec, WaveVector, C64};
use crate::linalg::{self, DenseLu, GmresOptions};

/// Largest zero-mean system size factorized densely; beyond it the corrector
/// is solved with GMRES.
pub const DENSE_LIMIT: usize = 1100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "terms")]
pub enum AlphaMethod {
    Direct,
    Series(usize),
    Alpha2,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AlphaDiagnostics {
    /// Frobenius norm of each `Rm^n alpha^(n+1)` term (series method).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub term_norms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    pub imag_residue: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct AlphaTensor {
    pub alpha: Matrix3<f64>,
    pub sym: Matrix3<f64>,
    pub antisym: Matrix3<f64>,
    pub gamma: Vector3<f64>,
    pub r_m: f64,
    pub method: AlphaMethod,
    pub diagnostics: AlphaDiagnostics,
}

impl AlphaTensor {
    pub fn new(alpha: Matrix3<f64>, r_m: f64, method: AlphaMethod, diagnostics: AlphaDiagnostics) -> Self {
        let (sym, antisym, gamma) = decompose(&alpha);
        AlphaTensor { alpha, sym, antisym, gamma, r_m, method, diagnostics }
    }
}

/// JSON form of [`AlphaTensor`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub alpha: [[f64; 3]; 3],
    pub sym: [[f64; 3]; 3],
    pub antisym: [[f64; 3]; 3],
    pub gamma: [f64; 3],
    pub rm: f64,
    pub method: AlphaMethod,
    pub diagnostics: AlphaDiagnostics,
}

pub fn mat_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

pub fn mat_from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

impl From<&AlphaTensor> for AlphaRecord {
    fn from(a: &AlphaTensor) -> Self {
        AlphaRecord {
            alpha: mat_rows(&a.alpha),
            sym: mat_rows(&a.sym),
            antisym: mat_rows(&a.antisym),
            gamma: [a.gamma[0], a.gamma[1], a.gamma[2]],
            rm: a.r_m,
            method: a.method,
            diagnostics: a.diagnostics.clone(),
        }
    }
}

impl From<AlphaRecord> for AlphaTensor {
    fn from(r: AlphaRecord) -> Self {
        AlphaTensor::new(mat_from_rows(&r.alpha), r.rm, r.method, r.diagnostics)
    }
}

/// Splits into symmetric part, antisymmetric part and the axial vector `gamma`
/// with `antisym b = gamma x b`.
pub fn decompose(alpha: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>, Vector3<f64>) {
    let sym = (alpha + alpha.transpose()) * 0.5;
    let antisym = (alpha - alpha.transpose()) * 0.5;
    let gamma = Vector3::new(antisym[(2, 1)], antisym[(0, 2)], antisym[(1, 0)]);
    (sym, antisym, gamma)
}

/// The flow and truncation defining `A` and `L_Rm`.
#[derive(Clone, Debug)]
pub struct InductionSystem {
    pub torus: TorusSpec,
    flow: Vec<(WaveVector, CVec3)>,
}

impl InductionSystem {
    /// Works on `flow`'s box at truncation `trunc`.
    pub fn new(flow: &FourierVectorField, trunc: usize) -> Result<Self> {
        let torus = TorusSpec::new(flow.torus.periods, trunc)?;
        if flow.get([0, 0, 0]).iter().any(|c| c.norm() > 0.0) {
            return Err(Error::Validation("flow must have zero mean".into()));
        }
        Ok(InductionSystem { torus, flow: flow.nonzero() })
    }

    pub fn flow_modes(&self) -> &[(WaveVector, CVec3)] {
        &self.flow
    }

    /// `U x f` truncated to this system's box.
    pub fn cross_flow(&self, f: &FourierVectorField) -> FourierVectorField {
        let mut out = FourierVectorField::zeros(&self.torus);
        cross_sparse_into(&self.flow, f, &mut out, false);
        out
    }

    /// `A f = -Lap^{-1} curl(U x f)`; the output has zero mean.
    pub fn apply_script_a(&self, f: &FourierVectorField) -> FourierVectorField {
        let c = self.cross_flow(f);
        let mut out = FourierVectorField::zeros(&self.torus);
        for i in 0..self.torus.modes() {
            let kap = self.torus.angular(self.torus.wavevector(i));
            let s = norm2_re(&kap);
            if s == 0.0 {
                continue;
            }
            let v = cross_re(&kap, &c.at(i));
            out.set_at(i, v.map(|x| x * C64::new(0.0, 1.0 / s)));
        }
        out
    }

    /// `L_Rm f = (1/Rm) Lap f + curl(U x f)`.
    pub fn apply_l(&self, r_m: f64, f: &FourierVectorField) -> FourierVectorField {
        let c = self.cross_flow(f);
        let mut out = FourierVectorField::zeros(&self.torus);
        for i in 0..self.torus.modes() {
            let kap = self.torus.angular(self.torus.wavevector(i));
            let s = norm2_re(&kap);
            let curl = cross_re(&kap, &c.at(i));
            let v = f.at(i);
            out.set_at(i, std::array::from_fn(|d| curl[d] * C64::i() - v[d] * (s / r_m)));
        }
        out
    }

    fn zero_mean_index(&self) -> Vec<usize> {
        let zero = self.torus.index([0, 0, 0]).unwrap();
        (0..self.torus.modes()).filter(|&i| i != zero).collect()
    }

    fn pack(&self, idx: &[usize], f: &FourierVectorField) -> Vec<C64> {
        idx.iter().flat_map(|&i| f.at(i)).collect()
    }

    fn unpack(&self, idx: &[usize], x: &[C64]) -> FourierVectorField {
        let mut f = FourierVectorField::zeros(&self.torus);
        for (n, &i) in idx.iter().enumerate() {
            f.set_at(i, [x[3 * n], x[3 * n + 1], x[3 * n + 2]]);
        }
        f
    }

    /// Solves `(I - Rm A) g = rhs` on zero-mean fields; returns `g` and a
    /// condition estimate of `I - Rm A`.
    pub fn solve_shifted(&self, r_m: f64, rhs: &FourierVectorField, tol: &Tolerances) -> Result<(FourierVectorField, f64)> {
        let idx = self.zero_mean_index();
        let n = 3 * idx.len();
        let b = self.pack(&idx, rhs);
        let apply = |x: &[C64], y: &mut [C64]| {
            let f = self.unpack(&idx, x);
            let af = self.apply_script_a(&f);
            for (n, &i) in idx.iter().enumerate() {
                let v = af.at(i);
                for d in 0..3 {
                    y[3 * n + d] = x[3 * n + d] - v[d] * r_m;
                }
            }
        };
        let (x, cond) = if n <= DENSE_LIMIT {
            let mut m = vec![C64::new(0.0, 0.0); n * n];
            let mut e = linalg::zeros(n);
            let mut col = linalg::zeros(n);
            for j in 0..n {
                e[j] = C64::new(1.0, 0.0);
                apply(&e, &mut col);
                e[j] = C64::new(0.0, 0.0);
                for i in 0..n {
                    m[i * n + j] = col[i];
                }
            }
            let lu = DenseLu::new(n, m)?;
            let cond = lu.condition_estimate();
            (lu.solve(&b), cond)
        } else {
            let opts = GmresOptions { tol: tol.krylov, ..Default::default() };
            let out = linalg::gmres(apply, |x, y| y.copy_from_slice(x), &b, None, opts)?;
            (out.x, out.condition_estimate)
        };
        if !(cond.is_finite() && cond <= tol.near_singular) {
            return Err(Error::NearSingular { cond });
        }
        Ok((self.unpack(&idx, &x), cond))
    }
}

/// Result of one corrector solve.
#[derive(Clone, Debug)]
pub struct CorrectorSolve {
    pub mean: [f64; 3],
    pub corrector: FourierVectorField,
    /// `||L_Rm B~ + curl(U x b)||_L2`.
    pub residual: f64,
    pub condition_estimate: f64,
}

pub fn solve_corrector(sys: &InductionSystem, r_m: f64, mean: [f64; 3], tol: &Tolerances) -> Result<CorrectorSolve> {
    if !(r_m > 0.0 && r_m.is_finite()) {
        return Err(Error::Validation(format!("r_m must be positive, got {r_m}")));
    }
    let b = FourierVectorField::constant(&sys.torus, mean);
    let rhs = sys.apply_script_a(&b).scale(r_m);
    let (corrector, cond) = sys.solve_shifted(r_m, &rhs, tol)?;
    let forcing = sys.cross_flow(&b).curl();
    let residual = (&sys.apply_l(r_m, &corrector) + &forcing).norm_l2();
    let bnorm = norm2_re(&mean).sqrt();
    if residual > tol.iterative * bnorm.max(f64::MIN_POSITIVE) && bnorm > 0.0 {
        return Err(Error::NoConvergence { iterations: 0, residual });
    }
    Ok(CorrectorSolve { mean, corrector, residual, condition_estimate: cond })
}

fn realify(m: &Matrix3<C64>, tol: f64) -> Result<(Matrix3<f64>, f64)> {
    let im = m.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let scale = m.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
    if im > tol * scale {
        return Err(Error::NotReal(im));
    }
    Ok((m.map(|c| c.re), im))
}

fn basis(j: usize) -> [f64; 3] {
    let mut b = [0.0; 3];
    b[j] = 1.0;
    b
}

/// `alpha` by solving for the three correctors.
pub fn alpha_direct(sys: &InductionSystem, r_m: f64, tol: &Tolerances) -> Result<AlphaTensor> {
    let mut m = Matrix3::<C64>::zeros();
    let mut cond: f64 = 0.0;
    let mut res: f64 = 0.0;
    for j in 0..3 {
        let s = solve_corrector(sys, r_m, basis(j), tol)?;
        cond = cond.max(s.condition_estimate);
        res = res.max(s.residual);
        let col = sys.cross_flow(&s.corrector).get([0, 0, 0]);
        for i in 0..3 {
            m[(i, j)] = col[i];
        }
    }
    let (alpha, im) = realify(&m, tol.algebraic)?;
    let diagnostics = AlphaDiagnostics {
        condition_estimate: Some(cond),
        max_residual: Some(res),
        imag_residue: im,
        trunc: Some(sys.torus.trunc),
        ..Default::default()
    };
    Ok(AlphaTensor::new(alpha, r_m, AlphaMethod::Direct, diagnostics))
}

/// Partial sum `sum_{n=1}^{N} Rm^n alpha^(n+1)`.
///
/// Stops early once two consecutive terms fall below `1e-12` of the partial
/// sum; fails with [`Error::Diverging`] when three consecutive non-negligible
/// term norms do not decrease (odd orders vanish for symmetric flows).
pub fn alpha_series(sys: &InductionSystem, r_m: f64, n_terms: usize, tol: &Tolerances) -> Result<AlphaTensor> {
    let mut fields: Vec<FourierVectorField> = (0..3).map(|j| FourierVectorField::constant(&sys.torus, basis(j))).collect();
    let mut sum = Matrix3::<C64>::zeros();
    let mut norms = Vec::with_capacity(n_terms);
    let mut pow = 1.0;
    for _ in 0..n_terms {
        pow *= r_m;
        let mut term = Matrix3::<C64>::zeros();
        for (j, f) in fields.iter_mut().enumerate() {
            *f = sys.apply_script_a(f);
            let col = sys.cross_flow(f).get([0, 0, 0]);
            for i in 0..3 {
                term[(i, j)] = col[i] * pow;
            }
        }
        sum += term;
        let tn = term.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        norms.push(tn);
        let peak = norms.iter().cloned().fold(0.0, f64::max);
        let live: Vec<f64> = norms.iter().cloned().filter(|&t| t > 1e-14 * peak).collect();
        let m = live.len();
        if m >= 4 && live[m - 4] <= live[m - 3] && live[m - 3] <= live[m - 2] && live[m - 2] <= live[m - 1] {
            return Err(Error::Diverging(norms));
        }
        let sn = sum.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let n = norms.len();
        if n >= 2 && norms[n - 1].max(norms[n - 2]) < 1e-12 * sn {
            break;
        }
    }
    let (alpha, im) = realify(&sum, tol.algebraic)?;
    let diagnostics = AlphaDiagnostics { term_norms: norms, imag_residue: im, trunc: Some(sys.torus.trunc), ..Default::default() };
    Ok(AlphaTensor::new(alpha, r_m, AlphaMethod::Series(n_terms), diagnostics))
}

/// Closed form of the leading coefficient,
/// `alpha2 b = sum_{k != 0} U(-k) x ((i kap / |kap|^2) x (U(k) x b))`.
pub fn alpha2(flow: &FourierVectorField) -> Matrix3<f64> {
    let mut m = Matrix3::<C64>::zeros();
    for (k, uk) in flow.nonzero() {
        let kap = flow.torus.angular(k);
        let s = norm2_re(&kap);
        if s == 0.0 {
            continue;
        }
        let um = flow.get([-k[0], -k[1], -k[2]]);
        for j in 0..3 {
            let b: CVec3 = basis(j).map(|x| C64::new(x, 0.0));
            let inner = cross(&uk, &b);
            let mid = cross_re(&kap, &inner).map(|c| c * C64::new(0.0, 1.0 / s));
            let col = cross(&um, &mid);
            for i in 0..3 {
                m[(i, j)] += col[i];
            }
        }
    }
    m.map(|c| c.re)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Rm0Estimate {
    /// Spectral radius of the truncated `A`.
    pub rho: f64,
    pub rm0: f64,
    pub iterations: usize,
}

/// `R_m^0 = 1 / (2 rho(A))`: the resolvent series converges for `R_m < 2 R_m^0`.
/// `rho(A)` comes from power iteration with a two-vector Ritz step so
/// that a dominant complex-conjugate pair is resolved.
pub fn estimate_rm0(sys: &InductionSystem) -> Result<Rm0Estimate> {
    // deterministic, generic start vector
    let mut seed: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let zero = sys.torus.index([0, 0, 0]).unwrap();
    let mut x = FourierVectorField::zeros(&sys.torus);
    for i in 0..sys.torus.modes() {
        if i != zero {
            x.set_at(i, std::array::from_fn(|_| C64::new(next(), next())));
        }
    }
    linalg::normalize(x.as_flat_mut());
    let mut history: Vec<f64> = Vec::new();
    for it in 1..=600 {
        let y = sys.apply_script_a(&x);
        let yn = y.norm_l2();
        if yn == 0.0 {
            return Ok(Rm0Estimate { rho: 0.0, rm0: f64::INFINITY, iterations: it });
        }
        let q1 = x.as_flat();
        let proj = linalg::dotc(q1, y.as_flat());
        let mut q2 = y.as_flat().to_vec();
        linalg::axpy(-proj, q1, &mut q2);
        let q2n = linalg::normalize(&mut q2);
        let rho = if q2n < 1e-10 * yn {
            proj.norm()
        } else {
            let aq2 = sys.apply_script_a(&FourierVectorField::from_flat(&sys.torus, q2.clone())?);
            let h = DMatrix::from_row_slice(
                2,
                2,
                &[proj, linalg::dotc(q1, aq2.as_flat()), linalg::dotc(&q2, y.as_flat()), linalg::dotc(&q2, aq2.as_flat())],
            );
            let (a, b, c, d) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
            let tr = a + d;
            let disc = (tr * tr - (a * d - b * c) * 4.0).sqrt();
            ((tr + disc) * 0.5).norm().max(((tr - disc) * 0.5).norm())
        };
        history.push(rho);
        x = y.scale(1.0 / yn);
        let n = history.len();
        if n > 5 && (n - 4..n).all(|m| (history[m] - history[m - 1]).abs() <= 1e-9 * rho) {
            return Ok(Rm0Estimate { rho, rm0: 0.5 / rho, iterations: it });
        }
    }
    let rho = *history.last().unwrap();
    Ok(Rm0Estimate { rho, rm0: 0.5 / rho, iterations: 600 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ZERO3;
    use std::f64::consts::PI;

    fn shear(t: &TorusSpec) -> FourierVectorField {
        // U = (sin(2 pi y / T2), 0, 0)
        let mut u = FourierVectorField::zeros(t);
        u.set_pair([0, 1, 0], [C64::new(0.0, -0.5), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        u
    }

    fn helical(t: &TorusSpec) -> FourierVectorField {
        // U = (sin z, cos z, 0) + (0, sin x, cos x) style Beltrami pieces
        let mut u = FourierVectorField::zeros(t);
        u.set_pair([0, 0, 1], [C64::new(0.0, -0.5), C64::new(0.5, 0.0), C64::new(0.0, 0.0)]);
        u.set_pair([1, 0, 0], [C64::new(0.0, 0.0), C64::new(0.0, -0.5), C64::new(0.5, 0.0)]);
        u
    }

    #[test]
    fn decompose_recovers_axial_vector() {
        let (a, b, c) = (0.3, -1.2, 2.5);
        let anti = Matrix3::new(0.0, -c, b, c, 0.0, -a, -b, a, 0.0);
        let (s, an, g) = decompose(&anti);
        assert!(s.norm() < 1e-15);
        assert!((an - anti).norm() < 1e-15);
        assert_eq!(g, Vector3::new(a, b, c));
        let sym = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0);
        assert_eq!(decompose(&sym).2, Vector3::zeros());
    }

    #[test]
    fn zero_flow_gives_zero() {
        let t = TorusSpec::unit(3);
        let sys = InductionSystem::new(&FourierVectorField::zeros(&t), 3).unwrap();
        let tol = Tolerances::default();
        let a = alpha_direct(&sys, 0.5, &tol).unwrap();
        assert_eq!(a.alpha, Matrix3::zeros());
        let c = solve_corrector(&sys, 0.5, [1.0, 2.0, 3.0], &tol).unwrap();
        assert_eq!(c.corrector.norm_l2(), 0.0);
        assert_eq!(alpha2(&FourierVectorField::zeros(&t)), Matrix3::zeros());
        assert_eq!(alpha_series(&sys, 0.5, 0, &tol).unwrap().alpha, Matrix3::zeros());
    }

    #[test]
    fn zero_mean_field_gives_zero_corrector() {
        let t = TorusSpec::unit(3);
        let sys = InductionSystem::new(&helical(&t), 3).unwrap();
        let c = solve_corrector(&sys, 0.5, [0.0; 3], &Tolerances::default()).unwrap();
        assert_eq!(c.corrector.norm_l2(), 0.0);
    }

    #[test]
    fn script_a_on_constant_single_pair() {
        let t = TorusSpec::unit(3);
        let u = helical(&t);
        let sys = InductionSystem::new(&u, 3).unwrap();
        let b = [0.3, -0.7, 1.1];
        let out = sys.apply_script_a(&FourierVectorField::constant(&t, b));
        let bc = b.map(|x| C64::new(x, 0.0));
        for k0 in [[0, 0, 1], [0, 0, -1], [1, 0, 0], [-1, 0, 0]] {
            let kf = k0.map(|c| c as f64);
            let s = norm2_re(&kf);
            let pre = cross_re(&kf, &cross(&u.get(k0), &bc)).map(|c| c * C64::new(0.0, 1.0 / (2.0 * PI * s)));
            let got = out.get(k0);
            assert!((0..3).all(|d| (got[d] - pre[d]).norm() < 1e-15));
        }
        assert_eq!(out.get([0, 0, 0]), ZERO3);
    }

    #[test]
    fn mirror_symmetric_shear_has_no_alpha() {
        let t = TorusSpec::unit(4);
        let sys = InductionSystem::new(&shear(&t), 4).unwrap();
        let a = alpha_direct(&sys, 0.7, &Tolerances::default()).unwrap();
        assert!(a.alpha.norm() < 1e-10, "{}", a.alpha);
    }

    #[test]
    fn alpha2_is_symmetric_and_matches_first_series_term() {
        let t = TorusSpec::unit(3);
        let u = helical(&t);
        let a2 = alpha2(&u);
        assert!((a2 - a2.transpose()).norm() < 1e-12);
        let sys = InductionSystem::new(&u, 3).unwrap();
        let rm = 0.01;
        let s1 = alpha_series(&sys, rm, 1, &Tolerances::default()).unwrap();
        assert!((s1.alpha / rm - a2).norm() < 1e-14 * a2.norm().max(1.0));
    }

    #[test]
    fn series_diverges_beyond_radius() {
        let t = TorusSpec::unit(3);
        let sys = InductionSystem::new(&helical(&t).scale(40.0), 3).unwrap();
        let est = estimate_rm0(&sys).unwrap();
        let r = alpha_series(&sys, 6.0 * est.rm0, 30, &Tolerances::default());
        assert!(matches!(r, Err(Error::Diverging(_))), "{r:?}");
    }

    #[test]
    fn record_roundtrip_preserves_split() {
        let m = Matrix3::new(1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 0.25, 4.0, -2.0);
        let a = AlphaTensor::new(m, 0.3, AlphaMethod::Series(4), AlphaDiagnostics::default());
        let back: AlphaTensor = AlphaRecord::from(&a).into();
        assert_eq!(back.alpha, m);
        assert!((back.sym + back.antisym - m).norm() < 1e-15);
    }
}
