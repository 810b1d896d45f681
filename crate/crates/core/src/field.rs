//! Truncated Fourier representation of real periodic vector fields.
//!
//! A field on the torus `R/T1 x R/T2 x R/T3` is stored as the dense cube of
//! coefficients `u(k)` for `|k|_inf <= K`, in the basis `exp(2 pi i k.x / T)`.
//! Derivatives therefore act as multiplication by the angular wavevector
//! `2 pi k / T`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVec3 = [C64; 3];
pub type WaveVector = [i64; 3];

pub const ZERO3: CVec3 = [C64::new(0.0, 0.0); 3];

#[inline]
pub fn cross(a: &CVec3, b: &CVec3) -> CVec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn cross_re(a: &[f64; 3], b: &CVec3) -> CVec3 {
    [
        b[2] * a[1] - b[1] * a[2],
        b[0] * a[2] - b[2] * a[0],
        b[1] * a[0] - b[0] * a[1],
    ]
}

#[inline]
pub fn dot_re(a: &[f64; 3], b: &CVec3) -> C64 {
    b[0] * a[0] + b[1] * a[1] + b[2] * a[2]
}

#[inline]
pub fn norm2_re(a: &[f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// Geometry and truncation of a periodic box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub periods: [f64; 3],
    pub trunc: usize,
}

impl TorusSpec {
    pub fn new(periods: [f64; 3], trunc: usize) -> Result<Self> {
        if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Validation(format!("periods must be positive, got {periods:?}")));
        }
        if trunc == 0 {
            return Err(Error::Validation("truncation K must be >= 1".into()));
        }
        Ok(TorusSpec { periods, trunc })
    }

    /// The unit torus `[0,1)^3`.
    pub fn unit(trunc: usize) -> Self {
        TorusSpec { periods: [1.0; 3], trunc }
    }

    /// The `[0, 2 pi)^3` cell, on which integer wavevectors are angular.
    pub fn two_pi(trunc: usize) -> Self {
        TorusSpec { periods: [2.0 * PI; 3], trunc }
    }

    pub fn with_trunc(&self, trunc: usize) -> Self {
        TorusSpec { periods: self.periods, trunc }
    }

    pub fn side(&self) -> usize {
        2 * self.trunc + 1
    }

    /// Number of stored wavevectors.
    pub fn modes(&self) -> usize {
        self.side().pow(3)
    }

    pub fn index(&self, k: WaveVector) -> Option<usize> {
        let kk = self.trunc as i64;
        if k.iter().any(|c| c.abs() > kk) {
            return None;
        }
        let s = self.side();
        let i = |c: i64| (c + kk) as usize;
        Some((i(k[0]) * s + i(k[1])) * s + i(k[2]))
    }

    pub fn wavevector(&self, index: usize) -> WaveVector {
        let s = self.side();
        let kk = self.trunc as i64;
        let k3 = (index % s) as i64 - kk;
        let k2 = ((index / s) % s) as i64 - kk;
        let k1 = (index / (s * s)) as i64 - kk;
        [k1, k2, k3]
    }

    /// Angular wavevector `2 pi k / T`.
    pub fn angular(&self, k: WaveVector) -> [f64; 3] {
        [
            2.0 * PI * k[0] as f64 / self.periods[0],
            2.0 * PI * k[1] as f64 / self.periods[1],
            2.0 * PI * k[2] as f64 / self.periods[2],
        ]
    }

    pub fn same_periods(&self, other: &TorusSpec) -> bool {
        self.periods
            .iter()
            .zip(other.periods.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()))
    }

    pub fn wavevectors(&self) -> impl Iterator<Item = WaveVector> + '_ {
        (0..self.modes()).map(move |i| self.wavevector(i))
    }
}

/// Scalar Fourier coefficients (e.g. a divergence).
#[derive(Clone, Debug, PartialEq)]
pub struct FourierScalarField {
    pub torus: TorusSpec,
    pub coeffs: Vec<C64>,
}

impl FourierScalarField {
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Truncated complex Fourier coefficients of a 3-vector field.
///
/// Coefficients are stored flat: component `c` of mode index `i` lives at
/// `3 * i + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierVectorField {
    pub torus: TorusSpec,
    coeffs: Vec<C64>,
}

impl FourierVectorField {
    pub fn zeros(torus: &TorusSpec) -> Self {
        FourierVectorField { torus: torus.clone(), coeffs: vec![C64::new(0.0, 0.0); 3 * torus.modes()] }
    }

    pub fn from_flat(torus: &TorusSpec, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != 3 * torus.modes() {
            return Err(Error::Validation(format!(
                "expected {} coefficients, got {}",
                3 * torus.modes(),
                coeffs.len()
            )));
        }
        Ok(FourierVectorField { torus: torus.clone(), coeffs })
    }

    pub fn from_fn(torus: &TorusSpec, mut f: impl FnMut(WaveVector) -> CVec3) -> Self {
        let mut out = Self::zeros(torus);
        for i in 0..torus.modes() {
            out.set_at(i, f(torus.wavevector(i)));
        }
        out
    }

    /// Constant field `b`.
    pub fn constant(torus: &TorusSpec, b: [f64; 3]) -> Self {
        let mut out = Self::zeros(torus);
        out.set([0, 0, 0], b.map(|x| C64::new(x, 0.0)));
        out
    }

    pub fn as_flat(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn as_flat_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_flat(self) -> Vec<C64> {
        self.coeffs
    }

    #[inline]
    pub fn at(&self, index: usize) -> CVec3 {
        let j = 3 * index;
        [self.coeffs[j], self.coeffs[j + 1], self.coeffs[j + 2]]
    }

    #[inline]
    pub fn set_at(&mut self, index: usize, v: CVec3) {
        self.coeffs[3 * index..3 * index + 3].copy_from_slice(&v);
    }

    /// Coefficient at `k`; zero outside the truncation.
    pub fn get(&self, k: WaveVector) -> CVec3 {
        self.torus.index(k).map(|i| self.at(i)).unwrap_or(ZERO3)
    }

    /// Sets `u(k)`; wavevectors outside the truncation are ignored.
    pub fn set(&mut self, k: WaveVector, v: CVec3) {
        if let Some(i) = self.torus.index(k) {
            self.set_at(i, v);
        }
    }

    /// Sets `u(k) = v` and `u(-k) = conj(v)`.
    pub fn set_pair(&mut self, k: WaveVector, v: CVec3) {
        self.set(k, v);
        self.set([-k[0], -k[1], -k[2]], v.map(|c| c.conj()));
    }

    pub fn add_at(&mut self, index: usize, v: &CVec3) {
        let j = 3 * index;
        for c in 0..3 {
            self.coeffs[j + c] += v[c];
        }
    }

    /// Nonzero coefficients, in storage (lexicographic) order.
    pub fn nonzero(&self) -> Vec<(WaveVector, CVec3)> {
        (0..self.torus.modes())
            .filter_map(|i| {
                let v = self.at(i);
                (v.iter().any(|c| c.norm_sqr() > 0.0)).then(|| (self.torus.wavevector(i), v))
            })
            .collect()
    }

    /// `U ∧ B`, sharply truncated to `|k|_inf <= K`.
    pub fn cross_convolve(&self, other: &FourierVectorField) -> Result<FourierVectorField> {
        if self.torus != other.torus {
            return Err(Error::TorusMismatch(format!("{:?} vs {:?}", self.torus, other.torus)));
        }
        let a = self.nonzero();
        let b = other.nonzero();
        let mut out = FourierVectorField::zeros(&self.torus);
        if a.len() <= b.len() {
            cross_sparse_into(&a, other, &mut out, false);
        } else {
            cross_sparse_into(&b, self, &mut out, true);
        }
        Ok(out)
    }

    pub fn curl(&self) -> FourierVectorField {
        self.map_modes(|kap, v| cross_re(kap, &v).map(|c| c * C64::i()))
    }

    pub fn divergence(&self) -> FourierScalarField {
        let coeffs = (0..self.torus.modes())
            .map(|i| C64::i() * dot_re(&self.torus.angular(self.torus.wavevector(i)), &self.at(i)))
            .collect();
        FourierScalarField { torus: self.torus.clone(), coeffs }
    }

    /// Gradient of a scalar given by its coefficients on the same torus.
    pub fn gradient(phi: &FourierScalarField) -> FourierVectorField {
        let t = &phi.torus;
        FourierVectorField::from_fn(t, |k| {
            let c = phi.coeffs[t.index(k).unwrap()] * C64::i();
            t.angular(k).map(|a| c * a)
        })
    }

    pub fn laplacian(&self) -> FourierVectorField {
        self.map_modes(|kap, v| {
            let s = -norm2_re(kap);
            v.map(|c| c * s)
        })
    }

    pub fn inv_laplacian(&self) -> Result<FourierVectorField> {
        let m = self.get([0, 0, 0]);
        let mag = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if mag > 0.0 {
            return Err(Error::NonZeroMean(mag));
        }
        Ok(self.map_modes(|kap, v| {
            let s = norm2_re(kap);
            if s == 0.0 {
                ZERO3
            } else {
                v.map(|c| -c / s)
            }
        }))
    }

    /// Real mean value; errors if the mean has an imaginary residue.
    pub fn mean(&self) -> Result<[f64; 3]> {
        let m = self.get([0, 0, 0]);
        let im = m.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        let scale = m.iter().map(|c| c.norm()).fold(1.0, f64::max);
        if im > 1e-10 * scale {
            return Err(Error::NotReal(im));
        }
        Ok(m.map(|c| c.re))
    }

    pub fn leray_project(&self) -> FourierVectorField {
        self.map_modes(|kap, v| {
            let s = norm2_re(kap);
            if s == 0.0 {
                return v;
            }
            let d = dot_re(kap, &v) / s;
            [v[0] - d * kap[0], v[1] - d * kap[1], v[2] - d * kap[2]]
        })
    }

    /// Mean-square norm over the normalized torus measure (Parseval).
    pub fn norm_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Sobolev norm with weight `(1 + |2 pi k / T|^2)^s`.
    pub fn norm_hs(&self, s: f64) -> f64 {
        (0..self.torus.modes())
            .map(|i| {
                let w = (1.0 + norm2_re(&self.torus.angular(self.torus.wavevector(i)))).powf(s);
                w * self.at(i).iter().map(|c| c.norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `max_k |u(-k) - conj(u(k))|`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.torus.modes() {
            let k = self.torus.wavevector(i);
            let a = self.at(i);
            let b = self.get([-k[0], -k[1], -k[2]]);
            for c in 0..3 {
                worst = worst.max((b[c] - a[c].conj()).norm());
            }
        }
        worst
    }

    /// Projects onto conjugate-symmetric coefficients.
    pub fn symmetrize(&mut self) {
        let n = self.torus.modes();
        for i in 0..n {
            let k = self.torus.wavevector(i);
            let j = self.torus.index([-k[0], -k[1], -k[2]]).unwrap();
            if j < i {
                continue;
            }
            let a = self.at(i);
            let b = self.at(j);
            let avg: CVec3 = std::array::from_fn(|c| 0.5 * (a[c] + b[c].conj()));
            self.set_at(i, avg);
            self.set_at(j, avg.map(|c| c.conj()));
        }
    }

    /// `max_k |(2 pi k / T) . u(k)|`.
    pub fn divergence_defect(&self) -> f64 {
        self.divergence().max_abs()
    }

    /// Keeps wavevectors with Euclidean `|k| <= j`.
    pub fn truncate_euclidean(&self, j: usize) -> FourierVectorField {
        let j2 = (j * j) as i64;
        let mut out = self.clone();
        for i in 0..self.torus.modes() {
            let k = self.torus.wavevector(i);
            if k[0] * k[0] + k[1] * k[1] + k[2] * k[2] > j2 {
                out.set_at(i, ZERO3);
            }
        }
        out
    }

    /// Copies onto another truncation of the same box (modes beyond it dropped).
    pub fn retruncate(&self, trunc: usize) -> FourierVectorField {
        let t = self.torus.with_trunc(trunc);
        FourierVectorField::from_fn(&t, |k| self.get(k))
    }

    /// Point value `sum_k u(k) exp(2 pi i k.x / T)`.
    pub fn evaluate(&self, x: [f64; 3]) -> [C64; 3] {
        let mut acc = ZERO3;
        for i in 0..self.torus.modes() {
            let v = self.at(i);
            if v.iter().all(|c| c.norm_sqr() == 0.0) {
                continue;
            }
            let kap = self.torus.angular(self.torus.wavevector(i));
            let ph = C64::from_polar(1.0, kap[0] * x[0] + kap[1] * x[1] + kap[2] * x[2]);
            for c in 0..3 {
                acc[c] += v[c] * ph;
            }
        }
        acc
    }

    pub fn scale(&self, s: f64) -> FourierVectorField {
        FourierVectorField { torus: self.torus.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn max_abs_diff(&self, other: &FourierVectorField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    fn map_modes(&self, f: impl Fn(&[f64; 3], CVec3) -> CVec3) -> FourierVectorField {
        let mut out = FourierVectorField::zeros(&self.torus);
        for i in 0..self.torus.modes() {
            let kap = self.torus.angular(self.torus.wavevector(i));
            out.set_at(i, f(&kap, self.at(i)));
        }
        out
    }
}

/// Accumulates `sum_{k'} a(k') ∧ b(k - k')` into `out` for the sparse list `a`;
/// with `swap`, accumulates `b(k - k') ∧ a(k')` instead.
pub(crate) fn cross_sparse_into(
    a: &[(WaveVector, CVec3)],
    b: &FourierVectorField,
    out: &mut FourierVectorField,
    swap: bool,
) {
    let t = out.torus.clone();
    for i in 0..t.modes() {
        let k = t.wavevector(i);
        let mut acc = ZERO3;
        for (kp, av) in a {
            let bv = b.get([k[0] - kp[0], k[1] - kp[1], k[2] - kp[2]]);
            let p = if swap { cross(&bv, av) } else { cross(av, &bv) };
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        out.add_at(i, &acc);
    }
}

impl Add for &FourierVectorField {
    type Output = FourierVectorField;
    fn add(self, rhs: &FourierVectorField) -> FourierVectorField {
        assert_eq!(self.torus, rhs.torus, "torus mismatch");
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        FourierVectorField { torus: self.torus.clone(), coeffs }
    }
}

impl Sub for &FourierVectorField {
    type Output = FourierVectorField;
    fn sub(self, rhs: &FourierVectorField) -> FourierVectorField {
        assert_eq!(self.torus, rhs.torus, "torus mismatch");
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        FourierVectorField { torus: self.torus.clone(), coeffs }
    }
}

impl AddAssign<&FourierVectorField> for FourierVectorField {
    fn add_assign(&mut self, rhs: &FourierVectorField) {
        assert_eq!(self.torus, rhs.torus, "torus mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl Mul<f64> for &FourierVectorField {
    type Output = FourierVectorField;
    fn mul(self, s: f64) -> FourierVectorField {
        self.scale(s)
    }
}

impl Neg for &FourierVectorField {
    type Output = FourierVectorField;
    fn neg(self) -> FourierVectorField {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(t: &TorusSpec, k: WaveVector, v: CVec3) -> FourierVectorField {
        let mut f = FourierVectorField::zeros(t);
        f.set_pair(k, v);
        f
    }

    #[test]
    fn index_roundtrip() {
        let t = TorusSpec::unit(3);
        for i in 0..t.modes() {
            assert_eq!(t.index(t.wavevector(i)), Some(i));
        }
        assert_eq!(t.index([4, 0, 0]), None);
    }

    #[test]
    fn laplacian_convention_on_unit_torus() {
        let t = TorusSpec::unit(2);
        let f = mode(&t, [1, 0, 0], [C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(0.0, 0.0)]);
        let l = f.laplacian();
        let expect = -4.0 * PI * PI;
        assert!((l.get([1, 0, 0])[0] - expect).norm() < 1e-12);
        assert!((l.get([1, 0, 0])[1] - C64::new(0.0, 2.0 * expect)).norm() < 1e-12);
    }

    #[test]
    fn inv_laplacian_convention_and_errors() {
        let t = TorusSpec::unit(2);
        let c = C64::new(0.3, -0.7);
        let f = mode(&t, [0, 1, 0], [c, c, c]);
        let g = f.inv_laplacian().unwrap();
        assert!((g.get([0, 1, 0])[0] + c / (4.0 * PI * PI)).norm() < 1e-15);
        assert!(g.laplacian().max_abs_diff(&f) < 1e-14);
        let z = FourierVectorField::zeros(&t);
        assert_eq!(z.inv_laplacian().unwrap(), z);
        let m = FourierVectorField::constant(&t, [1.0, 0.0, 0.0]);
        assert!(matches!(m.inv_laplacian(), Err(Error::NonZeroMean(_))));
    }

    #[test]
    fn curl_of_constant_vanishes() {
        let t = TorusSpec::unit(2);
        let f = FourierVectorField::constant(&t, [1.0, -2.0, 3.0]);
        assert_eq!(f.curl().norm_l2(), 0.0);
    }

    #[test]
    fn leray_kills_gradients_and_is_idempotent() {
        let t = TorusSpec::new([1.0, 2.0, 3.0], 2).unwrap();
        let phi = FourierScalarField {
            torus: t.clone(),
            coeffs: (0..t.modes()).map(|i| C64::new((i as f64).sin(), (i as f64).cos())).collect(),
        };
        let g = FourierVectorField::gradient(&phi);
        assert!(g.leray_project().norm_l2() < 1e-12 * g.norm_l2());
        let p = g.curl().leray_project();
        assert!(p.leray_project().max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn hs_norm_with_zero_order_is_l2() {
        let t = TorusSpec::unit(2);
        let f = mode(&t, [1, 2, 0], [C64::new(1.0, 1.0), C64::new(0.0, 2.0), C64::new(3.0, 0.0)]);
        assert!((f.norm_hs(0.0) - f.norm_l2()).abs() < 1e-14);
        assert!(f.norm_hs(1.0) > f.norm_l2());
    }

    #[test]
    fn mean_rejects_imaginary_residue() {
        let t = TorusSpec::unit(1);
        let mut f = FourierVectorField::zeros(&t);
        f.set([0, 0, 0], [C64::new(1.0, 0.5), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        assert!(matches!(f.mean(), Err(Error::NotReal(_))));
    }

    #[test]
    fn cross_convolve_rejects_mismatched_torus() {
        let a = FourierVectorField::zeros(&TorusSpec::unit(2));
        let b = FourierVectorField::zeros(&TorusSpec::unit(3));
        assert!(matches!(a.cross_convolve(&b), Err(Error::TorusMismatch(_))));
    }

    #[test]
    fn cross_convolve_zero_operand() {
        let t = TorusSpec::unit(2);
        let b = mode(&t, [1, 0, 1], [C64::new(1.0, 0.0), C64::new(0.5, 0.5), C64::new(0.0, 1.0)]);
        assert_eq!(FourierVectorField::zeros(&t).cross_convolve(&b).unwrap().norm_l2(), 0.0);
    }
}
