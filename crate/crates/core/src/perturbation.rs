//! Density construction: truncate a flow and add the explicit fields
//! `V^1, V^2, V^3` so that `alpha2` acquires three distinct nonzero
//! eigenvalues.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::alpha::{alpha2, mat_rows};
use crate::error::{Error, Result};
use crate::field::{FourierVectorField, TorusSpec, C64};

/// Largest exponent tried by [`choose_deltas`] on the grid `g * 2^e`.
pub const MAX_DOUBLINGS: u32 = 40;

/// `U^j`: keeps wavevectors with Euclidean `|k| <= j`.
pub fn truncate_flow(flow: &FourierVectorField, j: usize) -> FourierVectorField {
    flow.truncate_euclidean(j)
}

pub(crate) fn add_sin(f: &mut FourierVectorField, comp: usize, axis: usize, n: i64) {
    let mut k = [0i64; 3];
    k[axis] = n;
    let mut v = f.get(k);
    v[comp] += C64::new(0.0, -0.5);
    f.set(k, v);
    k[axis] = -n;
    let mut v = f.get(k);
    v[comp] += C64::new(0.0, 0.5);
    f.set(k, v);
}

pub(crate) fn add_cos(f: &mut FourierVectorField, comp: usize, axis: usize, n: i64) {
    for s in [n, -n] {
        let mut k = [0i64; 3];
        k[axis] = s;
        let mut v = f.get(k);
        v[comp] += C64::new(0.5, 0.0);
        f.set(k, v);
    }
}

/// The explicit field `V^i` at level `j` (`i` in 1..=3), with wavenumber
/// `n = j + i` along the two axes other than `i`:
///
/// ```text
/// V^1 = (sin n x3 + cos n x2, cos n x3, sin n x2)
/// V^2 = (sin n x3, sin n x1 + cos n x3, cos n x1)
/// V^3 = (cos n x2, sin n x1, sin n x2 + cos n x1)
/// ```
///
/// where `x_a` is the angular coordinate `2 pi theta_a / T_a`.
pub fn build_v(torus: &TorusSpec, j: usize, i: usize) -> Result<FourierVectorField> {
    if !(1..=3).contains(&i) {
        return Err(Error::Validation(format!("V index must be 1, 2 or 3, got {i}")));
    }
    let n = (j + i) as i64;
    if torus.trunc < j + i {
        return Err(Error::Validation(format!("truncation {} cannot hold V^{i} at j = {j}", torus.trunc)));
    }
    let mut f = FourierVectorField::zeros(torus);
    match i {
        1 => {
            add_sin(&mut f, 0, 2, n);
            add_cos(&mut f, 0, 1, n);
            add_cos(&mut f, 1, 2, n);
            add_sin(&mut f, 2, 1, n);
        }
        2 => {
            add_sin(&mut f, 0, 2, n);
            add_sin(&mut f, 1, 0, n);
            add_cos(&mut f, 1, 2, n);
            add_cos(&mut f, 2, 0, n);
        }
        _ => {
            add_cos(&mut f, 0, 1, n);
            add_sin(&mut f, 1, 0, n);
            add_sin(&mut f, 2, 1, n);
            add_cos(&mut f, 2, 0, n);
        }
    }
    Ok(f)
}

/// `alpha2(U^j + sum d_i V^i) - alpha2(U^j)`: diagonal, entry `a` equal to
/// `-sum_{i != a} d_i^2 T_a / (2 pi (j + i))`. The square comes from
/// `alpha2` being quadratic in the flow.
pub fn alpha2_shift(torus: &TorusSpec, j: usize, deltas: [f64; 3]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for a in 0..3 {
        let mut acc = 0.0;
        for (i, d) in deltas.iter().enumerate() {
            if i != a {
                acc -= d * d * torus.periods[a] / (2.0 * PI * (j + i + 1) as f64);
            }
        }
        m[(a, a)] = acc;
    }
    m
}

#[derive(Clone, Debug)]
pub struct PerturbationPlan {
    pub j: usize,
    pub deltas: [f64; 3],
    pub base: FourierVectorField,
    pub truncated: FourierVectorField,
    pub perturbed: FourierVectorField,
    pub gap: Option<f64>,
    pub alpha2_truncated: Matrix3<f64>,
    pub alpha2_perturbed: Matrix3<f64>,
    /// Max entry deviation from the closed-form shift.
    pub certificate_error: f64,
}

impl PerturbationPlan {
    /// `||sum d_i V^i||` in L2.
    pub fn perturbation_l2(&self) -> f64 {
        (&self.perturbed - &self.truncated).norm_l2()
    }

    pub fn perturbation_hs(&self, s: f64) -> f64 {
        (&self.perturbed - &self.truncated).norm_hs(s)
    }

    /// Eigenvalues of `sym(alpha2(U~))`, descending.
    pub fn alpha2_eigenvalues(&self) -> [f64; 3] {
        sym_eigenvalues(&self.alpha2_perturbed)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanRecord {
    pub j: usize,
    pub deltas: [f64; 3],
    pub gap: Option<f64>,
    pub alpha2_truncated: [[f64; 3]; 3],
    pub alpha2_perturbed: [[f64; 3]; 3],
    pub alpha2_eigenvalues: [f64; 3],
    pub certificate_error: f64,
    pub perturbation_l2: f64,
    pub perturbation_hs: f64,
    pub hs_order: f64,
}

impl PerturbationPlan {
    pub fn record(&self, hs_order: f64) -> PlanRecord {
        PlanRecord {
            j: self.j,
            deltas: self.deltas,
            gap: self.gap,
            alpha2_truncated: mat_rows(&self.alpha2_truncated),
            alpha2_perturbed: mat_rows(&self.alpha2_perturbed),
            alpha2_eigenvalues: self.alpha2_eigenvalues(),
            certificate_error: self.certificate_error,
            perturbation_l2: self.perturbation_l2(),
            perturbation_hs: self.perturbation_hs(hs_order),
            hs_order,
        }
    }
}

fn sym_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let s = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    [ev[0], ev[1], ev[2]]
}

/// Builds `U~ = U^j + sum d_i V^i` and certifies the `alpha2` shift identity.
pub fn perturb(flow: &FourierVectorField, j: usize, deltas: [f64; 3]) -> Result<PerturbationPlan> {
    if deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Validation(format!("deltas must be nonnegative, got {deltas:?}")));
    }
    let torus = flow.torus.with_trunc(flow.torus.trunc.max(j + 3));
    let base = flow.retruncate(torus.trunc);
    let truncated = truncate_flow(&base, j);
    let mut perturbed = truncated.clone();
    for (i, d) in deltas.iter().enumerate() {
        perturbed += &build_v(&torus, j, i + 1)?.scale(*d);
    }
    let a_trunc = alpha2(&truncated);
    let a_pert = alpha2(&perturbed);
    let expected = a_trunc + alpha2_shift(&torus, j, deltas);
    let certificate_error = (a_pert - expected).amax();
    if certificate_error > 1e-12 * expected.amax().max(1.0) {
        return Err(Error::CertificateFailed(certificate_error));
    }
    Ok(PerturbationPlan {
        j,
        deltas,
        base,
        truncated,
        perturbed,
        gap: None,
        alpha2_truncated: a_trunc,
        alpha2_perturbed: a_pert,
        certificate_error,
    })
}

fn separated(ev: &[f64; 3], half_gap: f64) -> bool {
    ev.iter().all(|e| e.abs() >= half_gap)
        && (ev[0] - ev[1]).abs() >= half_gap
        && (ev[1] - ev[2]).abs() >= half_gap
        && (ev[0] - ev[2]).abs() >= half_gap
}

/// Smallest distinct grid values `d_i = g 2^{e_i}` (ordered by largest
/// exponent, then exponent sum, then lexicographically) for which the
/// eigenvalues of `sym(alpha2(U~))` are pairwise `g/2` apart and at least `g/2`
/// in magnitude.
pub fn choose_deltas(flow: &FourierVectorField, j: usize, gap: f64) -> Result<PerturbationPlan> {
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::Validation(format!("gap must be positive, got {gap}")));
    }
    let torus = flow.torus.with_trunc(flow.torus.trunc.max(j + 3));
    let base = alpha2(&truncate_flow(&flow.retruncate(torus.trunc), j));
    let mut triples: Vec<[u32; 3]> = Vec::new();
    for a in 0..=MAX_DOUBLINGS {
        for b in 0..=MAX_DOUBLINGS {
            for c in 0..=MAX_DOUBLINGS {
                if a != b && b != c && a != c {
                    triples.push([a, b, c]);
                }
            }
        }
    }
    triples.sort_by_key(|t| (*t.iter().max().unwrap(), t.iter().sum::<u32>(), *t));
    for t in triples {
        let deltas = t.map(|e| gap * 2f64.powi(e as i32));
        let ev = sym_eigenvalues(&(base + alpha2_shift(&torus, j, deltas)));
        if separated(&ev, 0.5 * gap) {
            let mut plan = perturb(flow, j, deltas)?;
            if !separated(&plan.alpha2_eigenvalues(), 0.5 * gap * (1.0 - 1e-12)) {
                return Err(Error::CertificateFailed(0.0));
            }
            plan.gap = Some(gap);
            return Ok(plan);
        }
    }
    Err(Error::GapUnreachable { gap, doublings: MAX_DOUBLINGS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v1_coefficient_table() {
        let t = TorusSpec::two_pi(4);
        for j in 0..2 {
            let v = build_v(&t, j, 1).unwrap();
            let n = (j + 1) as i64;
            let top = v.get([0, 0, n]);
            assert_eq!(top, [C64::new(0.0, -0.5), C64::new(0.5, 0.0), C64::new(0.0, 0.0)]);
            assert_eq!(v.get([0, n, 0]), [C64::new(0.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -0.5)]);
            assert_eq!(v.nonzero().len(), 4);
        }
    }

    #[test]
    fn v_fields_are_real_zero_mean_solenoidal() {
        let t = TorusSpec::unit(6);
        for i in 1..=3 {
            let v = build_v(&t, 2, i).unwrap();
            assert_eq!(v.reality_defect(), 0.0);
            assert_eq!(v.get([0, 0, 0]), crate::field::ZERO3);
            assert!(v.divergence_defect() < 1e-15);
        }
        assert!(build_v(&t, 4, 3).is_err());
        assert!(build_v(&t, 0, 4).is_err());
    }

    #[test]
    fn truncation_examples() {
        let t = TorusSpec::two_pi(4);
        let v = build_v(&t, 1, 1).unwrap();
        assert_eq!(truncate_flow(&v, 2), v);
        assert_eq!(truncate_flow(&v, 1).norm_l2(), 0.0);
        assert!(truncate_flow(&v, 1).norm_l2() <= v.norm_l2());
    }

    #[test]
    fn zero_deltas_keep_alpha2() {
        let t = TorusSpec::two_pi(4);
        let u = build_v(&t, 0, 2).unwrap();
        let plan = perturb(&u, 2, [0.0; 3]).unwrap();
        assert_eq!(plan.alpha2_perturbed, plan.alpha2_truncated);
        assert!(perturb(&u, 2, [-1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn cross_blocks_vanish() {
        let t = TorusSpec::two_pi(5);
        let v = &build_v(&t, 1, 1).unwrap() + &build_v(&t, 1, 2).unwrap();
        let a = alpha2(&v);
        for r in 0..3 {
            for c in 0..3 {
                if r != c {
                    assert_eq!(a[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn unit_torus_shift_carries_two_pi() {
        let t = TorusSpec::unit(3);
        let a = alpha2(&build_v(&t, 0, 1).unwrap());
        let expect = -1.0 / (2.0 * PI);
        assert!((a[(1, 1)] - expect).abs() < 1e-15 && (a[(2, 2)] - expect).abs() < 1e-15);
        assert_eq!(a[(0, 0)], 0.0);
    }

    #[test]
    fn choose_deltas_noop_when_already_separated() {
        let t = TorusSpec::two_pi(6);
        // alpha2 of V-fields at level 0 already has eigenvalues -5/6, -4/3, -3/2
        let u = &(&build_v(&t, 0, 1).unwrap() + &build_v(&t, 0, 2).unwrap()) + &build_v(&t, 0, 3).unwrap();
        let plan = choose_deltas(&u, 3, 0.01).unwrap();
        assert_eq!(plan.deltas, [0.01, 0.02, 0.04]);
        let bad = choose_deltas(&u, 3, 0.0);
        assert!(bad.is_err());
    }
}
