//! Homogenized 3x3 eigenproblem `i xi x (alpha b) = lambda b`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::alpha::{decompose, mat_rows};
use crate::error::{Error, Result};
use crate::field::{TorusSpec, C64};

type CMat3 = Matrix3<C64>;

/// Default denominator/numerator bound of [`find_xi`].
pub const DEFAULT_QMAX: u32 = 8;

/// `A^xi` with `A^xi b = i xi x b`.
pub fn a_xi(xi: [f64; 3]) -> CMat3 {
    let i = C64::new(0.0, 1.0);
    let [x, y, z] = xi;
    Matrix3::new(
        C64::new(0.0, 0.0), -i * z, i * y,
        i * z, C64::new(0.0, 0.0), -i * x,
        -i * y, i * x, C64::new(0.0, 0.0),
    )
}

/// Cyclic Jacobi diagonalization of a symmetric 3x3 matrix.
///
/// Returns `(P, alphas)` with `sym = P diag(alphas) P^T`, eigenvalues
/// descending and the first nonzero component of each column positive.
pub fn diagonalize_sym(sym: &Matrix3<f64>) -> (Matrix3<f64>, [f64; 3]) {
    let mut a = (sym + sym.transpose()) * 0.5;
    let mut v = Matrix3::<f64>::identity();
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off == 0.0 || off.sqrt() <= 1e-300 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J with J the rotation in the (p, q) plane
            for k in 0..3 {
                let akp = a[(k, p)];
                let akq = a[(k, q)];
                a[(k, p)] = c * akp - s * akq;
                a[(k, q)] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[(p, k)];
                let aqk = a[(q, k)];
                a[(p, k)] = c * apk - s * aqk;
                a[(q, k)] = s * apk + c * aqk;
            }
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            for k in 0..3 {
                let vkp = v[(k, p)];
                let vkq = v[(k, q)];
                v[(k, p)] = c * vkp - s * vkq;
                v[(k, q)] = s * vkp + c * vkq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap().then(x.cmp(&y)));
    let mut p = Matrix3::zeros();
    let mut alphas = [0.0; 3];
    for (col, &src) in order.iter().enumerate() {
        alphas[col] = a[(src, src)];
        let mut c = v.column(src).into_owned();
        if let Some(first) = c.iter().find(|x| **x != 0.0) {
            if *first < 0.0 {
                c = -c;
            }
        }
        p.set_column(col, &c);
    }
    (p, alphas)
}

fn cone_value(zeta: [f64; 3], a: [f64; 3]) -> f64 {
    zeta[0] * zeta[0] * a[1] * a[2] + zeta[1] * zeta[1] * a[2] * a[0] + zeta[2] * zeta[2] * a[0] * a[1]
}

/// `(lambda_+, lambda_-) = (sqrt S, -sqrt S)`, or `None` when `S <= 0`.
pub fn lambda_pm(zeta: [f64; 3], alphas: [f64; 3]) -> Option<(f64, f64)> {
    let s = cone_value(zeta, alphas);
    (s > 0.0).then(|| (s.sqrt(), -s.sqrt()))
}

/// True iff `zeta` lies in the admissible set `S > 0`.
pub fn in_cone(zeta: [f64; 3], alphas: [f64; 3]) -> bool {
    cone_value(zeta, alphas) > 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den <= 0 {
            return Err(Error::Validation(format!("denominator must be positive, got {den}")));
        }
        let g = gcd(num.unsigned_abs(), den as u64) as i64;
        let g = g.max(1);
        Ok(Ratio { num: num / g, den: den / g })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Rational wavevector `xi_i = (2 pi / T_i) * num_i / den_i` on a cell
/// with periods `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Xi {
    pub ratios: [Ratio; 3],
    pub periods: [f64; 3],
}

impl Xi {
    pub fn new(ratios: [Ratio; 3], torus: &TorusSpec) -> Self {
        Xi { ratios, periods: torus.periods }
    }

    pub fn value(&self) -> [f64; 3] {
        std::array::from_fn(|i| 2.0 * std::f64::consts::PI / self.periods[i] * self.ratios[i].value())
    }
}

#[derive(Clone, Debug)]
pub struct LargeScaleMode {
    pub xi: [f64; 3],
    pub xi_rational: Option<Xi>,
    /// Orthogonal diagonalizer of `alpha^S`.
    pub p: Matrix3<f64>,
    pub alphas: [f64; 3],
    pub zeta: [f64; 3],
    pub lambda_plus: f64,
    /// Eigenvector in the principal frame.
    pub beta: [C64; 3],
    /// `P beta`, eigenvector of `A^xi alpha`.
    pub eigenvector: [C64; 3],
    pub gamma: [f64; 3],
    pub rate: C64,
    pub residual: f64,
    pub selection: String,
}

fn cross_bilinear(a: &[C64; 3], b: &[C64; 3]) -> [C64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm_c(v: &[C64; 3]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Null vector of a rank-2 matrix from the largest cross product of two
/// rows, normalized with its largest component real positive.
fn null_vector(m: &CMat3) -> [C64; 3] {
    let rows: [[C64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
    let mut best = [C64::new(0.0, 0.0); 3];
    let mut best_norm = -1.0;
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let c = cross_bilinear(&rows[a], &rows[b]);
        let n = norm_c(&c);
        if n > best_norm {
            best = c;
            best_norm = n;
        }
    }
    let max = best.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let pivot = best.iter().find(|c| c.norm() >= max * (1.0 - 1e-12)).copied().unwrap_or(C64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    let n = norm_c(&best);
    best.map(|c| c * phase / n)
}

/// Checks that `alphas` are pairwise distinct and nonzero (relative 1e-12).
pub fn check_nondegenerate(alphas: [f64; 3]) -> Result<()> {
    let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let ok = scale > 0.0
        && alphas.iter().all(|a| a.abs() > tol)
        && (alphas[0] - alphas[1]).abs() > tol
        && (alphas[1] - alphas[2]).abs() > tol
        && (alphas[0] - alphas[2]).abs() > tol;
    if ok {
        Ok(())
    } else {
        Err(Error::DegenerateAlpha(alphas))
    }
}

/// The growing mode of `A^xi alpha` at a real wavevector `xi`.
pub fn predict_mode_at(alpha: &Matrix3<f64>, xi: [f64; 3]) -> Result<LargeScaleMode> {
    let (sym, _, gamma) = decompose(alpha);
    let (p, alphas) = diagonalize_sym(&sym);
    check_nondegenerate(alphas)?;
    let zv = p.transpose() * Vector3::from(xi);
    let zeta = [zv[0], zv[1], zv[2]];
    let Some((lambda_plus, _)) = lambda_pm(zeta, alphas) else {
        return Err(Error::OutsideCone(cone_value(zeta, alphas)));
    };
    // A^{P zeta} = det(P) P A^zeta P^T, so the principal-frame operator
    // carries the orientation of P.
    let det = p.determinant().signum();
    let d = Matrix3::from_diagonal(&Vector3::from(alphas)).map(|x| C64::new(x, 0.0));
    let m = a_xi(zeta) * d * C64::new(det, 0.0) - CMat3::identity() * C64::new(lambda_plus, 0.0);
    let beta = null_vector(&m);
    let pc = p.map(|x| C64::new(x, 0.0));
    let ev = pc * Vector3::from(beta);
    let eigenvector = [ev[0], ev[1], ev[2]];
    let rate = C64::new(lambda_plus, -(xi[0] * gamma[0] + xi[1] * gamma[1] + xi[2] * gamma[2]));
    let full = a_xi(xi) * alpha.map(|x| C64::new(x, 0.0)) - CMat3::identity() * rate;
    let residual = (full * ev).norm();
    let scale = 1.0 + rate.norm();
    if residual > 1e-10 * scale {
        return Err(Error::NoConvergence { iterations: 0, residual });
    }
    Ok(LargeScaleMode {
        xi,
        xi_rational: None,
        p,
        alphas,
        zeta,
        lambda_plus,
        beta,
        eigenvector,
        gamma: [gamma[0], gamma[1], gamma[2]],
        rate,
        residual,
        selection: "given".into(),
    })
}

/// [`predict_mode_at`] for a rational wavevector.
pub fn predict_mode(alpha: &Matrix3<f64>, xi: &Xi) -> Result<LargeScaleMode> {
    let mut m = predict_mode_at(alpha, xi.value())?;
    m.xi_rational = Some(*xi);
    Ok(m)
}

/// Reduced fractions `p/q` in `(0, 1]` with `q <= qmax`, ordered by `(q, p)`.
pub fn scan_fractions(qmax: u32) -> Vec<Ratio> {
    let mut out = Vec::new();
    for q in 1..=qmax as i64 {
        for p in 1..=q {
            if gcd(p as u64, q as u64) == 1 {
                out.push(Ratio { num: p, den: q });
            }
        }
    }
    out
}

/// Scans rational directions and returns the first maximizer of
/// `lambda_+ / |xi|` among admissible ones.
pub fn find_xi(alpha: &Matrix3<f64>, torus: &TorusSpec, qmax: u32) -> Result<LargeScaleMode> {
    if qmax == 0 {
        return Err(Error::Validation("qmax must be at least 1".into()));
    }
    let (sym, _, _) = decompose(alpha);
    let (p, alphas) = diagonalize_sym(&sym);
    check_nondegenerate(alphas)?;
    let fr = scan_fractions(qmax);
    let mut best: Option<([Ratio; 3], f64)> = None;
    for a in &fr {
        for b in &fr {
            for c in &fr {
                let xi = Xi::new([*a, *b, *c], torus);
                let v = xi.value();
                let z = p.transpose() * Vector3::from(v);
                let Some((lp, _)) = lambda_pm([z[0], z[1], z[2]], alphas) else { continue };
                let score = lp / Vector3::from(v).norm();
                if best.map_or(true, |(_, s)| score > s * (1.0 + 1e-12)) {
                    best = Some(([*a, *b, *c], score));
                }
            }
        }
    }
    let (ratios, _) = best.ok_or(Error::NoViableXi)?;
    let mut mode = predict_mode(alpha, &Xi::new(ratios, torus))?;
    mode.selection = format!("max lambda_plus/|xi| over fractions p/q in (0, 1], q <= {qmax}");
    Ok(mode)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeRecord {
    pub xi: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_rational: Option<Xi>,
    pub p: [[f64; 3]; 3],
    pub alphas: [f64; 3],
    pub zeta: [f64; 3],
    pub lambda_plus: f64,
    pub beta_re: [f64; 3],
    pub beta_im: [f64; 3],
    pub eigenvector_re: [f64; 3],
    pub eigenvector_im: [f64; 3],
    pub gamma: [f64; 3],
    pub rate: [f64; 2],
    pub residual: f64,
    pub selection: String,
}

impl From<&LargeScaleMode> for ModeRecord {
    fn from(m: &LargeScaleMode) -> Self {
        ModeRecord {
            xi: m.xi,
            xi_rational: m.xi_rational,
            p: mat_rows(&m.p),
            alphas: m.alphas,
            zeta: m.zeta,
            lambda_plus: m.lambda_plus,
            beta_re: m.beta.map(|c| c.re),
            beta_im: m.beta.map(|c| c.im),
            eigenvector_re: m.eigenvector.map(|c| c.re),
            eigenvector_im: m.eigenvector.map(|c| c.im),
            gamma: m.gamma,
            rate: [m.rate.re, m.rate.im],
            residual: m.residual,
            selection: m.selection.clone(),
        }
    }
}
