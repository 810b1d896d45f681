//! Time integration of the perturbed MHD system on a large torus made of
//! `N_1 x N_2 x N_3` copies of the flow cell.
//!
//! A perturbation seeded in one Bloch class `q = 2 pi j / (N T)` of the big
//! torus only ever excites the classes `c q`, `c = 0..n_c`, where `n_c` is
//! the order of `j` in `Z_N`. Fields are stored class by class as cell-periodic
//! coefficients, and quadratic terms are evaluated on a dealiased cell grid.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bloch::{eigensolve_near, BlochOperator, EigenOptions};
use crate::error::{Error, Result};
use crate::field::{cross, CVec3, FourierVectorField, TorusSpec, C64};
use crate::large_scale::Xi;
use crate::linalg;

fn gcd(mut a: i64, mut b: i64) -> i64 {
    (a, b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Residue of `x` modulo `n` in `(-n/2, n/2]`.
fn centered(x: i64, n: i64) -> i64 {
    let r = x.rem_euclid(n);
    if 2 * r > n {
        r - n
    } else {
        r
    }
}

/// Integer multiples `N_i = 1 / (eps r_i)` for `xi_i = (2 pi / T_i) r_i`.
pub fn big_torus_multiples(xi: &Xi, eps: f64) -> Result<[i64; 3]> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Validation(format!("epsilon must be positive, got {eps}")));
    }
    let mut n = [0i64; 3];
    for i in 0..3 {
        let r = xi.ratios[i];
        if r.num <= 0 {
            return Err(Error::Validation("xi components must be positive rationals".into()));
        }
        let x = r.den as f64 / (eps * r.num as f64);
        let rounded = x.round();
        if (x - rounded).abs() > 1e-9 * x.max(1.0) || rounded < 1.0 {
            return Err(Error::NonIntegerPeriod(x));
        }
        n[i] = rounded as i64;
    }
    Ok(n)
}

/// The big torus `T_i = N_i T_cell_i` for the Bloch wavevector `eps xi`.
pub fn make_big_torus(cell: &TorusSpec, xi: &Xi, eps: f64) -> Result<TorusSpec> {
    let n = big_torus_multiples(xi, eps)?;
    let periods = std::array::from_fn(|i| cell.periods[i] * n[i] as f64);
    let trunc = (0..3).map(|i| n[i] as usize * cell.trunc + n[i] as usize / 2).max().unwrap();
    TorusSpec::new(periods, trunc)
}

/// Class structure of fields on the big torus generated by Bloch index `gen`.
#[derive(Clone, Debug)]
pub struct ClassLayout {
    pub cell: [f64; 3],
    pub n: [i64; 3],
    pub gen: [i64; 3],
    pub k: usize,
    pub n_c: usize,
    /// Offset numerators `a_{c,i}` (offset `a / N_i` in `(-1/2, 1/2]`).
    offsets: Vec<[i64; 3]>,
    ranges: Vec<[(i64, i64); 3]>,
    starts: Vec<usize>,
    /// Per mode: class, cell index.
    modes: Vec<(usize, [i64; 3])>,
    kappa: Vec<[f64; 3]>,
    conj: Vec<usize>,
    pub grid: usize,
}

impl ClassLayout {
    pub fn new(cell: [f64; 3], n: [i64; 3], gen: [i64; 3], k: usize) -> Result<Self> {
        if n.iter().any(|x| *x < 1) || cell.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Validation("big-torus multiples and cell periods must be positive".into()));
        }
        let gen: [i64; 3] = std::array::from_fn(|i| gen[i].rem_euclid(n[i]));
        let n_c = (0..3).fold(1i64, |acc, i| {
            let order = n[i] / gcd(gen[i], n[i]).max(1);
            let order = if gen[i] == 0 { 1 } else { order };
            acc / gcd(acc, order) * order
        }) as usize;
        let ki = k as i64;
        let mut offsets = Vec::new();
        let mut ranges = Vec::new();
        let mut starts = Vec::new();
        let mut modes = Vec::new();
        let mut kappa = Vec::new();
        for c in 0..n_c as i64 {
            let a: [i64; 3] = std::array::from_fn(|i| centered(c * gen[i], n[i]));
            // |N k + a| <= N (K + 1/2)
            let r: [(i64, i64); 3] = std::array::from_fn(|i| {
                let lo = (-n[i] * (2 * ki + 1) - 2 * a[i]).div_euclid(2 * n[i])
                    + i64::from((-n[i] * (2 * ki + 1) - 2 * a[i]).rem_euclid(2 * n[i]) != 0);
                let hi = (n[i] * (2 * ki + 1) - 2 * a[i]).div_euclid(2 * n[i]);
                (lo, hi)
            });
            starts.push(modes.len());
            for k0 in r[0].0..=r[0].1 {
                for k1 in r[1].0..=r[1].1 {
                    for k2 in r[2].0..=r[2].1 {
                        let kv = [k0, k1, k2];
                        modes.push((c as usize, kv));
                        kappa.push(std::array::from_fn(|i| {
                            2.0 * PI / cell[i] * (kv[i] as f64 + a[i] as f64 / n[i] as f64)
                        }));
                    }
                }
            }
            offsets.push(a);
            ranges.push(r);
        }
        starts.push(modes.len());
        let big: HashMap<[i64; 3], usize> = modes
            .iter()
            .enumerate()
            .map(|(idx, (c, kv))| (std::array::from_fn(|i| n[i] * kv[i] + offsets[*c][i]), idx))
            .collect();
        let mut conj = vec![0; modes.len()];
        for (idx, (c, kv)) in modes.iter().enumerate() {
            let m: [i64; 3] = std::array::from_fn(|i| -(n[i] * kv[i] + offsets[*c][i]));
            conj[idx] = *big.get(&m).expect("truncation box is symmetric");
        }
        // products reach cell index 2K+2; M > 3K+3 keeps aliases outside the box
        let mut grid = 3 * k + 4;
        if grid % 2 == 1 {
            grid += 1;
        }
        Ok(ClassLayout { cell, n, gen, k, n_c, offsets, ranges, starts, modes, kappa, conj, grid })
    }

    /// Layout whose classes carry the support of `field`, a field on the big
    /// torus `n` times the cell.
    pub fn infer(cell: [f64; 3], k: usize, field: &FourierVectorField) -> Result<Self> {
        let n: [i64; 3] = std::array::from_fn(|i| {
            let r = field.torus.periods[i] / cell[i];
            if (r - r.round()).abs() > 1e-9 * r { 0 } else { r.round() as i64 }
        });
        if n.iter().any(|x| *x < 1) {
            return Err(Error::TorusMismatch("field torus is not a multiple of the flow cell".into()));
        }
        let residues: Vec<[i64; 3]> = {
            let mut r: Vec<[i64; 3]> =
                field.nonzero().iter().map(|(m, _)| std::array::from_fn(|i| m[i].rem_euclid(n[i]))).collect();
            r.sort();
            r.dedup();
            r
        };
        let generated = |g: [i64; 3]| -> bool {
            let l = ClassLayout::new(cell, n, g, 0);
            l.map_or(false, |l| {
                residues.iter().all(|r| (0..l.n_c as i64).any(|c| (0..3).all(|i| (c * l.gen[i] - r[i]).rem_euclid(n[i]) == 0)))
            })
        };
        let gen = residues
            .iter()
            .copied()
            .chain(std::iter::once([0, 0, 0]))
            .find(|g| generated(*g))
            .ok_or_else(|| Error::Validation("field support is not generated by a single Bloch class".into()))?;
        let layout = ClassLayout::new(cell, n, gen, k)?;
        layout.from_big_field(field)?;
        Ok(layout)
    }

    /// Number of vector modes.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn kappa(&self, idx: usize) -> [f64; 3] {
        self.kappa[idx]
    }

    /// Big-torus wavevector of a mode.
    pub fn big_wavevector(&self, idx: usize) -> [i64; 3] {
        let (c, kv) = self.modes[idx];
        std::array::from_fn(|i| self.n[i] * kv[i] + self.offsets[c][i])
    }

    fn class_modes(&self, c: usize) -> std::ops::Range<usize> {
        self.starts[c]..self.starts[c + 1]
    }

    /// Mode index of class `c`, cell index `k`, if inside the box.
    pub fn index(&self, c: usize, kv: [i64; 3]) -> Option<usize> {
        let r = &self.ranges[c];
        if (0..3).any(|i| kv[i] < r[i].0 || kv[i] > r[i].1) {
            return None;
        }
        let s: [i64; 3] = std::array::from_fn(|i| r[i].1 - r[i].0 + 1);
        let local = ((kv[0] - r[0].0) * s[1] + (kv[1] - r[1].0)) * s[2] + (kv[2] - r[2].0);
        Some(self.starts[c] + local as usize)
    }

    pub fn big_torus(&self) -> Result<TorusSpec> {
        let periods = std::array::from_fn(|i| self.cell[i] * self.n[i] as f64);
        let trunc = (0..3).map(|i| (self.n[i] * (2 * self.k as i64 + 1) / 2) as usize).max().unwrap();
        TorusSpec::new(periods, trunc)
    }

    /// Coefficients as a field on the big torus.
    pub fn to_big_field(&self, v: &[C64]) -> Result<FourierVectorField> {
        let t = self.big_torus()?;
        let mut f = FourierVectorField::zeros(&t);
        for idx in 0..self.len() {
            f.set(self.big_wavevector(idx), [v[3 * idx], v[3 * idx + 1], v[3 * idx + 2]]);
        }
        Ok(f)
    }

    /// Inverse of [`Self::to_big_field`]; rejects energy outside the class lattice.
    pub fn from_big_field(&self, f: &FourierVectorField) -> Result<Vec<C64>> {
        let expect = self.big_torus()?;
        if !f.torus.same_periods(&expect) {
            return Err(Error::TorusMismatch("field is not on the big torus of this layout".into()));
        }
        let lookup: HashMap<[i64; 3], usize> = (0..self.len()).map(|i| (self.big_wavevector(i), i)).collect();
        let mut v = linalg::zeros(3 * self.len());
        for (m, c) in f.nonzero() {
            let idx = lookup
                .get(&m)
                .ok_or_else(|| Error::Validation(format!("mode {m:?} lies outside the Bloch classes of generator {:?}", self.gen)))?;
            v[3 * idx..3 * idx + 3].copy_from_slice(&c);
        }
        Ok(v)
    }

    /// Replaces each coefficient pair `(v_m, v_{-m})` by its Hermitian average.
    pub fn symmetrize(&self, v: &mut [C64]) {
        for i in 0..self.len() {
            let j = self.conj[i];
            if j < i {
                continue;
            }
            for d in 0..3 {
                let a = 0.5 * (v[3 * i + d] + v[3 * j + d].conj());
                v[3 * i + d] = a;
                v[3 * j + d] = a.conj();
            }
        }
    }

    pub fn reality_defect(&self, v: &[C64]) -> f64 {
        (0..self.len())
            .flat_map(|i| (0..3).map(move |d| (i, d)))
            .map(|(i, d)| (v[3 * i + d] - v[3 * self.conj[i] + d].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn leray(&self, v: &mut [C64]) {
        for (i, kap) in self.kappa.iter().enumerate() {
            let k2 = kap.iter().map(|x| x * x).sum::<f64>();
            if k2 == 0.0 {
                continue;
            }
            let dot = (v[3 * i] * kap[0] + v[3 * i + 1] * kap[1] + v[3 * i + 2] * kap[2]) / k2;
            for d in 0..3 {
                v[3 * i + d] -= dot * kap[d];
            }
        }
    }

    /// `max |kappa . v|` relative to the L2 norm.
    pub fn divergence_defect(&self, v: &[C64]) -> f64 {
        let n = linalg::norm(v).max(f64::MIN_POSITIVE);
        self.kappa
            .iter()
            .enumerate()
            .map(|(i, k)| (v[3 * i] * k[0] + v[3 * i + 1] * k[1] + v[3 * i + 2] * k[2]).norm())
            .fold(0.0, f64::max)
            / n
    }

    pub fn norm_hs(&self, v: &[C64], s: f64) -> f64 {
        self.kappa
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let w = (1.0 + k.iter().map(|x| x * x).sum::<f64>()).powf(s);
                w * (0..3).map(|d| v[3 * i + d].norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `b + conj` of a Bloch eigenvector placed in the generator class, so
    /// the resulting field is real.
    pub fn real_mode_from_bloch(&self, op: &BlochOperator, v: &[C64]) -> Result<Vec<C64>> {
        let c = 1 % self.n_c;
        let mut w = linalg::zeros(3 * self.len());
        for i in 0..op.torus.modes() {
            let kv = op.torus.wavevector(i);
            if let Some(idx) = self.index(c, kv) {
                for d in 0..3 {
                    w[3 * idx + d] += v[3 * i + d];
                }
            }
        }
        let mut out = w.clone();
        for i in 0..self.len() {
            for d in 0..3 {
                out[3 * i + d] += w[3 * self.conj[i] + d].conj();
            }
        }
        Ok(out)
    }

    /// Bloch wavevector of the generator class in angular units.
    pub fn generator_q(&self) -> [f64; 3] {
        let c = 1 % self.n_c;
        std::array::from_fn(|i| 2.0 * PI / self.cell[i] * self.offsets[c][i] as f64 / self.n[i] as f64)
    }
}

struct Fft3 {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(m: usize) -> Self {
        let mut p = FftPlanner::new();
        Fft3 { m, fwd: p.plan_fft_forward(m), inv: p.plan_fft_inverse(m) }
    }

    fn run(&self, data: &mut [C64], inverse: bool) {
        let m = self.m;
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![C64::new(0.0, 0.0); m];
        for i0 in 0..m {
            for i2 in 0..m {
                for i1 in 0..m {
                    line[i1] = data[(i0 * m + i1) * m + i2];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i1 in 0..m {
                    data[(i0 * m + i1) * m + i2] = line[i1];
                }
            }
        }
        for i1 in 0..m {
            for i2 in 0..m {
                for i0 in 0..m {
                    line[i0] = data[(i0 * m + i1) * m + i2];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i0 in 0..m {
                    data[(i0 * m + i1) * m + i2] = line[i0];
                }
            }
        }
    }
}

/// Time-stepping scheme; diffusion is always integrated exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    IfRk2,
    IfRk4,
}

/// Which right-hand-side pieces are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub linear: bool,
    pub nonlinear: bool,
}

impl Terms {
    pub const FULL: Terms = Terms { linear: true, nonlinear: true };
    pub const LINEAR: Terms = Terms { linear: true, nonlinear: false };
    pub const NONE: Terms = Terms { linear: false, nonlinear: false };
}

/// Perturbation `(u, b)` on a [`ClassLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct MhdState {
    pub u: Vec<C64>,
    pub b: Vec<C64>,
    pub t: f64,
}

impl MhdState {
    pub fn zeros(layout: &ClassLayout) -> Self {
        MhdState { u: linalg::zeros(3 * layout.len()), b: linalg::zeros(3 * layout.len()), t: 0.0 }
    }

    pub fn norm_l2(&self) -> f64 {
        (linalg::norm(&self.u).powi(2) + linalg::norm(&self.b).powi(2)).sqrt()
    }

    fn scaled(&self, s: f64) -> MhdState {
        MhdState { u: self.u.iter().map(|c| c * s).collect(), b: self.b.iter().map(|c| c * s).collect(), t: self.t }
    }

    fn has_nan(&self) -> bool {
        self.u.iter().chain(&self.b).any(|c| !(c.re.is_finite() && c.im.is_finite()))
    }
}

type Grid3 = [Vec<C64>; 3];

/// Background flow, Reynolds numbers and the class layout.
pub struct Evolver {
    pub layout: ClassLayout,
    pub r_e: f64,
    pub r_m: f64,
    fft: Fft3,
    us: Grid3,
    ws: Grid3,
    u_inf: f64,
    phase: [Vec<C64>; 3],
}

fn cross_acc(out: &mut Grid3, a: &Grid3, b: &Grid3, shift: Option<&[C64]>) {
    for p in 0..out[0].len() {
        let c = cross(&[a[0][p], a[1][p], a[2][p]], &[b[0][p], b[1][p], b[2][p]]);
        let s = shift.map_or(C64::new(1.0, 0.0), |s| s[p]);
        for d in 0..3 {
            out[d][p] += c[d] * s;
        }
    }
}

fn zero_grid(n: usize) -> Grid3 {
    std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n])
}

impl Evolver {
    /// `flow` is the steady background on the cell; it must fit in the
    /// layout's truncation.
    pub fn new(flow: &FourierVectorField, layout: ClassLayout, r_e: f64, r_m: f64) -> Result<Self> {
        if !(r_e.is_finite() && r_e > 0.0 && r_m.is_finite() && r_m > 0.0) {
            return Err(Error::Validation("Reynolds numbers must be positive".into()));
        }
        let cell_t = TorusSpec::new(layout.cell, layout.k)?;
        if !flow.torus.same_periods(&cell_t) {
            return Err(Error::TorusMismatch("background flow is not on the layout cell".into()));
        }
        let modes = flow.nonzero();
        if modes.iter().any(|(k, _)| k.iter().any(|x| x.unsigned_abs() as usize > layout.k)) {
            return Err(Error::Validation(format!("background flow does not fit in truncation {}", layout.k)));
        }
        let m = layout.grid;
        let fft = Fft3::new(m);
        let mut us = zero_grid(m * m * m);
        let mut ws = zero_grid(m * m * m);
        for (k, v) in &modes {
            let p = Self::slot(m, *k);
            let kap = cell_t.angular(*k);
            let w = crate::field::cross_re(&kap, v).map(|c| c * C64::i());
            for d in 0..3 {
                us[d][p] += v[d];
                ws[d][p] += w[d];
            }
        }
        for d in 0..3 {
            fft.run(&mut us[d], true);
            fft.run(&mut ws[d], true);
        }
        let u_inf = (0..m * m * m)
            .map(|p| (0..3).map(|d| us[d][p].re.powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let phase = std::array::from_fn(|_| (0..m).map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64)).collect());
        Ok(Evolver { layout, r_e, r_m, fft, us, ws, u_inf, phase })
    }

    fn slot(m: usize, k: [i64; 3]) -> usize {
        let w = |x: i64| x.rem_euclid(m as i64) as usize;
        (w(k[0]) * m + w(k[1])) * m + w(k[2])
    }

    /// `max |U_s|` on the collocation grid.
    pub fn flow_sup(&self) -> f64 {
        self.u_inf
    }

    /// Advective step bound `0.1 / max|U_s|` (diffusion is exact).
    pub fn cfl_bound(&self) -> f64 {
        if self.u_inf > 0.0 {
            0.1 / self.u_inf
        } else {
            0.05
        }
    }

    fn to_grid(&self, c: usize, v: &[C64], curl: bool) -> Option<Grid3> {
        let l = &self.layout;
        let range = l.class_modes(c);
        if range.clone().all(|i| v[3 * i..3 * i + 3].iter().all(|x| *x == C64::new(0.0, 0.0))) {
            return None;
        }
        let m = l.grid;
        let mut g = zero_grid(m * m * m);
        for i in range {
            let p = Self::slot(m, l.modes[i].1);
            let mut x: CVec3 = [v[3 * i], v[3 * i + 1], v[3 * i + 2]];
            if curl {
                x = crate::field::cross_re(&l.kappa[i], &x).map(|c| c * C64::i());
            }
            for d in 0..3 {
                g[d][p] = x[d];
            }
        }
        for d in 0..3 {
            self.fft.run(&mut g[d], true);
        }
        Some(g)
    }

    fn shift_phase(&self, s: [i64; 3]) -> Option<Vec<C64>> {
        if s == [0, 0, 0] {
            return None;
        }
        let m = self.layout.grid;
        let ph = |d: usize, j: usize| -> C64 {
            match s[d] {
                0 => C64::new(1.0, 0.0),
                x if x > 0 => self.phase[d][(j * x as usize) % m],
                x => self.phase[d][(j * (-x) as usize) % m].conj(),
            }
        };
        let mut out = vec![C64::new(0.0, 0.0); m * m * m];
        for i0 in 0..m {
            for i1 in 0..m {
                let a = ph(0, i0) * ph(1, i1);
                for i2 in 0..m {
                    out[(i0 * m + i1) * m + i2] = a * ph(2, i2);
                }
            }
        }
        Some(out)
    }

    /// Explicit right-hand side: returns `(du/dt, db/dt)` without diffusion.
    ///
    /// Linear part `-L_s` (without diffusion): `P(u x curl U_s + U_s x curl u)`
    /// and `curl(U_s x b)`; nonlinear part `Q`: `P(u x curl u + curl b x b)` and
    /// `curl(u x b)`. Advective forms are rewritten in rotational form, the
    /// gradients being removed by the projection.
    pub fn explicit_rhs(&self, s: &MhdState, terms: Terms) -> (Vec<C64>, Vec<C64>) {
        let l = &self.layout;
        let n = 3 * l.len();
        if !terms.linear && !terms.nonlinear {
            return (linalg::zeros(n), linalg::zeros(n));
        }
        let nc = l.n_c;
        let gu: Vec<_> = (0..nc).map(|c| self.to_grid(c, &s.u, false)).collect();
        let gwu: Vec<_> = (0..nc).map(|c| self.to_grid(c, &s.u, true)).collect();
        let gb: Vec<_> = (0..nc).map(|c| self.to_grid(c, &s.b, false)).collect();
        let gwb: Vec<_> = if terms.nonlinear { (0..nc).map(|c| self.to_grid(c, &s.b, true)).collect() } else { vec![None; nc] };
        let g = l.grid.pow(3);
        let mut mom: Vec<Option<Grid3>> = vec![None; nc];
        let mut ind: Vec<Option<Grid3>> = vec![None; nc];
        if terms.linear {
            for c in 0..nc {
                if let Some(wu) = &gwu[c] {
                    cross_acc(mom[c].get_or_insert_with(|| zero_grid(g)), &self.us, wu, None);
                }
                if let Some(u) = &gu[c] {
                    cross_acc(mom[c].get_or_insert_with(|| zero_grid(g)), u, &self.ws, None);
                }
                if let Some(b) = &gb[c] {
                    cross_acc(ind[c].get_or_insert_with(|| zero_grid(g)), &self.us, b, None);
                }
            }
        }
        if terms.nonlinear {
            for c1 in 0..nc {
                for c2 in 0..nc {
                    let c = (c1 + c2) % nc;
                    let sv: [i64; 3] =
                        std::array::from_fn(|i| (l.offsets[c1][i] + l.offsets[c2][i] - l.offsets[c][i]) / l.n[i]);
                    let any = (gu[c1].is_some() && (gwu[c2].is_some() || gb[c2].is_some())) || (gwb[c1].is_some() && gb[c2].is_some());
                    if !any {
                        continue;
                    }
                    let ph = self.shift_phase(sv);
                    if let (Some(u), Some(wu)) = (&gu[c1], &gwu[c2]) {
                        cross_acc(mom[c].get_or_insert_with(|| zero_grid(g)), u, wu, ph.as_deref());
                    }
                    if let (Some(wb), Some(b)) = (&gwb[c1], &gb[c2]) {
                        cross_acc(mom[c].get_or_insert_with(|| zero_grid(g)), wb, b, ph.as_deref());
                    }
                    if let (Some(u), Some(b)) = (&gu[c1], &gb[c2]) {
                        cross_acc(ind[c].get_or_insert_with(|| zero_grid(g)), u, b, ph.as_deref());
                    }
                }
            }
        }
        let scale = 1.0 / g as f64;
        let mut du = linalg::zeros(n);
        let mut db = linalg::zeros(n);
        for c in 0..nc {
            if let Some(mut grid) = mom[c].take() {
                for d in 0..3 {
                    self.fft.run(&mut grid[d], false);
                }
                for i in l.class_modes(c) {
                    let p = Self::slot(l.grid, l.modes[i].1);
                    for d in 0..3 {
                        du[3 * i + d] = grid[d][p] * scale;
                    }
                }
            }
            if let Some(mut grid) = ind[c].take() {
                for d in 0..3 {
                    self.fft.run(&mut grid[d], false);
                }
                for i in l.class_modes(c) {
                    let p = Self::slot(l.grid, l.modes[i].1);
                    let x: CVec3 = std::array::from_fn(|d| grid[d][p] * scale);
                    let cu = crate::field::cross_re(&l.kappa[i], &x);
                    for d in 0..3 {
                        db[3 * i + d] = cu[d] * C64::i();
                    }
                }
            }
        }
        l.leray(&mut du);
        (du, db)
    }

    /// Full right-hand side including diffusion.
    pub fn rhs(&self, s: &MhdState, terms: Terms) -> (Vec<C64>, Vec<C64>) {
        let (mut du, mut db) = self.explicit_rhs(s, terms);
        for (i, kap) in self.layout.kappa.iter().enumerate() {
            let k2 = kap.iter().map(|x| x * x).sum::<f64>();
            for d in 0..3 {
                du[3 * i + d] -= s.u[3 * i + d] * (k2 / self.r_e);
                db[3 * i + d] -= s.b[3 * i + d] * (k2 / self.r_m);
            }
        }
        (du, db)
    }

    /// `-L_s U` (linearized right-hand side, diffusion included).
    pub fn linearized_rhs(&self, s: &MhdState) -> (Vec<C64>, Vec<C64>) {
        self.rhs(s, Terms::LINEAR)
    }

    /// `Q(U, U)`.
    pub fn nonlinear_rhs(&self, s: &MhdState) -> (Vec<C64>, Vec<C64>) {
        self.explicit_rhs(s, Terms { linear: false, nonlinear: true })
    }

    fn decay(&self, h: f64) -> (Vec<f64>, Vec<f64>) {
        self.layout
            .kappa
            .iter()
            .map(|k| {
                let k2 = k.iter().map(|x| x * x).sum::<f64>();
                ((-k2 * h / self.r_e).exp(), (-k2 * h / self.r_m).exp())
            })
            .unzip()
    }

    /// One step; enforces projection and reality afterwards.
    pub fn step(&self, s: &MhdState, dt: f64, scheme: Scheme, terms: Terms) -> Result<MhdState> {
        let (eu, eb) = self.decay(dt);
        let apply = |v: &[C64], e: &[f64]| -> Vec<C64> { v.iter().enumerate().map(|(j, c)| c * e[j / 3]).collect() };
        let comb = |a: &[C64], b: &[C64], w: f64| -> Vec<C64> { a.iter().zip(b).map(|(x, y)| x + y * w).collect() };
        let mut out = match scheme {
            Scheme::IfRk2 => {
                let (n0u, n0b) = self.explicit_rhs(s, terms);
                let s1 = MhdState { u: apply(&comb(&s.u, &n0u, dt), &eu), b: apply(&comb(&s.b, &n0b, dt), &eb), t: s.t + dt };
                let (n1u, n1b) = self.explicit_rhs(&s1, terms);
                MhdState {
                    u: comb(&apply(&comb(&s.u, &n0u, 0.5 * dt), &eu), &n1u, 0.5 * dt),
                    b: comb(&apply(&comb(&s.b, &n0b, 0.5 * dt), &eb), &n1b, 0.5 * dt),
                    t: s.t + dt,
                }
            }
            Scheme::IfRk4 => {
                let (hu, hb) = self.decay(0.5 * dt);
                let (k1u, k1b) = self.explicit_rhs(s, terms);
                let s2 = MhdState { u: apply(&comb(&s.u, &k1u, 0.5 * dt), &hu), b: apply(&comb(&s.b, &k1b, 0.5 * dt), &hb), t: s.t };
                let (k2u, k2b) = self.explicit_rhs(&s2, terms);
                let su = apply(&s.u, &hu);
                let sb = apply(&s.b, &hb);
                let s3 = MhdState { u: comb(&su, &k2u, 0.5 * dt), b: comb(&sb, &k2b, 0.5 * dt), t: s.t };
                let (k3u, k3b) = self.explicit_rhs(&s3, terms);
                let s4 = MhdState {
                    u: comb(&apply(&s.u, &eu), &apply(&k3u, &hu), dt),
                    b: comb(&apply(&s.b, &eb), &apply(&k3b, &hb), dt),
                    t: s.t,
                };
                let (k4u, k4b) = self.explicit_rhs(&s4, terms);
                let fin = |y: &[C64], k1: &[C64], k2: &[C64], k3: &[C64], k4: &[C64], e: &[f64], h: &[f64]| -> Vec<C64> {
                    (0..y.len())
                        .map(|j| {
                            let (ej, hj) = (e[j / 3], h[j / 3]);
                            ej * y[j] + dt / 6.0 * (ej * k1[j] + 2.0 * hj * (k2[j] + k3[j]) + k4[j])
                        })
                        .collect()
                };
                MhdState {
                    u: fin(&s.u, &k1u, &k2u, &k3u, &k4u, &eu, &hu),
                    b: fin(&s.b, &k1b, &k2b, &k3b, &k4b, &eb, &hb),
                    t: s.t + dt,
                }
            }
        };
        self.layout.leray(&mut out.u);
        self.layout.leray(&mut out.b);
        self.layout.symmetrize(&mut out.u);
        self.layout.symmetrize(&mut out.b);
        if out.has_nan() {
            return Err(Error::NanDetected(out.t));
        }
        Ok(out)
    }

    pub fn norm_hs(&self, s: &MhdState, order: f64) -> f64 {
        (self.layout.norm_hs(&s.u, order).powi(2) + self.layout.norm_hs(&s.b, order).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RunOptions {
    pub dt: f64,
    pub scheme: Scheme,
    pub hs_order: f64,
    /// Disable the nonlinearity `Q`.
    pub linear_only: bool,
    /// Record every `sample_every`-th step.
    pub sample_every: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub l2: f64,
    pub hs: f64,
    pub linear_ref: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstabilityRun {
    pub delta: f64,
    pub c0: f64,
    pub rho: f64,
    /// First time with `||U(t)||_L2 >= C0` (log-linear interpolation between steps).
    pub t_delta: Option<f64>,
    /// First time with `||U(t) - delta e^{t L} mode|| > (delta / 2) e^{rho t}`.
    pub t_hat: Option<f64>,
    pub horizon_exceeded: bool,
    pub samples: Vec<Sample>,
}

impl InstabilityRun {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|s| vec![s.t, s.l2, s.hs, s.linear_ref]).collect();
        crate::io::to_csv(&["t", "l2_norm", "hs_norm", "linear_ref_norm"], &rows)
    }
}

fn diff_norm(a: &MhdState, b: &MhdState, s: f64) -> f64 {
    let d = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(p, q)| (p - q * s).norm_sqr()).sum::<f64>();
    (d(&a.u, &b.u) + d(&a.b, &b.b)).sqrt()
}

/// Integrates from `delta * mode` until the L2 norm reaches `c0` or
/// `horizon` passes. A linear reference run from `mode` is carried along;
/// after escape the run continues for up to `3 / rho` to locate `t_hat`.
pub fn run_instability(
    ev: &Evolver,
    mode: &MhdState,
    delta: f64,
    c0: f64,
    horizon: f64,
    rho: f64,
    opts: &RunOptions,
) -> Result<InstabilityRun> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Validation(format!("delta must be positive, got {delta}")));
    }
    if (mode.norm_l2() - 1.0).abs() > 1e-10 {
        return Err(Error::Validation(format!("mode must have unit L2 norm, got {}", mode.norm_l2())));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) || !(horizon >= 0.0) || !(c0 > 0.0) {
        return Err(Error::Validation("dt, horizon and c0 must be positive".into()));
    }
    let terms = if opts.linear_only { Terms::LINEAR } else { Terms::FULL };
    let every = opts.sample_every.max(1);
    let mut state = mode.scaled(delta);
    state.t = 0.0;
    let mut lin = mode.clone();
    lin.t = 0.0;
    let mut samples = vec![Sample { t: 0.0, l2: state.norm_l2(), hs: ev.norm_hs(&state, opts.hs_order), linear_ref: delta }];
    let mut t_delta = None;
    let mut t_hat = None;
    let mut prev = state.norm_l2();
    if prev >= c0 {
        t_delta = Some(0.0);
    }
    let mut step = 0usize;
    let linger = if rho > 0.0 { 3.0 / rho } else { 0.0 };
    let running = |t: f64, td: Option<f64>, th: Option<f64>| match td {
        None => t < horizon - 1e-12,
        Some(td) => th.is_none() && t < (td + linger).min(horizon) - 1e-12,
    };
    while running(state.t, t_delta, t_hat) {
        let next = ev.step(&state, opts.dt, opts.scheme, terms)?;
        lin = if opts.linear_only { next.scaled(1.0 / delta) } else { ev.step(&lin, opts.dt, opts.scheme, Terms::LINEAR)? };
        step += 1;
        let l2 = next.norm_l2();
        if t_hat.is_none() && diff_norm(&next, &lin, delta) > 0.5 * delta * (rho * next.t).exp() {
            t_hat = Some(next.t);
        }
        let escaped = t_delta.is_none() && l2 >= c0;
        if escaped {
            let frac = if prev > 0.0 && l2 > prev { (c0 / prev).ln() / (l2 / prev).ln() } else { 1.0 };
            t_delta = Some(state.t + frac.clamp(0.0, 1.0) * opts.dt);
        }
        state = next;
        if step % every == 0 {
            samples.push(Sample { t: state.t, l2, hs: ev.norm_hs(&state, opts.hs_order), linear_ref: delta * lin.norm_l2() });
        }
        prev = l2;
    }
    Ok(InstabilityRun { delta, c0, rho, horizon_exceeded: t_delta.is_none(), t_delta, t_hat, samples })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub t_delta: Option<f64>,
    pub t_hat: Option<f64>,
}

/// Outcome of a delta sweep: escape times, both growth-rate estimates and
/// the regression of `t_delta` on `-ln delta`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<DeltaRow>,
    pub rho_eigen: f64,
    /// Log-slope of the linear reference norm over the second half of the
    /// longest run.
    pub rho_slope: f64,
    pub fit: Option<Fit>,
    /// `t_delta` nonincreasing in `delta`.
    pub monotone: bool,
    pub c0: f64,
    pub dt: f64,
}

/// Runs [`run_instability`] for every `delta` and fits `t_delta` against `-ln delta`.
pub fn delta_sweep(
    ev: &Evolver,
    mode: &MhdState,
    deltas: &[f64],
    c0: f64,
    horizon: f64,
    rho: f64,
    opts: &RunOptions,
) -> Result<(SweepSummary, Vec<InstabilityRun>)> {
    let runs = deltas.iter().map(|d| run_instability(ev, mode, *d, c0, horizon, rho, opts)).collect::<Result<Vec<_>>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) =
        runs.iter().filter_map(|r| r.t_delta.map(|t| (-r.delta.ln(), t))).unzip();
    let fit = (x.len() >= 2).then(|| {
        let (slope, intercept, r2) = crate::bloch::linear_fit(&x, &y);
        Fit { slope, intercept, r2 }
    });
    let mut by_delta: Vec<(f64, f64)> = runs.iter().map(|r| (r.delta, r.t_delta.unwrap_or(f64::INFINITY))).collect();
    by_delta.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = by_delta.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    let rho_slope = runs
        .iter()
        .max_by(|a, b| a.samples.len().cmp(&b.samples.len()))
        .map(|r| {
            let half = &r.samples[r.samples.len() / 2..];
            let (x, y): (Vec<f64>, Vec<f64>) = half.iter().map(|s| (s.t, s.linear_ref.ln())).unzip();
            if x.len() >= 2 { crate::bloch::linear_fit(&x, &y).0 } else { f64::NAN }
        })
        .unwrap_or(f64::NAN);
    let rows = runs.iter().map(|r| DeltaRow { delta: r.delta, t_delta: r.t_delta, t_hat: r.t_hat }).collect();
    Ok((SweepSummary { rows, rho_eigen: rho, rho_slope, fit, monotone, c0, dt: opts.dt }, runs))
}

/// Linear run of `mode`; returns the samples and the least-squares slope of
/// `ln ||U||` over `[t0, t1]`.
pub fn linear_growth(ev: &Evolver, mode: &MhdState, t1: f64, t0: f64, opts: &RunOptions) -> Result<(Vec<Sample>, f64)> {
    let mut s = mode.clone();
    s.t = 0.0;
    let mut samples = vec![Sample { t: 0.0, l2: s.norm_l2(), hs: ev.norm_hs(&s, opts.hs_order), linear_ref: s.norm_l2() }];
    while s.t < t1 - 1e-12 {
        s = ev.step(&s, opts.dt, opts.scheme, Terms::LINEAR)?;
        let l2 = s.norm_l2();
        samples.push(Sample { t: s.t, l2, hs: ev.norm_hs(&s, opts.hs_order), linear_ref: l2 });
    }
    let (x, y): (Vec<f64>, Vec<f64>) =
        samples.iter().filter(|p| p.t >= t0 - 1e-12).map(|p| (p.t, p.l2.ln())).unzip();
    let (slope, _, _) = crate::bloch::linear_fit(&x, &y);
    Ok((samples, slope))
}

/// Cell-level linearized momentum operator at Bloch wavevector `q`:
/// `u -> P(u x curl U_s + U_s x (i kappa x u)) - |kappa|^2 u / Re`.
pub struct FlowBlochOperator {
    torus: TorusSpec,
    r_e: f64,
    flow: Vec<(CVec3, CVec3)>,
    pairs: Vec<(u32, u32, u32)>,
    kappa: Vec<[f64; 3]>,
    diag: Vec<f64>,
}

impl FlowBlochOperator {
    pub fn assemble(flow: &FourierVectorField, r_e: f64, q: [f64; 3], k: usize) -> Result<Self> {
        if !(r_e.is_finite() && r_e > 0.0) {
            return Err(Error::Validation(format!("r_e must be positive, got {r_e}")));
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
        let kappa: Vec<[f64; 3]> =
            torus.wavevectors().map(|kv| { let a = torus.angular(kv); std::array::from_fn(|d| a[d] + q[d]) }).collect();
        let diag = kappa.iter().map(|q| -(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) / r_e).collect();
        let ft = &flow.torus;
        let flow = modes
            .into_iter()
            .map(|(k, v)| (v, crate::field::cross_re(&ft.angular(k), &v).map(|c| c * C64::i())))
            .collect();
        Ok(FlowBlochOperator { torus, r_e, flow, pairs, kappa, diag })
    }

    pub fn dim(&self) -> usize {
        3 * self.torus.modes()
    }

    pub fn r_e(&self) -> f64 {
        self.r_e
    }

    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        self.explicit(v, out);
        for (m, d) in self.diag.iter().enumerate() {
            for c in 0..3 {
                out[3 * m + c] += v[3 * m + c] * *d;
            }
        }
    }

    fn explicit(&self, v: &[C64], out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
        let mut w = linalg::zeros(v.len());
        for (m, kap) in self.kappa.iter().enumerate() {
            let c = crate::field::cross_re(kap, &[v[3 * m], v[3 * m + 1], v[3 * m + 2]]);
            for d in 0..3 {
                w[3 * m + d] = c[d] * C64::i();
            }
        }
        for &(o, s, f) in &self.pairs {
            let (o, s) = (3 * o as usize, 3 * s as usize);
            let (us, ws) = &self.flow[f as usize];
            let a = cross(&[v[s], v[s + 1], v[s + 2]], ws);
            let b = cross(us, &[w[s], w[s + 1], w[s + 2]]);
            for d in 0..3 {
                out[o + d] += a[d] + b[d];
            }
        }
        for (m, kap) in self.kappa.iter().enumerate() {
            let k2 = kap.iter().map(|x| x * x).sum::<f64>();
            if k2 == 0.0 {
                continue;
            }
            let dot = (out[3 * m] * kap[0] + out[3 * m + 1] * kap[1] + out[3 * m + 2] * kap[2]) / k2;
            for d in 0..3 {
                out[3 * m + d] -= dot * kap[d];
            }
        }
    }
}

/// Explicit part and diffusion diagonal of a cell-level linear operator.
trait Split {
    fn dim(&self) -> usize;
    fn diag(&self) -> &[f64];
    fn explicit(&self, v: &[C64], out: &mut [C64]);
}

impl Split for BlochOperator {
    fn dim(&self) -> usize {
        BlochOperator::dim(self)
    }
    fn diag(&self) -> &[f64] {
        self.diffusion()
    }
    fn explicit(&self, v: &[C64], out: &mut [C64]) {
        self.apply(v, out);
        for (m, d) in self.diffusion().iter().enumerate() {
            for c in 0..3 {
                out[3 * m + c] -= v[3 * m + c] * *d;
            }
        }
    }
}

impl Split for FlowBlochOperator {
    fn dim(&self) -> usize {
        FlowBlochOperator::dim(self)
    }
    fn diag(&self) -> &[f64] {
        &self.diag
    }
    fn explicit(&self, v: &[C64], out: &mut [C64]) {
        FlowBlochOperator::explicit(self, v, out)
    }
}

/// `e^{tau A} v` by integrating-factor RK4 with `steps` substeps.
fn propagate<S: Split>(op: &S, v: &[C64], tau: f64, steps: usize) -> Vec<C64> {
    let h = tau / steps as f64;
    let e: Vec<f64> = op.diag().iter().map(|d| (d * h).exp()).collect();
    let eh: Vec<f64> = op.diag().iter().map(|d| (d * h * 0.5).exp()).collect();
    let n = op.dim();
    let mut y = v.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (linalg::zeros(n), linalg::zeros(n), linalg::zeros(n), linalg::zeros(n));
    let mut tmp = linalg::zeros(n);
    for _ in 0..steps {
        op.explicit(&y, &mut k1);
        for j in 0..n {
            tmp[j] = eh[j / 3] * (y[j] + k1[j] * (0.5 * h));
        }
        op.explicit(&tmp, &mut k2);
        for j in 0..n {
            tmp[j] = eh[j / 3] * y[j] + k2[j] * (0.5 * h);
        }
        op.explicit(&tmp, &mut k3);
        for j in 0..n {
            tmp[j] = e[j / 3] * y[j] + eh[j / 3] * k3[j] * h;
        }
        op.explicit(&tmp, &mut k4);
        for j in 0..n {
            y[j] = e[j / 3] * y[j] + h / 6.0 * (e[j / 3] * k1[j] + 2.0 * eh[j / 3] * (k2[j] + k3[j]) + k4[j]);
        }
    }
    y
}

/// Dominant Ritz pair of `e^{tau A}` from `m` Arnoldi steps; returns
/// `(ln theta / tau, Ritz vector)`.
///
/// Modes with `kappa = 0` (the conserved mean) are removed from the space.
fn dominant_growth<S: Split>(op: &S, tau: f64, steps: usize, m: usize) -> (C64, Vec<C64>) {
    let n = op.dim();
    let mean: Vec<usize> = op.diag().iter().enumerate().filter(|(_, d)| **d == 0.0).map(|(i, _)| i).collect();
    let strip = |v: &mut [C64]| {
        for &i in &mean {
            v[3 * i..3 * i + 3].fill(C64::new(0.0, 0.0));
        }
    };
    let mut s: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut v0: Vec<C64> = (0..n).map(|_| C64::new(next(), next())).collect();
    strip(&mut v0);
    linalg::normalize(&mut v0);
    let mut basis = vec![v0];
    let mut h = nalgebra::DMatrix::<C64>::zeros(m + 1, m);
    let mut used = m;
    for j in 0..m {
        let mut w = propagate(op, &basis[j], tau, steps);
        strip(&mut w);
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c = linalg::dotc(b, &w);
                h[(i, j)] += c;
                linalg::axpy(-c, b, &mut w);
            }
        }
        let nw = linalg::norm(&w);
        h[(j + 1, j)] = C64::new(nw, 0.0);
        if nw < 1e-14 {
            used = j + 1;
            break;
        }
        linalg::scale(C64::new(1.0 / nw, 0.0), &mut w);
        basis.push(w);
    }
    let hm = h.view((0, 0), (used, used)).into_owned();
    let eig = nalgebra::linalg::Schur::new(hm.clone()).eigenvalues().unwrap_or_else(|| nalgebra::DVector::zeros(used));
    let theta = eig.iter().cloned().fold(C64::new(0.0, 0.0), |a, b| if b.norm() > a.norm() { b } else { a });
    // Ritz vector by inverse iteration on the small Hessenberg matrix
    let shifted = &hm - nalgebra::DMatrix::<C64>::identity(used, used) * (theta * C64::new(1.0 + 1e-10, 1e-10));
    let lu = shifted.lu();
    let mut y = nalgebra::DVector::<C64>::from_element(used, C64::new(1.0, 0.0));
    for _ in 0..3 {
        if let Some(z) = lu.solve(&y) {
            let nz = z.norm();
            y = z / C64::new(nz, 0.0);
        }
    }
    let mut x = linalg::zeros(n);
    for (i, b) in basis.iter().take(used).enumerate() {
        linalg::axpy(y[i], b, &mut x);
    }
    linalg::normalize(&mut x);
    let mu = if theta.norm() > 0.0 { theta.ln() / tau } else { C64::new(f64::NEG_INFINITY, 0.0) };
    (mu, x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassGrowth {
    pub gen: [i64; 3],
    pub induction: [f64; 2],
    pub flow: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho: f64,
    /// "induction" or "flow".
    pub block: String,
    /// Bloch index attaining the maximum.
    pub gen: [i64; 3],
    pub mu: [f64; 2],
    pub classes: Vec<ClassGrowth>,
}

/// Spectral abscissa of the linearized operator over every Bloch class of the
/// big torus `N`. Both blocks are scanned by Arnoldi on the propagator; the
/// best induction eigenvalue is refined by shift-invert iteration.
pub fn estimate_rho(flow: &FourierVectorField, n: [i64; 3], k: usize, r_m: f64, r_e: f64) -> Result<RhoEstimate> {
    let cell = flow.torus.periods;
    let u_inf = flow.nonzero().iter().map(|(_, v)| v.iter().map(|c| c.norm()).sum::<f64>()).sum::<f64>();
    let kmax = (0..3).map(|i| 2.0 * PI / cell[i] * (k as f64 + 1.0)).fold(0.0, f64::max);
    let tau = 1.0;
    let steps = ((tau * u_inf * kmax).ceil() as usize).clamp(4, 400);
    let m = 20;
    let mut classes = Vec::new();
    let mut best: Option<(f64, String, [i64; 3], C64, Option<Vec<C64>>)> = None;
    let mut seen = std::collections::HashSet::new();
    for j0 in 0..n[0] {
        for j1 in 0..n[1] {
            for j2 in 0..n[2] {
                let j = [j0, j1, j2];
                let neg: [i64; 3] = std::array::from_fn(|i| (-j[i]).rem_euclid(n[i]));
                if seen.contains(&neg) {
                    continue;
                }
                seen.insert(j);
                let q: [f64; 3] = std::array::from_fn(|i| 2.0 * PI / cell[i] * centered(j[i], n[i]) as f64 / n[i] as f64);
                let bop = BlochOperator::assemble(flow, r_m, q, 1.0, k)?;
                let (mb, vb) = dominant_growth(&bop, tau, steps, m);
                let fop = FlowBlochOperator::assemble(flow, r_e, q, k)?;
                let (mf, _) = dominant_growth(&fop, tau, steps, m);
                classes.push(ClassGrowth { gen: j, induction: [mb.re, mb.im], flow: [mf.re, mf.im] });
                for (mu, block, vec) in [(mb, "induction", Some(vb)), (mf, "flow", None)] {
                    if best.as_ref().map_or(true, |b| mu.re > b.0 + 1e-9) {
                        best = Some((mu.re, block.to_string(), j, mu, vec));
                    }
                }
            }
        }
    }
    let (mut rho, block, gen, mut mu, vec) = best.expect("at least one Bloch class");
    if let Some(v) = vec {
        let q: [f64; 3] = std::array::from_fn(|i| 2.0 * PI / cell[i] * centered(gen[i], n[i]) as f64 / n[i] as f64);
        let bop = BlochOperator::assemble(flow, r_m, q, 1.0, k)?;
        if let Ok(r) = eigensolve_near(&bop, mu, Some(&v), EigenOptions::default()) {
            if (r.mu - mu).norm() < 0.05 * mu.norm().max(0.05) {
                mu = r.mu;
                rho = r.mu.re;
            }
        }
    }
    Ok(RhoEstimate { rho, block, gen, mu: [mu.re, mu.im], classes })
}

/// The dominant induction eigenpair at Bloch index `gen` of the big torus,
/// as a unit-norm real state `(0, b_L + c.c.)` on `layout`.
pub fn induction_mode(flow: &FourierVectorField, layout: &ClassLayout, r_m: f64, guess: C64) -> Result<(MhdState, C64)> {
    let q = layout.generator_q();
    let op = BlochOperator::assemble(flow, r_m, q, 1.0, layout.k)?;
    let u_inf = flow.nonzero().iter().map(|(_, v)| v.iter().map(|c| c.norm()).sum::<f64>()).sum::<f64>();
    let kmax = (0..3).map(|i| 2.0 * PI / layout.cell[i] * (layout.k as f64 + 1.0)).fold(0.0, f64::max);
    let steps = ((u_inf * kmax).ceil() as usize).clamp(4, 400);
    let (_, start) = dominant_growth(&op, 1.0, steps, 30);
    let r = eigensolve_near(&op, guess, Some(&start), EigenOptions::default())?;
    let mut b = layout.real_mode_from_bloch(&op, &r.vector)?;
    layout.symmetrize(&mut b);
    let nb = linalg::norm(&b);
    if nb == 0.0 {
        return Err(Error::Validation("Bloch mode vanishes on the layout".into()));
    }
    linalg::scale(C64::new(1.0 / nb, 0.0), &mut b);
    Ok((MhdState { u: linalg::zeros(b.len()), b, t: 0.0 }, r.mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::large_scale::Ratio;

    fn xi(p: [(i64, i64); 3]) -> Xi {
        Xi { ratios: p.map(|(a, b)| Ratio { num: a, den: b }), periods: [1.0; 3] }
    }

    #[test]
    fn big_torus_examples() {
        let cell = TorusSpec::unit(2);
        assert_eq!(make_big_torus(&cell, &xi([(1, 1); 3]), 0.25).unwrap().periods, [4.0; 3]);
        assert_eq!(make_big_torus(&cell, &xi([(1, 2), (1, 1), (1, 1)]), 0.25).unwrap().periods, [8.0, 4.0, 4.0]);
        let r = make_big_torus(&cell, &xi([(2, 3), (1, 1), (1, 1)]), 1.0 / 3.0);
        assert!(matches!(r, Err(Error::NonIntegerPeriod(_))));
    }

    #[test]
    fn layout_classes_and_conjugation() {
        let l = ClassLayout::new([1.0; 3], [4, 4, 4], [1, 1, 1], 2).unwrap();
        assert_eq!(l.n_c, 4);
        // classes 0, 1, 3 have boxes [-2, 2]^3; class 2 (offset 1/2) [-3, 2]^3
        assert_eq!(l.len(), 3 * 125 + 216);
        for i in 0..l.len() {
            let m = l.big_wavevector(i);
            let p = l.big_wavevector(l.conj[i]);
            assert_eq!(m.map(|x| -x), p);
            assert!(m.iter().all(|x| x.abs() <= 10));
        }
        let l2 = ClassLayout::new([1.0; 3], [8, 4, 4], [1, 1, 1], 1).unwrap();
        assert_eq!(l2.n_c, 8);
        let l0 = ClassLayout::new([1.0; 3], [3, 3, 3], [0, 0, 0], 1).unwrap();
        assert_eq!(l0.n_c, 1);
        assert_eq!(l0.len(), 27);
    }

    #[test]
    fn infer_recovers_generator() {
        let l = ClassLayout::new([1.0; 3], [4, 2, 2], [1, 1, 0], 1).unwrap();
        let mut v = vec![C64::new(0.0, 0.0); 3 * l.len()];
        let i = l.index(1, [0, 0, 0]).unwrap();
        v[3 * i] = C64::new(1.0, 0.0);
        l.symmetrize(&mut v);
        let f = l.to_big_field(&v).unwrap();
        let m = ClassLayout::infer([1.0; 3], 1, &f).unwrap();
        assert_eq!(m.n_c, 4);
        assert_eq!(m.from_big_field(&f).unwrap().len(), 3 * l.len());
    }

    #[test]
    fn big_field_roundtrip() {
        let l = ClassLayout::new([1.0; 3], [2, 2, 2], [1, 0, 1], 1).unwrap();
        let v: Vec<C64> = (0..3 * l.len()).map(|i| C64::new(i as f64, -(i as f64) * 0.5)).collect();
        let f = l.to_big_field(&v).unwrap();
        assert_eq!(l.from_big_field(&f).unwrap(), v);
    }
}
