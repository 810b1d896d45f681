//! End-to-end run: perturb, alpha (with cross-check), predict, Bloch sweep,
//! growth-rate scan and the nonlinear delta sweep, with every intermediate
//! artifact written to the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alpha::{alpha_direct, alpha_series, estimate_rm0, AlphaRecord, InductionSystem};
use crate::bloch::{kernel_check, sweep_with_rate, EigenOptions, SweepReport};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::evolution::{
    delta_sweep, estimate_rho, induction_mode, ClassLayout, Evolver, RhoEstimate, RunOptions, Scheme, SweepSummary,
};
use crate::field::{FourierVectorField, C64};
use crate::io;
use crate::large_scale::{find_xi, ModeRecord};
use crate::perturbation::choose_deltas;
use crate::presets::Preset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// A number, or the string `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrAuto {
    Auto(Auto),
    Value(f64),
}

impl OrAuto {
    pub fn resolve(self, auto: f64) -> f64 {
        match self {
            OrAuto::Auto(_) => auto,
            OrAuto::Value(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Preset name (`zero`, `abc-like`, `vfields(j)`) or path to a field file.
    pub flow: String,
    /// Skip the perturbation stage and use the flow as given.
    pub perturb: bool,
    pub j: usize,
    pub gap: f64,
    /// `"auto"` is `R_m^0 / 4`.
    pub r_m: OrAuto,
    pub r_e: f64,
    /// Truncation for alpha and the Bloch sweep.
    pub k: usize,
    pub q_max: u32,
    pub series_terms: usize,
    /// Relative Frobenius tolerance of the series/direct cross-check.
    pub series_tolerance: f64,
    pub eps_list: Vec<f64>,
    /// Truncation of the evolution runs.
    pub k_evolve: usize,
    /// Big torus as multiples of the flow cell.
    pub evolve_torus: [i64; 3],
    pub delta_list: Vec<f64>,
    /// `"auto"` is `0.1 ||U||_L2`.
    pub c0: OrAuto,
    pub horizon: f64,
    /// `"auto"` is the advective bound.
    pub dt: OrAuto,
    pub scheme: Scheme,
    pub hs_order: f64,
    pub sample_every: usize,
    pub output_dir: PathBuf,
    /// Reserved; nothing in the pipeline is random.
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            flow: "abc-like".into(),
            perturb: true,
            j: 1,
            gap: 0.02,
            r_m: OrAuto::Value(3.0),
            r_e: 0.5,
            k: 8,
            q_max: 8,
            series_terms: 12,
            series_tolerance: 1e-6,
            eps_list: vec![0.125, 0.0625, 0.03125, 0.015625],
            k_evolve: 5,
            evolve_torus: [4, 4, 4],
            delta_list: vec![1e-3, 1e-4, 1e-5, 1e-6],
            c0: OrAuto::Auto(Auto::Auto),
            horizon: 400.0,
            dt: OrAuto::Auto(Auto::Auto),
            scheme: Scheme::IfRk2,
            hs_order: 2.51,
            sample_every: 10,
            output_dir: PathBuf::from("pipeline-out"),
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if !(self.gap > 0.0) {
            return bad("gap must be positive");
        }
        if let OrAuto::Value(r) = self.r_m {
            if !(r > 0.0 && r.is_finite()) {
                return bad("r_m must be positive");
            }
        }
        if !(self.r_e > 0.0 && self.r_e.is_finite()) {
            return bad("r_e must be positive");
        }
        if self.k == 0 || self.k_evolve == 0 || self.q_max == 0 || self.series_terms == 0 {
            return bad("k, k_evolve, q_max and series_terms must be positive");
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("eps_list entries must lie in (0, 1]");
        }
        if self.delta_list.is_empty() || self.delta_list.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("delta_list entries must be positive");
        }
        if self.evolve_torus.iter().any(|n| *n < 1) {
            return bad("evolve_torus entries must be positive integers");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        for v in [self.c0, self.dt] {
            if let OrAuto::Value(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return bad("c0 and dt must be positive");
                }
            }
        }
        if !self.output_dir.as_os_str().is_empty() && self.output_dir.is_file() {
            return bad("output_dir is a file");
        }
        Ok(())
    }

    /// Preset name or field file.
    pub fn load_flow(&self) -> Result<FourierVectorField> {
        match self.flow.parse::<Preset>() {
            Ok(p) => p.build(self.k.max(p.band())),
            Err(_) => {
                let path = Path::new(&self.flow);
                if !path.exists() {
                    return Err(Error::Validation(format!("flow `{}` is neither a preset nor an existing file", self.flow)));
                }
                io::read_field(path)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub target: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaCheck {
    pub r_m: f64,
    pub rm0: f64,
    pub direct: AlphaRecord,
    pub series: AlphaRecord,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelRecord {
    pub sigma_min_fluct: f64,
    pub near_zero: usize,
    pub threshold: f64,
    pub residuals: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub r_m: f64,
    pub rm0: f64,
    pub xi: [f64; 3],
    pub predicted_rate: [f64; 2],
    pub eps_list: Vec<f64>,
    pub rho: f64,
    pub rho_block: String,
    pub seed_class: [i64; 3],
    pub fit_slope: Option<f64>,
    pub fit_r2: Option<f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Rounds every `eps` to `1/n` with `n` a multiple of `m`.
pub fn adjust_eps(eps: &[f64], m: i64) -> Vec<f64> {
    let m = m.max(1);
    let mut out: Vec<f64> = eps
        .iter()
        .map(|e| {
            let n = ((1.0 / e) / m as f64).round().max(1.0) as i64 * m;
            1.0 / n as f64
        })
        .collect();
    out.dedup();
    out
}

fn rel_frobenius(a: &nalgebra::Matrix3<f64>, b: &nalgebra::Matrix3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Runs every stage, writing artifacts into `cfg.output_dir`. Returns the
/// report; failed checks are reported, not raised.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let tol = &cfg.tolerances;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;

    let base = stage("flow", cfg.load_flow())?;
    let flow = if cfg.perturb {
        let plan = stage("perturb", choose_deltas(&base, cfg.j, cfg.gap))?;
        io::write_json(&out.join("perturb.json"), &plan.record(cfg.hs_order))?;
        plan.perturbed
    } else {
        base
    };
    let k = cfg.k.max(flow.torus.trunc);
    let flow = flow.retruncate(k);
    io::write_field(&out.join("flow.json"), &flow)?;

    // alpha
    let sys = stage("alpha", InductionSystem::new(&flow, k))?;
    let rm0 = stage("alpha", estimate_rm0(&sys))?.rm0;
    let r_m = cfg.r_m.resolve(rm0 / 4.0);
    let alpha = stage("alpha", alpha_direct(&sys, r_m, tol))?;
    io::write_json(&out.join("alpha.json"), &AlphaRecord::from(&alpha))?;
    let r_check = r_m.min(rm0 / 4.0);
    let direct_check = if r_check == r_m { alpha.clone() } else { stage("alpha", alpha_direct(&sys, r_check, tol))? };
    let series = stage("alpha", alpha_series(&sys, r_check, cfg.series_terms, tol))?;
    let rel = rel_frobenius(&series.alpha, &direct_check.alpha);
    io::write_json(
        &out.join("alpha_check.json"),
        &AlphaCheck { r_m: r_check, rm0, direct: (&direct_check).into(), series: (&series).into(), relative_error: rel },
    )?;
    let mut checks = vec![Check {
        name: "alpha_series_vs_direct".into(),
        pass: rel < cfg.series_tolerance,
        value: rel,
        target: format!("< {:e}", cfg.series_tolerance),
    }];

    // predict
    let mode = stage("predict", find_xi(&alpha.alpha, &flow.torus, cfg.q_max))?;
    io::write_json(&out.join("mode.json"), &ModeRecord::from(&mode))?;
    checks.push(Check { name: "predicted_growth".into(), pass: mode.rate.re > 0.0, value: mode.rate.re, target: "> 0".into() });

    // bloch
    let kc = stage("bloch", kernel_check(&flow, r_m, k, 1e-6))?;
    io::write_json(
        &out.join("kernel.json"),
        &KernelRecord { sigma_min_fluct: kc.sigma_min_fluct, near_zero: kc.near_zero, threshold: kc.threshold, residuals: kc.residuals },
    )?;
    checks.push(Check {
        name: "kernel_dimension".into(),
        pass: kc.near_zero == 3,
        value: kc.near_zero as f64,
        target: "== 3".into(),
    });
    let lcm_num = mode
        .xi_rational
        .map(|x| x.ratios.iter().fold(1i64, |a, r| a / gcd(a, r.num) * r.num))
        .unwrap_or(1);
    let eps_list = adjust_eps(&cfg.eps_list, lcm_num);
    let sweep: SweepReport =
        stage("bloch", sweep_with_rate(&flow, r_m, mode.xi, k, &eps_list, mode.rate, EigenOptions::default()))?;
    io::write_json(&out.join("bloch_sweep.json"), &sweep)?;
    std::fs::write(out.join("bloch_sweep.csv"), sweep.to_csv())?;
    checks.push(Check {
        name: "bloch_growing".into(),
        pass: sweep.all_growing,
        value: sweep.rows.iter().map(|r| r.mu[0]).fold(f64::INFINITY, f64::min),
        target: "min Re mu > 0".into(),
    });
    if sweep.rows.len() >= 2 {
        checks.push(Check {
            name: "bloch_convergence".into(),
            pass: sweep.slope > 0.0,
            value: sweep.slope,
            target: "> 0".into(),
        });
    }

    // growth-rate scan on the big torus
    let ke = cfg.k_evolve;
    if flow.nonzero().iter().any(|(kv, _)| kv.iter().any(|x| x.unsigned_abs() as usize > ke)) {
        return Err(Error::Validation(format!("flow does not fit in k_evolve = {ke}")).in_stage("rho"));
    }
    let small = flow.retruncate(ke);
    let rho: RhoEstimate = stage("rho", estimate_rho(&small, cfg.evolve_torus, ke, r_m, cfg.r_e))?;
    io::write_json(&out.join("rho.json"), &rho)?;
    checks.push(Check { name: "rho_positive".into(), pass: rho.rho > 0.0, value: rho.rho, target: "> 0".into() });

    // evolution: seed with the fastest induction class
    let seed = rho
        .classes
        .iter()
        .fold(None::<&crate::evolution::ClassGrowth>, |b, c| match b {
            Some(b) if b.induction[0] >= c.induction[0] - 1e-9 => Some(b),
            _ => Some(c),
        })
        .expect("at least one class");
    let seed_gen = if rho.block == "induction" { rho.gen } else { seed.gen };
    let guess = if rho.block == "induction" { C64::new(rho.mu[0], rho.mu[1]) } else { C64::new(seed.induction[0], seed.induction[1]) };
    let layout = stage("evolve", ClassLayout::new(small.torus.periods, cfg.evolve_torus, seed_gen, ke))?;
    let (mode_state, mu) = stage("evolve", induction_mode(&small, &layout, r_m, guess))?;
    let ev = stage("evolve", Evolver::new(&small, layout, cfg.r_e, r_m))?;
    let dt = cfg.dt.resolve(ev.cfl_bound());
    let c0 = cfg.c0.resolve(0.1 * small.norm_l2());
    let opts = RunOptions { dt, scheme: cfg.scheme, hs_order: cfg.hs_order, linear_only: false, sample_every: cfg.sample_every };
    let (summary, runs): (SweepSummary, _) =
        stage("evolve", delta_sweep(&ev, &mode_state, &cfg.delta_list, c0, cfg.horizon, rho.rho.max(mu.re), &opts))?;
    for (i, r) in runs.iter().enumerate() {
        std::fs::write(out.join(format!("evolve_run_{i}.csv")), r.to_csv())?;
    }
    io::write_json(&out.join("evolve_summary.json"), &summary)?;
    let fit = summary.fit;
    checks.push(Check {
        name: "t_delta_fit_r2".into(),
        pass: fit.is_some_and(|f| f.r2 >= 0.99),
        value: fit.map_or(f64::NAN, |f| f.r2),
        target: ">= 0.99".into(),
    });
    let ratio = fit.map_or(f64::NAN, |f| f.slope * rho.rho);
    checks.push(Check {
        name: "t_delta_slope_vs_rho".into(),
        pass: (ratio - 1.0).abs() <= 0.1,
        value: ratio,
        target: "slope * rho in [0.9, 1.1]".into(),
    });
    checks.push(Check {
        name: "t_delta_monotone".into(),
        pass: summary.monotone,
        value: if summary.monotone { 1.0 } else { 0.0 },
        target: "nonincreasing in delta".into(),
    });

    let report = PipelineReport {
        r_m,
        rm0,
        xi: mode.xi,
        predicted_rate: [mode.rate.re, mode.rate.im],
        eps_list,
        rho: rho.rho,
        rho_block: rho.block.clone(),
        seed_class: seed_gen,
        fit_slope: fit.map(|f| f.slope),
        fit_r2: fit.map(|f| f.r2),
        passed: checks.iter().all(|c| c.pass),
        checks,
    };
    io::write_json(&out.join("summary.json"), &report)?;
    Ok(report)
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    (a, b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_unknown_keys() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
        assert!(PipelineConfig::from_toml("flow = \"zero\"\nbogus = 1\n").is_err());
        let c = PipelineConfig::from_toml("r_m = \"auto\"\nc0 = 0.5\n").unwrap();
        assert_eq!(c.r_m, OrAuto::Auto(Auto::Auto));
        assert_eq!(c.c0, OrAuto::Value(0.5));
        assert!(PipelineConfig::from_toml("gap = -1.0\n").is_err());
    }

    #[test]
    fn eps_rounding() {
        assert_eq!(adjust_eps(&[0.25, 0.1], 1), vec![0.25, 0.1]);
        assert_eq!(adjust_eps(&[0.25, 0.1], 3), vec![1.0 / 3.0, 1.0 / 9.0]);
    }
}
