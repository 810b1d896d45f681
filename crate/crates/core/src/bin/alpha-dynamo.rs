use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use alpha_dynamo::alpha::{alpha2, alpha_direct, alpha_series, AlphaDiagnostics, AlphaMethod, AlphaRecord, AlphaTensor, InductionSystem};
use alpha_dynamo::bloch::{sweep_with_rate, EigenOptions};
use alpha_dynamo::evolution::{
    delta_sweep, estimate_rho, induction_mode, ClassLayout, Evolver, MhdState, RunOptions, Scheme,
};
use alpha_dynamo::field::FourierVectorField;
use alpha_dynamo::io;
use alpha_dynamo::presets::Preset;
use alpha_dynamo::large_scale::{find_xi, predict_mode, ModeRecord, Ratio, Xi};
use alpha_dynamo::linalg;
use alpha_dynamo::perturbation::{choose_deltas, perturb};
use alpha_dynamo::pipeline::{run_pipeline, PipelineConfig};
use alpha_dynamo::{Error, Result, Tolerances, C64};

#[derive(Parser)]
#[command(name = "alpha-dynamo", version, about = "Alpha-effect dynamo instability toolkit")]
struct Cli {
    /// TOML file whose keys override the corresponding flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Alpha tensor of a flow.
    Alpha(AlphaArgs),
    /// Certified perturbation with a nondegenerate alpha2.
    Perturb(PerturbArgs),
    /// Large-scale growing mode from an alpha tensor.
    Predict(PredictArgs),
    /// Bloch eigenvalue continuation over epsilon.
    BlochSweep(BlochArgs),
    /// Nonlinear instability runs on a big torus.
    Evolve(EvolveArgs),
    /// Full chain with artifacts and checks.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Direct,
    Series,
    Alpha2,
}

#[derive(Args)]
struct AlphaArgs {
    /// Preset name (`zero`, `abc-like`, `vfields(j)`) or field file
    #[arg(long)]
    flow: String,
    #[arg(long)]
    rm: Option<f64>,
    #[arg(long, value_enum, default_value = "direct")]
    method: Method,
    #[arg(long, default_value_t = 12)]
    terms: usize,
    #[arg(long)]
    trunc: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    /// Preset name (`zero`, `abc-like`, `vfields(j)`) or field file
    #[arg(long)]
    flow: String,
    #[arg(long)]
    j: usize,
    #[arg(long)]
    gap: Option<f64>,
    /// Explicit deltas `d1,d2,d3` instead of a gap search.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    deltas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2.51)]
    hs_order: f64,
    /// Also write the perturbed flow here.
    #[arg(long)]
    flow_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long, default_value_t = 8)]
    qmax: u32,
    /// Cell periods `T1,T2,T3` (default 2 pi each).
    #[arg(long, value_delimiter = ',', num_args = 3)]
    periods: Option<Vec<f64>>,
    /// Fixed direction `p/q,p/q,p/q` instead of the scan.
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BlochArgs {
    /// Preset name (`zero`, `abc-like`, `vfields(j)`) or field file
    #[arg(long)]
    flow: String,
    #[arg(long)]
    rm: f64,
    /// `p/q,p/q,p/q` in units of the cell's fundamental wavenumbers.
    #[arg(long)]
    xi: String,
    #[arg(long = "K", default_value_t = 8)]
    k: usize,
    /// `2^-a..2^-b` or a comma-separated list.
    #[arg(long, default_value = "2^-4..2^-9")]
    eps: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    /// Preset name (`zero`, `abc-like`, `vfields(j)`) or field file
    #[arg(long)]
    flow: String,
    /// Field file of `b` on the big torus, or `auto` for the fastest class.
    #[arg(long, default_value = "auto")]
    mode: String,
    /// Big torus in cell multiples (with `--mode auto`).
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [4, 4, 4])]
    torus: Vec<i64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-4, 1e-5, 1e-6])]
    delta: Vec<f64>,
    #[arg(long, default_value = "auto")]
    c0: String,
    #[arg(long, default_value_t = 400.0)]
    horizon: f64,
    #[arg(long, default_value = "auto")]
    dt: String,
    #[arg(long)]
    linear_only: bool,
    #[arg(long, default_value_t = 3.0)]
    rm: f64,
    #[arg(long, default_value_t = 0.5)]
    re: f64,
    #[arg(long = "K", default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "if-rk2")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 2.51)]
    hs_order: f64,
    #[arg(long, default_value_t = 10)]
    sample_every: usize,
    /// Output directory for the per-run CSV files and the summary.
    #[arg(long, default_value = "evolve-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    IfRk2,
    IfRk4,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_ratio(s: &str) -> Result<Ratio> {
    let bad = || Error::Validation(format!("cannot parse rational `{s}`"));
    let (p, q) = match s.trim().split_once('/') {
        Some((p, q)) => (p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?),
        None => (s.trim().parse().map_err(|_| bad())?, 1),
    };
    Ratio::new(p, q)
}

fn parse_xi(s: &str) -> Result<[Ratio; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Validation(format!("xi needs three components, got `{s}`")));
    }
    Ok([parse_ratio(parts[0])?, parse_ratio(parts[1])?, parse_ratio(parts[2])?])
}

fn parse_eps(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Validation(format!("cannot parse eps list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let exp = |t: &str| -> Result<i32> { t.trim().strip_prefix("2^").ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let (a, b) = (exp(a)?, exp(b)?);
        let range: Vec<i32> = if a >= b { (b..=a).rev().collect() } else { (a..=b).collect() };
        return Ok(range.into_iter().map(|e| 2f64.powi(e)).collect());
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn parse_or_auto(s: &str, auto: f64) -> Result<f64> {
    if s == "auto" {
        return Ok(auto);
    }
    s.parse().map_err(|_| Error::Validation(format!("expected a number or `auto`, got `{s}`")))
}

/// Overrides from a TOML table: only keys present in the file apply.
struct Overrides(toml::Table);

impl Overrides {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Overrides(toml::Table::new())),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                // validates key names and types against the pipeline schema
                PipelineConfig::from_toml(&text)?;
                Ok(Overrides(text.parse().map_err(|e| Error::Validation(format!("config: {e}")))?))
            }
        }
    }

    fn f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
    }

    fn usize(&self, key: &str) -> Option<usize> {
        self.0.get(key).and_then(|v| v.as_integer()).map(|i| i as usize)
    }

    fn list(&self, key: &str) -> Option<Vec<f64>> {
        self.0.get(key).and_then(|v| v.as_array()).map(|a| {
            a.iter().filter_map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64))).collect()
        })
    }

    fn string(&self, key: &str) -> Option<String> {
        self.0.get(key).map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
    }

    fn tolerances(&self) -> Result<Tolerances> {
        match self.0.get("tolerances") {
            None => Ok(Tolerances::default()),
            Some(v) => v.clone().try_into().map_err(|e| Error::Validation(format!("tolerances: {e}"))),
        }
    }
}

/// Presets are built at `trunc` (at least their own band); files keep their truncation.
fn load_flow(spec: &str, trunc: Option<usize>) -> Result<FourierVectorField> {
    match spec.parse::<Preset>() {
        Ok(p) => p.build(trunc.unwrap_or(0).max(p.band())),
        Err(_) => io::read_field(Path::new(spec)),
    }
}

fn cmd_alpha(a: AlphaArgs, ov: &Overrides) -> Result<()> {
    let flow = load_flow(&a.flow, ov.usize("k").or(a.trunc))?;
    let trunc = ov.usize("k").or(a.trunc).unwrap_or(flow.torus.trunc);
    let tol = ov.tolerances()?;
    let rm_auto = || -> Result<f64> { Ok(alpha_dynamo::alpha::estimate_rm0(&InductionSystem::new(&flow, trunc)?)?.rm0 / 4.0) };
    let rm = match ov.f64("r_m").or(a.rm) {
        Some(r) => r,
        None => rm_auto()?,
    };
    let terms = ov.usize("series_terms").unwrap_or(a.terms);
    let t: AlphaTensor = match a.method {
        Method::Alpha2 => AlphaTensor::new(alpha2(&flow), rm, AlphaMethod::Alpha2, AlphaDiagnostics::default()),
        Method::Direct => alpha_direct(&InductionSystem::new(&flow, trunc)?, rm, &tol)?,
        Method::Series => alpha_series(&InductionSystem::new(&flow, trunc)?, rm, terms, &tol)?,
    };
    emit(a.out.as_deref(), &io::to_json(&AlphaRecord::from(&t))?)
}

fn cmd_perturb(a: PerturbArgs, ov: &Overrides) -> Result<()> {
    let j = ov.usize("j").unwrap_or(a.j);
    let flow = load_flow(&a.flow, Some(j + 3))?;
    let hs = ov.f64("hs_order").unwrap_or(a.hs_order);
    let plan = match (a.deltas, ov.f64("gap").or(a.gap)) {
        (Some(d), _) => perturb(&flow, j, [d[0], d[1], d[2]])?,
        (None, Some(g)) => choose_deltas(&flow, j, g)?,
        (None, None) => return Err(Error::Validation("give --gap or --deltas".into())),
    };
    if let Some(p) = &a.flow_out {
        io::write_field(p, &plan.perturbed)?;
    }
    emit(a.out.as_deref(), &io::to_json(&plan.record(hs))?)
}

fn cmd_predict(a: PredictArgs, ov: &Overrides) -> Result<()> {
    let rec: AlphaRecord = io::read_json(&a.alpha)?;
    let tensor = AlphaTensor::from(rec);
    let periods = match a.periods {
        Some(p) => [p[0], p[1], p[2]],
        None => [2.0 * std::f64::consts::PI; 3],
    };
    let torus = alpha_dynamo::TorusSpec::new(periods, 1)?;
    let qmax = ov.usize("q_max").map(|q| q as u32).unwrap_or(a.qmax);
    let mode = match &a.xi {
        Some(s) => predict_mode(&tensor.alpha, &Xi::new(parse_xi(s)?, &torus))?,
        None => find_xi(&tensor.alpha, &torus, qmax)?,
    };
    emit(a.out.as_deref(), &io::to_json(&ModeRecord::from(&mode))?)
}

fn cmd_bloch(a: BlochArgs, ov: &Overrides) -> Result<()> {
    let rm = ov.f64("r_m").unwrap_or(a.rm);
    let k = ov.usize("k").unwrap_or(a.k);
    let flow = load_flow(&a.flow, Some(k))?;
    let eps = match ov.list("eps_list") {
        Some(l) => l,
        None => parse_eps(&a.eps)?,
    };
    let xi = Xi::new(parse_xi(&a.xi)?, &flow.torus).value();
    let sys = InductionSystem::new(&flow, k)?;
    let alpha = alpha_direct(&sys, rm, &ov.tolerances()?)?;
    let rate = alpha_dynamo::bloch::predicted_rate(&alpha.alpha, xi)?;
    let report = sweep_with_rate(&flow, rm, xi, k, &eps, rate, EigenOptions::default())?;
    emit(a.out.as_deref(), &report.to_csv())
}

fn cmd_evolve(a: EvolveArgs, ov: &Overrides) -> Result<()> {
    let k = ov.usize("k_evolve").unwrap_or(a.k);
    let flow = load_flow(&a.flow, Some(k))?;
    let rm = ov.f64("r_m").unwrap_or(a.rm);
    let re = ov.f64("r_e").unwrap_or(a.re);
    let flow = flow.retruncate(k.max(1));
    let (layout, mode, rho) = if a.mode == "auto" {
        let n = match ov.list("evolve_torus") {
            Some(l) if l.len() == 3 => [l[0] as i64, l[1] as i64, l[2] as i64],
            _ => [a.torus[0], a.torus[1], a.torus[2]],
        };
        let est = estimate_rho(&flow, n, k, rm, re)?;
        let layout = ClassLayout::new(flow.torus.periods, n, est.gen, k)?;
        let (mode, mu) = induction_mode(&flow, &layout, rm, C64::new(est.mu[0], est.mu[1]))?;
        std::fs::create_dir_all(&a.out)?;
        io::write_json(&a.out.join("rho.json"), &est)?;
        (layout, mode, est.rho.max(mu.re))
    } else {
        let b = io::read_field(Path::new(&a.mode))?;
        let layout = ClassLayout::infer(flow.torus.periods, k, &b)?;
        let mut bv = layout.from_big_field(&b)?;
        let nb = linalg::norm(&bv);
        if nb == 0.0 {
            return Err(Error::Validation("mode file is zero".into()));
        }
        linalg::scale(C64::new(1.0 / nb, 0.0), &mut bv);
        let est = estimate_rho(&flow, layout.n, k, rm, re)?;
        (layout.clone(), MhdState { u: linalg::zeros(bv.len()), b: bv, t: 0.0 }, est.rho)
    };
    let ev = Evolver::new(&flow, layout, re, rm)?;
    let dt = parse_or_auto(&ov.string("dt").unwrap_or(a.dt), ev.cfl_bound())?;
    if dt > ev.cfl_bound() {
        eprintln!("warning: {}", Error::CflViolation { dt, bound: ev.cfl_bound() });
    }
    let c0 = parse_or_auto(&ov.string("c0").unwrap_or(a.c0), 0.1 * flow.norm_l2())?;
    let scheme = match a.scheme {
        SchemeArg::IfRk2 => Scheme::IfRk2,
        SchemeArg::IfRk4 => Scheme::IfRk4,
    };
    let opts = RunOptions {
        dt,
        scheme,
        hs_order: ov.f64("hs_order").unwrap_or(a.hs_order),
        linear_only: a.linear_only,
        sample_every: ov.usize("sample_every").unwrap_or(a.sample_every),
    };
    let deltas = ov.list("delta_list").unwrap_or(a.delta);
    let horizon = ov.f64("horizon").unwrap_or(a.horizon);
    let (summary, runs) = delta_sweep(&ev, &mode, &deltas, c0, horizon, rho, &opts)?;
    std::fs::create_dir_all(&a.out)?;
    for (i, r) in runs.iter().enumerate() {
        std::fs::write(a.out.join(format!("run_{i}.csv")), r.to_csv())?;
    }
    let text = io::to_json(&summary)?;
    std::fs::write(a.out.join("summary.json"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs, config: Option<&Path>) -> Result<bool> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    let report = run_pipeline(&cfg)?;
    for c in &report.checks {
        println!("{} {} value={} target {}", if c.pass { "PASS" } else { "FAIL" }, c.name, io::fmt17(c.value), c.target);
    }
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<bool> {
    let ov = match &cli.cmd {
        Cmd::Pipeline(_) => Overrides(toml::Table::new()),
        _ => Overrides::load(cli.config.as_deref())?,
    };
    match cli.cmd {
        Cmd::Alpha(a) => cmd_alpha(a, &ov).map(|_| true),
        Cmd::Perturb(a) => cmd_perturb(a, &ov).map(|_| true),
        Cmd::Predict(a) => cmd_predict(a, &ov).map(|_| true),
        Cmd::BlochSweep(a) => cmd_bloch(a, &ov).map(|_| true),
        Cmd::Evolve(a) => cmd_evolve(a, &ov).map(|_| true),
        Cmd::Pipeline(a) => cmd_pipeline(a, cli.config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: {}", Error::AcceptanceFailed("see summary.json".into()));
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
