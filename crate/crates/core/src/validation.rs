//! Cross-formulation checks on a configured system, plus small reference
//! filters written directly from their textbook form (no shared code with
//! the main propagators) that the checks compare against.

use std::fmt;

use num_complex::Complex64;

use crate::cat::{cat_columns, cat_dual_all, cat_row, propagate_cat_master, CatExtendedFilter, CatFilter, CatState};
use crate::config::{Field, RunConfig};
use crate::ensemble::{run_ensemble, EnsembleSpec};
use crate::error::Result;
use crate::filter_sp::{run_trajectory, CoupledSpFilter, ExtendedSpFilter, Filter, MeasurementRecord, Noise};
use crate::integrate::Scheme;
use crate::master_sp::{dual_rhs_sp, propagate_master_sp, propagate_master_sp_extended, quad_columns, quad_row, Quad};
use crate::model::{CoherentModes, ExtendedConfig, Pulse, SystemModel};
use crate::operators::Operator;
use crate::series::{Observable, Series, Stepping};
use crate::zakai::ZakaiFilter;

/// −i[H,ρ] + LρL† − ½{L†L,ρ}
pub fn lindblad_rhs(l: &Operator, h: &Operator, rho: &Operator) -> Operator {
    let i = Complex64::new(0.0, 1.0);
    let ld = l.adjoint();
    let ldl = ld.matmul(l);
    let mut out = (&h.matmul(rho) - &rho.matmul(h)).scale(-i);
    out.axpy(Complex64::new(1.0, 0.0), &l.matmul(rho).matmul(&ld));
    out.axpy(Complex64::new(-0.5, 0.0), &(&ldl.matmul(rho) + &rho.matmul(&ldl)));
    out
}

/// One Euler–Maruyama step of the homodyne vacuum filter
/// dρ = L*(ρ)dt + (Lρ + ρL† − tr[ρ(L+L†)]ρ)(dY − tr[ρ(L+L†)]dt),
/// followed by trace renormalization. Returns (ρ', ΔW).
pub fn belavkin_step(l: &Operator, h: &Operator, rho: &Operator, dy: f64, dt: f64) -> (Operator, f64) {
    let b = &l.matmul(rho) + &rho.matmul(&l.adjoint());
    let k = b.trace().re;
    let dw = dy - k * dt;
    let mut next = rho.clone();
    next.axpy(Complex64::new(dt, 0.0), &lindblad_rhs(l, h, rho));
    next.axpy(Complex64::new(dw, 0.0), &b);
    next.axpy(Complex64::new(-k * dw, 0.0), rho);
    let tr = next.trace().re;
    (next.scale_real(1.0 / tr).hermitian_part(), dw)
}

/// System seen in the displaced picture of a coherent field f:
/// L' = L + Sf, H' = H + (1/2i)(L†S f − f* S†L).
pub fn displaced(model: &SystemModel, f: Complex64) -> (Operator, Operator) {
    let mut l = model.l().clone();
    l.axpy(f, model.s());
    let a = model.l_dag().matmul(model.s()).scale(f);
    let b = model.s_dag().matmul(model.l()).scale(f.conj());
    let mut h = model.h().clone();
    h.axpy(Complex64::new(0.0, -0.5), &(&a - &b));
    (l, h)
}

/// RK4 integration of the displaced-picture Lindblad equation for a
/// single coherent mode, reporting tr[ρX] per observable.
pub fn displaced_master(
    model: &SystemModel,
    f: impl Fn(f64) -> Complex64,
    stepping: Stepping,
    observables: &[Observable],
) -> Result<Vec<Vec<Complex64>>> {
    let steps = stepping.steps()?;
    let rhs = |t: f64, r: &Operator| {
        let (l, h) = displaced(model, f(t));
        lindblad_rhs(&l, &h, r)
    };
    let row = |r: &Operator| observables.iter().map(|o| r.trace_product(&o.op)).collect::<Vec<_>>();
    let mut rho = model.initial_density();
    let mut out = vec![row(&rho)];
    let dt = stepping.dt;
    for n in 0..steps {
        let t = stepping.time(n);
        let k1 = rhs(t, &rho);
        let mut y = rho.clone();
        y.axpy(Complex64::new(0.5 * dt, 0.0), &k1);
        let k2 = rhs(t + 0.5 * dt, &y);
        let mut y = rho.clone();
        y.axpy(Complex64::new(0.5 * dt, 0.0), &k2);
        let k3 = rhs(t + 0.5 * dt, &y);
        let mut y = rho.clone();
        y.axpy(Complex64::new(dt, 0.0), &k3);
        let k4 = rhs(t + dt, &y);
        for (k, w) in [(k1, 1.0), (k2, 2.0), (k3, 2.0), (k4, 1.0)] {
            rho.axpy(Complex64::new(dt * w / 6.0, 0.0), &k);
        }
        if stepping.records(n + 1) {
            out.push(row(&rho));
        }
    }
    Ok(out)
}

/// Displaced-picture vacuum filter on a given record; rows of tr[ρX].
pub fn displaced_filter(
    model: &SystemModel,
    f: impl Fn(f64) -> Complex64,
    record: &MeasurementRecord,
    stepping: Stepping,
    observables: &[Observable],
) -> Vec<Vec<Complex64>> {
    let row = |r: &Operator| observables.iter().map(|o| r.trace_product(&o.op)).collect::<Vec<_>>();
    let mut rho = model.initial_density();
    let mut out = vec![row(&rho)];
    for (n, dy) in record.dy.iter().enumerate() {
        let (l, h) = displaced(model, f(stepping.time(n)));
        rho = belavkin_step(&l, &h, &rho, *dy, record.dt).0;
        if stepping.records(n + 1) {
            out.push(row(&rho));
        }
    }
    out
}

/// Explicit-Euler integration of the coupled single-photon master equation.
///
/// The drift of every filter here is linear in the state and the noise terms
/// have zero mean, so an Euler–Maruyama (or Milstein) ensemble averages to
/// exactly this discretization; comparing against it isolates Monte-Carlo
/// error from time-step error.
pub fn euler_master_sp(model: &SystemModel, pulse: &Pulse, stepping: Stepping, observables: &[Observable]) -> Result<Series> {
    let steps = stepping.steps()?;
    let mut rho = Quad::initial(model);
    let mut series = Series::new(quad_columns("mu", observables));
    series.push(0.0, quad_row(&rho, observables));
    for n in 0..steps {
        let d = dual_rhs_sp(model, &rho, pulse.value(stepping.time(n)));
        let mut next = rho.clone().into_vec();
        for (r, k) in next.iter_mut().zip(d.into_vec()) {
            r.axpy(Complex64::new(stepping.dt, 0.0), &k);
        }
        rho = Quad::from_vec(next);
        rho.symmetrize();
        if stepping.records(n + 1) {
            series.push(stepping.time(n + 1), quad_row(&rho, observables));
        }
    }
    Ok(series)
}

/// Explicit-Euler counterpart of [`propagate_cat_master`]; see [`euler_master_sp`].
pub fn euler_master_cat(model: &SystemModel, modes: &CoherentModes, stepping: Stepping, observables: &[Observable]) -> Result<Series> {
    let steps = stepping.steps()?;
    let mut state = CatState::initial(model, modes);
    let mut series = Series::new(cat_columns("mu", modes.len(), observables));
    series.push(0.0, cat_row(&state, modes.weights(), observables));
    for n in 0..steps {
        let f = modes.modes().values(stepping.time(n));
        let d = cat_dual_all(model, &f, &state.rho);
        for (r, k) in state.rho.iter_mut().zip(&d) {
            r.axpy(Complex64::new(stepping.dt, 0.0), k);
        }
        state.symmetrize();
        if stepping.records(n + 1) {
            series.push(stepping.time(n + 1), cat_row(&state, modes.weights(), observables));
        }
    }
    Ok(series)
}

/// Largest |a − b| over matching rows and columns.
pub fn sup_difference(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    /// true when `measured` must be at least `tolerance` (coverage fractions).
    pub at_least: bool,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            measured,
            tolerance,
            at_least: false,
            passed: measured <= tolerance,
        }
    }

    fn at_least(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            measured,
            tolerance,
            at_least: true,
            passed: measured >= tolerance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$}  {:>12}  {:>2} {:>10}  result", "check", "measured", "", "tolerance")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<width$}  {:>12.3e}  {:>2} {:>10.3e}  {}",
                c.name,
                c.measured,
                if c.at_least { ">=" } else { "<=" },
                c.tolerance,
                if c.passed { "PASS" } else { "FAIL" }
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Trajectories used by the ensemble checks at most.
const MAX_VALIDATION_TRAJECTORIES: usize = 400;

/// Runs every check applicable to the configured field.
pub fn run_validation(cfg: &RunConfig, threads: usize) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    match &cfg.field {
        Field::Vacuum(p) | Field::SinglePhoton(p) => {
            single_photon_checks(cfg, p, threads, &mut report)?;
            if let Field::Vacuum(_) = cfg.field {
                vacuum_reduction(cfg, p, &mut report)?;
            }
        }
        Field::Cat(modes) => cat_checks(cfg, modes, threads, &mut report)?,
    }
    Ok(report)
}

fn rows_of(s: &Series) -> &[Vec<Complex64>] {
    &s.rows
}

fn single_photon_checks(cfg: &RunConfig, pulse: &Pulse, threads: usize, report: &mut ValidationReport) -> Result<()> {
    let (model, obs, stepping) = (&cfg.model, &cfg.observables[..], cfg.run.stepping);
    let dt = stepping.dt;
    let coupled = propagate_master_sp(model, pulse, stepping, obs)?;
    let extended = propagate_master_sp_extended(model, pulse, &cfg.run.extended, stepping, obs)?;
    report.checks.push(CheckResult::at_most(
        "master: extended vs coupled",
        sup_difference(rows_of(&coupled), rows_of(&extended)),
        1e-8,
    ));
    let trace = coupled.diagnostics["max_trace_error_11"].max(coupled.diagnostics["max_trace_error_00"]);
    report
        .checks
        .push(CheckResult::at_most("master: diagonal traces conserved", trace, 1e-8));

    let noise = Noise::SelfGenerate {
        seed: cfg.run.seed,
        stream: 0,
    };
    let scheme = Scheme::Milstein;
    let (record, a) = run_trajectory(&CoupledSpFilter::new(model, pulse, obs).with_scheme(scheme), stepping, noise)?;
    let (_, em) = run_trajectory(&CoupledSpFilter::new(model, pulse, obs), stepping, noise)?;
    report.checks.push(CheckResult::at_most(
        "filter: trace drift before renormalization",
        em.diagnostics["max_normalizer_drift"],
        10.0 * dt,
    ));
    report.checks.push(CheckResult::at_most(
        "filter: off-diagonal symmetry drift",
        em.diagnostics["max_symmetry_residual"],
        1e-9,
    ));
    let ext = |alpha0: f64| -> Result<Series> {
        let f = ExtendedSpFilter::new(model, pulse, obs, ExtendedConfig::from_alpha0(alpha0)?)?.with_scheme(scheme);
        Ok(run_trajectory(&f, stepping, Noise::Replay(&record))?.1)
    };
    let b = ext(cfg.run.extended.alpha0().re)?;
    report.checks.push(CheckResult::at_most(
        "filter: extended vs coupled (milstein)",
        sup_difference(&a.rows, &b.rows),
        5.0 * dt,
    ));
    let z = ZakaiFilter::new(model, pulse, obs, cfg.run.extended)?.with_scheme(scheme);
    let (_, c) = run_trajectory(&z, stepping, Noise::Replay(&record))?;
    report.checks.push(CheckResult::at_most(
        "filter: unnormalized vs extended (milstein)",
        sup_difference(&b.rows, &c.rows),
        5.0 * dt,
    ));
    report.checks.push(CheckResult::at_most(
        "filter: extended alpha0 = 0.3 vs 0.9",
        sup_difference(&ext(0.3)?.rows, &ext(0.9)?.rows),
        5.0 * dt,
    ));

    let filter = CoupledSpFilter::new(model, pulse, obs).with_scheme(cfg.run.scheme);
    ensemble_checks(cfg, &filter, &euler_master_sp(model, pulse, stepping, obs)?, threads, report)
}

fn ensemble_checks<F: Filter + Sync>(
    cfg: &RunConfig,
    filter: &F,
    master: &Series,
    threads: usize,
    report: &mut ValidationReport,
) -> Result<()> {
    let mut ens = run_ensemble(
        filter,
        EnsembleSpec {
            stepping: cfg.run.stepping,
            trajectories: cfg.run.trajectories.min(MAX_VALIDATION_TRAJECTORIES),
            base_seed: cfg.run.seed,
            threads,
            keep_records: false,
        },
    )?;
    ens.attach_master(master)?;
    let mut worst: f64 = 1.0;
    let matched = ens.master.as_ref().map(|m| m.iter().all(|r| r.iter().all(|z| !z.re.is_nan())));
    for c in ens.columns.iter().filter(|_| matched == Some(true)) {
        for imag in [false, true] {
            if let Some(frac) = ens.fraction_within(c, imag, 3.0) {
                worst = worst.min(frac);
            }
        }
    }
    report.checks.push(CheckResult::at_least(
        "ensemble: mean within 3 stderr of same-step master",
        worst,
        0.95,
    ));
    let within = ens.innovations.iter().filter(|s| s.wiener_consistent).count() as f64 / ens.innovations.len() as f64;
    report
        .checks
        .push(CheckResult::at_least("innovations: quadratic variation in band", within, 0.95));
    let t = cfg.run.stepping.t_end;
    let mean_w = ens.innovations.iter().map(|s| s.terminal).sum::<f64>() / ens.innovations.len() as f64;
    report.checks.push(CheckResult::at_most(
        "innovations: |mean W(T)| / (3 sqrt(T/N))",
        mean_w.abs() / (3.0 * (t / ens.innovations.len() as f64).sqrt()),
        1.0,
    ));
    Ok(())
}

fn vacuum_reduction(cfg: &RunConfig, pulse: &Pulse, report: &mut ValidationReport) -> Result<()> {
    let (model, stepping) = (&cfg.model, cfg.run.stepping);
    let obs: Vec<Observable> = (0..model.dim() * model.dim())
        .map(|i| {
            let e = Operator::from_fn(model.dim(), |r, c| {
                Complex64::new(f64::from(u8::from(r * model.dim() + c == i)), 0.0)
            });
            Observable::new(format!("e{i}"), e)
        })
        .collect();
    let filter = CoupledSpFilter::new(model, pulse, &obs);
    let (record, series) = run_trajectory(
        &filter,
        stepping,
        Noise::SelfGenerate {
            seed: cfg.run.seed,
            stream: 0,
        },
    )?;
    let oracle = displaced_filter(model, |_| Complex64::new(0.0, 0.0), &record, stepping, &obs);
    // Columns are grouped per observable as 11, 10, 01, 00.
    let ours: Vec<Vec<Complex64>> = series.rows.iter().map(|r| r.iter().step_by(4).copied().collect()).collect();
    report.checks.push(CheckResult::at_most(
        "vacuum: photon filter vs homodyne filter",
        sup_difference(&ours, &oracle),
        1e-10,
    ));
    Ok(())
}

fn cat_checks(cfg: &RunConfig, modes: &CoherentModes, threads: usize, report: &mut ValidationReport) -> Result<()> {
    let (model, obs, stepping) = (&cfg.model, &cfg.observables[..], cfg.run.stepping);
    let dt = stepping.dt;
    let master = propagate_cat_master(model, modes, stepping, obs)?;
    report.checks.push(CheckResult::at_most(
        "cat master: component traces equal overlaps",
        master.diagnostics["max_gram_trace_error"],
        1e-8,
    ));
    let noise = Noise::SelfGenerate {
        seed: cfg.run.seed,
        stream: 0,
    };
    let coupled = CatFilter::new(model, modes, obs).with_scheme(cfg.run.scheme);
    let (record, a) = run_trajectory(&coupled, stepping, noise)?;
    report.checks.push(CheckResult::at_most(
        "cat filter: weighted trace drift",
        a.diagnostics["max_normalizer_drift"],
        1e-9,
    ));
    let ext = CatExtendedFilter::new(model, modes, obs)?.with_scheme(cfg.run.scheme);
    let (_, b) = run_trajectory(&ext, stepping, Noise::Replay(&record))?;
    report.checks.push(CheckResult::at_most(
        "cat filter: extended vs coupled",
        sup_difference(&a.rows, &b.rows),
        1e-8,
    ));

    if modes.len() == 1 {
        let set = modes.modes();
        let n = modes.len();
        let combined: Vec<usize> = (0..obs.len()).map(|i| i * (n * n + 1) + n * n).collect();
        let pick =
            |rows: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> { rows.iter().map(|r| combined.iter().map(|&i| r[i]).collect()).collect() };
        let oracle = displaced_master(model, |t| set.value(0, t), stepping, obs)?;
        report.checks.push(CheckResult::at_most(
            "cat master: single mode vs displaced Lindblad",
            sup_difference(&pick(&master.rows), &oracle),
            1e-8,
        ));
        let oracle = displaced_filter(model, |t| set.value(0, t), &record, stepping, obs);
        let (_, em) = run_trajectory(&CatFilter::new(model, modes, obs), stepping, Noise::Replay(&record))?;
        report.checks.push(CheckResult::at_most(
            "cat filter: single mode vs displaced filter",
            sup_difference(&pick(&em.rows), &oracle),
            5.0 * dt,
        ));
    }
    ensemble_checks(cfg, &coupled, &euler_master_cat(model, modes, stepping, obs)?, threads, report)
}
