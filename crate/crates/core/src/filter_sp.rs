//! Conditional dynamics (homodyne filtering) for a single-photon input field,
//! plus the measurement-record plumbing shared by every filter.

use std::fs::File;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::integrate::{filter_step, Blocks, Scheme};
use crate::master_sp::{extended_initial_sp, extract_sp, quad_columns, quad_row, sp_drive, Quad};
use crate::model::{ExtendedConfig, Pulse, SystemModel};
use crate::operators::Operator;
use crate::series::{Observable, Series, Stepping};

/// Imaginary residue silently dropped from quantities that must be real.
pub const IMAG_DISCARD: f64 = 1e-9;
/// Imaginary residue treated as state corruption.
pub const IMAG_FAIL: f64 = 1e-6;

/// Real part of a quantity that is real in exact arithmetic.
pub(crate) fn real_part(z: Complex64, scale: f64, quantity: &'static str, t: f64) -> Result<f64> {
    let residual = z.im.abs() / scale.max(1.0);
    if residual > IMAG_FAIL || !z.re.is_finite() {
        return Err(Error::Consistency { quantity, t, residual });
    }
    Ok(z.re)
}

/// Per-step health numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Conditional mean of dY/dt used to form the innovation.
    pub innovation_drift: f64,
    /// Innovation increment dW = dY − k dt.
    pub dw: f64,
    /// Normalizer before renormalization (tr ρ¹¹, tr ϖ, …).
    pub trace_before: f64,
    /// Largest conjugate-symmetry / Hermiticity defect removed after the step.
    pub symmetry_residual: f64,
}

/// A filter that can be driven by a homodyne record.
pub trait Filter {
    type State: Clone;

    fn initial(&self) -> Result<Self::State>;
    /// E[dY/dt | record so far].
    fn innovation_drift(&self, state: &Self::State, t: f64) -> Result<f64>;
    fn step(&self, state: &Self::State, dy: f64, t: f64, dt: f64) -> Result<(Self::State, StepReport)>;
    fn columns(&self) -> Vec<String>;
    fn row(&self, state: &Self::State) -> Result<Vec<Complex64>>;
    /// Whether the field is known on [0, t_end].
    fn covers(&self, t_end: f64) -> bool;
}

/// Homodyne increments ΔY_k on [kΔt, (k+1)Δt), plus the innovations ΔW_k
/// when the record was self-generated.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub seed: Option<u64>,
    pub stream: u64,
    pub dt: f64,
    pub dy: Vec<f64>,
    pub dw: Option<Vec<f64>>,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.dy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dy.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.dy.len() as f64 * self.dt
    }

    /// CSV with header `k,t,dY[,dW]`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        if self.dw.is_some() {
            w.write_record(["k", "t", "dY", "dW"])?;
        } else {
            w.write_record(["k", "t", "dY"])?;
        }
        for (k, dy) in self.dy.iter().enumerate() {
            let t = (k as f64 * self.dt).to_string();
            match &self.dw {
                Some(dw) => w.write_record([k.to_string(), t, dy.to_string(), dw[k].to_string()])?,
                None => w.write_record([k.to_string(), t, dy.to_string()])?,
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a record written by [`MeasurementRecord::save_csv`]. The step is
    /// inferred from the `t` column.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let has_dw = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["k", "t", "dY"] => false,
            ["k", "t", "dY", "dW"] => true,
            _ => {
                return Err(Error::Record(format!(
                    "{}: header must be k,t,dY[,dW], found {}",
                    path.display(),
                    header.join(",")
                )))
            }
        };
        let mut ts = Vec::new();
        let mut dy = Vec::new();
        let mut dw = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Record(format!("{}: bad value in row {}", path.display(), line + 2)))
            };
            ts.push(num(1)?);
            dy.push(num(2)?);
            if has_dw {
                dw.push(num(3)?);
            }
        }
        if ts.len() < 2 {
            return Err(Error::Record(format!("{}: a record needs at least two increments", path.display())));
        }
        let dt = ts[1] - ts[0];
        if ts
            .iter()
            .enumerate()
            .any(|(k, &t)| (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t.abs()))
        {
            return Err(Error::Record(format!("{}: times are not uniformly spaced from 0", path.display())));
        }
        Ok(MeasurementRecord {
            seed: None,
            stream: 0,
            dt,
            dy,
            dw: has_dw.then_some(dw),
        })
    }
}

/// Where the homodyne increments come from.
#[derive(Clone, Copy, Debug)]
pub enum Noise<'a> {
    /// Draw innovations ΔW ~ N(0, dt) from stream `stream` of generator `seed`
    /// and set ΔY = ΔW + k dt.
    SelfGenerate { seed: u64, stream: u64 },
    /// Consume a previously recorded ΔY.
    Replay(&'a MeasurementRecord),
}

/// Per-trajectory random stream derived from (base seed, index).
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Drives `filter` over `stepping` and returns the record actually used
/// together with the emitted series.
pub fn run_trajectory<F: Filter>(filter: &F, stepping: Stepping, noise: Noise<'_>) -> Result<(MeasurementRecord, Series)> {
    let steps = stepping.steps()?;
    if !filter.covers(stepping.t_end) {
        return Err(Error::Grid(format!(
            "run horizon {} exceeds the sampled field and its tail is not zero",
            stepping.t_end
        )));
    }
    let dt = stepping.dt;
    let (mut rng, seed, stream) = match noise {
        Noise::SelfGenerate { seed, stream } => (Some(trajectory_rng(seed, stream)), Some(seed), stream),
        Noise::Replay(rec) => {
            if (rec.dt - dt).abs() > 1e-12 * dt {
                return Err(Error::Record(format!("record step {} differs from run step {dt}", rec.dt)));
            }
            if rec.len() != steps {
                return Err(Error::Record(format!("record has {} increments, run needs {steps}", rec.len())));
            }
            (None, rec.seed, rec.stream)
        }
    };
    let sqrt_dt = dt.sqrt();

    let mut state = filter.initial()?;
    let mut series = Series::new(filter.columns());
    series.push(0.0, filter.row(&state)?);
    let mut dy_out = Vec::with_capacity(steps);
    let mut dw_out = Vec::with_capacity(steps);
    for n in 0..steps {
        let t = stepping.time(n);
        let dy = match (&mut rng, noise) {
            (Some(rng), _) => {
                let z: f64 = StandardNormal.sample(rng);
                let dw = z * sqrt_dt;
                dw + filter.innovation_drift(&state, t)? * dt
            }
            (None, Noise::Replay(rec)) => rec.dy[n],
            (None, Noise::SelfGenerate { .. }) => unreachable!(),
        };
        let (next, report) = filter.step(&state, dy, t, dt).map_err(|e| match e {
            Error::NumericalBlowup { .. } => Error::NumericalBlowup { step: n + 1, t: t + dt },
            other => other,
        })?;
        state = next;
        dy_out.push(dy);
        dw_out.push(report.dw);
        series.note_max("max_normalizer_drift", (report.trace_before - 1.0).abs());
        series.note_max("max_symmetry_residual", report.symmetry_residual);
        if stepping.records(n + 1) {
            series.push(stepping.time(n + 1), filter.row(&state)?);
        }
    }
    let record = MeasurementRecord {
        seed,
        stream,
        dt,
        dy: dy_out,
        dw: Some(dw_out),
    };
    Ok((record, series))
}

/// Coupled filter state: π^{jk}(X) = tr[ρ^{jk}X].
#[derive(Clone, Debug, PartialEq)]
pub struct SpFilterState {
    pub rho: Quad<Operator>,
    pub t: f64,
}

impl SpFilterState {
    pub fn initial(model: &SystemModel) -> Self {
        SpFilterState {
            rho: Quad::initial(model),
            t: 0.0,
        }
    }
}

/// Linear part B of the coupled filter diffusion.
fn coupled_diffusion(model: &SystemModel, rho: &Quad<Operator>, xi: Complex64) -> Quad<Operator> {
    let l = model.l();
    let ld = model.l_dag();
    let s = model.s();
    let sd = model.s_dag();
    let xc = xi.conj();
    let base = |r: &Operator| &l.matmul(r) + &r.matmul(ld);
    let mut b11 = base(&rho.one_one);
    b11.axpy(xc, &rho.zero_one.matmul(sd));
    b11.axpy(xi, &s.matmul(&rho.one_zero));
    let mut b10 = base(&rho.one_zero);
    b10.axpy(xc, &rho.zero_zero.matmul(sd));
    let mut b01 = base(&rho.zero_one);
    b01.axpy(xi, &s.matmul(&rho.zero_zero));
    Quad {
        one_one: b11,
        one_zero: b10,
        zero_one: b01,
        zero_zero: base(&rho.zero_zero),
    }
}

/// k_t = π¹¹(L+L†) + π¹⁰(S)ξ + π⁰¹(S†)ξ*.
pub fn innovation_drift_sp(model: &SystemModel, state: &SpFilterState, xi: Complex64) -> Result<f64> {
    let rho = &state.rho;
    let l_sum = model.l() + model.l_dag();
    let k = rho.one_one.trace_product(&l_sum)
        + rho.one_zero.trace_product(model.s()) * xi
        + rho.zero_one.trace_product(model.s_dag()) * xi.conj();
    real_part(k, 1.0, "innovation drift", state.t)
}

/// One Euler–Maruyama step of the coupled filter.
pub fn filter_step_sp(model: &SystemModel, state: &SpFilterState, dy: f64, xi: Complex64, dt: f64) -> Result<(SpFilterState, StepReport)> {
    filter_step_sp_with(model, state, dy, xi, dt, Scheme::EulerMaruyama)
}

pub fn filter_step_sp_with(
    model: &SystemModel,
    state: &SpFilterState,
    dy: f64,
    xi: Complex64,
    dt: f64,
    scheme: Scheme,
) -> Result<(SpFilterState, StepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    let k = innovation_drift_sp(model, state, xi)?;
    let dw = dy - k * dt;
    let x: Blocks = state.rho.clone().into_vec();
    let drift = crate::master_sp::dual_rhs_sp(model, &state.rho, xi).into_vec();
    let bx = coupled_diffusion(model, &state.rho, xi).into_vec();
    let apply_b = |v: &Blocks| coupled_diffusion(model, &Quad::from_vec(v.clone()), xi).into_vec();
    let psi = |v: &Blocks| coupled_diffusion(model, &Quad::from_vec(v.clone()), xi).one_one.trace();
    let next = filter_step(&x, &drift, &bx, Complex64::new(k, 0.0), dt, dw, scheme, apply_b, psi);

    let mut rho = Quad::from_vec(next);
    let t = state.t + dt;
    if ![&rho.one_one, &rho.one_zero, &rho.zero_one, &rho.zero_zero]
        .iter()
        .all(|r| r.is_finite())
    {
        return Err(Error::NumericalBlowup { step: 0, t });
    }
    let trace = rho.one_one.trace();
    let norm = real_part(trace, 1.0, "tr ρ¹¹", t)?;
    if !(norm > 0.0) {
        return Err(Error::NumericalBlowup { step: 0, t });
    }
    let inv = Complex64::new(1.0 / norm, 0.0);
    for r in [&mut rho.one_one, &mut rho.one_zero, &mut rho.zero_one, &mut rho.zero_zero] {
        *r *= inv;
    }
    let symmetry_residual = rho.symmetrize();
    Ok((
        SpFilterState { rho, t },
        StepReport {
            innovation_drift: k,
            dw,
            trace_before: norm,
            symmetry_residual,
        },
    ))
}

/// The coupled single-photon filter as a [`Filter`].
#[derive(Clone, Debug)]
pub struct CoupledSpFilter<'a> {
    pub model: &'a SystemModel,
    pub pulse: &'a Pulse,
    pub observables: &'a [Observable],
    pub scheme: Scheme,
}

impl<'a> CoupledSpFilter<'a> {
    pub fn new(model: &'a SystemModel, pulse: &'a Pulse, observables: &'a [Observable]) -> Self {
        CoupledSpFilter {
            model,
            pulse,
            observables,
            scheme: Scheme::EulerMaruyama,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

impl Filter for CoupledSpFilter<'_> {
    type State = SpFilterState;

    fn initial(&self) -> Result<SpFilterState> {
        Ok(SpFilterState::initial(self.model))
    }

    fn innovation_drift(&self, state: &SpFilterState, t: f64) -> Result<f64> {
        innovation_drift_sp(self.model, state, self.pulse.value(t))
    }

    fn step(&self, state: &SpFilterState, dy: f64, t: f64, dt: f64) -> Result<(SpFilterState, StepReport)> {
        filter_step_sp_with(self.model, state, dy, self.pulse.value(t), dt, self.scheme)
    }

    fn columns(&self) -> Vec<String> {
        quad_columns("pi", self.observables)
    }

    fn row(&self, state: &SpFilterState) -> Result<Vec<Complex64>> {
        Ok(quad_row(&state.rho, self.observables))
    }

    fn covers(&self, t_end: f64) -> bool {
        self.pulse.covers(t_end)
    }
}

/// Runs the coupled filter once, either self-generating the record or
/// replaying one. Columns are `pi_<jk>_<label>`.
pub fn simulate_trajectory_sp(
    model: &SystemModel,
    pulse: &Pulse,
    stepping: Stepping,
    noise: Noise<'_>,
    observables: &[Observable],
) -> Result<(MeasurementRecord, Series)> {
    run_trajectory(&CoupledSpFilter::new(model, pulse, observables), stepping, noise)
}

/// Extended filter state: π̃(A⊗X) = tr[ϖ(A⊗X)].
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedFilterState {
    pub varpi: Operator,
    pub t: f64,
    pub cfg: ExtendedConfig,
}

/// The 2d×2d embedded single-photon filter.
#[derive(Clone, Debug)]
pub struct ExtendedSpFilter<'a> {
    pub model: &'a SystemModel,
    pub pulse: &'a Pulse,
    pub observables: &'a [Observable],
    pub cfg: ExtendedConfig,
    pub scheme: Scheme,
    emb: Embedding,
}

impl<'a> ExtendedSpFilter<'a> {
    pub fn new(model: &'a SystemModel, pulse: &'a Pulse, observables: &'a [Observable], cfg: ExtendedConfig) -> Result<Self> {
        if cfg.alpha0().norm() == 0.0 {
            return Err(Error::Embedding("α₀ must be non-zero".into()));
        }
        Ok(ExtendedSpFilter {
            model,
            pulse,
            observables,
            cfg,
            scheme: Scheme::EulerMaruyama,
            emb: Embedding::new(model, 2),
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn initial_state(&self) -> ExtendedFilterState {
        ExtendedFilterState {
            varpi: extended_initial_sp(self.model, &self.cfg),
            t: 0.0,
            cfg: self.cfg,
        }
    }

    /// π^{jk} recovered from the extended state.
    pub fn components(&self, state: &ExtendedFilterState) -> Result<Quad<Operator>> {
        extract_sp(&state.varpi, self.model.dim(), &self.cfg)
    }

    fn drift_value(&self, w: &Operator, xi: Complex64, t: f64) -> Result<f64> {
        let drive = self.emb.drive(&sp_drive(&self.cfg, xi));
        real_part(self.emb.diffusion(&drive, w).trace(), 1.0, "extended innovation drift", t)
    }
}

/// π̃(I⊗(L+L†) + σ₊⊗S νξ + σ₋⊗S† ν*ξ*).
pub fn extended_innovation_drift(filter: &ExtendedSpFilter<'_>, state: &ExtendedFilterState, xi: Complex64) -> Result<f64> {
    filter.drift_value(&state.varpi, xi, state.t)
}

/// One step of the extended filter (drift: dual of the extended generator;
/// diffusion: Mϖ + ϖM† − cϖ with M = I⊗L + νξσ₊⊗S), renormalized to unit trace.
pub fn extended_filter_step(
    filter: &ExtendedSpFilter<'_>,
    state: &ExtendedFilterState,
    dy: f64,
    xi: Complex64,
    dt: f64,
) -> Result<(ExtendedFilterState, StepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    let emb = &filter.emb;
    let drive = emb.drive(&sp_drive(&filter.cfg, xi));
    let w = &state.varpi;
    let bx = emb.diffusion(&drive, w);
    let c = real_part(bx.trace(), 1.0, "extended innovation drift", state.t)?;
    let dw = dy - c * dt;
    let drift = vec![emb.dual_drift(&drive, w)];
    let next = filter_step(
        &vec![w.clone()],
        &drift,
        &vec![bx],
        Complex64::new(c, 0.0),
        dt,
        dw,
        filter.scheme,
        |v| vec![emb.diffusion(&drive, &v[0])],
        |v| emb.diffusion(&drive, &v[0]).trace(),
    );
    let t = state.t + dt;
    let mut varpi = next.into_iter().next().expect("one block");
    if !varpi.is_finite() {
        return Err(Error::NumericalBlowup { step: 0, t });
    }
    let norm = real_part(varpi.trace(), 1.0, "tr ϖ", t)?;
    if !(norm > 0.0) {
        return Err(Error::NumericalBlowup { step: 0, t });
    }
    varpi *= Complex64::new(1.0 / norm, 0.0);
    let symmetry_residual = varpi.hermitian_residual();
    varpi = varpi.hermitian_part();
    Ok((
        ExtendedFilterState { varpi, t, cfg: state.cfg },
        StepReport {
            innovation_drift: c,
            dw,
            trace_before: norm,
            symmetry_residual,
        },
    ))
}

impl Filter for ExtendedSpFilter<'_> {
    type State = ExtendedFilterState;

    fn initial(&self) -> Result<ExtendedFilterState> {
        Ok(self.initial_state())
    }

    fn innovation_drift(&self, state: &ExtendedFilterState, t: f64) -> Result<f64> {
        self.drift_value(&state.varpi, self.pulse.value(t), t)
    }

    fn step(&self, state: &ExtendedFilterState, dy: f64, t: f64, dt: f64) -> Result<(ExtendedFilterState, StepReport)> {
        extended_filter_step(self, state, dy, self.pulse.value(t), dt)
    }

    fn columns(&self) -> Vec<String> {
        quad_columns("pi", self.observables)
    }

    fn row(&self, state: &ExtendedFilterState) -> Result<Vec<Complex64>> {
        Ok(quad_row(&self.components(state)?, self.observables))
    }

    fn covers(&self, t_end: f64) -> bool {
        self.pulse.covers(t_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Grid, PulseShape};
    use crate::operators::qubit::*;
    use crate::testing::{random_density, random_model, random_operator};
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn benchmark() -> SystemModel {
        SystemModel::new(Operator::identity(2), sigma_minus(), Operator::zeros(2), ground()).unwrap()
    }

    fn matched_pulse(t_end: f64) -> Pulse {
        Pulse::from_shape(PulseShape::DecayingExponential { gamma: 1.0 }, Grid::new(1e-3, t_end).unwrap()).unwrap()
    }

    #[test]
    fn innovation_drift_examples() {
        let model = SystemModel::new(Operator::identity(2), Operator::zeros(2), sigma_z(), ground()).unwrap();
        let state = SpFilterState::initial(&model);
        assert_eq!(innovation_drift_sp(&model, &state, c(0.0)).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_model(&mut rng, 3);
        let state = SpFilterState::initial(&model);
        let expected = state.rho.one_one.trace_product(&(model.l() + model.l_dag())).re;
        let got = innovation_drift_sp(&model, &state, Complex64::new(0.3, 0.9)).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn corrupted_state_raises_consistency_error() {
        let model = benchmark();
        let mut state = SpFilterState::initial(&model);
        state.rho.one_zero = Operator::identity(2).scale(Complex64::new(0.0, 1.0));
        let err = innovation_drift_sp(&model, &state, c(1.0)).unwrap_err();
        assert!(matches!(err, Error::Consistency { .. }));
    }

    #[test]
    fn vacuum_step_is_belavkin_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = random_model(&mut rng, 3);
        let mut state = SpFilterState::initial(&model);
        state.rho.one_one = random_density(&mut rng, 3);
        let (next, _) = filter_step_sp(&model, &state, 0.05, c(0.0), 1e-3).unwrap();
        // Standard homodyne filter on the same increment.
        let rho = &state.rho.one_one;
        let m = model.l();
        let k = rho.trace_product(&(m + model.l_dag())).re;
        let mut expected = rho + &crate::operators::lindblad_dual(&model, rho).scale_real(1e-3);
        let inc = &(&m.matmul(rho) + &rho.matmul(model.l_dag())) - &rho.scale_real(k);
        expected += &inc.scale_real(0.05 - k * 1e-3);
        assert!(next.rho.one_one.max_abs_diff(&expected) < 1e-13);
        assert_eq!(next.rho.one_zero.max_abs(), 0.0);
    }

    #[test]
    fn trace_is_preserved_before_renormalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = random_model(&mut rng, 2);
        let pulse = matched_pulse(4.0);
        let obs = [Observable::new("n", excitation())];
        let (_, s) = simulate_trajectory_sp(
            &model,
            &pulse,
            Stepping::new(1e-3, 4.0),
            Noise::SelfGenerate { seed: 5, stream: 0 },
            &obs,
        )
        .unwrap();
        assert!(s.diagnostics["max_normalizer_drift"] < 1e-12);
        assert!(s.diagnostics["max_symmetry_residual"] < 1e-12);
    }

    #[test]
    fn trajectories_are_deterministic_and_replayable() {
        let model = benchmark();
        let pulse = matched_pulse(3.0);
        let obs = [Observable::new("n", excitation())];
        let stepping = Stepping::new(1e-2, 3.0);
        let noise = Noise::SelfGenerate { seed: 42, stream: 3 };
        let (rec1, s1) = simulate_trajectory_sp(&model, &pulse, stepping, noise, &obs).unwrap();
        let (rec2, s2) = simulate_trajectory_sp(&model, &pulse, stepping, noise, &obs).unwrap();
        assert_eq!(rec1, rec2);
        assert_eq!(s1, s2);
        let (_, s3) = simulate_trajectory_sp(&model, &pulse, stepping, Noise::Replay(&rec1), &obs).unwrap();
        assert_eq!(s1.rows, s3.rows);

        let mut short = rec1.clone();
        short.dy.pop();
        assert!(matches!(
            simulate_trajectory_sp(&model, &pulse, stepping, Noise::Replay(&short), &obs),
            Err(Error::Record(_))
        ));
    }

    #[test]
    fn record_csv_round_trip() {
        let model = benchmark();
        let pulse = matched_pulse(1.0);
        let obs = [Observable::new("n", excitation())];
        let (rec, _) = simulate_trajectory_sp(
            &model,
            &pulse,
            Stepping::new(0.01, 1.0),
            Noise::SelfGenerate { seed: 1, stream: 0 },
            &obs,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("record.csv");
        rec.save_csv(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("k,t,dY,dW\n"));
        let back = MeasurementRecord::load_csv(&path).unwrap();
        assert_eq!(back.dy, rec.dy);
        assert_eq!(back.dw, rec.dw);
        assert!((back.dt - 0.01).abs() < 1e-15);
    }

    #[test]
    fn innovations_have_wiener_mean() {
        let model = benchmark();
        let pulse = matched_pulse(10.0);
        let obs = [Observable::new("n", excitation())];
        let dt = 1e-3;
        let (rec, _) = simulate_trajectory_sp(
            &model,
            &pulse,
            Stepping::new(dt, 10.0),
            Noise::SelfGenerate { seed: 77, stream: 0 },
            &obs,
        )
        .unwrap();
        let dw = rec.dw.unwrap();
        let n = dw.len() as f64;
        let mean = dw.iter().sum::<f64>() / n;
        assert!(mean.abs() <= 3.0 * (dt / n).sqrt());
    }

    #[test]
    fn extended_drift_matches_coupled_drift() {
        let model = benchmark();
        let pulse = matched_pulse(2.0);
        let obs = [Observable::new("n", excitation())];
        let cfg = ExtendedConfig::default();
        let ext = ExtendedSpFilter::new(&model, &pulse, &obs, cfg).unwrap();
        let mut state = ext.initial_state();
        let mut rng = trajectory_rng(3, 0);
        for n in 0..500 {
            let t = n as f64 * 1e-3;
            let z: f64 = StandardNormal.sample(&mut rng);
            let (next, _) = extended_filter_step(&ext, &state, z * 1e-3f64.sqrt(), pulse.value(t), 1e-3).unwrap();
            state = next;
        }
        let xi = pulse.value(state.t);
        let coupled = SpFilterState {
            rho: ext.components(&state).unwrap(),
            t: state.t,
        };
        let k = innovation_drift_sp(&model, &coupled, xi).unwrap();
        // Same quantity straight from the blocks: π^{jk}(X) = w₁₁ tr[B_{kj} X] / (w_{jk} tr B_{e₁e₁}).
        let blocks = crate::operators::ExtendedOperator::new(2, 2, state.varpi.clone()).unwrap();
        let p1 = blocks.block(0, 0).trace();
        let w11 = cfg.w(1, 1);
        let pi = |j: u8, k: u8, x: &Operator| {
            let (bj, bk) = (crate::master_sp::block_index(j), crate::master_sp::block_index(k));
            blocks.block(bk, bj).trace_product(x) * w11 / (cfg.w(j, k) * p1)
        };
        let direct = pi(1, 1, &(model.l() + model.l_dag())) + pi(1, 0, model.s()) * xi + pi(0, 1, model.s_dag()) * xi.conj();
        assert!((k - direct.re).abs() < 1e-8);
        assert!(direct.im.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn unenforced_update_keeps_conjugate_symmetry(seed in any::<u64>(), d in 1usize..4, dy in -0.1f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, d);
            let mut state = SpFilterState::initial(&model);
            state.rho.one_one = random_density(&mut rng, d);
            state.rho.zero_zero = random_density(&mut rng, d);
            let r10 = random_operator(&mut rng, d).scale_real(0.1);
            state.rho.zero_one = r10.adjoint();
            state.rho.one_zero = r10;
            let xi = Complex64::new(0.4, -0.3);
            let (_, report) = filter_step_sp(&model, &state, dy, xi, 1e-3).unwrap();
            prop_assert!(report.symmetry_residual < 1e-10);
        }
    }
}
