//! Master equation and filter for a superposition Σ_j α_j|f_j⟩ of coherent
//! field states.
//!
//! The n² component functionals μ^{jk}, π^{jk} are stored as d×d dual
//! matrices ρ^{jk} (row-major in (j, k)); only the weighted combination
//! Σ α_j*α_k tr[ρ^{jk}X] / Σ α_j*α_k tr[ρ^{jk}] is a physical expectation.

use num_complex::Complex64;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::filter_sp::{real_part, Filter, StepReport};
use crate::integrate::{filter_step, rk4, Blocks, Scheme};
use crate::model::{CoherentModes, ModeSet, SystemModel};
use crate::operators::{evans_hudson, lindblad, lindblad_dual, ExtendedOperator, Operator};
use crate::series::{Observable, Series, Stepping};

/// G^{jk}(X) = L(X) + S†[X,L] f_j* + [L†,X]S f_k + (S†XS − X) f_j* f_k.
pub fn cat_generator(model: &SystemModel, x: &Operator, fj: Complex64, fk: Complex64) -> Result<Operator> {
    let eh = evans_hudson(model, x)?;
    let mut out = lindblad(model, x)?;
    out.axpy(fj.conj(), &eh.creation);
    out.axpy(fk, &eh.annihilation);
    out.axpy(fj.conj() * fk, &eh.gauge);
    Ok(out)
}

/// Schrödinger-picture adjoint of [`cat_generator`].
pub fn cat_generator_dual(model: &SystemModel, rho: &Operator, fj: Complex64, fk: Complex64) -> Operator {
    let l = model.l();
    let ld = model.l_dag();
    let s = model.s();
    let sd = model.s_dag();
    let mut out = lindblad_dual(model, rho);
    out.axpy(fj.conj(), &(&l.matmul(rho).matmul(sd) - &rho.matmul(sd).matmul(l)));
    out.axpy(fk, &(&s.matmul(rho).matmul(ld) - &ld.matmul(s).matmul(rho)));
    out.axpy(fj.conj() * fk, &(&s.matmul(rho).matmul(sd) - rho));
    out
}

/// n² component matrices at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CatState {
    pub rho: Vec<Operator>,
    pub n: usize,
    pub t: f64,
}

impl CatState {
    /// ρ^{jk} = g_{jk}|η⟩⟨η|.
    pub fn initial(model: &SystemModel, modes: &CoherentModes) -> Self {
        let n = modes.len();
        let eta = model.initial_density();
        let g = modes.gram();
        CatState {
            rho: (0..n * n).map(|i| eta.scale(g[(i / n, i % n)])).collect(),
            n,
            t: 0.0,
        }
    }

    pub fn get(&self, j: usize, k: usize) -> &Operator {
        &self.rho[j * self.n + k]
    }

    /// Σ α_j*α_k tr[ρ^{jk}X] / Σ α_j*α_k tr[ρ^{jk}].
    pub fn combined(&self, weights: &[Complex64], x: &Operator) -> Complex64 {
        let (num, den) = self.weighted(weights, x);
        num / den
    }

    fn weighted(&self, weights: &[Complex64], x: &Operator) -> (Complex64, Complex64) {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = Complex64::new(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                let w = weights[j].conj() * weights[k];
                let r = self.get(j, k);
                num += w * r.trace_product(x);
                den += w * r.trace();
            }
        }
        (num, den)
    }

    /// ρ^{kj} ← (ρ^{jk})† for j < k, Hermitian diagonal; returns the defect.
    pub fn symmetrize(&mut self) -> f64 {
        let n = self.n;
        let mut defect: f64 = 0.0;
        for j in 0..n {
            let d = &mut self.rho[j * n + j];
            defect = defect.max(d.hermitian_residual());
            *d = d.hermitian_part();
            for k in j + 1..n {
                let target = self.rho[j * n + k].adjoint();
                defect = defect.max(self.rho[k * n + j].max_abs_diff(&target));
                self.rho[k * n + j] = target;
            }
        }
        defect
    }
}

pub(crate) fn cat_dual_all(model: &SystemModel, f: &[Complex64], rho: &[Operator]) -> Blocks {
    let n = f.len();
    rho.iter()
        .enumerate()
        .map(|(i, r)| cat_generator_dual(model, r, f[i / n], f[i % n]))
        .collect()
}

/// `<prefix>_<j><k>_<label>` with 1-based mode indices.
fn pair_tag(j: usize, k: usize, n: usize) -> String {
    if n < 10 {
        format!("{}{}", j + 1, k + 1)
    } else {
        format!("{}.{}", j + 1, k + 1)
    }
}

pub(crate) fn cat_columns(prefix: &str, n: usize, observables: &[Observable]) -> Vec<String> {
    let mut cols = Vec::new();
    for o in observables {
        for j in 0..n {
            for k in 0..n {
                cols.push(format!("{prefix}_{}_{}", pair_tag(j, k, n), o.label));
            }
        }
        cols.push(format!("combined_{}", o.label));
    }
    cols
}

pub(crate) fn cat_row(state: &CatState, weights: &[Complex64], observables: &[Observable]) -> Vec<Complex64> {
    let mut row = Vec::new();
    for o in observables {
        for r in &state.rho {
            row.push(r.trace_product(&o.op));
        }
        row.push(state.combined(weights, &o.op));
    }
    row
}

fn check_setup(model: &SystemModel, modes: &CoherentModes, stepping: &Stepping, observables: &[Observable]) -> Result<usize> {
    let steps = stepping.steps()?;
    if !modes.modes().covers(stepping.t_end) {
        return Err(Error::Grid(format!(
            "run horizon {} exceeds the sampled modes and their tails are not zero",
            stepping.t_end
        )));
    }
    for o in observables {
        if o.op.dim() != model.dim() {
            return Err(Error::Dimension(format!(
                "observable `{}` is {}x{}, system dimension is {}",
                o.label,
                o.op.dim(),
                o.op.dim(),
                model.dim()
            )));
        }
    }
    Ok(steps)
}

/// RK4 integration of the n² coupled equations ρ̇^{jk} = (G^{jk})*(ρ^{jk}).
/// Columns: `mu_<jk>_<label>` per pair and `combined_<label>`.
pub fn propagate_cat_master(model: &SystemModel, modes: &CoherentModes, stepping: Stepping, observables: &[Observable]) -> Result<Series> {
    let steps = check_setup(model, modes, &stepping, observables)?;
    let n = modes.len();
    let mset = modes.modes();
    let weights = modes.weights();
    let mut state = CatState::initial(model, modes);
    let mut series = Series::new(cat_columns("mu", n, observables));
    series.push(0.0, cat_row(&state, weights, observables));
    let g = modes.gram();
    for step in 1..=steps {
        let t0 = stepping.time(step - 1);
        state.rho = rk4(&state.rho, t0, stepping.dt, |t, y| cat_dual_all(model, &mset.values(t), y));
        state.t = stepping.time(step);
        let defect = state.symmetrize();
        if !state.rho.iter().all(Operator::is_finite) {
            return Err(Error::NumericalBlowup { step, t: state.t });
        }
        series.note_max("max_symmetry_correction", defect);
        let trace_err = (0..n * n)
            .map(|i| (state.rho[i].trace() - g[(i / n, i % n)]).norm())
            .fold(0.0, f64::max);
        series.note_max("max_gram_trace_error", trace_err);
        if stepping.records(step) {
            series.push(state.t, cat_row(&state, weights, observables));
        }
    }
    Ok(series)
}

/// Linear part of the filter diffusion: (L + S f_k)ρ^{jk} + ρ^{jk}(L† + S† f_j*).
fn cat_diffusion(model: &SystemModel, f: &[Complex64], rho: &[Operator]) -> Blocks {
    let n = f.len();
    let l = model.l();
    let ld = model.l_dag();
    let s = model.s();
    let sd = model.s_dag();
    rho.iter()
        .enumerate()
        .map(|(i, r)| {
            let (j, k) = (i / n, i % n);
            let mut out = &l.matmul(r) + &r.matmul(ld);
            out.axpy(f[k], &s.matmul(r));
            out.axpy(f[j].conj(), &r.matmul(sd));
            out
        })
        .collect()
}

/// Σ_j (|α_j|²/|α|²) tr[X^{jj}]
fn weighted_diag_trace(p: &[f64], x: &[Operator]) -> Complex64 {
    let n = p.len();
    (0..n).map(|j| x[j * n + j].trace() * p[j]).sum()
}

/// The coherent-superposition filter.
#[derive(Clone, Debug)]
pub struct CatFilter<'a> {
    pub model: &'a SystemModel,
    pub modes: &'a CoherentModes,
    pub observables: &'a [Observable],
    pub scheme: Scheme,
    probs: Vec<f64>,
}

impl<'a> CatFilter<'a> {
    pub fn new(model: &'a SystemModel, modes: &'a CoherentModes, observables: &'a [Observable]) -> Self {
        let total = modes.weight_norm_sqr();
        CatFilter {
            model,
            modes,
            observables,
            scheme: Scheme::EulerMaruyama,
            probs: modes.weights().iter().map(|a| a.norm_sqr() / total).collect(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// k = Σ_j (|α_j|²/|α|²) π^{jj}(L + S f_j + L† + S† f_j*).
    pub fn innovation_drift_at(&self, state: &CatState, f: &[Complex64]) -> Result<f64> {
        let b = cat_diffusion(self.model, f, &state.rho);
        real_part(weighted_diag_trace(&self.probs, &b), 1.0, "cat innovation drift", state.t)
    }

    /// Σ_j (|α_j|²/|α|²) tr ρ^{jj}: equals 1 along exact and Euler trajectories.
    pub fn weighted_trace(&self, state: &CatState) -> f64 {
        weighted_diag_trace(&self.probs, &state.rho).re
    }
}

/// One step of the coupled coherent-superposition filter.
pub fn cat_filter_step(filter: &CatFilter<'_>, state: &CatState, dy: f64, t: f64, dt: f64) -> Result<(CatState, StepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    let model = filter.model;
    let f = filter.modes.modes().values(t);
    let bx = cat_diffusion(model, &f, &state.rho);
    let k = real_part(weighted_diag_trace(&filter.probs, &bx), 1.0, "cat innovation drift", t)?;
    let dw = dy - k * dt;
    let drift = cat_dual_all(model, &f, &state.rho);
    let next = filter_step(
        &state.rho,
        &drift,
        &bx,
        Complex64::new(k, 0.0),
        dt,
        dw,
        filter.scheme,
        |v| cat_diffusion(model, &f, v),
        |v| weighted_diag_trace(&filter.probs, &cat_diffusion(model, &f, v)),
    );
    let mut out = CatState {
        rho: next,
        n: state.n,
        t: state.t + dt,
    };
    if !out.rho.iter().all(Operator::is_finite) {
        return Err(Error::NumericalBlowup { step: 0, t: out.t });
    }
    let symmetry_residual = out.symmetrize();
    let trace_before = filter.weighted_trace(&out);
    Ok((
        out,
        StepReport {
            innovation_drift: k,
            dw,
            trace_before,
            symmetry_residual,
        },
    ))
}

impl Filter for CatFilter<'_> {
    type State = CatState;

    fn initial(&self) -> Result<CatState> {
        Ok(CatState::initial(self.model, self.modes))
    }

    fn innovation_drift(&self, state: &CatState, t: f64) -> Result<f64> {
        self.innovation_drift_at(state, &self.modes.modes().values(t))
    }

    fn step(&self, state: &CatState, dy: f64, t: f64, dt: f64) -> Result<(CatState, StepReport)> {
        cat_filter_step(self, state, dy, t, dt)
    }

    fn columns(&self) -> Vec<String> {
        cat_columns("pi", self.modes.len(), self.observables)
    }

    fn row(&self, state: &CatState) -> Result<Vec<Complex64>> {
        Ok(cat_row(state, self.modes.weights(), self.observables))
    }

    fn covers(&self, t_end: f64) -> bool {
        self.modes.modes().covers(t_end)
    }
}

/// Diagonal ancilla drive C(t) = diag(f₁(t), …, f_n(t)).
pub fn cat_drive(f: &[Complex64]) -> Operator {
    Operator::diag(f)
}

/// Extended state on the n·d space.
#[derive(Clone, Debug, PartialEq)]
pub struct CatExtendedState {
    pub varpi: Operator,
    pub t: f64,
}

/// n-level embedded formulation of the coherent-superposition filter.
#[derive(Clone, Debug)]
pub struct CatExtendedFilter<'a> {
    pub model: &'a SystemModel,
    pub modes: &'a CoherentModes,
    pub observables: &'a [Observable],
    pub scheme: Scheme,
    emb: Embedding,
}

impl<'a> CatExtendedFilter<'a> {
    pub fn new(model: &'a SystemModel, modes: &'a CoherentModes, observables: &'a [Observable]) -> Result<Self> {
        if let Some(j) = modes.weights().iter().position(|a| a.norm() == 0.0) {
            return Err(Error::Embedding(format!("weight α_{} is zero", j + 1)));
        }
        Ok(CatExtendedFilter {
            model,
            modes,
            observables,
            scheme: Scheme::EulerMaruyama,
            emb: Embedding::new(model, modes.len()),
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Block (r, c) = α_c* α_r g_{cr}/|α|² · |η⟩⟨η|, so that
    /// (|α|²/α_j*α_k)·block(k, j) = g_{jk}|η⟩⟨η|.
    pub fn initial_state(&self) -> CatExtendedState {
        let n = self.modes.len();
        let a = self.modes.weights();
        let g = self.modes.gram();
        let total = self.modes.weight_norm_sqr();
        let eta = self.model.initial_density();
        let mut w = ExtendedOperator::zeros(n, self.model.dim());
        for r in 0..n {
            for c in 0..n {
                w.set_block(r, c, &eta.scale(a[c].conj() * a[r] * g[(c, r)] / total));
            }
        }
        CatExtendedState {
            varpi: w.into_operator(),
            t: 0.0,
        }
    }

    /// π^{jk} = (|α|²/α_j*α_k)·block(k, j).
    pub fn components(&self, state: &CatExtendedState) -> Result<CatState> {
        let n = self.modes.len();
        let a = self.modes.weights();
        let total = self.modes.weight_norm_sqr();
        let ext = ExtendedOperator::new(n, self.model.dim(), state.varpi.clone())?;
        let rho = (0..n * n)
            .map(|i| {
                let (j, k) = (i / n, i % n);
                ext.block(k, j).scale(Complex64::new(total, 0.0) / (a[j].conj() * a[k]))
            })
            .collect();
        Ok(CatState { rho, n, t: state.t })
    }
}

/// One step of the embedded coherent-superposition filter, trace renormalized.
pub fn cat_extended_step(
    filter: &CatExtendedFilter<'_>,
    state: &CatExtendedState,
    dy: f64,
    t: f64,
    dt: f64,
) -> Result<(CatExtendedState, StepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    let emb = &filter.emb;
    let drive = emb.drive(&cat_drive(&filter.modes.modes().values(t)));
    let w = &state.varpi;
    let bx = emb.diffusion(&drive, w);
    let c = real_part(bx.trace(), 1.0, "cat extended innovation drift", t)?;
    let dw = dy - c * dt;
    let next = filter_step(
        &vec![w.clone()],
        &vec![emb.dual_drift(&drive, w)],
        &vec![bx],
        Complex64::new(c, 0.0),
        dt,
        dw,
        filter.scheme,
        |v| vec![emb.diffusion(&drive, &v[0])],
        |v| emb.diffusion(&drive, &v[0]).trace(),
    );
    let t_next = state.t + dt;
    let mut varpi = next.into_iter().next().expect("one block");
    if !varpi.is_finite() {
        return Err(Error::NumericalBlowup { step: 0, t: t_next });
    }
    let norm = real_part(varpi.trace(), 1.0, "tr ϖ", t_next)?;
    if !(norm > 0.0) {
        return Err(Error::NumericalBlowup { step: 0, t: t_next });
    }
    varpi *= Complex64::new(1.0 / norm, 0.0);
    let symmetry_residual = varpi.hermitian_residual();
    Ok((
        CatExtendedState {
            varpi: varpi.hermitian_part(),
            t: t_next,
        },
        StepReport {
            innovation_drift: c,
            dw,
            trace_before: norm,
            symmetry_residual,
        },
    ))
}

impl Filter for CatExtendedFilter<'_> {
    type State = CatExtendedState;

    fn initial(&self) -> Result<CatExtendedState> {
        Ok(self.initial_state())
    }

    fn innovation_drift(&self, state: &CatExtendedState, t: f64) -> Result<f64> {
        let drive = self.emb.drive(&cat_drive(&self.modes.modes().values(t)));
        real_part(
            self.emb.diffusion(&drive, &state.varpi).trace(),
            1.0,
            "cat extended innovation drift",
            t,
        )
    }

    fn step(&self, state: &CatExtendedState, dy: f64, t: f64, dt: f64) -> Result<(CatExtendedState, StepReport)> {
        cat_extended_step(self, state, dy, t, dt)
    }

    fn columns(&self) -> Vec<String> {
        cat_columns("pi", self.modes.len(), self.observables)
    }

    fn row(&self, state: &CatExtendedState) -> Result<Vec<Complex64>> {
        Ok(cat_row(&self.components(state)?, self.modes.weights(), self.observables))
    }

    fn covers(&self, t_end: f64) -> bool {
        self.modes.modes().covers(t_end)
    }
}

/// Solution of ṙ^{jk} = −(f_j* f_k − ½|f_j|² − ½|f_k|²) r^{jk}, r^{jk}(0) = 1.
///
/// Closed form when all modes share one built-in shape, RK4 otherwise. In
/// both cases r^{jk}(t) = 1/g^{jk}_{[0,t]}, the inverse overlap of the
/// modes restricted to [0, t].
pub fn rjk_weight(modes: &ModeSet, j: usize, k: usize, t: f64) -> Result<Complex64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("r^jk requested at t = {t} < 0")));
    }
    if j >= modes.len() || k >= modes.len() {
        return Err(Error::Dimension(format!("mode index out of range for {} modes", modes.len())));
    }
    if j == k || t == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    if let Some(ms) = modes.modes() {
        if ms.iter().all(|m| m.shape == ms[0].shape) {
            let used = 1.0 - ms[0].shape.tail(t);
            let (a, b) = (ms[j].amplitude, ms[k].amplitude);
            let exponent = (0.5 * a.norm_sqr() + 0.5 * b.norm_sqr() - a.conj() * b) * used;
            return Ok(exponent.exp());
        }
    }
    Ok(rjk_weight_ode(modes, j, k, t))
}

/// RK4 route for [`rjk_weight`], on a step no coarser than the mode grid.
pub fn rjk_weight_ode(modes: &ModeSet, j: usize, k: usize, t: f64) -> Complex64 {
    let h_max = modes.grid().step;
    let n = ((t / h_max).ceil() as usize).max(1);
    let h = t / n as f64;
    let rate = |s: f64| {
        let (fj, fk) = (modes.value(j, s), modes.value(k, s));
        -(fj.conj() * fk - 0.5 * fj.norm_sqr() - 0.5 * fk.norm_sqr())
    };
    let mut r = Complex64::new(1.0, 0.0);
    for i in 0..n {
        let s = i as f64 * h;
        let k1 = rate(s) * r;
        let k2 = rate(s + 0.5 * h) * (r + k1 * (0.5 * h));
        let k3 = rate(s + 0.5 * h) * (r + k2 * (0.5 * h));
        let k4 = rate(s + h) * (r + k3 * h);
        r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    r
}
