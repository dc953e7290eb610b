//! Unconditional dynamics for a single-photon input field.
//!
//! The expectation μ(X) splits into four coupled functionals μ^{jk}, j,k ∈ {1,0},
//! indexed by photon-number components of the field. Each is stored as a d×d
//! matrix ρ^{jk} with μ^{jk}(X) = tr[ρ^{jk}X] and propagated with RK4.

use num_complex::Complex64;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::integrate::{rk4, Blocks};
use crate::model::{ExtendedConfig, Pulse, SystemModel};
use crate::operators::{evans_hudson, kron, lindblad, lindblad_dual, qubit, ExtendedOperator, Operator};
use crate::series::{component_column, Observable, Series, Stepping};

/// Photon-number index pairs in storage order.
pub const PAIRS: [(u8, u8); 4] = [(1, 1), (1, 0), (0, 1), (0, 0)];

/// One value per photon-number index pair (j, k).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Quad<T> {
    pub one_one: T,
    pub one_zero: T,
    pub zero_one: T,
    pub zero_zero: T,
}

impl<T> Quad<T> {
    pub fn get(&self, j: u8, k: u8) -> &T {
        match (j, k) {
            (1, 1) => &self.one_one,
            (1, 0) => &self.one_zero,
            (0, 1) => &self.zero_one,
            (0, 0) => &self.zero_zero,
            _ => panic!("photon index pair ({j},{k}) out of range"),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Quad<U> {
        Quad {
            one_one: f(&self.one_one),
            one_zero: f(&self.one_zero),
            zero_one: f(&self.zero_one),
            zero_zero: f(&self.zero_zero),
        }
    }

    pub fn into_vec(self) -> Vec<T> {
        vec![self.one_one, self.one_zero, self.zero_one, self.zero_zero]
    }

    pub fn from_vec(v: Vec<T>) -> Self {
        let [one_one, one_zero, zero_one, zero_zero]: [T; 4] = v.try_into().unwrap_or_else(|_| panic!("a quad needs exactly four entries"));
        Quad {
            one_one,
            one_zero,
            zero_one,
            zero_zero,
        }
    }
}

impl Quad<Operator> {
    /// ρ¹¹ = ρ⁰⁰ = |η⟩⟨η|, ρ¹⁰ = ρ⁰¹ = 0.
    pub fn initial(model: &SystemModel) -> Self {
        let eta = model.initial_density();
        let zero = Operator::zeros(model.dim());
        Quad {
            one_one: eta.clone(),
            one_zero: zero.clone(),
            zero_one: zero,
            zero_zero: eta,
        }
    }

    pub fn functional(&self, x: &Operator) -> Quad<Complex64> {
        self.map(|rho| rho.trace_product(x))
    }

    /// ρ⁰¹ ← (ρ¹⁰)†, ρ¹¹ and ρ⁰⁰ ← Hermitian parts. Returns the largest
    /// correction applied.
    pub fn symmetrize(&mut self) -> f64 {
        let target = self.one_zero.adjoint();
        let mut drift = self.zero_one.max_abs_diff(&target);
        self.zero_one = target;
        drift = drift.max(self.one_one.hermitian_residual());
        drift = drift.max(self.zero_zero.hermitian_residual());
        self.one_one = self.one_one.hermitian_part();
        self.zero_zero = self.zero_zero.hermitian_part();
        drift
    }
}

/// Evans–Hudson images of one observable X evaluated under a functional:
/// μ(L(X)), μ(S†XS − X), μ(S†[X,L]), μ([L†,X]S).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvansHudsonValues {
    pub generator: Complex64,
    pub gauge: Complex64,
    pub creation: Complex64,
    pub annihilation: Complex64,
}

impl EvansHudsonValues {
    /// Evaluates the four images of `x` against the dual matrix `rho`.
    pub fn evaluate(model: &SystemModel, rho: &Operator, x: &Operator) -> Result<Self> {
        let eh = evans_hudson(model, x)?;
        Ok(EvansHudsonValues {
            generator: rho.trace_product(&lindblad(model, x)?),
            gauge: rho.trace_product(&eh.gauge),
            creation: rho.trace_product(&eh.creation),
            annihilation: rho.trace_product(&eh.annihilation),
        })
    }
}

/// Heisenberg-picture right-hand sides of the coupled single-photon master
/// equations for one observable:
///
/// ```text
/// μ̇¹¹ = μ¹¹(L X) + μ⁰¹(S†[X,L])ξ* + μ¹⁰([L†,X]S)ξ + μ⁰⁰(S†XS − X)|ξ|²
/// μ̇¹⁰ = μ¹⁰(L X) + μ⁰⁰(S†[X,L])ξ*
/// μ̇⁰¹ = μ⁰¹(L X) + μ⁰⁰([L†,X]S)ξ
/// μ̇⁰⁰ = μ⁰⁰(L X)
/// ```
pub fn heisenberg_rhs_sp(mu: &Quad<EvansHudsonValues>, xi: Complex64) -> Quad<Complex64> {
    let xc = xi.conj();
    Quad {
        one_one: mu.one_one.generator + mu.zero_one.creation * xc + mu.one_zero.annihilation * xi + mu.zero_zero.gauge * xi.norm_sqr(),
        one_zero: mu.one_zero.generator + mu.zero_zero.creation * xc,
        zero_one: mu.zero_one.generator + mu.zero_zero.annihilation * xi,
        zero_zero: mu.zero_zero.generator,
    }
}

/// Schrödinger-picture adjoint of [`heisenberg_rhs_sp`] acting on the four
/// dual matrices.
pub fn dual_rhs_sp(model: &SystemModel, rho: &Quad<Operator>, xi: Complex64) -> Quad<Operator> {
    let xc = xi.conj();
    let l = model.l();
    let ld = model.l_dag();
    let s = model.s();
    let sd = model.s_dag();
    // dual of S†[X,L]: LρS† − ρS†L
    let creation = |r: &Operator| &l.matmul(r).matmul(sd) - &r.matmul(sd).matmul(l);
    // dual of [L†,X]S: SρL† − L†Sρ
    let annihilation = |r: &Operator| &s.matmul(r).matmul(ld) - &ld.matmul(s).matmul(r);
    // dual of S†XS − X: SρS† − ρ
    let gauge = |r: &Operator| &s.matmul(r).matmul(sd) - r;

    let mut d11 = lindblad_dual(model, &rho.one_one);
    d11.axpy(xc, &creation(&rho.zero_one));
    d11.axpy(xi, &annihilation(&rho.one_zero));
    d11.axpy(Complex64::new(xi.norm_sqr(), 0.0), &gauge(&rho.zero_zero));

    let mut d10 = lindblad_dual(model, &rho.one_zero);
    d10.axpy(xc, &creation(&rho.zero_zero));

    let mut d01 = lindblad_dual(model, &rho.zero_one);
    d01.axpy(xi, &annihilation(&rho.zero_zero));

    Quad {
        one_one: d11,
        one_zero: d10,
        zero_one: d01,
        zero_zero: lindblad_dual(model, &rho.zero_zero),
    }
}

/// Coupled master state at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpMasterState {
    pub rho: Quad<Operator>,
    pub t: f64,
}

impl SpMasterState {
    pub fn initial(model: &SystemModel) -> Self {
        SpMasterState {
            rho: Quad::initial(model),
            t: 0.0,
        }
    }

    /// One RK4 step. With `enforce` the conjugate symmetry and Hermiticity
    /// are restored afterwards; the correction size is returned.
    pub fn step(&mut self, model: &SystemModel, pulse: &Pulse, dt: f64, enforce: bool) -> f64 {
        let y: Blocks = self.rho.clone().into_vec();
        let next = rk4(&y, self.t, dt, |t, y| {
            let q = Quad::from_vec(y.to_vec());
            dual_rhs_sp(model, &q, pulse.value(t)).into_vec()
        });
        self.rho = Quad::from_vec(next);
        self.t += dt;
        if enforce {
            self.rho.symmetrize()
        } else {
            0.0
        }
    }
}

fn check_horizon(covered: bool, t_end: f64) -> Result<()> {
    if covered {
        Ok(())
    } else {
        Err(Error::Grid(format!(
            "run horizon {t_end} exceeds the sampled field and its tail is not zero"
        )))
    }
}

fn check_observables(model: &SystemModel, observables: &[Observable]) -> Result<()> {
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
    Ok(())
}

pub(crate) fn quad_columns(prefix: &str, observables: &[Observable]) -> Vec<String> {
    observables
        .iter()
        .flat_map(|o| PAIRS.iter().map(move |&(j, k)| component_column(prefix, j, k, &o.label)))
        .collect()
}

pub(crate) fn quad_row(rho: &Quad<Operator>, observables: &[Observable]) -> Vec<Complex64> {
    observables.iter().flat_map(|o| rho.functional(&o.op).into_vec()).collect()
}

/// Integrates the coupled equations from ρ¹¹ = ρ⁰⁰ = |η⟩⟨η|, ρ¹⁰ = ρ⁰¹ = 0 and
/// emits μ^{jk}_t(X) as columns `mu_<jk>_<label>`.
pub fn propagate_master_sp(model: &SystemModel, pulse: &Pulse, stepping: Stepping, observables: &[Observable]) -> Result<Series> {
    let steps = stepping.steps()?;
    check_horizon(pulse.covers(stepping.t_end), stepping.t_end)?;
    check_observables(model, observables)?;

    let mut state = SpMasterState::initial(model);
    let mut series = Series::new(quad_columns("mu", observables));
    series.push(0.0, quad_row(&state.rho, observables));
    for n in 1..=steps {
        let drift = state.step(model, pulse, stepping.dt, true);
        state.t = stepping.time(n);
        if !state.rho.one_one.is_finite() || !state.rho.one_zero.is_finite() {
            return Err(Error::NumericalBlowup { step: n, t: state.t });
        }
        series.note_max("max_symmetry_correction", drift);
        series.note_max("max_trace_error_11", (state.rho.one_one.trace().re - 1.0).abs());
        series.note_max("max_trace_error_00", (state.rho.zero_zero.trace().re - 1.0).abs());
        if stepping.records(n) {
            series.push(state.t, quad_row(&state.rho, observables));
        }
    }
    Ok(series)
}

/// Block position of photon label j in the two-level ancilla (e₁ first).
pub fn block_index(label: u8) -> usize {
    usize::from(label == 0)
}

/// σ₊ = |e₁⟩⟨e₀| in block order.
fn ancilla_raise() -> Operator {
    qubit::sigma_plus()
}

/// Ancilla drive K(t) = νξ(t)σ₊ of the single-photon embedding.
pub fn sp_drive(cfg: &ExtendedConfig, xi: Complex64) -> Operator {
    ancilla_raise().scale(cfg.nu() * xi)
}

/// Extended generator applied to A⊗X (Heisenberg picture):
/// A⊗L(X) + (Aσ₊)⊗[L†,X]S νξ + (σ₋A)⊗S†[X,L] ν*ξ* + (σ₋Aσ₊)⊗(S†XS−X)|νξ|².
pub fn extended_generator_sp(
    model: &SystemModel,
    a: &Operator,
    x: &Operator,
    xi: Complex64,
    cfg: &ExtendedConfig,
) -> Result<ExtendedOperator> {
    if a.dim() != 2 {
        return Err(Error::Dimension(format!("ancilla operator must be 2x2, got {0}x{0}", a.dim())));
    }
    if cfg.alpha0().norm() == 0.0 {
        return Err(Error::Embedding("α₀ must be non-zero".into()));
    }
    let eh = evans_hudson(model, x)?;
    let sp = qubit::sigma_plus();
    let sm = qubit::sigma_minus();
    let nx = cfg.nu() * xi;
    let mut out = kron(a, &lindblad(model, x)?).into_operator();
    out.axpy(nx, kron(&a.matmul(&sp), &eh.annihilation).as_operator());
    out.axpy(nx.conj(), kron(&sm.matmul(a), &eh.creation).as_operator());
    out.axpy(
        Complex64::new(nx.norm_sqr(), 0.0),
        kron(&sm.matmul(a).matmul(&sp), &eh.gauge).as_operator(),
    );
    ExtendedOperator::new(2, model.dim(), out)
}

/// Extended initial state: blocks (e₁,e₁) = |α₁|²|η⟩⟨η|, (e₀,e₀) = |α₀|²|η⟩⟨η|.
pub fn extended_initial_sp(model: &SystemModel, cfg: &ExtendedConfig) -> Operator {
    let eta = model.initial_density();
    let mut w = ExtendedOperator::zeros(2, model.dim());
    w.set_block(block_index(1), block_index(1), &eta.scale_real(cfg.alpha1().norm_sqr()));
    w.set_block(block_index(0), block_index(0), &eta.scale_real(cfg.alpha0().norm_sqr()));
    w.into_operator()
}

/// Component matrices from an extended state:
/// ρ^{jk} = w₁₁ · block(k, j) / (w_{jk} · tr[block(e₁, e₁)]).
pub fn extract_sp(w: &Operator, d: usize, cfg: &ExtendedConfig) -> Result<Quad<Operator>> {
    if cfg.alpha1().norm() == 0.0 {
        return Err(Error::Embedding(
            "α₁ = 0 leaves the photon branch unobservable; components cannot be extracted".into(),
        ));
    }
    let ext = ExtendedOperator::new(2, d, w.clone())?;
    let norm = ext.block(block_index(1), block_index(1)).trace();
    let w11 = cfg.w(1, 1);
    let comp = |j: u8, k: u8| ext.block(block_index(k), block_index(j)).scale(w11 / (cfg.w(j, k) * norm));
    Ok(Quad {
        one_one: comp(1, 1),
        one_zero: comp(1, 0),
        zero_one: comp(0, 1),
        zero_zero: comp(0, 0),
    })
}

/// Propagates the 2d×2d extended master equation and reports the extracted
/// components under the same column names as [`propagate_master_sp`].
pub fn propagate_master_sp_extended(
    model: &SystemModel,
    pulse: &Pulse,
    cfg: &ExtendedConfig,
    stepping: Stepping,
    observables: &[Observable],
) -> Result<Series> {
    let steps = stepping.steps()?;
    check_horizon(pulse.covers(stepping.t_end), stepping.t_end)?;
    check_observables(model, observables)?;
    let emb = Embedding::new(model, 2);
    let d = model.dim();
    let mut y: Blocks = vec![extended_initial_sp(model, cfg)];
    let mut series = Series::new(quad_columns("mu", observables));
    series.push(0.0, quad_row(&extract_sp(&y[0], d, cfg)?, observables));
    for n in 1..=steps {
        let t = stepping.time(n - 1);
        y = rk4(&y, t, stepping.dt, |s, y| {
            let drive = emb.drive(&sp_drive(cfg, pulse.value(s)));
            vec![emb.dual_drift(&drive, &y[0])]
        });
        y[0] = y[0].hermitian_part();
        if !y[0].is_finite() {
            return Err(Error::NumericalBlowup {
                step: n,
                t: stepping.time(n),
            });
        }
        if stepping.records(n) {
            series.push(stepping.time(n), quad_row(&extract_sp(&y[0], d, cfg)?, observables));
        }
    }
    Ok(series)
}
