//! Physical problem description: the (S, L, H) system triple with its initial
//! vector, single-photon pulses, coherent mode families and the two-level
//! ancilla weights used by the embedded formulations.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{Operator, ZERO};

/// Tolerance for Hermiticity, unitarity and normalization checks on user input.
pub const DEFAULT_MODEL_TOLERANCE: f64 = 1e-10;

/// Tolerance for the ∫|ξ|² = 1 and Σ α*αg = 1 normalization checks.
pub const FIELD_NORM_TOLERANCE: f64 = 1e-6;

/// Gram matrices with a larger condition number are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e8;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelViolation {
    Dimension(String),
    NonUnitaryS { residual: f64 },
    NonHermitianH { residual: f64 },
    UnnormalizedEta { residual: f64 },
    NonFinite(&'static str),
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelViolation::Dimension(msg) => write!(f, "dimension: {msg}"),
            ModelViolation::NonUnitaryS { residual } => {
                write!(f, "S is not unitary (max |S†S − I| = {residual:.3e})")
            }
            ModelViolation::NonHermitianH { residual } => {
                write!(f, "H is not Hermitian (max |H − H†| = {residual:.3e})")
            }
            ModelViolation::UnnormalizedEta { residual } => {
                write!(f, "eta is not normalized (| ‖eta‖ − 1 | = {residual:.3e})")
            }
            ModelViolation::NonFinite(what) => write!(f, "{what} has non-finite entries"),
        }
    }
}

impl ModelViolation {
    /// Config-file field the violation refers to.
    pub fn field(&self) -> &'static str {
        match self {
            ModelViolation::Dimension(_) => "[system]",
            ModelViolation::NonUnitaryS { .. } => "[system].S",
            ModelViolation::NonHermitianH { .. } => "[system].H",
            ModelViolation::UnnormalizedEta { .. } => "[system].eta",
            ModelViolation::NonFinite(what) => match *what {
                "S" => "[system].S",
                "L" => "[system].L",
                "H" => "[system].H",
                _ => "[system].eta",
            },
        }
    }
}

/// System operators (S, L, H) on a d-dimensional space plus the initial
/// system vector η. Products used on every integration step are cached.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    s: Operator,
    l: Operator,
    h: Operator,
    eta: Vec<Complex64>,
    s_dag: Operator,
    l_dag: Operator,
    l_dag_l: Operator,
}

impl SystemModel {
    /// Validated constructor.
    pub fn new(s: Operator, l: Operator, h: Operator, eta: Vec<Complex64>) -> Result<Self> {
        let model = Self::from_parts(s, l, h, eta)?;
        validate(&model).map_err(Error::Model)?;
        Ok(model)
    }

    /// Assembles a model without checking the unitarity, Hermiticity and
    /// normalization invariants; see [`validate`].
    pub fn from_parts(s: Operator, l: Operator, h: Operator, eta: Vec<Complex64>) -> Result<Self> {
        let d = s.dim();
        let mut bad = Vec::new();
        if l.dim() != d {
            bad.push(format!("L is {0}x{0}, S is {d}x{d}", l.dim()));
        }
        if h.dim() != d {
            bad.push(format!("H is {0}x{0}, S is {d}x{d}", h.dim()));
        }
        if eta.len() != d {
            bad.push(format!("eta has {} entries, S is {d}x{d}", eta.len()));
        }
        if !bad.is_empty() {
            return Err(Error::Model(bad.into_iter().map(ModelViolation::Dimension).collect()));
        }
        let s_dag = s.adjoint();
        let l_dag = l.adjoint();
        let l_dag_l = l_dag.matmul(&l);
        Ok(SystemModel {
            s,
            l,
            h,
            eta,
            s_dag,
            l_dag,
            l_dag_l,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }
    pub fn s(&self) -> &Operator {
        &self.s
    }
    pub fn l(&self) -> &Operator {
        &self.l
    }
    pub fn h(&self) -> &Operator {
        &self.h
    }
    pub fn eta(&self) -> &[Complex64] {
        &self.eta
    }
    pub fn s_dag(&self) -> &Operator {
        &self.s_dag
    }
    pub fn l_dag(&self) -> &Operator {
        &self.l_dag
    }
    pub fn l_dag_l(&self) -> &Operator {
        &self.l_dag_l
    }

    /// |η⟩⟨η|
    pub fn initial_density(&self) -> Operator {
        Operator::projector(&self.eta)
    }

    /// Same system with a different initial vector.
    pub fn with_eta(&self, eta: Vec<Complex64>) -> Result<Self> {
        Self::new(self.s.clone(), self.l.clone(), self.h.clone(), eta)
    }
}

/// Checks every [`SystemModel`] invariant at the default tolerance and
/// reports all violations with their residuals.
pub fn validate(model: &SystemModel) -> std::result::Result<(), Vec<ModelViolation>> {
    validate_with_tolerance(model, DEFAULT_MODEL_TOLERANCE)
}

pub fn validate_with_tolerance(model: &SystemModel, tol: f64) -> std::result::Result<(), Vec<ModelViolation>> {
    let mut out = Vec::new();
    for (name, op) in [("S", &model.s), ("L", &model.l), ("H", &model.h)] {
        if !op.is_finite() {
            out.push(ModelViolation::NonFinite(name));
        }
    }
    if model.eta.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        out.push(ModelViolation::NonFinite("eta"));
    }
    if !out.is_empty() {
        return Err(out);
    }
    let residual = model.s.unitary_residual();
    if residual > tol {
        out.push(ModelViolation::NonUnitaryS { residual });
    }
    let residual = model.h.hermitian_residual();
    if residual > tol {
        out.push(ModelViolation::NonHermitianH { residual });
    }
    let norm = model.eta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let residual = (norm - 1.0).abs();
    if residual > tol {
        out.push(ModelViolation::UnnormalizedEta { residual });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Built-in unit-norm temporal profiles. Values are real and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub enum PulseShape {
    /// √Γ e^{−Γt/2}
    DecayingExponential { gamma: f64 },
    /// ∝ e^{Γ(t−end)/2} on [0, end], zero afterwards.
    RisingExponential { gamma: f64, end: f64 },
    /// |ξ|² is a normal density with the given center and standard deviation,
    /// renormalized to [0, ∞).
    Gaussian { center: f64, width: f64 },
    /// 1/√(end − start) on [start, end].
    Constant { start: f64, end: f64 },
}

impl PulseShape {
    fn check(&self) -> Result<()> {
        let ok = match *self {
            PulseShape::DecayingExponential { gamma } => gamma > 0.0 && gamma.is_finite(),
            PulseShape::RisingExponential { gamma, end } => gamma > 0.0 && end > 0.0,
            PulseShape::Gaussian { width, center } => width > 0.0 && center.is_finite(),
            PulseShape::Constant { start, end } => start >= 0.0 && end > start,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Field(format!("invalid pulse parameters {self:?}")))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            PulseShape::DecayingExponential { gamma } => gamma.sqrt() * (-0.5 * gamma * t).exp(),
            PulseShape::RisingExponential { gamma, end } => {
                if t > end {
                    0.0
                } else {
                    let norm = -(-gamma * end).exp_m1();
                    (gamma / norm).sqrt() * (0.5 * gamma * (t - end)).exp()
                }
            }
            PulseShape::Gaussian { center, width } => {
                let z = (t - center) / width;
                let density = (-0.5 * z * z).exp() / (width * (2.0 * std::f64::consts::PI).sqrt());
                (density / gaussian_mass(center, width)).sqrt()
            }
            PulseShape::Constant { start, end } => {
                if t < start || t > end {
                    0.0
                } else {
                    1.0 / (end - start).sqrt()
                }
            }
        }
    }

    /// ∫_t^∞ |u(s)|² ds in closed form.
    pub fn tail(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            PulseShape::DecayingExponential { gamma } => (-gamma * t).exp(),
            PulseShape::RisingExponential { gamma, end } => {
                if t >= end {
                    0.0
                } else {
                    let norm = -(-gamma * end).exp_m1();
                    -(gamma * (t - end)).exp_m1() / norm
                }
            }
            PulseShape::Gaussian { center, width } => {
                let upper = 0.5 * libm::erfc((t - center) / (width * std::f64::consts::SQRT_2));
                upper / gaussian_mass(center, width)
            }
            PulseShape::Constant { start, end } => {
                if t >= end {
                    0.0
                } else {
                    (end - t.max(start)) / (end - start)
                }
            }
        }
    }
}

fn gaussian_mass(center: f64, width: f64) -> f64 {
    0.5 * libm::erfc(-center / (width * std::f64::consts::SQRT_2))
}

/// Uniform sample grid [0, horizon] shared by pulses and mode families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub step: f64,
    pub horizon: f64,
}

impl Grid {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!(
                "grid step {step} and horizon {horizon} must be positive and finite"
            )));
        }
        steps_for(horizon, step)?;
        Ok(Grid { step, horizon })
    }

    pub fn len(&self) -> usize {
        (self.horizon / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    /// Cell index and fractional position of `t`, which must lie in [0, horizon].
    fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.len() - 1;
        let x = t / self.step;
        let i = (x.floor() as usize).min(last.saturating_sub(1));
        (i, (x - i as f64).clamp(0.0, 1.0))
    }
}

/// Number of whole steps of size `dt` covering `span`, or a grid error when
/// `span / dt` is not an integer.
pub fn steps_for(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    let x = span / dt;
    let n = x.round();
    if (x - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Grid(format!("span {span} is not an integer multiple of step {dt}")));
    }
    Ok(n as usize)
}

fn interpolate(samples: &[Complex64], grid: &Grid, t: f64) -> Complex64 {
    let (i, frac) = grid.locate(t);
    samples[i] * (1.0 - frac) + samples[i + 1] * frac
}

/// Trapezoid integral of f(s) over [a, b] ⊂ [0, horizon] with f linearly
/// interpolated at the partial-cell endpoints.
fn trapezoid(grid: &Grid, a: f64, b: f64, f: impl Fn(usize) -> Complex64, at: impl Fn(f64) -> Complex64) -> Complex64 {
    if b <= a {
        return ZERO;
    }
    let (ia, _) = grid.locate(a);
    let (ib, _) = grid.locate(b);
    if ia == ib {
        return (at(a) + at(b)) * (0.5 * (b - a));
    }
    let mut acc = (at(a) + f(ia + 1)) * (0.5 * (grid.time(ia + 1) - a));
    for i in ia + 1..ib {
        acc += (f(i) + f(i + 1)) * (0.5 * grid.step);
    }
    acc += (f(ib) + at(b)) * (0.5 * (b - grid.time(ib)));
    acc
}

/// A continuous-mode single-photon wavepacket ξ sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Pulse {
    shape: Option<PulseShape>,
    grid: Grid,
    samples: Vec<Complex64>,
    /// r(horizon): norm carried beyond the sampled window.
    tail_beyond: f64,
    /// r(t_i) at each grid node.
    node_tails: Vec<f64>,
}

impl Pulse {
    pub fn from_shape(shape: PulseShape, grid: Grid) -> Result<Self> {
        shape.check()?;
        let samples = (0..grid.len()).map(|i| Complex64::new(shape.value(grid.time(i)), 0.0)).collect();
        let tail = shape.tail(grid.horizon);
        Self::build(Some(shape), grid, samples, tail)
    }

    /// Raw samples ξ(t_i) on [0, horizon] with a declared norm beyond it.
    pub fn from_samples(grid: Grid, samples: Vec<Complex64>, tail_beyond: f64) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} samples supplied for a grid of {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        if !(0.0..=1.0).contains(&tail_beyond) {
            return Err(Error::Field(format!("tail norm {tail_beyond} outside [0, 1]")));
        }
        Self::build(None, grid, samples, tail_beyond)
    }

    /// ξ ≡ 0 on [0, horizon], all of the photon arriving later: the field
    /// seen by the system over the run is vacuum.
    pub fn vacuum(grid: Grid) -> Self {
        Self::from_samples(grid, vec![Complex64::new(0.0, 0.0); grid.len()], 1.0).expect("zero samples with unit tail are valid")
    }

    fn build(shape: Option<PulseShape>, grid: Grid, samples: Vec<Complex64>, tail_beyond: f64) -> Result<Self> {
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Field("pulse samples must be finite".into()));
        }
        let n = samples.len();
        let mut node_tails = vec![0.0; n];
        if let Some(shape) = &shape {
            // Closed form: exact even where the profile jumps between nodes.
            for (i, r) in node_tails.iter_mut().enumerate() {
                *r = shape.tail(grid.time(i));
            }
        } else {
            node_tails[n - 1] = tail_beyond;
            for i in (0..n - 1).rev() {
                let cell = 0.5 * grid.step * (samples[i].norm_sqr() + samples[i + 1].norm_sqr());
                node_tails[i] = node_tails[i + 1] + cell;
            }
        }
        let total = node_tails[0];
        if (total - 1.0).abs() > FIELD_NORM_TOLERANCE {
            return Err(Error::Field(format!(
                "pulse norm ∫|ξ|² = {total:.9} differs from 1 by more than {FIELD_NORM_TOLERANCE:e}; \
                 refine the grid or rescale the samples"
            )));
        }
        Ok(Pulse {
            shape,
            grid,
            samples,
            tail_beyond,
            node_tails,
        })
    }

    pub fn shape(&self) -> Option<&PulseShape> {
        self.shape.as_ref()
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn tail_beyond_horizon(&self) -> f64 {
        self.tail_beyond
    }

    /// ξ(t): linear interpolation inside the grid, the closed form beyond it
    /// for built-in shapes, zero otherwise.
    pub fn value(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            ZERO
        } else if t <= self.grid.horizon {
            interpolate(&self.samples, &self.grid, t)
        } else {
            match &self.shape {
                Some(shape) => Complex64::new(shape.value(t), 0.0),
                None => ZERO,
            }
        }
    }

    /// Whether ξ is known on [0, t_end].
    pub fn covers(&self, t_end: f64) -> bool {
        t_end <= self.grid.horizon * (1.0 + 1e-12) || self.shape.is_some() || self.tail_beyond == 0.0
    }

    /// r(t) = ∫_t^∞ |ξ(s)|² ds: closed form for built-in shapes, otherwise
    /// trapezoid on [t, horizon] plus the declared tail.
    pub fn tail(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("pulse tail requested at t = {t} < 0")));
        }
        if let Some(shape) = &self.shape {
            return Ok(shape.tail(t));
        }
        if t >= self.grid.horizon {
            if self.tail_beyond == 0.0 || t == self.grid.horizon {
                return Ok(self.tail_beyond);
            }
            return Err(Error::Domain(format!(
                "t = {t} lies beyond the sampled horizon {} of a pulse with non-zero tail",
                self.grid.horizon
            )));
        }
        let (i, _) = self.grid.locate(t);
        let partial = trapezoid(
            &self.grid,
            t,
            self.grid.time(i + 1),
            |k| Complex64::new(self.samples[k].norm_sqr(), 0.0),
            |s| Complex64::new(self.value(s).norm_sqr(), 0.0),
        );
        Ok((self.node_tails[i + 1] + partial.re).clamp(0.0, 1.0))
    }
}

/// One coherent mode f(t) = amplitude · u(t) with u a unit-norm built-in shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub amplitude: Complex64,
    pub shape: PulseShape,
}

impl Mode {
    /// f ≡ level on [start, end].
    pub fn constant_level(level: Complex64, start: f64, end: f64) -> Self {
        Mode {
            amplitude: level * (end - start).sqrt(),
            shape: PulseShape::Constant { start, end },
        }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        self.amplitude * self.shape.value(t)
    }
}

/// A family of coherent-state mode functions on a shared grid, with the
/// pairwise inner products ⟨f_j, f_k⟩ carried beyond the grid horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    grid: Grid,
    samples: Vec<Vec<Complex64>>,
    tails: Operator,
    modes: Option<Vec<Mode>>,
}

impl ModeSet {
    pub fn from_modes(modes: Vec<Mode>, grid: Grid) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Field("at least one coherent mode is required".into()));
        }
        for m in &modes {
            m.shape.check()?;
        }
        let n = modes.len();
        let beyond: Vec<f64> = modes.iter().map(|m| m.shape.tail(grid.horizon)).collect();
        let same_shape = modes.iter().all(|m| m.shape == modes[0].shape);
        let tails = if beyond.iter().all(|&r| r == 0.0) {
            Operator::zeros(n)
        } else if same_shape {
            let r = beyond[0];
            Operator::from_fn(n, |j, k| modes[j].amplitude.conj() * modes[k].amplitude * r)
        } else {
            return Err(Error::Field(
                "modes of different shapes extending past the horizon need explicit tail inner products".into(),
            ));
        };
        let samples = modes
            .iter()
            .map(|m| (0..grid.len()).map(|i| m.value(grid.time(i))).collect())
            .collect();
        Ok(ModeSet {
            grid,
            samples,
            tails,
            modes: Some(modes),
        })
    }

    /// Raw samples; `tails[j][k]` = ⟨f_j, f_k⟩ over (horizon, ∞), zero if omitted.
    pub fn from_samples(grid: Grid, samples: Vec<Vec<Complex64>>, tails: Option<Operator>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::Field("at least one coherent mode is required".into()));
        }
        if let Some(bad) = samples.iter().position(|s| s.len() != grid.len()) {
            return Err(Error::Grid(format!(
                "mode {} has {} samples, grid has {} nodes",
                bad + 1,
                samples[bad].len(),
                grid.len()
            )));
        }
        let tails = tails.unwrap_or_else(|| Operator::zeros(n));
        if tails.dim() != n {
            return Err(Error::Dimension(format!(
                "tail inner-product matrix is {0}x{0} for {n} modes",
                tails.dim()
            )));
        }
        Ok(ModeSet {
            grid,
            samples,
            tails,
            modes: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn modes(&self) -> Option<&[Mode]> {
        self.modes.as_deref()
    }

    pub fn samples(&self, j: usize) -> &[Complex64] {
        &self.samples[j]
    }

    pub fn tails(&self) -> &Operator {
        &self.tails
    }

    pub fn value(&self, j: usize, t: f64) -> Complex64 {
        if t < 0.0 {
            ZERO
        } else if t <= self.grid.horizon {
            interpolate(&self.samples[j], &self.grid, t)
        } else {
            match &self.modes {
                Some(modes) => modes[j].value(t),
                None => ZERO,
            }
        }
    }

    pub fn values(&self, t: f64) -> Vec<Complex64> {
        (0..self.len()).map(|j| self.value(j, t)).collect()
    }

    pub fn covers(&self, t_end: f64) -> bool {
        t_end <= self.grid.horizon * (1.0 + 1e-12) || self.modes.is_some() || self.tails.max_abs() == 0.0
    }

    /// ⟨f_j, f_k⟩ over [a, b] ∩ [0, horizon] by the trapezoid rule.
    pub fn inner_product_on(&self, j: usize, k: usize, a: f64, b: f64) -> Complex64 {
        let b = b.min(self.grid.horizon);
        let a = a.max(0.0);
        trapezoid(
            &self.grid,
            a,
            b,
            |i| self.samples[j][i].conj() * self.samples[k][i],
            |s| self.value(j, s).conj() * self.value(k, s),
        )
    }

    /// Full L² inner product ⟨f_j, f_k⟩ on [0, ∞).
    pub fn inner_product(&self, j: usize, k: usize) -> Complex64 {
        self.inner_product_on(j, k, 0.0, self.grid.horizon) + self.tails[(j, k)]
    }
}

/// Coherent-vector overlaps g_{jk} = exp(−½‖f_j‖² − ½‖f_k‖² + ⟨f_j, f_k⟩).
pub fn gram(modes: &ModeSet) -> Operator {
    let n = modes.len();
    let ip = Operator::from_fn(n, |j, k| modes.inner_product(j, k));
    overlap_from_inner_products(&ip)
}

/// Overlaps restricted to the window [0, t].
pub fn gram_until(modes: &ModeSet, t: f64) -> Operator {
    let n = modes.len();
    let ip = Operator::from_fn(n, |j, k| modes.inner_product_on(j, k, 0.0, t));
    overlap_from_inner_products(&ip)
}

/// Overlaps restricted to (t, ∞).
pub fn gram_after(modes: &ModeSet, t: f64) -> Operator {
    let n = modes.len();
    let ip = Operator::from_fn(n, |j, k| modes.inner_product_on(j, k, t, modes.grid.horizon) + modes.tails[(j, k)]);
    overlap_from_inner_products(&ip)
}

fn overlap_from_inner_products(ip: &Operator) -> Operator {
    let n = ip.dim();
    Operator::from_fn(n, |j, k| {
        if j == k {
            return Complex64::new(1.0, 0.0);
        }
        (-0.5 * ip[(j, j)].re - 0.5 * ip[(k, k)].re + ip[(j, k)]).exp()
    })
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Operator) -> Vec<f64> {
    let n = m.dim();
    let h = m.hermitian_part();
    let mat = nalgebra::DMatrix::from_fn(n, n, |r, c| h[(r, c)]);
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// A normalized superposition Σ_j α_j |f_j⟩ of coherent field states.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentModes {
    modes: ModeSet,
    weights: Vec<Complex64>,
    gram: Operator,
}

impl CoherentModes {
    /// Requires Σ α_j* α_k g_{jk} = 1 within [`FIELD_NORM_TOLERANCE`].
    pub fn new(modes: ModeSet, weights: Vec<Complex64>) -> Result<Self> {
        let cm = Self::unchecked(modes, weights)?;
        let norm = cm.state_norm();
        if (norm - 1.0).abs() > FIELD_NORM_TOLERANCE {
            return Err(Error::Field(format!("superposition norm Σ α_j* α_k g_jk = {norm:.9} is not 1")));
        }
        Ok(cm)
    }

    /// Rescales the weights so the superposition has unit norm.
    pub fn normalized(modes: ModeSet, weights: Vec<Complex64>) -> Result<Self> {
        let mut cm = Self::unchecked(modes, weights)?;
        let c = cm.state_norm().sqrt();
        for w in &mut cm.weights {
            *w /= c;
        }
        Ok(cm)
    }

    fn unchecked(modes: ModeSet, weights: Vec<Complex64>) -> Result<Self> {
        if weights.len() != modes.len() {
            return Err(Error::Field(format!("{} weights for {} modes", weights.len(), modes.len())));
        }
        if let Some(j) = weights.iter().position(|w| w.norm() == 0.0) {
            return Err(Error::Field(format!("weight α_{} is zero; drop that component instead", j + 1)));
        }
        let g = gram(&modes);
        let ev = hermitian_eigenvalues(&g);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 || hi / lo > MAX_GRAM_CONDITION {
            return Err(Error::Field(format!(
                "Gram matrix is near-degenerate (eigenvalues {lo:.3e}..{hi:.3e}); merge nearly identical modes"
            )));
        }
        Ok(CoherentModes { modes, weights, gram: g })
    }

    /// Σ_{jk} α_j* α_k g_{jk}
    pub fn state_norm(&self) -> f64 {
        weighted_sum(&self.weights, &self.gram).re
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn gram(&self) -> &Operator {
        &self.gram
    }

    /// |α|² = Σ_j |α_j|²
    pub fn weight_norm_sqr(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }
}

/// Σ_{jk} α_j* α_k m_{jk}
pub fn weighted_sum(weights: &[Complex64], m: &Operator) -> Complex64 {
    let mut acc = ZERO;
    for (j, aj) in weights.iter().enumerate() {
        for (k, ak) in weights.iter().enumerate() {
            acc += aj.conj() * ak * m[(j, k)];
        }
    }
    acc
}

/// Weights of the two-level ancilla superposition α₁|e₁ η 1_ξ⟩ + α₀|e₀ η 0⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedConfig {
    alpha0: Complex64,
    alpha1: Complex64,
}

impl ExtendedConfig {
    pub fn new(alpha0: Complex64, alpha1: Complex64) -> Result<Self> {
        let norm = alpha0.norm_sqr() + alpha1.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Embedding(format!("|α₀|² + |α₁|² = {norm} is not 1")));
        }
        if alpha0.norm() == 0.0 {
            return Err(Error::Embedding("α₀ must be non-zero".into()));
        }
        Ok(ExtendedConfig { alpha0, alpha1 })
    }

    /// Real α₀ ∈ (0, 1] with α₁ = √(1 − α₀²).
    pub fn from_alpha0(alpha0: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 <= 1.0) {
            return Err(Error::Embedding(format!("α₀ = {alpha0} outside (0, 1]")));
        }
        Self::new(
            Complex64::new(alpha0, 0.0),
            Complex64::new((1.0 - alpha0 * alpha0).max(0.0).sqrt(), 0.0),
        )
    }

    pub fn alpha0(&self) -> Complex64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> Complex64 {
        self.alpha1
    }

    /// ν = α₁/α₀
    pub fn nu(&self) -> Complex64 {
        self.alpha1 / self.alpha0
    }

    /// w_{jk} = α_j* α_k for photon-number labels j, k ∈ {0, 1}.
    pub fn w(&self, j: u8, k: u8) -> Complex64 {
        let a = |i: u8| if i == 1 { self.alpha1 } else { self.alpha0 };
        a(j).conj() * a(k)
    }
}

impl Default for ExtendedConfig {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ExtendedConfig {
            alpha0: Complex64::new(h, 0.0),
            alpha1: Complex64::new(h, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::qubit;
    use crate::testing::random_mode_set;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn validate_accepts_and_rejects() {
        let ok = SystemModel::from_parts(Operator::identity(2), qubit::sigma_minus(), qubit::sigma_z(), qubit::ground()).unwrap();
        assert!(validate(&ok).is_ok());

        let bad_s = SystemModel::from_parts(
            Operator::identity(2).scale_real(2.0),
            qubit::sigma_minus(),
            Operator::zeros(2),
            qubit::ground(),
        )
        .unwrap();
        let v = validate(&bad_s).unwrap_err();
        assert!(matches!(v[..], [ModelViolation::NonUnitaryS { residual }] if (residual - 3.0).abs() < 1e-12));

        let bad_h = SystemModel::from_parts(
            Operator::identity(2),
            qubit::sigma_minus(),
            qubit::sigma_plus(),
            vec![c(1.0), c(1.0)],
        )
        .unwrap();
        let v = validate(&bad_h).unwrap_err();
        assert_eq!(v.len(), 2);
        assert!(matches!(v[0], ModelViolation::NonHermitianH { .. }));
        assert!(matches!(v[1], ModelViolation::UnnormalizedEta { .. }));
        assert_eq!(v[0].field(), "[system].H");
    }

    #[test]
    fn from_parts_rejects_dimension_mismatch() {
        let err = SystemModel::from_parts(Operator::identity(2), Operator::identity(3), Operator::zeros(2), qubit::ground()).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn decaying_exponential_tail() {
        let pulse = Pulse::from_shape(PulseShape::DecayingExponential { gamma: 1.0 }, Grid::new(1e-3, 10.0).unwrap()).unwrap();
        assert!((pulse.tail(0.0).unwrap() - 1.0).abs() < 1e-6);
        assert!((pulse.tail(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-6);
        assert!((pulse.tail(0.5004).unwrap() - (-0.5004f64).exp()).abs() < 1e-6);
        assert!(matches!(pulse.tail(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn compact_pulse_tail_vanishes_after_support() {
        let grid = Grid::new(0.01, 5.0).unwrap();
        let pulse = Pulse::from_shape(PulseShape::Constant { start: 1.0, end: 3.0 }, grid).unwrap();
        assert_eq!(pulse.tail(6.0).unwrap(), 0.0);
        assert!(pulse.tail(4.0).unwrap().abs() < 1e-12);
        assert!((pulse.tail(2.0).unwrap() - 0.5).abs() < 1e-2);

        // Raw samples with zero declared tail.
        let flat = Pulse::from_shape(PulseShape::Constant { start: 0.0, end: 5.0 }, grid).unwrap();
        let samples = flat.samples().to_vec();
        let raw = Pulse::from_samples(grid, samples, 0.0).unwrap();
        assert_eq!(raw.tail(5.0).unwrap(), 0.0);
        assert_eq!(raw.tail(7.0).unwrap(), 0.0);
    }

    #[test]
    fn pulse_families_are_normalized() {
        let grid = Grid::new(1e-3, 12.0).unwrap();
        for shape in [
            PulseShape::DecayingExponential { gamma: 2.0 },
            PulseShape::RisingExponential { gamma: 1.0, end: 8.0 },
            PulseShape::Gaussian { center: 5.0, width: 1.0 },
            PulseShape::Constant { start: 0.0, end: 4.0 },
        ] {
            let p = Pulse::from_shape(shape.clone(), grid).unwrap();
            assert!((p.tail(0.0).unwrap() - 1.0).abs() < 1e-6, "{shape:?}");
            assert!((p.tail(3.0).unwrap() - shape.tail(3.0)).abs() < 1e-5, "{shape:?}");
        }
    }

    #[test]
    fn unnormalized_samples_rejected() {
        let grid = Grid::new(0.5, 1.0).unwrap();
        let err = Pulse::from_samples(grid, vec![c(2.0); 3], 0.0).unwrap_err();
        assert!(matches!(err, Error::Field(_)));
        assert!(matches!(Pulse::from_samples(grid, vec![c(1.0); 2], 0.0), Err(Error::Grid(_))));
    }

    #[test]
    fn pulse_tail_is_monotone() {
        let p = Pulse::from_shape(PulseShape::Gaussian { center: 3.0, width: 0.7 }, Grid::new(0.01, 8.0).unwrap()).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=800 {
            let r = p.tail(i as f64 * 0.01).unwrap();
            assert!(r <= prev + 1e-15);
            prev = r;
        }
    }

    #[test]
    fn gram_examples() {
        let grid = Grid::new(0.01, 2.0).unwrap();
        let beta = c(0.4);
        let single = ModeSet::from_modes(vec![Mode::constant_level(beta, 0.0, 2.0)], grid).unwrap();
        assert_eq!(gram(&single), Operator::identity(1));

        let pair = ModeSet::from_modes(
            vec![Mode::constant_level(beta, 0.0, 2.0), Mode::constant_level(-beta, 0.0, 2.0)],
            grid,
        )
        .unwrap();
        let g = gram(&pair);
        // exp(−½|β|²T − ½|β|²T − |β|²T) = exp(−2|β|²T)
        let expected = (-2.0 * 0.16 * 2.0f64).exp();
        assert!((g[(0, 1)] - c(expected)).norm() < 1e-12);

        let same = ModeSet::from_modes(
            vec![Mode::constant_level(beta, 0.0, 2.0), Mode::constant_level(beta, 0.0, 2.0)],
            grid,
        )
        .unwrap();
        assert!((gram(&same)[(0, 1)] - c(1.0)).norm() < 1e-12);
        // ... and identical modes are refused as a superposition.
        assert!(CoherentModes::normalized(same, vec![c(1.0), c(1.0)]).is_err());
    }

    #[test]
    fn gram_includes_analytic_tails() {
        let grid = Grid::new(1e-3, 4.0).unwrap();
        let shape = PulseShape::DecayingExponential { gamma: 1.0 };
        let a = [Complex64::new(0.8, 0.1), Complex64::new(-0.3, 0.5)];
        let modes = ModeSet::from_modes(
            a.iter()
                .map(|&amplitude| Mode {
                    amplitude,
                    shape: shape.clone(),
                })
                .collect(),
            grid,
        )
        .unwrap();
        // Unit-norm shape: ⟨f_j, f_k⟩ = a_j* a_k.
        let ip = a[0].conj() * a[1];
        let expected = (-0.5 * a[0].norm_sqr() - 0.5 * a[1].norm_sqr() + ip).exp();
        assert!((gram(&modes)[(0, 1)] - expected).norm() < 1e-6);
    }

    #[test]
    fn superposition_rejects_zero_weight_and_bad_norm() {
        let grid = Grid::new(0.01, 1.0).unwrap();
        let modes = ModeSet::from_modes(
            vec![Mode::constant_level(c(0.5), 0.0, 1.0), Mode::constant_level(c(-0.5), 0.0, 1.0)],
            grid,
        )
        .unwrap();
        assert!(CoherentModes::new(modes.clone(), vec![c(1.0), c(0.0)]).is_err());
        assert!(CoherentModes::new(modes.clone(), vec![c(1.0), c(1.0)]).is_err());
        let cm = CoherentModes::normalized(modes, vec![c(1.0), c(1.0)]).unwrap();
        assert!((cm.state_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extended_config_weights() {
        let cfg = ExtendedConfig::default();
        assert!((cfg.nu() - c(1.0)).norm() < 1e-15);
        assert!((cfg.w(1, 1) - c(0.5)).norm() < 1e-15);
        assert!(ExtendedConfig::new(c(0.0), c(1.0)).is_err());
        assert!(ExtendedConfig::new(c(0.5), c(0.5)).is_err());
        let cfg = ExtendedConfig::from_alpha0(0.3).unwrap();
        assert!((cfg.nu().re - (0.91f64).sqrt() / 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gram_is_positive_semidefinite(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let modes = random_mode_set(&mut rng, n, Grid::new(0.01, 3.0).unwrap());
            let g = gram(&modes);
            prop_assert!(g.hermitian_residual() < 1e-12);
            for j in 0..n {
                prop_assert!((g[(j, j)] - c(1.0)).norm() < 1e-15);
            }
            prop_assert!(hermitian_eigenvalues(&g)[0] > -1e-10);
        }

        #[test]
        fn weight_rescaling_scales_norm(seed in any::<u64>(), n in 1usize..4, scale in 0.2f64..5.0, phase in 0.0f64..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let modes = random_mode_set(&mut rng, n, Grid::new(0.01, 3.0).unwrap());
            let g = gram(&modes);
            let weights: Vec<Complex64> = (0..n).map(|j| Complex64::new(1.0 + j as f64, 0.3 * j as f64)).collect();
            let cst = Complex64::from_polar(scale, phase);
            let scaled: Vec<Complex64> = weights.iter().map(|w| w / cst).collect();
            let before = weighted_sum(&weights, &g).re;
            let after = weighted_sum(&scaled, &g).re;
            prop_assert!((after - before / (scale * scale)).abs() < 1e-12 * before.abs().max(1.0));
        }
    }
}
