//! Unnormalized reference filter for the embedded single-photon system.
//!
//! ς(A⊗X) = tr[ϛ(A⊗X)] evolves linearly in structure, driven by
//! dỸ = dY − κ dt with κ = ς((νξσ₊ + ν*ξ*σ₋)⊗I); the normalized filter is
//! recovered as ς(A⊗X)/ς(I⊗I).

use num_complex::Complex64;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::filter_sp::{real_part, Filter, StepReport};
use crate::integrate::{filter_step, Scheme};
use crate::master_sp::{extended_initial_sp, extract_sp, quad_columns, quad_row, sp_drive, Quad};
use crate::model::{ExtendedConfig, Pulse, SystemModel};
use crate::operators::{kron, qubit, ExtendedOperator, Operator};
use crate::series::Observable;

/// Normalizers below this are treated as a vanished likelihood.
pub const MIN_NORMALIZER: f64 = 1e-250;

#[derive(Clone, Debug, PartialEq)]
pub struct ZakaiState {
    pub varsigma: Operator,
    pub t: f64,
    pub cfg: ExtendedConfig,
}

impl ZakaiState {
    pub fn initial(model: &SystemModel, cfg: ExtendedConfig) -> Self {
        ZakaiState {
            varsigma: extended_initial_sp(model, &cfg),
            t: 0.0,
            cfg,
        }
    }

    /// ς(I⊗I)
    pub fn normalizer(&self) -> f64 {
        self.varsigma.trace().re
    }
}

/// G₀(t), G₁(t) of the reference-method representation.
#[derive(Clone, Debug, PartialEq)]
pub struct FCoefficients {
    /// −I⊗(½L†L + iH) − σ₊⊗(L + L†S)νξ
    pub g0: ExtendedOperator,
    /// I⊗L + σ₊⊗(S − I)νξ
    pub g1: ExtendedOperator,
}

pub fn f_coefficients(model: &SystemModel, cfg: &ExtendedConfig, xi: Complex64) -> Result<FCoefficients> {
    if cfg.alpha0().norm() == 0.0 {
        return Err(Error::Embedding("α₀ must be non-zero".into()));
    }
    let d = model.dim();
    let id2 = Operator::identity(2);
    let id = Operator::identity(d);
    let sp = qubit::sigma_plus();
    let nx = cfg.nu() * xi;

    let mut inner = model.l_dag_l().scale_real(0.5);
    inner.axpy(Complex64::new(0.0, 1.0), model.h());
    let mut g0 = kron(&id2, &inner).into_operator().scale_real(-1.0);
    let l_lds = model.l() + &model.l_dag().matmul(model.s());
    g0.axpy(-nx, kron(&sp, &l_lds).as_operator());

    let mut g1 = kron(&id2, model.l()).into_operator();
    g1.axpy(nx, kron(&sp, &(model.s() - &id)).as_operator());

    Ok(FCoefficients {
        g0: ExtendedOperator::new(2, d, g0)?,
        g1: ExtendedOperator::new(2, d, g1)?,
    })
}

/// Dual of the extended generator assembled from the F coefficients:
/// G₁ϛG₁† + G₀ϛ + ϛG₀† + νξ(G₁Σ₊ϛ + Σ₊ϛG₁†) + ν*ξ*(G₁ϛΣ₋ + ϛΣ₋G₁†),
/// with Σ± = σ±⊗I.
pub fn zakai_drift(f: &FCoefficients, cfg: &ExtendedConfig, xi: Complex64, varsigma: &Operator) -> Operator {
    let d = f.g0.system_dim();
    let id = Operator::identity(d);
    let sig_p = kron(&qubit::sigma_plus(), &id).into_operator();
    let sig_m = kron(&qubit::sigma_minus(), &id).into_operator();
    let g0 = f.g0.as_operator();
    let g1 = f.g1.as_operator();
    let g1d = g1.adjoint();
    let nx = cfg.nu() * xi;

    let mut out = g1.matmul(varsigma).matmul(&g1d);
    out += &g0.matmul(varsigma);
    out += &varsigma.matmul(&g0.adjoint());
    let up = sig_p.matmul(varsigma);
    out.axpy(nx, &(&g1.matmul(&up) + &up.matmul(&g1d)));
    let down = varsigma.matmul(&sig_m);
    out.axpy(nx.conj(), &(&g1.matmul(&down) + &down.matmul(&g1d)));
    out
}

/// Compensator κ = tr[ϛ((νξσ₊ + ν*ξ*σ₋)⊗I)] on the unnormalized state.
pub fn compensator(cfg: &ExtendedConfig, xi: Complex64, varsigma: &Operator) -> Complex64 {
    let d = varsigma.dim() / 2;
    let k = sp_drive(cfg, xi);
    let q = kron(&(&k + &k.adjoint()), &Operator::identity(d)).into_operator();
    varsigma.trace_product(&q)
}

/// L̃ϛ + ϛL̃† with L̃ = I⊗L + νξσ₊⊗S.
pub fn zakai_diffusion(emb: &Embedding, cfg: &ExtendedConfig, xi: Complex64, varsigma: &Operator) -> Operator {
    let drive = emb.drive(&sp_drive(cfg, xi));
    emb.diffusion(&drive, varsigma)
}

/// π̃(A⊗X) = ς(A⊗X)/ς(I⊗I).
pub fn normalize(state: &ZakaiState, a: &Operator, x: &Operator) -> Result<Complex64> {
    let norm = state.normalizer();
    if !(norm.abs() > MIN_NORMALIZER) || !norm.is_finite() {
        return Err(Error::DegenerateLikelihood {
            t: state.t,
            normalizer: norm,
        });
    }
    let ax = kron(a, x).into_operator();
    if ax.dim() != state.varsigma.dim() {
        return Err(Error::Dimension(format!(
            "A⊗X is {0}x{0}, state is {1}x{1}",
            ax.dim(),
            state.varsigma.dim()
        )));
    }
    Ok(state.varsigma.trace_product(&ax) / norm)
}

/// The reference filter as a [`Filter`]; rows report the extracted π^{jk}.
#[derive(Clone, Debug)]
pub struct ZakaiFilter<'a> {
    pub model: &'a SystemModel,
    pub pulse: &'a Pulse,
    pub observables: &'a [Observable],
    pub cfg: ExtendedConfig,
    pub scheme: Scheme,
    emb: Embedding,
}

impl<'a> ZakaiFilter<'a> {
    pub fn new(model: &'a SystemModel, pulse: &'a Pulse, observables: &'a [Observable], cfg: ExtendedConfig) -> Result<Self> {
        if cfg.alpha0().norm() == 0.0 {
            return Err(Error::Embedding("α₀ must be non-zero".into()));
        }
        Ok(ZakaiFilter {
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

    pub fn components(&self, state: &ZakaiState) -> Result<Quad<Operator>> {
        let norm = state.normalizer();
        if !(norm.abs() > MIN_NORMALIZER) || !norm.is_finite() {
            return Err(Error::DegenerateLikelihood {
                t: state.t,
                normalizer: norm,
            });
        }
        extract_sp(&state.varsigma, self.model.dim(), &self.cfg)
    }
}

/// One Euler–Maruyama step of the reference filter.
pub fn zakai_step(filter: &ZakaiFilter<'_>, state: &ZakaiState, dy: f64, xi: Complex64, dt: f64) -> Result<(ZakaiState, StepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    let cfg = &filter.cfg;
    let s = &state.varsigma;
    let norm = state.normalizer();
    if !(norm > MIN_NORMALIZER) {
        return Err(Error::DegenerateLikelihood {
            t: state.t,
            normalizer: norm,
        });
    }
    let f = f_coefficients(filter.model, cfg, xi)?;
    let kappa = real_part(compensator(cfg, xi, s), norm, "compensator", state.t)?;
    let dy_tilde = dy - kappa * dt;
    let drift = vec![zakai_drift(&f, cfg, xi, s)];
    let bx = vec![zakai_diffusion(&filter.emb, cfg, xi, s)];
    let k_norm = real_part(bx[0].trace(), norm, "innovation drift", state.t)? / norm;
    let next = filter_step(
        &vec![s.clone()],
        &drift,
        &bx,
        Complex64::new(kappa, 0.0),
        dt,
        dy_tilde,
        filter.scheme,
        |v| vec![zakai_diffusion(&filter.emb, cfg, xi, &v[0])],
        |v| compensator(cfg, xi, &v[0]),
    );
    let t = state.t + dt;
    let mut varsigma = next.into_iter().next().expect("one block");
    if !varsigma.is_finite() {
        return Err(Error::NumericalBlowup { step: 0, t });
    }
    let symmetry_residual = varsigma.hermitian_residual() / norm;
    varsigma = varsigma.hermitian_part();
    let out = ZakaiState { varsigma, t, cfg: *cfg };
    let new_norm = out.normalizer();
    if !(new_norm > MIN_NORMALIZER) {
        return Err(Error::DegenerateLikelihood { t, normalizer: new_norm });
    }
    Ok((
        out,
        StepReport {
            innovation_drift: k_norm,
            dw: dy - k_norm * dt,
            // Likelihood ratio over the step; not expected to be 1.
            trace_before: 1.0,
            symmetry_residual,
        },
    ))
}

impl Filter for ZakaiFilter<'_> {
    type State = ZakaiState;

    fn initial(&self) -> Result<ZakaiState> {
        Ok(ZakaiState::initial(self.model, self.cfg))
    }

    fn innovation_drift(&self, state: &ZakaiState, t: f64) -> Result<f64> {
        let xi = self.pulse.value(t);
        let norm = state.normalizer();
        let b = zakai_diffusion(&self.emb, &self.cfg, xi, &state.varsigma);
        Ok(real_part(b.trace(), norm, "innovation drift", t)? / norm)
    }

    fn step(&self, state: &ZakaiState, dy: f64, t: f64, dt: f64) -> Result<(ZakaiState, StepReport)> {
        zakai_step(self, state, dy, self.pulse.value(t), dt)
    }

    fn columns(&self) -> Vec<String> {
        quad_columns("zakai", self.observables)
    }

    fn row(&self, state: &ZakaiState) -> Result<Vec<Complex64>> {
        Ok(quad_row(&self.components(state)?, self.observables))
    }

    fn covers(&self, t_end: f64) -> bool {
        self.pulse.covers(t_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter_sp::{run_trajectory, ExtendedSpFilter, Noise};
    use crate::model::{Grid, PulseShape};
    use crate::operators::qubit::*;
    use crate::series::Stepping;
    use crate::testing::{random_model, random_operator};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    proptest! {
        #[test]
        fn f_route_drift_equals_generator_dual(seed in any::<u64>(), d in 1usize..4, a0 in 0.1f64..0.99, xr in -1.5f64..1.5, xim in -1.5f64..1.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, d);
            let cfg = ExtendedConfig::from_alpha0(a0).unwrap();
            let xi = Complex64::new(xr, xim);
            let w = random_operator(&mut rng, 2 * d);
            let f = f_coefficients(&model, &cfg, xi).unwrap();
            let emb = Embedding::new(&model, 2);
            let expected = emb.dual_drift(&emb.drive(&sp_drive(&cfg, xi)), &w);
            let got = zakai_drift(&f, &cfg, xi, &w);
            prop_assert!(got.max_abs_diff(&expected) < 1e-10 * (1.0 + expected.max_abs()));
        }
    }

    #[test]
    fn f_coefficient_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, 2);
        let cfg = ExtendedConfig::default();
        let with_identity_s = SystemModel::new(Operator::identity(2), m.l().clone(), m.h().clone(), m.eta().to_vec()).unwrap();
        let f = f_coefficients(&with_identity_s, &cfg, c(0.7)).unwrap();
        assert!(f.g1.as_operator().max_abs_diff(kron(&Operator::identity(2), m.l()).as_operator()) < 1e-15);

        let f = f_coefficients(&m, &cfg, c(0.0)).unwrap();
        let mut inner = m.l_dag_l().scale_real(0.5);
        inner.axpy(Complex64::new(0.0, 1.0), m.h());
        let g0 = kron(&Operator::identity(2), &inner).into_operator().scale_real(-1.0);
        assert!(f.g0.as_operator().max_abs_diff(&g0) < 1e-15);

        let free = SystemModel::new(m.s().clone(), Operator::zeros(2), Operator::zeros(2), ground()).unwrap();
        let f = f_coefficients(&free, &cfg, c(0.5)).unwrap();
        assert!(f.g0.as_operator().max_abs() < 1e-15);
        let expected = kron(&sigma_plus(), &(m.s() - &Operator::identity(2)))
            .into_operator()
            .scale_real(0.5);
        assert!(f.g1.as_operator().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        let model = SystemModel::new(Operator::identity(2), sigma_minus(), Operator::zeros(2), ground()).unwrap();
        let cfg = ExtendedConfig::from_alpha0(0.6).unwrap();
        let state = ZakaiState::initial(&model, cfg);
        let one = normalize(&state, &Operator::identity(2), &Operator::identity(2)).unwrap();
        assert!((one - c(1.0)).norm() < 1e-15);
        // ⟨Σ|e₁e₁⊗σz|Σ⟩ = |α₁|²⟨η|σz|η⟩ = −0.64
        let mut e1 = Operator::zeros(2);
        e1[(0, 0)] = c(1.0);
        let v = normalize(&state, &e1, &sigma_z()).unwrap();
        assert!((v - c(-0.64)).norm() < 1e-12);

        let dead = ZakaiState {
            varsigma: Operator::zeros(4),
            t: 1.0,
            cfg,
        };
        assert!(matches!(
            normalize(&dead, &Operator::identity(2), &Operator::identity(2)),
            Err(Error::DegenerateLikelihood { .. })
        ));
    }

    #[test]
    fn single_step_by_hand() {
        // Zero record: ϛ₁ = ϛ₀ + drift·dt − (Bϛ₀ − κϛ₀)κ dt.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_model(&mut rng, 2);
        let pulse = Pulse::from_shape(PulseShape::DecayingExponential { gamma: 1.0 }, Grid::new(1e-3, 2.0).unwrap()).unwrap();
        let cfg = ExtendedConfig::default();
        let obs: [Observable; 0] = [];
        let filter = ZakaiFilter::new(&model, &pulse, &obs, cfg).unwrap();
        let s0 = ZakaiState::initial(&model, cfg);
        let xi = pulse.value(0.0);
        let dt = 1e-3;
        let (s1, _) = zakai_step(&filter, &s0, 0.0, xi, dt).unwrap();
        let emb = Embedding::new(&model, 2);
        let drive = emb.drive(&sp_drive(&cfg, xi));
        let kappa = compensator(&cfg, xi, &s0.varsigma);
        // At t = 0 the off-diagonal blocks vanish, so κ = 0.
        assert!(kappa.norm() < 1e-15);
        let expected = &s0.varsigma + &emb.dual_drift(&drive, &s0.varsigma).scale_real(dt);
        assert!(s1.varsigma.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn likelihood_identity_holds_along_a_trajectory() {
        let model = SystemModel::new(Operator::identity(2), sigma_minus(), Operator::zeros(2), ground()).unwrap();
        let pulse = Pulse::from_shape(PulseShape::DecayingExponential { gamma: 1.0 }, Grid::new(1e-3, 3.0).unwrap()).unwrap();
        let cfg = ExtendedConfig::default();
        let obs: [Observable; 0] = [];
        let filter = ZakaiFilter::new(&model, &pulse, &obs, cfg).unwrap();
        let emb = Embedding::new(&model, 2);
        let mut state = ZakaiState::initial(&model, cfg);
        let mut rng = crate::filter_sp::trajectory_rng(12, 0);
        for n in 0..3000 {
            let t = n as f64 * 1e-3;
            let xi = pulse.value(t);
            let k = filter.innovation_drift(&state, t).unwrap();
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            // λ(I)/ς(I) = π̃(L̃ + L̃†) − κ
            let norm = state.normalizer();
            let kappa = compensator(&cfg, xi, &state.varsigma).re;
            let lambda = zakai_diffusion(&emb, &cfg, xi, &state.varsigma).trace().re - kappa * norm;
            let m = emb.drive(&sp_drive(&cfg, xi)).m;
            let pi = state.varsigma.trace_product(&(&m + &m.adjoint())).re / norm;
            assert!((lambda / norm - (pi - kappa)).abs() < 1e-9);
            state = zakai_step(&filter, &state, z * 1e-3f64.sqrt() + k * 1e-3, xi, 1e-3).unwrap().0;
        }
    }

    #[test]
    fn normalized_zakai_tracks_extended_filter() {
        let model = SystemModel::new(Operator::identity(2), sigma_minus(), Operator::zeros(2), ground()).unwrap();
        let pulse = Pulse::from_shape(PulseShape::DecayingExponential { gamma: 1.0 }, Grid::new(1e-3, 4.0).unwrap()).unwrap();
        let obs = [Observable::new("n", excitation())];
        let cfg = ExtendedConfig::default();
        let stepping = Stepping::new(1e-3, 4.0);
        let ext = ExtendedSpFilter::new(&model, &pulse, &obs, cfg).unwrap();
        let (rec, a) = run_trajectory(&ext, stepping, Noise::SelfGenerate { seed: 3, stream: 1 }).unwrap();
        let z = ZakaiFilter::new(&model, &pulse, &obs, cfg).unwrap();
        let (_, b) = run_trajectory(&z, stepping, Noise::Replay(&rec)).unwrap();
        let ia = a.column_index("pi_11_n").unwrap();
        let ib = b.column_index("zakai_11_n").unwrap();
        let sup = a.rows.iter().zip(&b.rows).map(|(x, y)| (x[ia] - y[ib]).norm()).fold(0.0, f64::max);
        assert!(sup < 5e-2, "sup {sup}");
    }
}
