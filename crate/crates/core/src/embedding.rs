//! Ancilla embedding shared by the single-photon and coherent-superposition
//! formulations.
//!
//! An n-level ancilla driven by an n×n matrix K(t) turns the non-vacuum field
//! into an effective coupling on the n·d extended space:
//! P = K⊗S, Q = K⊗I, L̂ = I⊗L, Ĥ = I⊗H. For the single photon
//! K = νξ(t)σ₊; for a coherent superposition K = diag(f₁(t), …, f_n(t)).

use num_complex::Complex64;

use crate::model::SystemModel;
use crate::operators::{kron, Operator, I};

/// System operators lifted to the extended space, fixed for a run.
#[derive(Clone, Debug)]
pub struct Embedding {
    n: usize,
    d: usize,
    l: Operator,
    l_dag: Operator,
    l_dag_l: Operator,
    h: Operator,
    s: Operator,
}

/// Time-dependent part of the extended dynamics for one K(t).
#[derive(Clone, Debug)]
pub struct Drive {
    pub p: Operator,
    pub p_dag: Operator,
    pub q: Operator,
    pub q_dag: Operator,
    /// M = I⊗L + K⊗S, the effective measurement operator.
    pub m: Operator,
    pub m_dag: Operator,
}

impl Embedding {
    pub fn new(model: &SystemModel, n: usize) -> Self {
        let id = Operator::identity(n);
        let l = kron(&id, model.l()).into_operator();
        let l_dag = l.adjoint();
        let l_dag_l = l_dag.matmul(&l);
        Embedding {
            n,
            d: model.dim(),
            l,
            l_dag,
            l_dag_l,
            h: kron(&id, model.h()).into_operator(),
            s: model.s().clone(),
        }
    }

    pub fn ancilla_dim(&self) -> usize {
        self.n
    }

    pub fn system_dim(&self) -> usize {
        self.d
    }

    pub fn drive(&self, k: &Operator) -> Drive {
        let p = kron(k, &self.s).into_operator();
        let q = kron(k, &Operator::identity(self.d)).into_operator();
        let m = &self.l + &p;
        Drive {
            p_dag: p.adjoint(),
            q_dag: q.adjoint(),
            m_dag: m.adjoint(),
            p,
            q,
            m,
        }
    }

    /// Dual of the extended generator applied to ϖ:
    /// L̂ϖL̂† − ½{L̂†L̂, ϖ} − i[Ĥ, ϖ] + PϖL̂† − L̂†Pϖ + L̂ϖP† − ϖP†L̂ + PϖP† − QϖQ†.
    pub fn dual_drift(&self, drive: &Drive, w: &Operator) -> Operator {
        let lw = self.l.matmul(w);
        let pw = drive.p.matmul(w);
        let mut out = lw.matmul(&self.l_dag);
        out.axpy(Complex64::new(-0.5, 0.0), &self.l_dag_l.matmul(w));
        out.axpy(Complex64::new(-0.5, 0.0), &w.matmul(&self.l_dag_l));
        out.axpy(-I, &self.h.matmul(w));
        out.axpy(I, &w.matmul(&self.h));
        out += &pw.matmul(&self.l_dag);
        out -= &self.l_dag.matmul(&pw);
        out += &lw.matmul(&drive.p_dag);
        out -= &w.matmul(&drive.p_dag).matmul(&self.l);
        out += &pw.matmul(&drive.p_dag);
        out -= &drive.q.matmul(w).matmul(&drive.q_dag);
        out
    }

    /// Mϖ + ϖM†, the linear part of the filter diffusion.
    pub fn diffusion(&self, drive: &Drive, w: &Operator) -> Operator {
        &drive.m.matmul(w) + &w.matmul(&drive.m_dag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{evans_hudson, lindblad, qubit};
    use crate::testing::{random_model, random_operator};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Heisenberg form of the extended generator on A⊗X for a general K:
    /// A⊗L(X) + (AK)⊗[L†,X]S + (K†A)⊗S†[X,L] + (K†AK)⊗(S†XS−X).
    fn heisenberg(model: &SystemModel, k: &Operator, a: &Operator, x: &Operator) -> Operator {
        let eh = evans_hudson(model, x).unwrap();
        let kd = k.adjoint();
        let mut out = kron(a, &lindblad(model, x).unwrap()).into_operator();
        out += kron(&a.matmul(k), &eh.annihilation).as_operator();
        out += kron(&kd.matmul(a), &eh.creation).as_operator();
        out += kron(&kd.matmul(a).matmul(k), &eh.gauge).as_operator();
        out
    }

    proptest! {
        #[test]
        fn dual_drift_is_adjoint_of_generator(seed in any::<u64>(), d in 1usize..4, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, d);
            let emb = Embedding::new(&model, n);
            let k = random_operator(&mut rng, n);
            let drive = emb.drive(&k);
            let w = random_operator(&mut rng, n * d);
            let a = random_operator(&mut rng, n);
            let x = random_operator(&mut rng, d);
            let ax = kron(&a, &x).into_operator();
            let lhs = emb.dual_drift(&drive, &w).trace_product(&ax);
            let rhs = w.trace_product(&heisenberg(&model, &k, &a, &x));
            prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn vanishing_drive_is_block_lindblad() {
        let model = SystemModel::new(Operator::identity(2), qubit::sigma_minus(), qubit::sigma_z(), qubit::ground()).unwrap();
        let emb = Embedding::new(&model, 2);
        let drive = emb.drive(&Operator::zeros(2));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_operator(&mut rng, 4);
        let out = emb.dual_drift(&drive, &w);
        let ext = crate::operators::ExtendedOperator::new(2, 2, w).unwrap();
        let res = crate::operators::ExtendedOperator::new(2, 2, out).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                let expected = crate::operators::lindblad_dual(&model, &ext.block(j, k));
                assert!(res.block(j, k).max_abs_diff(&expected) < 1e-14);
            }
        }
    }
}
