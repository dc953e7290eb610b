//! Random fixtures shared by unit, property and integration tests.

use num_complex::Complex64;
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

use crate::model::{Grid, ModeSet, SystemModel};
use crate::operators::Operator;

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Complex64> {
    (0..d).map(|_| gauss(rng)).collect()
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<Complex64> {
    let v = random_vector(rng, d);
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Entries i.i.d. complex normal with unit variance.
pub fn random_operator<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    Operator::from_fn(d, |_, _| gauss(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    random_operator(rng, d).hermitian_part()
}

/// Haar-ish unitary via Gram–Schmidt on the columns of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v = random_vector(rng, d);
        for c in &cols {
            let p: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(c) {
                *x -= p * y;
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    Operator::from_fn(d, |r, c| cols[c][r])
}

/// Random density matrix (full rank, unit trace).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    let a = random_operator(rng, d);
    let rho = a.matmul(&a.adjoint());
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr)
}

/// Valid model with unitary S, Hermitian H, normalized η and L of order one.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, d: usize) -> SystemModel {
    let s = random_unitary(rng, d);
    let l = random_operator(rng, d).scale_real(0.5);
    let h = random_hermitian(rng, d).scale_real(0.5);
    let eta = random_unit_vector(rng, d);
    SystemModel::new(s, l, h, eta).expect("random model is valid by construction")
}

/// Smooth random mode functions supported on the grid window (zero tails).
pub fn random_mode_set<R: Rng + ?Sized>(rng: &mut R, n: usize, grid: Grid) -> ModeSet {
    let samples = (0..n)
        .map(|_| {
            let a = gauss(rng) * 0.6;
            let b = gauss(rng) * 0.6;
            let w: f64 = rng.random_range(0.2..2.0);
            (0..grid.len())
                .map(|i| {
                    let t = grid.time(i);
                    let envelope = (std::f64::consts::PI * t / grid.horizon).sin();
                    (a + b * (w * t).cos()) * envelope
                })
                .collect()
        })
        .collect();
    ModeSet::from_samples(grid, samples, None).expect("grid-matched samples")
}
