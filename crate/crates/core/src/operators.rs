//! Dense complex operator algebra on the system space and on ancilla-extended
//! spaces.
//!
//! Everything here is small (d ≤ ~32), so matrices are plain row-major
//! `Vec<Complex64>` buffers and products are naive triple loops.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::SystemModel;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<Complex64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.data[i * dim + i] = ONE;
        }
        op
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Operator { dim, data }
    }

    /// Builds an operator from nested rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::Dimension("operator must have at least one row".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!("row {r} has {} entries, expected {dim}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Operator { dim, data })
    }

    /// Real-valued convenience constructor used heavily in tests.
    pub fn from_real(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |r, c| Complex64::new(rows[r][c], 0.0))
    }

    pub fn diag(values: &[Complex64]) -> Self {
        let dim = values.len();
        Self::from_fn(dim, |r, c| if r == c { values[r] } else { ZERO })
    }

    /// |ket⟩⟨bra|
    pub fn outer(ket: &[Complex64], bra: &[Complex64]) -> Self {
        assert_eq!(ket.len(), bra.len(), "outer product of unequal vectors");
        Self::from_fn(ket.len(), |r, c| ket[r] * bra[c].conj())
    }

    /// |v⟩⟨v|
    pub fn projector(v: &[Complex64]) -> Self {
        Self::outer(v, v)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |r, c| self.data[c * d + r].conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// tr[self · other] without forming the product.
    pub fn trace_product(&self, other: &Operator) -> Complex64 {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.data[i * d + k] * other.data[k * d + i];
            }
        }
        acc
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Operator {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Operator {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    /// self += c · other
    #[inline]
    pub fn axpy(&mut self, c: Complex64, other: &Operator) {
        assert_eq!(self.dim, other.dim, "axpy dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn matmul(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let out_row = &mut out[i * d..(i + 1) * d];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let other_row = &other.data[k * d..(k + 1) * d];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Operator { dim: d, data: out }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// max |A − A†|
    pub fn hermitian_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                let diff = self.data[r * d + c] - self.data[c * d + r].conj();
                worst = worst.max(diff.norm());
            }
        }
        worst
    }

    /// max |A†A − I|
    pub fn unitary_residual(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Operator::identity(self.dim))
    }

    /// (A + A†)/2
    pub fn hermitian_part(&self) -> Operator {
        let d = self.dim;
        Self::from_fn(d, |r, c| 0.5 * (self.data[r * d + c] + self.data[c * d + r].conj()))
    }

    /// Applies the operator to a column vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        let d = self.dim;
        (0..d).map(|r| (0..d).map(|c| self.data[r * d + c] * v[c]).sum()).collect()
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{})", self.dim, self.dim)?;
        for row in self.data.chunks(self.dim) {
            let cells: Vec<String> = row.iter().map(|z| format!("{:+.6}{:+.6}i", z.re, z.im)).collect();
            writeln!(f, "  [{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Operator {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for Operator {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Mul<Complex64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: Complex64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<Complex64> for Operator {
    type Output = Operator;
    fn mul(mut self, rhs: Complex64) -> Operator {
        self *= rhs;
        self
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(mut self, rhs: f64) -> Operator {
        for z in &mut self.data {
            *z *= rhs;
        }
        self
    }
}

impl MulAssign<Complex64> for Operator {
    fn mul_assign(&mut self, rhs: Complex64) {
        for z in &mut self.data {
            *z *= rhs;
        }
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(mut self, rhs: Operator) -> Operator {
        self += &rhs;
        self
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(mut self, rhs: Operator) -> Operator {
        self -= &rhs;
        self
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&Operator> for Operator {
    fn sub_assign(&mut self, rhs: &Operator) {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

/// Operator on C^n ⊗ C^d, addressable block-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedOperator {
    ancilla_dim: usize,
    system_dim: usize,
    op: Operator,
}

impl ExtendedOperator {
    pub fn new(ancilla_dim: usize, system_dim: usize, op: Operator) -> Result<Self> {
        if op.dim() != ancilla_dim * system_dim {
            return Err(Error::Dimension(format!(
                "extended operator of size {} cannot be split as {ancilla_dim}x{system_dim}",
                op.dim()
            )));
        }
        Ok(ExtendedOperator {
            ancilla_dim,
            system_dim,
            op,
        })
    }

    pub fn zeros(ancilla_dim: usize, system_dim: usize) -> Self {
        ExtendedOperator {
            ancilla_dim,
            system_dim,
            op: Operator::zeros(ancilla_dim * system_dim),
        }
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn as_operator_mut(&mut self) -> &mut Operator {
        &mut self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    /// The d×d block in ancilla row `j`, ancilla column `k`.
    pub fn block(&self, j: usize, k: usize) -> Operator {
        let d = self.system_dim;
        Operator::from_fn(d, |r, c| self.op[(j * d + r, k * d + c)])
    }

    pub fn set_block(&mut self, j: usize, k: usize, block: &Operator) {
        let d = self.system_dim;
        assert_eq!(block.dim(), d);
        for r in 0..d {
            for c in 0..d {
                self.op[(j * d + r, k * d + c)] = block[(r, c)];
            }
        }
    }

    /// Assembles an extended operator from its n×n grid of d×d blocks.
    pub fn from_blocks(blocks: &[Vec<Operator>]) -> Result<Self> {
        let n = blocks.len();
        let d = blocks
            .first()
            .and_then(|row| row.first())
            .map(Operator::dim)
            .ok_or_else(|| Error::Dimension("no blocks".into()))?;
        let mut out = ExtendedOperator::zeros(n, d);
        for (j, row) in blocks.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension("block grid is not square".into()));
            }
            for (k, b) in row.iter().enumerate() {
                if b.dim() != d {
                    return Err(Error::Dimension("blocks differ in size".into()));
                }
                out.set_block(j, k, b);
            }
        }
        Ok(out)
    }
}

/// ab − ba
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims("commutator", a, b)?;
    Ok(&a.matmul(b) - &b.matmul(a))
}

/// tr[ρ·X]
pub fn expect(rho: &Operator, x: &Operator) -> Result<Complex64> {
    check_dims("expect", rho, x)?;
    Ok(rho.trace_product(x))
}

/// Standard Kronecker product; block (j,k) of the result is a_{jk}·x.
pub fn kron(a: &Operator, x: &Operator) -> ExtendedOperator {
    let n = a.dim();
    let d = x.dim();
    let op = Operator::from_fn(n * d, |r, c| a[(r / d, c / d)] * x[(r % d, c % d)]);
    ExtendedOperator {
        ancilla_dim: n,
        system_dim: d,
        op,
    }
}

/// Lindblad generator ½L†[X,L] + ½[L†,X]L − i[X,H] (Heisenberg picture).
pub fn lindblad(model: &SystemModel, x: &Operator) -> Result<Operator> {
    check_model_dim(model, x)?;
    let l = model.l();
    let ld = model.l_dag();
    let xl_lx = &x.matmul(l) - &l.matmul(x);
    let ldx_xld = &ld.matmul(x) - &x.matmul(ld);
    let xh_hx = &x.matmul(model.h()) - &model.h().matmul(x);
    let mut out = ld.matmul(&xl_lx).scale_real(0.5);
    out.axpy(Complex64::new(0.5, 0.0), &ldx_xld.matmul(l));
    out.axpy(-I, &xh_hx);
    Ok(out)
}

/// Schrödinger-picture adjoint of [`lindblad`]: LρL† − ½{L†L, ρ} − i[H, ρ].
pub fn lindblad_dual(model: &SystemModel, rho: &Operator) -> Operator {
    let l = model.l();
    let mut out = l.matmul(rho).matmul(model.l_dag());
    let ldl_rho = model.l_dag_l().matmul(rho);
    let rho_ldl = rho.matmul(model.l_dag_l());
    out.axpy(Complex64::new(-0.5, 0.0), &ldl_rho);
    out.axpy(Complex64::new(-0.5, 0.0), &rho_ldl);
    let h_rho = model.h().matmul(rho);
    let rho_h = rho.matmul(model.h());
    out.axpy(-I, &h_rho);
    out.axpy(I, &rho_h);
    out
}

/// The gauge, creation and annihilation coefficient maps of the quantum Itô
/// Heisenberg equation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvansHudson {
    /// S†XS − X
    pub gauge: Operator,
    /// S†[X, L]
    pub creation: Operator,
    /// [L†, X]S
    pub annihilation: Operator,
}

pub fn evans_hudson(model: &SystemModel, x: &Operator) -> Result<EvansHudson> {
    check_model_dim(model, x)?;
    let s = model.s();
    let sd = model.s_dag();
    let gauge = &sd.matmul(x).matmul(s) - x;
    let creation = sd.matmul(&commutator(x, model.l())?);
    let annihilation = commutator(model.l_dag(), x)?.matmul(s);
    Ok(EvansHudson {
        gauge,
        creation,
        annihilation,
    })
}

fn check_dims(what: &str, a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "{what}: {}x{} vs {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn check_model_dim(model: &SystemModel, x: &Operator) -> Result<()> {
    if model.dim() != x.dim() {
        return Err(Error::Dimension(format!(
            "operator is {}x{} but the system dimension is {}",
            x.dim(),
            x.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Named two-level operators in the (excited, ground) basis: σz = diag(1, −1),
/// σ₋ lowers the excited state.
pub mod qubit {
    use super::*;

    pub fn sigma_x() -> Operator {
        Operator::from_real(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn sigma_y() -> Operator {
        Operator::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap()
    }

    pub fn sigma_z() -> Operator {
        Operator::from_real(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    pub fn sigma_plus() -> Operator {
        Operator::from_real(&[&[0.0, 1.0], &[0.0, 0.0]])
    }

    pub fn sigma_minus() -> Operator {
        Operator::from_real(&[&[0.0, 0.0], &[1.0, 0.0]])
    }

    /// σ₊σ₋, the excited-state projector.
    pub fn excitation() -> Operator {
        Operator::from_real(&[&[1.0, 0.0], &[0.0, 0.0]])
    }

    pub fn excited() -> Vec<Complex64> {
        vec![ONE, ZERO]
    }

    pub fn ground() -> Vec<Complex64> {
        vec![ZERO, ONE]
    }

    /// Looks up an operator by its short name (`sx`, `sy`, `sz`, `sp`, `sm`, `n`).
    pub fn by_name(name: &str) -> Option<Operator> {
        Some(match name {
            "sx" | "sigma_x" => sigma_x(),
            "sy" | "sigma_y" => sigma_y(),
            "sz" | "sigma_z" => sigma_z(),
            "sp" | "sigma_plus" => sigma_plus(),
            "sm" | "sigma_minus" => sigma_minus(),
            "n" | "excitation" => excitation(),
            _ => return None,
        })
    }
}
