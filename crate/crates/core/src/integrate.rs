//! Fixed-step integrators over tuples of matrices.
//!
//! Every filter in this crate has the normalized form
//!
//! ```text
//! dx = a(x) dt + (B x − ψ(x) x) dW,   dW = dY − ψ(x) dt
//! ```
//!
//! with B and ψ linear, so one stepping routine covers the coupled, embedded
//! and unnormalized variants.

use num_complex::Complex64;

use crate::operators::Operator;

pub(crate) type Blocks = Vec<Operator>;

/// Stochastic discretization of the filter equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    /// Euler–Maruyama, strong order ½.
    #[default]
    EulerMaruyama,
    /// Euler–Maruyama plus the ½ b′b (ΔW² − dt) correction, strong order 1.
    Milstein,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler-maruyama",
            Scheme::Milstein => "milstein",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler-maruyama" | "euler" | "em" => Some(Scheme::EulerMaruyama),
            "milstein" => Some(Scheme::Milstein),
            _ => None,
        }
    }
}

pub(crate) fn axpy(y: &mut Blocks, a: Complex64, x: &Blocks) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.axpy(a, xi);
    }
}

fn combine(y: &Blocks, a: f64, x: &Blocks) -> Blocks {
    let mut out = y.clone();
    axpy(&mut out, Complex64::new(a, 0.0), x);
    out
}

/// Classical fourth-order Runge–Kutta step of ẏ = f(t, y).
pub(crate) fn rk4(y: &Blocks, t: f64, dt: f64, mut f: impl FnMut(f64, &Blocks) -> Blocks) -> Blocks {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &combine(y, 0.5 * dt, &k1));
    let k3 = f(t + 0.5 * dt, &combine(y, 0.5 * dt, &k2));
    let k4 = f(t + dt, &combine(y, dt, &k3));
    let mut out = y.clone();
    axpy(&mut out, Complex64::new(dt / 6.0, 0.0), &k1);
    axpy(&mut out, Complex64::new(dt / 3.0, 0.0), &k2);
    axpy(&mut out, Complex64::new(dt / 3.0, 0.0), &k3);
    axpy(&mut out, Complex64::new(dt / 6.0, 0.0), &k4);
    out
}

/// One step of the normalized filter form. `psi_x` is ψ(x) as already
/// computed by the caller (it fixes dW); `bx` is B x.
#[allow(clippy::too_many_arguments)]
pub(crate) fn filter_step(
    x: &Blocks,
    drift: &Blocks,
    bx: &Blocks,
    psi_x: Complex64,
    dt: f64,
    dw: f64,
    scheme: Scheme,
    apply_b: impl Fn(&Blocks) -> Blocks,
    psi: impl Fn(&Blocks) -> Complex64,
) -> Blocks {
    // b(x) = Bx − ψ(x)x
    let mut b = bx.clone();
    axpy(&mut b, -psi_x, x);

    let mut out = x.clone();
    axpy(&mut out, Complex64::new(dt, 0.0), drift);
    axpy(&mut out, Complex64::new(dw, 0.0), &b);

    if scheme == Scheme::Milstein {
        // b′(x)[v] = Bv − ψ(v)x − ψ(x)v
        let mut bb = apply_b(&b);
        axpy(&mut bb, -psi(&b), x);
        axpy(&mut bb, -psi_x, &b);
        axpy(&mut out, Complex64::new(0.5 * (dw * dw - dt), 0.0), &bb);
    }
    out
}
