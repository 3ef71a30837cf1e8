//! Brute-force integration of the linearized master equation in a truncated
//! two-mode Fock basis. Used as an oracle for the Gaussian moment equations.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::GaussianState;
use crate::error::{Error, Result};
use crate::linearize::{CouplingSet, TrapFrequencies};

pub const DEFAULT_N_MAX: usize = 25;

/// Sparse matrix stored row-wise.
#[derive(Debug, Clone)]
struct Sparse {
    dim: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Sparse {
    fn zeros(dim: usize) -> Self {
        Sparse { dim, rows: vec![Vec::new(); dim] }
    }

    fn push(&mut self, r: usize, c: usize, v: Complex64) {
        if v == Complex64::new(0.0, 0.0) {
            return;
        }
        match self.rows[r].iter_mut().find(|(cc, _)| *cc == c) {
            Some((_, x)) => *x += v,
            None => self.rows[r].push((c, v)),
        }
    }

    fn scale(&self, s: Complex64) -> Sparse {
        let mut out = self.clone();
        out.rows.iter_mut().flatten().for_each(|(_, v)| *v *= s);
        out
    }

    fn add(&self, other: &Sparse) -> Sparse {
        let mut out = self.clone();
        for (r, row) in other.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(r, c, v);
            }
        }
        out
    }

    fn mul(&self, other: &Sparse) -> Sparse {
        let mut out = Sparse::zeros(self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, a) in row {
                for &(c, b) in &other.rows[k] {
                    out.push(r, c, a * b);
                }
            }
        }
        out
    }

    fn adjoint(&self) -> Sparse {
        let mut out = Sparse::zeros(self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out.push(c, r, v.conj());
            }
        }
        out
    }

    /// Restriction to the leading `dim`×`dim` block.
    fn truncate(&self, dim: usize, map: impl Fn(usize) -> Option<usize>) -> Sparse {
        let mut out = Sparse::zeros(dim);
        for (r, row) in self.rows.iter().enumerate() {
            let Some(rr) = map(r) else { continue };
            for &(c, v) in row {
                if let Some(cc) = map(c) {
                    out.push(rr, cc, v);
                }
            }
        }
        out
    }

    /// Column-wise copy for dense × sparse products.
    fn columns(&self) -> Vec<Vec<(usize, Complex64)>> {
        let mut cols = vec![Vec::new(); self.dim];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                cols[c].push((r, v));
            }
        }
        cols
    }
}

/// out = S · X for dense column-major X.
fn sparse_dense(s: &Sparse, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = s.dim;
    let mut out = DMatrix::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n)
        .zip(x.as_slice().par_chunks(n))
        .for_each(|(o, col)| {
            for (r, row) in s.rows.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(c, v) in row {
                    acc += v * col[c];
                }
                o[r] = acc;
            }
        });
    out
}

/// out = X · S with S given column-wise.
fn dense_sparse(x: &DMatrix<Complex64>, cols: &[Vec<(usize, Complex64)>]) -> DMatrix<Complex64> {
    let n = cols.len();
    let src = x.as_slice();
    let mut out = DMatrix::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, o)| {
            for &(k, v) in &cols[j] {
                let col = &src[k * n..(k + 1) * n];
                for (oi, ci) in o.iter_mut().zip(col) {
                    *oi += v * ci;
                }
            }
        });
    out
}

/// Quadrature operators (z₁, p₁, z₂, p₂) and their pairwise products, with
/// matrix elements exact inside the truncated space.
struct Operators {
    n_max: usize,
    quad: [Sparse; 4],
    products: Vec<Vec<Sparse>>,
}

impl Operators {
    fn new(n_max: usize) -> Self {
        let big = n_max + 2;
        let q = |n: usize| -> [Sparse; 4] {
            let d = n + 1;
            let idx = |a: usize, b: usize| a * d + b;
            let mut a1 = Sparse::zeros(d * d);
            let mut a2 = Sparse::zeros(d * d);
            for i in 0..d {
                for j in 0..d {
                    if i > 0 {
                        a1.push(idx(i - 1, j), idx(i, j), Complex64::from((i as f64).sqrt()));
                    }
                    if j > 0 {
                        a2.push(idx(i, j - 1), idx(i, j), Complex64::from((j as f64).sqrt()));
                    }
                }
            }
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let z = |a: &Sparse| a.add(&a.adjoint()).scale(Complex64::from(s));
            let p = |a: &Sparse| a.add(&a.adjoint().scale(Complex64::from(-1.0))).scale(Complex64::new(0.0, -s));
            [z(&a1), p(&a1), z(&a2), p(&a2)]
        };
        let small_d = n_max + 1;
        let big_d = big + 1;
        let restrict = |k: usize| {
            let (a, b) = (k / big_d, k % big_d);
            (a < small_d && b < small_d).then_some(a * small_d + b)
        };
        let large = q(big);
        let products = (0..4)
            .map(|a| (0..4).map(|b| large[a].mul(&large[b]).truncate(small_d * small_d, restrict)).collect())
            .collect();
        Operators { n_max, quad: q(n_max), products }
    }

    fn dim(&self) -> usize {
        (self.n_max + 1).pow(2)
    }
}

/// Two-mode density matrix in the truncated Fock basis |n₁, n₂⟩, n_j ≤ n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub n_max: usize,
    pub rho: DMatrix<Complex64>,
}

fn coherent_amplitudes(alpha: Complex64, n_max: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut c = Complex64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..=n_max {
        out.push(c);
        c *= alpha / ((n + 1) as f64).sqrt();
    }
    out
}

impl FockState {
    pub fn vacuum(n_max: usize) -> Self {
        Self::coherent(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), n_max)
    }

    pub fn coherent(alpha_1: Complex64, alpha_2: Complex64, n_max: usize) -> Self {
        let c1 = coherent_amplitudes(alpha_1, n_max);
        let c2 = coherent_amplitudes(alpha_2, n_max);
        let psi: Vec<Complex64> = c1.iter().flat_map(|a| c2.iter().map(move |b| a * b)).collect();
        let mut psi = nalgebra::DVector::from_vec(psi);
        psi /= Complex64::from(psi.norm());
        FockState { n_max, rho: &psi * psi.adjoint() }
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1).pow(2)
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Population of basis states with n₁ = n_max or n₂ = n_max.
    pub fn boundary_population(&self) -> f64 {
        let d = self.n_max + 1;
        (0..self.dim())
            .filter(|k| k / d == self.n_max || k % d == self.n_max)
            .map(|k| self.rho[(k, k)].re)
            .sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::from(0.5);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-8 {
            return Err(Error::Domain(format!("density matrix trace {tr} differs from 1")));
        }
        let herm = (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-10 {
            return Err(Error::Domain(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        Ok(())
    }

    /// First and symmetrized second moments of (z₁, p₁, z₂, p₂).
    pub fn moments(&self) -> GaussianState {
        let ops = Operators::new(self.n_max);
        self.moments_with(&ops)
    }

    fn moments_with(&self, ops: &Operators) -> GaussianState {
        let expect = |s: &Sparse| -> Complex64 {
            s.rows
                .iter()
                .enumerate()
                .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
                .map(|(r, c, v)| v * self.rho[(c, r)])
                .sum()
        };
        let mean = Vector4::from_fn(|a, _| expect(&ops.quad[a]).re);
        let cov = Matrix4::from_fn(|a, b| {
            let sym = (expect(&ops.products[a][b]) + expect(&ops.products[b][a])).re * 0.5;
            sym - mean[a] * mean[b]
        });
        GaussianState { mean, cov }
    }
}

/// Step size and truncation control of the Fock integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockOptions {
    /// RK4 step in units of 1/ω.
    pub dt: f64,
    pub leak_threshold: f64,
}

impl Default for FockOptions {
    fn default() -> Self {
        FockOptions { dt: 0.025, leak_threshold: 1e-6 }
    }
}

struct Generator {
    k: Sparse,
    jumps: Vec<(Sparse, Vec<Vec<(usize, Complex64)>>)>,
}

impl Generator {
    fn new(ops: &Operators, cs: &CouplingSet, trap: &TrapFrequencies) -> Self {
        let (w1, w2) = (trap.particle_1(), trap.particle_2());
        let p = &ops.products;
        let half = |x: f64| Complex64::from(0.5 * x);
        let mut h = p[0][0].scale(half(w1 + 2.0 * cs.freq_shift_1()))
            .add(&p[1][1].scale(half(w1)))
            .add(&p[2][2].scale(half(w2 + 2.0 * cs.freq_shift_2())))
            .add(&p[3][3].scale(half(w2)));
        h = h.add(&p[0][2].scale(Complex64::from(-2.0 * cs.g_r)));
        // Σ_kl M_kl (L_k ρ L_l − ½{L_l L_k, ρ}) with L = (z₁, z₂), M = 2D.
        let z = [0usize, 2];
        let m = |k: usize, l: usize| cs.diffusion[(k, l)] * 2.0;
        let mut k_op = h.scale(Complex64::new(0.0, -1.0));
        let mut jumps = Vec::new();
        for k in 0..2 {
            let mut b = Sparse::zeros(ops.dim());
            for l in 0..2 {
                k_op = k_op.add(&p[z[l]][z[k]].scale(m(k, l) * -0.5));
                b = b.add(&ops.quad[z[l]].scale(m(k, l)));
            }
            jumps.push((ops.quad[z[k]].clone(), b.columns()));
        }
        Generator { k: k_op, jumps }
    }

    fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let kr = sparse_dense(&self.k, rho);
        let mut out = &kr + kr.adjoint();
        for (l, b) in &self.jumps {
            out += sparse_dense(l, &dense_sparse(rho, b));
        }
        out
    }
}

/// Integrates the linearized master equation on the truncated basis, returning
/// the state at each of `times` (ascending). Fails when the population on the
/// truncation boundary exceeds the configured threshold.
pub fn fock_oracle_trajectory(
    st0: &FockState,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    times: &[f64],
    opts: &FockOptions,
) -> Result<Vec<FockState>> {
    st0.validate()?;
    let ops = Operators::new(st0.n_max);
    let gen = Generator::new(&ops, cs, trap);
    let dt_max = opts.dt / trap.mean;
    let mut rho = st0.rho.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(Error::param("times", "must be ascending and non-negative"));
        }
        let span = target - t;
        let steps = (span / dt_max).ceil() as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        let hc = Complex64::from(h);
        for _ in 0..steps {
            let k1 = gen.apply(&rho);
            let k2 = gen.apply(&(&rho + &k1 * (hc * 0.5)));
            let k3 = gen.apply(&(&rho + &k2 * (hc * 0.5)));
            let k4 = gen.apply(&(&rho + &k3 * hc));
            rho += (k1 + (k2 + k3) * Complex64::from(2.0) + k4) * (hc / 6.0);
            t += h;
            let state = FockState { n_max: st0.n_max, rho };
            let leak = state.boundary_population();
            if leak > opts.leak_threshold {
                return Err(Error::TruncationLeak {
                    population: leak,
                    threshold: opts.leak_threshold,
                    time: t,
                });
            }
            rho = state.rho;
        }
        t = target;
        out.push(FockState { n_max: st0.n_max, rho: rho.clone() });
    }
    Ok(out)
}

/// Final state of [`fock_oracle_trajectory`] at time `t`.
pub fn fock_oracle_evolve(
    st0: &FockState,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    t: f64,
    opts: &FockOptions,
) -> Result<FockState> {
    Ok(fock_oracle_trajectory(st0, cs, trap, &[t], opts)?.pop().expect("one sample"))
}

/// Moments of the truncated-Fock evolution at each of `times`.
pub fn fock_oracle_moments(
    st0: &FockState,
    cs: &CouplingSet,
    trap: &TrapFrequencies,
    times: &[f64],
    opts: &FockOptions,
) -> Result<Vec<GaussianState>> {
    let ops = Operators::new(st0.n_max);
    Ok(fock_oracle_trajectory(st0, cs, trap, times, opts)?
        .iter()
        .map(|s| s.moments_with(&ops))
        .collect())
}
