//! Time evolution of canonical field means and Gaussian covariances:
//! normal-mode projection and resummation, the zero-frequency drift sector,
//! Hamiltonian energies in raw and diagonal form, symplectic propagators,
//! and an independent Runge–Kutta oracle.

use ndarray::{Array1, Array2};
use ndarray_linalg::Eigh;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{DiscreteReservoir, Geometry, MediumProfile};
use crate::modes::{ModeEntry, ModeTable, ModesError};
use crate::spectral::{SpectralContext, TAU_POLE};
use crate::{EPS_0, HBAR, MU_0};

/// Relative reconstruction tolerance for projection + resummation.
pub const TAU_RECON: f64 = 1e-8;
/// Relative agreement demanded between mode-sum evolution and the ODE
/// oracle.
pub const TAU_EVOL: f64 = 1e-6;
/// Absolute/relative symplectic-defect tolerance of the propagator.
pub const TAU_SYMP: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Modes(#[from] ModesError),
    #[error("resumming the projected coefficients misses the input state by {residual:.3e} (relative); the mode table is incomplete")]
    Projection { residual: f64 },
    #[error("time step {dt} does not resolve the largest mode frequency {omega_max}")]
    StepSize { dt: f64, omega_max: f64 },
    #[error("state shapes do not match the model: {0}")]
    Shape(String),
}

/// Canonical field means on the grid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub a: Array1<f64>,
    pub pi: Array1<f64>,
    pub q0: Array1<f64>,
    pub p0: Array1<f64>,
    /// Reservoir coordinates, shape (N, M).
    pub qn: Array2<f64>,
    /// Reservoir momenta, shape (N, M).
    pub pn: Array2<f64>,
}

impl FieldState {
    pub fn zero(m: usize, n: usize) -> Self {
        FieldState {
            t: 0.0,
            a: Array1::zeros(m),
            pi: Array1::zeros(m),
            q0: Array1::zeros(m),
            p0: Array1::zeros(m),
            qn: Array2::zeros((n, m)),
            pn: Array2::zeros((n, m)),
        }
    }

    pub fn grid_len(&self) -> usize {
        self.a.len()
    }

    pub fn reservoir_len(&self) -> usize {
        self.qn.nrows()
    }

    pub fn dim(&self) -> usize {
        (4 + 2 * self.reservoir_len()) * self.grid_len()
    }

    /// Pack into the canonical vector [A, Π, Q₀, P₀, Q₁, P₁, …].
    pub fn to_vector(&self) -> Array1<f64> {
        let (m, n) = (self.grid_len(), self.reservoir_len());
        let mut v = Array1::zeros(self.dim());
        v.slice_mut(ndarray::s![0..m]).assign(&self.a);
        v.slice_mut(ndarray::s![m..2 * m]).assign(&self.pi);
        v.slice_mut(ndarray::s![2 * m..3 * m]).assign(&self.q0);
        v.slice_mut(ndarray::s![3 * m..4 * m]).assign(&self.p0);
        for k in 0..n {
            let base = (4 + 2 * k) * m;
            v.slice_mut(ndarray::s![base..base + m])
                .assign(&self.qn.row(k));
            v.slice_mut(ndarray::s![base + m..base + 2 * m])
                .assign(&self.pn.row(k));
        }
        v
    }

    pub fn from_vector(v: &Array1<f64>, m: usize, n: usize, t: f64) -> Self {
        let mut st = FieldState::zero(m, n);
        st.t = t;
        st.a.assign(&v.slice(ndarray::s![0..m]));
        st.pi.assign(&v.slice(ndarray::s![m..2 * m]));
        st.q0.assign(&v.slice(ndarray::s![2 * m..3 * m]));
        st.p0.assign(&v.slice(ndarray::s![3 * m..4 * m]));
        for k in 0..n {
            let base = (4 + 2 * k) * m;
            st.qn
                .row_mut(k)
                .assign(&v.slice(ndarray::s![base..base + m]));
            st.pn
                .row_mut(k)
                .assign(&v.slice(ndarray::s![base + m..base + 2 * m]));
        }
        st
    }

    /// Electric field E = −Π/ε₀ (transverse sector).
    pub fn electric_field(&self) -> Array1<f64> {
        self.pi.mapv(|v| -v / EPS_0)
    }

    /// Displacement field D = ε₀E − αQ₀ = −Π − αQ₀.
    pub fn displacement_field(&self, medium: &MediumProfile) -> Array1<f64> {
        let mut d = self.pi.mapv(|v| -v);
        for x in 0..self.grid_len() {
            d[x] -= medium.alpha[x] * self.q0[x];
        }
        d
    }

    /// Magnetic-field diagnostic B = ∂ₓA (central difference, periodic).
    pub fn magnetic_field(&self, dx: f64) -> Array1<f64> {
        let m = self.grid_len();
        Array1::from_iter(
            (0..m).map(|i| (self.a[(i + 1) % m] - self.a[(i + m - 1) % m]) / (2.0 * dx)),
        )
    }

    pub fn max_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for v in self
            .a
            .iter()
            .chain(self.pi.iter())
            .chain(self.q0.iter())
            .chain(self.p0.iter())
            .chain(self.qn.iter())
            .chain(self.pn.iter())
        {
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// Status of the ∇·D check (vacuous in the transverse 1D reduction).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceStatus {
    VacuousByGeometry,
}

pub fn divergence_check(geometry: &Geometry) -> DivergenceStatus {
    match geometry {
        // A single transverse polarization depending on x only is
        // divergence-free identically.
        Geometry::Layered1D { .. } | Geometry::Homogeneous3D { .. } => {
            DivergenceStatus::VacuousByGeometry
        }
    }
}

/// Hamilton right-hand-side matrix K with ż = Kz on the canonical vector.
pub fn hamilton_matrix(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
) -> Array2<f64> {
    let m = geometry.grid_len();
    let n = reservoir.len();
    let dx = geometry.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let dim = (4 + 2 * n) * m;
    let mut k = Array2::zeros((dim, dim));
    let (ia, ipi, iq0, ip0) = (0, m, 2 * m, 3 * m);
    for x in 0..m {
        let rho = medium.rho[x];
        let alpha = medium.alpha[x];
        let wt2 = crate::model::omega_tilde_sq(medium, reservoir, x);
        // Ȧ = Π/ε₀
        k[(ia + x, ipi + x)] = 1.0 / EPS_0;
        // Π̇ = (1/μ₀)D₂A − (α²/ρ)A − (α/ρ)P₀
        k[(ipi + x, ia + x)] = -2.0 * inv_dx2 / MU_0 - alpha * alpha / rho;
        k[(ipi + x, ia + (x + 1) % m)] += inv_dx2 / MU_0;
        k[(ipi + x, ia + (x + m - 1) % m)] += inv_dx2 / MU_0;
        k[(ipi + x, ip0 + x)] = -alpha / rho;
        // Q̇₀ = P₀/ρ + (α/ρ)A
        k[(iq0 + x, ip0 + x)] = 1.0 / rho;
        k[(iq0 + x, ia + x)] = alpha / rho;
        // Ṗ₀ = −ρω̃₀²Q₀ − Σ βₙPₙ/ρ
        k[(ip0 + x, iq0 + x)] = -rho * wt2;
        for nn in 0..n {
            let beta = reservoir.beta[(nn, x)];
            let (iqn, ipn) = ((4 + 2 * nn) * m, (5 + 2 * nn) * m);
            k[(ip0 + x, ipn + x)] = -beta / rho;
            // Q̇ₙ = Pₙ/ρ + (βₙ/ρ)Q₀
            k[(iqn + x, ipn + x)] = 1.0 / rho;
            k[(iqn + x, iq0 + x)] = beta / rho;
            // Ṗₙ = −ρωₙ²Qₙ
            let wn = reservoir.omega[nn];
            k[(ipn + x, iqn + x)] = -rho * wn * wn;
        }
    }
    k
}

/// Total energy of a field state: the positive-definite form with the
/// forward-difference gradient, which is exactly conserved by the discrete
/// dynamics of `hamilton_matrix`.
pub fn hamiltonian_energy(
    state: &FieldState,
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
) -> f64 {
    let m = state.grid_len();
    let n = state.reservoir_len();
    let dx = geometry.dx();
    let mut h = 0.0;
    for x in 0..m {
        let rho = medium.rho[x];
        let alpha = medium.alpha[x];
        let w0 = medium.omega0[x];
        let grad = (state.a[(x + 1) % m] - state.a[x]) / dx;
        let pol = state.p0[x] + alpha * state.a[x];
        h += state.pi[x] * state.pi[x] / (2.0 * EPS_0)
            + grad * grad / (2.0 * MU_0)
            + pol * pol / (2.0 * rho)
            + rho * w0 * w0 * state.q0[x] * state.q0[x] / 2.0;
        for nn in 0..n {
            let beta = reservoir.beta[(nn, x)];
            let wn = reservoir.omega[nn];
            let res = state.pn[(nn, x)] + beta * state.q0[x];
            h += res * res / (2.0 * rho)
                + rho * wn * wn * state.qn[(nn, x)] * state.qn[(nn, x)] / 2.0;
        }
    }
    h * dx
}

/// Canonical amplitude bundle of one mode, packed as a complex canonical
/// vector: Z(t) = c·a·e^{−iΩt} + conjugate.
#[derive(Debug, Clone)]
pub struct ModeVector {
    pub omega: f64,
    /// Canonical-order complex amplitudes [A, Π, Q₀, P₀, Qₙ, Pₙ].
    pub a: Array1<Complex64>,
    /// Projection covector: c = j · state (complex dot, no conjugation).
    pub j: Array1<Complex64>,
}

/// The full diagonalizing basis: oscillating modes plus the two-dimensional
/// zero-frequency (drift) sector.
pub struct ModeBasis {
    pub modes: Vec<ModeVector>,
    /// Static solution: constant A with the compensating polarization.
    pub v1: Array1<f64>,
    /// Drift partner: constant Π; flows as v₂ → v₂ + (t/ε₀)v₁.
    pub v2: Array1<f64>,
    /// Symplectic pairing ω(v₁, v₂) = Δx·Σ ε(0;x) > 0.
    pub omega12: f64,
    pub m: usize,
    pub n: usize,
    pub dx: f64,
    /// Σ ε(0;x)Δx, the zero-sector energy normalization.
    pub eps0_sum: f64,
}

/// Assemble the canonical amplitude vector and projection covector of one
/// mode table entry.
pub fn mode_vector(
    entry: &ModeEntry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
    dx: f64,
) -> Result<ModeVector, ModesError> {
    let m = medium.len();
    let n = reservoir.len();
    let omega = entry.omega;
    for (nn, &wn) in reservoir.omega.iter().enumerate() {
        if entry.pinched.map(|(pn, _)| pn) == Some(nn) {
            // The stable squared-frequency gap is carried by the entry.
            continue;
        }
        let left = if nn == 0 {
            wn
        } else {
            wn - reservoir.omega[nn - 1]
        };
        let right = if nn + 1 < n {
            reservoir.omega[nn + 1] - wn
        } else {
            left
        };
        if (omega - wn).abs() < TAU_POLE * left.min(right)
            && reservoir.beta.row(nn).iter().any(|&b| b != 0.0)
        {
            return Err(ModesError::AmplitudeSingularity { omega, omega_n: wn });
        }
    }
    let dim = (4 + 2 * n) * m;
    let mut a = Array1::zeros(dim);
    let mut j = Array1::zeros(dim);
    let i = Complex64::new(0.0, 1.0);
    for x in 0..m {
        let ctx = SpectralContext::discrete(medium, reservoir, x);
        let rho = medium.rho[x];
        let alpha = medium.alpha[x];
        let h = match entry.pinched {
            // Pinched root: evaluate h from the regular part plus the stable
            // gap; the direct sum would cancel catastrophically.
            Some((pn, gap)) => {
                ctx.h_u_excluding(omega * omega, pn)? - ctx.channel_strength(pn)? / gap
            }
            None => ctx.h_real_raw(omega),
        };
        let e = entry.weight * entry.u[x];
        // Field amplitudes (physical-channel form).
        let a1 = Complex64::new(-EPS_0 * e, 0.0); // Π
        let a2 = -i * e / omega; // A
        let a3 = i * alpha * (1.0 / omega - omega / h) * e; // P₀
        let a4 = Complex64::new(alpha * e / (rho * h), 0.0); // Q₀
        a[x] = a2;
        a[m + x] = a1;
        a[2 * m + x] = a4;
        a[3 * m + x] = a3;
        // Projection covector: c = −i Σ Δx (a₁*A − a₂*Π + a₃*Q₀ − a₄*P₀ + Σ a₅*Qₙ − a₆*Pₙ).
        j[x] = -i * a1.conj() * dx;
        j[m + x] = i * a2.conj() * dx;
        j[2 * m + x] = -i * a3.conj() * dx;
        j[3 * m + x] = i * a4.conj() * dx;
        for nn in 0..n {
            let beta = reservoir.beta[(nn, x)];
            let wn = reservoir.omega[nn];
            let gap2 = match entry.pinched {
                Some((pn, gap)) if pn == nn => gap,
                _ => omega * omega - wn * wn,
            };
            let denom = rho * h * gap2;
            let a5 = Complex64::new(alpha * beta * wn * wn * e / denom, 0.0); // Pₙ
            let a6 = i * alpha * beta * omega * e / (rho * denom); // Qₙ
            let (iqn, ipn) = ((4 + 2 * nn) * m + x, (5 + 2 * nn) * m + x);
            a[iqn] = a6;
            a[ipn] = a5;
            j[iqn] = -i * a5.conj() * dx;
            j[ipn] = i * a6.conj() * dx;
        }
    }
    Ok(ModeVector { omega, a, j })
}

/// Normal mode of a single decoupled oscillator channel (coordinate index
/// iq, momentum index ip, frequency Ω, mass ρ): the amplitude is fixed by
/// H(|c| = 1) = Ω, the covector by biorthogonality.
fn dark_mode(dim: usize, iq: usize, ip: usize, omega: f64, rho: f64, dx: f64) -> ModeVector {
    let i = Complex64::new(0.0, 1.0);
    let aq = Complex64::new(1.0 / (2.0 * rho * omega * dx).sqrt(), 0.0);
    let ap = -i * rho * omega * aq;
    let mut a = Array1::zeros(dim);
    let mut j = Array1::zeros(dim);
    a[iq] = aq;
    a[ip] = ap;
    j[iq] = -i * ap.conj() * dx;
    j[ip] = i * aq.conj() * dx;
    ModeVector { omega, a, j }
}

impl ModeBasis {
    pub fn build(
        table: &ModeTable,
        geometry: &Geometry,
        medium: &MediumProfile,
        reservoir: &DiscreteReservoir,
    ) -> Result<Self, ModesError> {
        let m = geometry.grid_len();
        let n = reservoir.len();
        let dx = geometry.dx();
        let mut modes = table
            .entries
            .iter()
            .map(|e| mode_vector(e, medium, reservoir, dx))
            .collect::<Result<Vec<_>, _>>()?;
        let dim = (4 + 2 * n) * m;
        // Channels with zero coupling never enter the spectral problem but
        // remain canonical degrees of freedom: add one local oscillator mode
        // per decoupled channel so that the basis stays complete.
        for x in 0..m {
            let rho = medium.rho[x];
            if medium.alpha[x] == 0.0 {
                if (0..n).any(|nn| reservoir.beta[(nn, x)] != 0.0) {
                    return Err(ModesError::DecoupledPolarizable { x });
                }
                modes.push(dark_mode(
                    dim,
                    2 * m + x,
                    3 * m + x,
                    medium.omega0[x],
                    rho,
                    dx,
                ));
            }
            for nn in 0..n {
                if reservoir.beta[(nn, x)] == 0.0 {
                    modes.push(dark_mode(
                        dim,
                        (4 + 2 * nn) * m + x,
                        (5 + 2 * nn) * m + x,
                        reservoir.omega[nn],
                        rho,
                        dx,
                    ));
                }
            }
        }
        let mut v1 = Array1::zeros(dim);
        let mut v2 = Array1::zeros(dim);
        let mut eps0_sum = 0.0;
        for x in 0..m {
            let rho = medium.rho[x];
            let alpha = medium.alpha[x];
            let w0 = medium.omega0[x];
            v1[x] = 1.0; // A
            v1[3 * m + x] = -alpha; // P₀
            v2[m + x] = 1.0; // Π
            let qt = alpha / (EPS_0 * rho * w0 * w0);
            v2[2 * m + x] = qt; // Q₀
            for nn in 0..n {
                v2[(5 + 2 * nn) * m + x] = -reservoir.beta[(nn, x)] * qt; // Pₙ
            }
            eps0_sum += (1.0 + alpha * alpha / (EPS_0 * rho * w0 * w0)) * dx;
        }
        Ok(ModeBasis {
            modes,
            v1,
            v2,
            omega12: eps0_sum,
            m,
            n,
            dx,
            eps0_sum,
        })
    }

    /// Symplectic form ω(u, v) = Δx Σ (u_q v_p − u_p v_q) over all
    /// canonical pairs.
    pub fn symplectic_form(&self, u: &Array1<f64>, v: &Array1<f64>) -> f64 {
        let (m, n) = (self.m, self.n);
        let mut s = 0.0;
        for x in 0..m {
            s += u[x] * v[m + x] - u[m + x] * v[x];
            s += u[2 * m + x] * v[3 * m + x] - u[3 * m + x] * v[2 * m + x];
            for nn in 0..n {
                let (iq, ip) = ((4 + 2 * nn) * m + x, (5 + 2 * nn) * m + x);
                s += u[iq] * v[ip] - u[ip] * v[iq];
            }
        }
        s * self.dx
    }
}

/// Mode coefficients of a state: one complex amplitude per oscillating mode
/// plus the two drift-sector coordinates.
#[derive(Debug, Clone)]
pub struct ModeCoefficients {
    pub c: Vec<Complex64>,
    pub xi1: f64,
    pub xi2: f64,
}

/// Project a t=0 state onto the mode basis; fails if resumming does not
/// reproduce the state (incomplete mode table).
pub fn project_initial(
    state: &FieldState,
    basis: &ModeBasis,
) -> Result<ModeCoefficients, EvolutionError> {
    let mut coeffs = project_unchecked(state, basis);
    let scale = state.max_abs().max(1e-300);
    let target = state.to_vector();
    let mut worst = f64::INFINITY;
    // Iterative refinement: re-project the reconstruction residual and add
    // the correction. Each pass contracts by the biorthogonality defect of
    // the basis, pushing the recovery to machine precision.
    for _ in 0..4 {
        let back = evolve_means(&coeffs, basis, 0.0).to_vector();
        let residual = &target - &back;
        worst = residual.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if worst / scale <= 1e-14 {
            break;
        }
        let res_state = FieldState::from_vector(&residual, basis.m, basis.n, 0.0);
        let delta = project_unchecked(&res_state, basis);
        for (c, d) in coeffs.c.iter_mut().zip(delta.c.iter()) {
            *c += d;
        }
        coeffs.xi1 += delta.xi1;
        coeffs.xi2 += delta.xi2;
    }
    if worst / scale > TAU_RECON {
        return Err(EvolutionError::Projection {
            residual: worst / scale,
        });
    }
    Ok(coeffs)
}

pub fn project_unchecked(state: &FieldState, basis: &ModeBasis) -> ModeCoefficients {
    let z = state.to_vector();
    let zc = z.mapv(|v| Complex64::new(v, 0.0));
    let c: Vec<Complex64> = basis.modes.iter().map(|mv| mv.j.dot(&zc)).collect();
    let w1 = basis.symplectic_form(&basis.v1, &z);
    let w2 = basis.symplectic_form(&basis.v2, &z);
    ModeCoefficients {
        c,
        xi1: -w2 / basis.omega12,
        xi2: w1 / basis.omega12,
    }
}

/// Resum the normal-mode expansion at time t:
/// z(t) = Σ 2Re(c·a·e^{−iΩt}) + (ξ₁ + ξ₂ t/ε₀) v₁ + ξ₂ v₂.
pub fn evolve_means(coeffs: &ModeCoefficients, basis: &ModeBasis, t: f64) -> FieldState {
    let dim = (4 + 2 * basis.n) * basis.m;
    let mut z = Array1::zeros(dim);
    for (c, mv) in coeffs.c.iter().zip(basis.modes.iter()) {
        let phase = Complex64::from_polar(1.0, -mv.omega * t) * c;
        for i in 0..dim {
            z[i] += 2.0 * (phase * mv.a[i]).re;
        }
    }
    let drift = coeffs.xi1 + coeffs.xi2 * t / EPS_0;
    for i in 0..dim {
        z[i] += drift * basis.v1[i] + coeffs.xi2 * basis.v2[i];
    }
    FieldState::from_vector(&z, basis.m, basis.n, t)
}

/// Diagonal-form energy Σ Ω|c|² (×2 for the two conjugate quadratures)
/// plus the drift-sector kinetic term.
pub fn diagonal_energy(coeffs: &ModeCoefficients, basis: &ModeBasis) -> f64 {
    let mode_part: f64 = coeffs
        .c
        .iter()
        .zip(basis.modes.iter())
        .map(|(c, mv)| mv.omega * c.norm_sqr())
        .sum();
    mode_part + coeffs.xi2 * coeffs.xi2 / (2.0 * EPS_0) * basis.eps0_sum
}

/// Real linear propagator S(t) on canonical field space:
/// S = Σ 2Re(e^{−iΩt} a ⊗ j) + drift-sector outer products.
pub fn propagator_matrix(basis: &ModeBasis, t: f64) -> Array2<f64> {
    let dim = (4 + 2 * basis.n) * basis.m;
    let mut s = Array2::zeros((dim, dim));
    for mv in &basis.modes {
        let phase = Complex64::from_polar(1.0, -mv.omega * t);
        for i in 0..dim {
            let ai = phase * mv.a[i];
            if ai.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..dim {
                s[(i, k)] += 2.0 * (ai * mv.j[k]).re;
            }
        }
    }
    // Drift sector: ξ₂ = ω(v₁,·)/ω12, ξ₁ = −ω(v₂,·)/ω12, and
    // z ← (ξ₁ + tξ₂/ε₀) v₁ + ξ₂ v₂.
    let j1 = symplectic_covector(basis, &basis.v1);
    let j2 = symplectic_covector(basis, &basis.v2);
    for i in 0..dim {
        for k in 0..dim {
            s[(i, k)] +=
                (-basis.v1[i] * j2[k] + (t / EPS_0) * basis.v1[i] * j1[k] + basis.v2[i] * j1[k])
                    / basis.omega12;
        }
    }
    s
}

/// Row vector representing ω(v, ·).
fn symplectic_covector(basis: &ModeBasis, v: &Array1<f64>) -> Array1<f64> {
    let (m, n) = (basis.m, basis.n);
    let dim = (4 + 2 * n) * m;
    let mut j = Array1::zeros(dim);
    for x in 0..m {
        j[m + x] += v[x] * basis.dx;
        j[x] -= v[m + x] * basis.dx;
        j[3 * m + x] += v[2 * m + x] * basis.dx;
        j[2 * m + x] -= v[3 * m + x] * basis.dx;
        for nn in 0..n {
            let (iq, ip) = ((4 + 2 * nn) * m + x, (5 + 2 * nn) * m + x);
            j[ip] += v[iq] * basis.dx;
            j[iq] -= v[ip] * basis.dx;
        }
    }
    j
}

/// The canonical form matrix J with ω(u,v) = uᵀJv.
pub fn symplectic_matrix(m: usize, n: usize, dx: f64) -> Array2<f64> {
    let dim = (4 + 2 * n) * m;
    let mut j = Array2::zeros((dim, dim));
    for x in 0..m {
        j[(x, m + x)] = dx;
        j[(m + x, x)] = -dx;
        j[(2 * m + x, 3 * m + x)] = dx;
        j[(3 * m + x, 2 * m + x)] = -dx;
        for nn in 0..n {
            let (iq, ip) = ((4 + 2 * nn) * m + x, (5 + 2 * nn) * m + x);
            j[(iq, ip)] = dx;
            j[(ip, iq)] = -dx;
        }
    }
    j
}

/// ‖SJSᵀ − J‖_max / Δx.
pub fn symplectic_defect(s: &Array2<f64>, m: usize, n: usize, dx: f64) -> f64 {
    let j = symplectic_matrix(m, n, dx);
    let prod = s.dot(&j).dot(&s.t());
    let mut worst: f64 = 0.0;
    for ((i, k), v) in prod.indexed_iter() {
        worst = worst.max((v - j[(i, k)]).abs());
    }
    worst / dx
}

/// Fourth-order Runge–Kutta integration of ż = Kz as an independent oracle
/// for the mode resummation.
pub fn evolve_ode_oracle(
    state0: &FieldState,
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
    t: f64,
    dt: f64,
    omega_max: f64,
) -> Result<FieldState, EvolutionError> {
    if dt * omega_max > 0.05 {
        return Err(EvolutionError::StepSize { dt, omega_max });
    }
    let k = hamilton_matrix(geometry, medium, reservoir);
    let mut z = state0.to_vector();
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = k.dot(&z);
        let k2 = k.dot(&(&z + &(&k1 * (h / 2.0))));
        let k3 = k.dot(&(&z + &(&k2 * (h / 2.0))));
        let k4 = k.dot(&(&z + &(&k3 * h)));
        z = &z + &((&k1 + &(&k2 * 2.0) + &(&k3 * 2.0) + &k4) * (h / 6.0));
    }
    Ok(FieldState::from_vector(
        &z,
        state0.grid_len(),
        state0.reservoir_len(),
        state0.t + t,
    ))
}

/// Residual ‖K·a + iΩ·a‖_max / ‖a‖_max of the first-order equations of
/// motion for one mode vector.
pub fn mode_equation_residual(mv: &ModeVector, k: &Array2<f64>) -> f64 {
    let dim = mv.a.len();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..dim {
        let mut ka = Complex64::new(0.0, 0.0);
        for l in 0..dim {
            if k[(i, l)] != 0.0 {
                ka += k[(i, l)] * mv.a[l];
            }
        }
        worst = worst.max((ka + Complex64::new(0.0, mv.omega) * mv.a[i]).norm());
        scale = scale.max(mv.a[i].norm());
    }
    worst / scale.max(1e-300)
}

/// Positive mode frequencies obtained directly from the eigenvalues of the
/// Hamilton matrix, sorted ascending. Zero-sector (drift) eigenvalues are
/// excluded by the `floor` cutoff relative to the largest frequency.
pub fn direct_spectrum(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
    floor: f64,
) -> Result<Vec<f64>, ModesError> {
    use ndarray_linalg::Eig;
    let k = hamilton_matrix(geometry, medium, reservoir);
    let (vals, _) = k.eig().map_err(|e| ModesError::Linalg(e.to_string()))?;
    let omega_max = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let mut freqs: Vec<f64> = vals
        .iter()
        .filter(|v| v.im > floor * omega_max)
        .map(|v| v.im)
        .collect();
    freqs.sort_by(f64::total_cmp);
    Ok(freqs)
}

/// One-to-one comparison of two ascending frequency lists; returns the worst
/// relative deviation, or an error naming the unmatched counts.
pub fn compare_spectra(a: &[f64], b: &[f64]) -> Result<f64, ModesError> {
    if a.len() != b.len() {
        return Err(ModesError::CrossValidation {
            unmatched: a.len().abs_diff(b.len()),
            worst: f64::INFINITY,
        });
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-300));
    }
    Ok(worst)
}

/// Symmetric second moments of the canonical fields.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    pub t: f64,
    pub sigma: Array2<f64>,
}

impl CovarianceState {
    /// ⟨E(x)E(x′)⟩ from the Π block.
    pub fn extract_ee(&self, m: usize, x: usize, xp: usize) -> f64 {
        self.sigma[(m + x, m + xp)] / (EPS_0 * EPS_0)
    }

    /// Largest violation of Σ + (iħ/2)J_c ⪰ 0, where J_c is the commutator
    /// matrix ([Ẑ_i, Ẑ_j] = iħ (J_c)_ij). Returns max(0, −λ_min) scaled by
    /// the commutator magnitude.
    pub fn uncertainty_defect(&self, m: usize, n: usize, dx: f64) -> f64 {
        let dim = self.sigma.nrows();
        // J_c = −J⁻¹ has ±1/Δx on the canonical pairs.
        let mut h = Array2::<Complex64>::zeros((dim, dim));
        for i in 0..dim {
            for k in 0..dim {
                h[(i, k)] = Complex64::new(self.sigma[(i, k)], 0.0);
            }
        }
        let jc = symplectic_matrix(m, n, dx).mapv(|v| v / (dx * dx));
        for i in 0..dim {
            for k in 0..dim {
                h[(i, k)] += Complex64::new(0.0, 0.5 * HBAR * jc[(i, k)]);
            }
        }
        match h.eigh(ndarray_linalg::UPLO::Lower) {
            Ok((vals, _)) => {
                let min = vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                (-min).max(0.0) * dx
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// Σ(t) = S Σ(0) Sᵀ.
pub fn covariance_evolve(cov0: &CovarianceState, s: &Array2<f64>, t: f64) -> CovarianceState {
    CovarianceState {
        t: cov0.t + t,
        sigma: s.dot(&cov0.sigma).dot(&s.t()),
    }
}

/// Ground-state (vacuum) covariance: ħ·Σ Re(a ⊗ a*) over modes plus the
/// symmetric minimal-uncertainty choice for the drift pair.
pub fn vacuum_covariance(basis: &ModeBasis) -> CovarianceState {
    let dim = (4 + 2 * basis.n) * basis.m;
    let mut sigma = Array2::zeros((dim, dim));
    for mv in &basis.modes {
        for i in 0..dim {
            let ai = mv.a[i];
            if ai.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..dim {
                sigma[(i, k)] += HBAR * (ai * mv.a[k].conj()).re;
            }
        }
    }
    // Drift pair (ξ₁, ξ₂) is canonical with effective ħ_eff = ħ/ω12;
    // symmetric minimal spread ⟨ξ₁²⟩ = ⟨ξ₂²⟩ = ħ/(2ω12).
    let spread = HBAR / (2.0 * basis.omega12);
    for i in 0..dim {
        for k in 0..dim {
            sigma[(i, k)] += spread * (basis.v1[i] * basis.v1[k] + basis.v2[i] * basis.v2[k]);
        }
    }
    CovarianceState { t: 0.0, sigma }
}

/// Thermal reservoir covariance: independent oscillators with target mean
/// energy density ⟨H_R(ω)⟩ per channel; all other blocks zero. Each
/// reservoir oscillator at grid point x carries energy ⟨H⟩ = H̄(ωₙ) so that
/// Var Pₙ = ρ H̄/Δx and Var Qₙ = H̄/(ρωₙ²Δx) (the Δx converts field variance
/// density to per-cell variance).
pub fn thermal_reservoir_covariance(
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
    dx: f64,
    energy: impl Fn(f64) -> f64,
) -> CovarianceState {
    let m = medium.len();
    let n = reservoir.len();
    let dim = (4 + 2 * n) * m;
    let mut sigma = Array2::zeros((dim, dim));
    for nn in 0..n {
        let wn = reservoir.omega[nn];
        let e = energy(wn);
        for x in 0..m {
            let rho = medium.rho[x];
            let (iq, ip) = ((4 + 2 * nn) * m + x, (5 + 2 * nn) * m + x);
            sigma[(ip, ip)] = rho * e / dx;
            sigma[(iq, iq)] = e / (rho * wn * wn * dx);
        }
    }
    CovarianceState { t: 0.0, sigma }
}
