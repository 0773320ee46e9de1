//! Matter response functions h, h_c and the dielectric functions ε, ε_c:
//! evaluation on the real axis and in the complex plane, analytic
//! continuation into a strip below the real axis, real-axis zeros, exact
//! rational derivatives, and the algebraic sum identities used by the
//! diagonalization checks.

use ndarray::Array1;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ContinuumReservoir, DiscreteReservoir, MediumProfile, Reservoir};
use crate::quad::{self, QuadError};
use crate::EPS_0;

/// Relative guard band around response-function poles.
pub const TAU_POLE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("frequency {z} lies within the guard band of the reservoir pole at {omega_n}")]
    PoleProximity { omega_n: f64, z: Complex64 },
    #[error("dielectric function has a pole near {z} (h vanished)")]
    DielectricPole { z: Complex64 },
    #[error("no sign change of h found in ({lo}, {hi}); parameters are degenerate")]
    Bracketing { lo: f64, hi: f64 },
    #[error("branch {branch} is not defined at z = {z}")]
    Domain { branch: &'static str, z: Complex64 },
    #[error("operation requires a {expected} reservoir")]
    WrongReservoir { expected: &'static str },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Which analytic branch of the continuum response to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSelector {
    /// Direct quadrature; requires Im z > 0.
    UpperHalfPlane,
    /// Direct quadrature; requires Im z < 0. This is NOT the continuation
    /// of the upper branch: the two differ by the jump across the cut.
    LowerHalfPlane,
    /// Continuation of the upper branch into |Im z| < γ_strip via a shifted
    /// contour plus the explicit half-residue term.
    ContinuedStrip,
}

enum ReservoirRef<'a> {
    Discrete(&'a DiscreteReservoir),
    Continuum(&'a ContinuumReservoir),
}

/// All spectral functions at one grid point: captures the position
/// dependence of ρ, ω₀, α and the couplings.
pub struct SpectralContext<'a> {
    medium: &'a MediumProfile,
    reservoir: ReservoirRef<'a>,
    pub x: usize,
    omega_tilde_sq: f64,
    /// Reservoir poles with nonzero coupling at this point, paired with
    /// their absolute guard radii τ = TAU_POLE · (local pole spacing).
    poles: Vec<(f64, f64)>,
}

impl<'a> SpectralContext<'a> {
    pub fn discrete(medium: &'a MediumProfile, reservoir: &'a DiscreteReservoir, x: usize) -> Self {
        let rho = medium.rho[x];
        let active: Vec<f64> = (0..reservoir.len())
            .filter(|&n| reservoir.beta[(n, x)] != 0.0)
            .map(|n| reservoir.omega[n])
            .collect();
        let poles = guard_radii(&active);
        let omega_tilde_sq = medium.omega0[x] * medium.omega0[x]
            + (0..reservoir.len())
                .map(|n| {
                    let b = reservoir.beta[(n, x)];
                    b * b / (rho * rho)
                })
                .sum::<f64>();
        SpectralContext {
            medium,
            reservoir: ReservoirRef::Discrete(reservoir),
            x,
            omega_tilde_sq,
            poles,
        }
    }

    pub fn continuum(
        medium: &'a MediumProfile,
        reservoir: &'a ContinuumReservoir,
        x: usize,
    ) -> Self {
        let omega_tilde_sq = crate::model::omega_tilde_sq_continuum(medium, reservoir, x);
        SpectralContext {
            medium,
            reservoir: ReservoirRef::Continuum(reservoir),
            x,
            omega_tilde_sq,
            poles: Vec::new(),
        }
    }

    pub fn new(medium: &'a MediumProfile, reservoir: &'a Reservoir, x: usize) -> Self {
        match reservoir {
            Reservoir::Discrete(r) => Self::discrete(medium, r, x),
            Reservoir::Continuum(r) => Self::continuum(medium, r, x),
        }
    }

    pub fn rho(&self) -> f64 {
        self.medium.rho[self.x]
    }

    pub fn alpha(&self) -> f64 {
        self.medium.alpha[self.x]
    }

    pub fn omega0(&self) -> f64 {
        self.medium.omega0[self.x]
    }

    /// ω̃₀² at this point (discrete sum or continuum integral).
    pub fn omega_tilde_sq(&self) -> f64 {
        self.omega_tilde_sq
    }

    fn discrete_reservoir(&self) -> Result<&'a DiscreteReservoir, SpectralError> {
        match self.reservoir {
            ReservoirRef::Discrete(r) => Ok(r),
            ReservoirRef::Continuum(_) => Err(SpectralError::WrongReservoir {
                expected: "discrete",
            }),
        }
    }

    fn continuum_reservoir(&self) -> Result<&'a ContinuumReservoir, SpectralError> {
        match self.reservoir {
            ReservoirRef::Continuum(r) => Ok(r),
            ReservoirRef::Discrete(_) => Err(SpectralError::WrongReservoir {
                expected: "continuum",
            }),
        }
    }

    fn check_pole_guard(&self, z: Complex64) -> Result<(), SpectralError> {
        for &(w, tau) in &self.poles {
            if (z - w).norm() < tau || (z + w).norm() < tau {
                return Err(SpectralError::PoleProximity { omega_n: w, z });
            }
        }
        Ok(())
    }

    /// h(z) = z² − ω̃₀² + Σₙ βₙ²ωₙ²/(ρ²(ωₙ²−z²)).
    pub fn h(&self, z: Complex64) -> Result<Complex64, SpectralError> {
        self.check_pole_guard(z)?;
        Ok(self.h_unguarded(z))
    }

    fn h_unguarded(&self, z: Complex64) -> Complex64 {
        let res = self
            .discrete_reservoir()
            .expect("h is only called on discrete contexts");
        let rho2 = self.rho() * self.rho();
        let z2 = z * z;
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 0..res.len() {
            let b = res.beta[(n, self.x)];
            if b == 0.0 {
                continue;
            }
            let w2 = res.omega[n] * res.omega[n];
            sum += b * b * w2 / (rho2 * (w2 - z2));
        }
        z2 - self.omega_tilde_sq + sum
    }

    /// h at real argument; the pole guard still applies.
    pub fn h_real(&self, s: f64) -> Result<f64, SpectralError> {
        self.h(Complex64::new(s, 0.0)).map(|v| v.re)
    }

    fn h_real_unguarded(&self, s: f64) -> f64 {
        self.h_unguarded(Complex64::new(s, 0.0)).re
    }

    /// Guard-free h at real argument. Legitimate deep inside root-finding
    /// intervals, where evaluations may approach a reservoir frequency (a
    /// regular point of ε) without being wrong.
    pub fn h_real_raw(&self, s: f64) -> f64 {
        self.h_real_unguarded(s)
    }

    /// Guard-free ε at real argument; ±∞ exactly at an h-zero.
    pub fn epsilon_real_raw(&self, s: f64) -> f64 {
        let alpha = self.alpha();
        if alpha == 0.0 {
            return 1.0;
        }
        1.0 - alpha * alpha / (EPS_0 * self.rho() * self.h_real_unguarded(s))
    }

    /// Guard-free d(s²ε)/ds.
    pub fn d_s2eps_ds_raw(&self, s: f64) -> f64 {
        let alpha = self.alpha();
        if alpha == 0.0 {
            return 2.0 * s;
        }
        let u = s * s;
        let h = self.h_real_unguarded(s);
        let hu = self.dh_du(u);
        let slope = 1.0 - alpha * alpha / (EPS_0 * self.rho()) * (h - u * hu) / (h * h);
        2.0 * s * slope
    }

    /// Partial-fraction strength cₙ = βₙ²ωₙ²/ρ² of reservoir channel n in
    /// h(u) = u − ω̃₀² + Σⱼ cⱼ/(uⱼ − u) with u = s², uⱼ = ωⱼ².
    pub fn channel_strength(&self, n: usize) -> Result<f64, SpectralError> {
        let res = self.discrete_reservoir()?;
        let b = res.beta[(n, self.x)];
        let w = res.omega[n];
        let rho = self.rho();
        Ok(b * b * w * w / (rho * rho))
    }

    /// h(u) with the singular term of channel `skip` removed: the part that
    /// stays regular when u pinches the pole uₙ.
    pub fn h_u_excluding(&self, u: f64, skip: usize) -> Result<f64, SpectralError> {
        let res = self.discrete_reservoir()?;
        let mut h = u - self.omega_tilde_sq;
        for j in 0..res.len() {
            if j == skip {
                continue;
            }
            let cj = self.channel_strength(j)?;
            let uj = res.omega[j] * res.omega[j];
            h += cj / (uj - u);
        }
        Ok(h)
    }

    /// dh/du with the singular term of channel `skip` removed.
    pub fn dh_du_excluding(&self, u: f64, skip: usize) -> Result<f64, SpectralError> {
        let res = self.discrete_reservoir()?;
        let mut d = 1.0;
        for j in 0..res.len() {
            if j == skip {
                continue;
            }
            let cj = self.channel_strength(j)?;
            let gap = res.omega[j] * res.omega[j] - u;
            d += cj / (gap * gap);
        }
        Ok(d)
    }

    /// ε(z) = 1 − α²/(ε₀ ρ h(z)). Identically 1 for α = 0.
    pub fn epsilon(&self, z: Complex64) -> Result<Complex64, SpectralError> {
        let alpha = self.alpha();
        if alpha == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let h = self.h(z)?;
        let scale = z.norm_sqr() + self.omega_tilde_sq;
        if h.norm() < 1e-13 * scale {
            return Err(SpectralError::DielectricPole { z });
        }
        Ok(1.0 - alpha * alpha / (EPS_0 * self.rho() * h))
    }

    /// All positive zeros of h(·;x), sorted ascending. There are exactly
    /// (number of poles with nonzero coupling) + 1 of them, strictly
    /// interlacing with those poles; they are the poles of ε.
    pub fn h_zeros(&self) -> Result<Vec<f64>, SpectralError> {
        self.discrete_reservoir()?;
        if self.poles.is_empty() {
            // h = s² − ω₀² exactly.
            return Ok(vec![self.omega_tilde_sq.sqrt()]);
        }
        let mut zeros = Vec::with_capacity(self.poles.len() + 1);
        let f = |s: f64| self.h_real_unguarded(s);
        // h is strictly increasing on every interval between consecutive
        // poles, running from -∞ (or h(0) = -ω₀²) up to +∞, so each interval
        // holds exactly one zero.
        let first = self.poles[0].0;
        zeros.push(bisect_increasing(&f, 0.0, first, true, false)?);
        for w in self.poles.windows(2) {
            zeros.push(bisect_increasing(&f, w[0].0, w[1].0, false, false)?);
        }
        let last = self.poles.last().unwrap().0;
        let gap = if self.poles.len() >= 2 {
            last - self.poles[self.poles.len() - 2].0
        } else {
            last
        };
        // Tail interval: double outward until h turns positive.
        let mut hi = last + gap.max(self.omega_tilde_sq.sqrt());
        let mut tries = 0;
        while f(hi) <= 0.0 {
            hi = last + 2.0 * (hi - last);
            tries += 1;
            if tries > 200 {
                return Err(SpectralError::Bracketing { lo: last, hi });
            }
        }
        zeros.push(bisect_increasing(&f, last, hi, false, true)?);
        Ok(zeros)
    }

    /// dh/du with u = s² (exact rational form).
    pub fn dh_du(&self, u: f64) -> f64 {
        let res = self
            .discrete_reservoir()
            .expect("dh_du is only called on discrete contexts");
        let rho2 = self.rho() * self.rho();
        let mut sum = 0.0;
        for n in 0..res.len() {
            let b = res.beta[(n, self.x)];
            if b == 0.0 {
                continue;
            }
            let w2 = res.omega[n] * res.omega[n];
            let d = w2 - u;
            sum += b * b * w2 / (rho2 * d * d);
        }
        1.0 + sum
    }

    /// d(s·h(s))/ds from the exact rational expression.
    pub fn d_sh_ds(&self, s: f64) -> Result<f64, SpectralError> {
        let u = s * s;
        let h = self.h_real(s)?;
        Ok(h + 2.0 * u * self.dh_du(u))
    }

    /// d(s²ε(s))/d(s²) (exact rational form). Always > 1 on the real axis
    /// away from poles.
    pub fn d_s2eps_du(&self, s: f64) -> Result<f64, SpectralError> {
        let alpha = self.alpha();
        if alpha == 0.0 {
            // Guard still applies: the caller is probing near-pole structure.
            self.check_pole_guard(Complex64::new(s, 0.0))?;
            return Ok(1.0);
        }
        let u = s * s;
        let h = self.h_real(s)?;
        let hu = self.dh_du(u);
        Ok(1.0 - alpha * alpha / (EPS_0 * self.rho()) * (h - u * hu) / (h * h))
    }

    /// d(s²ε(s))/ds = 2s · d(s²ε)/d(s²).
    pub fn d_s2eps_ds(&self, s: f64) -> Result<f64, SpectralError> {
        Ok(2.0 * s * self.d_s2eps_du(s)?)
    }

    /// Residuals of the two coupling-sum identities used to diagonalize the
    /// Hamiltonian: the two-frequency identity at (s, s′) and the diagonal
    /// derivative identity at s. Both should vanish to rounding.
    pub fn check_h_identities(&self, s: f64, s_prime: f64) -> Result<(f64, f64), SpectralError> {
        let res = self.discrete_reservoir()?;
        let rho2 = self.rho() * self.rho();
        let (u, v) = (s * s, s_prime * s_prime);

        let mut lhs_a = 0.0;
        let mut lhs_b = 0.0;
        for n in 0..res.len() {
            let b = res.beta[(n, self.x)];
            if b == 0.0 {
                continue;
            }
            let w2 = res.omega[n] * res.omega[n];
            lhs_a += b * b * w2 * (w2 - s * s_prime) / (rho2 * (w2 - u) * (w2 - v));
            lhs_b += b * b * w2 * (w2 + u) / (rho2 * (w2 - u) * (w2 - u));
        }
        let hs = self.h_real(s)?;
        let hsp = self.h_real(s_prime)?;
        let rhs_a =
            (s * hs + s_prime * hsp) / (s + s_prime) - u - v + s * s_prime + self.omega_tilde_sq;
        let rhs_b = self.d_sh_ds(s)? - 3.0 * u + self.omega_tilde_sq;
        Ok(((lhs_a - rhs_a).abs(), (lhs_b - rhs_b).abs()))
    }

    /// Continuum response h_c(z) on the requested branch.
    pub fn hc(&self, z: Complex64, branch: BranchSelector) -> Result<Complex64, SpectralError> {
        let res = self.continuum_reservoir()?;
        let rho2 = self.rho() * self.rho();
        let base = z * z - self.omega_tilde_sq;
        if res.amplitude[self.x] == 0.0 {
            return Ok(base);
        }
        match branch {
            BranchSelector::UpperHalfPlane | BranchSelector::LowerHalfPlane => {
                let upper = branch == BranchSelector::UpperHalfPlane;
                if (upper && z.im <= 0.0) || (!upper && z.im >= 0.0) {
                    return Err(SpectralError::Domain {
                        branch: if upper {
                            "upper half plane"
                        } else {
                            "lower half plane"
                        },
                        z,
                    });
                }
                let z2 = z * z;
                let integral = quad::integrate_complex(
                    |w| {
                        let b = res.beta(w, self.x);
                        b * b * w * w / (rho2 * (w * w - z2))
                    },
                    0.0,
                    res.omega_max,
                    quad::TOL_QUAD,
                )?;
                Ok(base + integral)
            }
            BranchSelector::ContinuedStrip => {
                let gamma = res.strip_half_width();
                if z.im.abs() >= gamma {
                    return Err(SpectralError::Domain {
                        branch: "continued strip",
                        z,
                    });
                }
                let z2 = z * z;
                // Half-residue term from dragging the contour through the
                // pole at ω = −z, plus half the full-line integral shifted
                // to Im ω = −γ (the integrand is even in ω).
                let residue_term =
                    Complex64::new(0.0, std::f64::consts::PI) * z * res.beta_sq_complex(-z, self.x)
                        / (2.0 * rho2);
                let za = Complex64::new(-res.omega_max, -gamma);
                let zb = Complex64::new(res.omega_max, -gamma);
                let shifted = quad::integrate_segment(
                    |w| {
                        let b2 = res.beta_sq_complex(w, self.x);
                        b2 * w * w / (rho2 * (w * w - z2))
                    },
                    za,
                    zb,
                    quad::TOL_QUAD,
                )?;
                Ok(base + residue_term + 0.5 * shifted)
            }
        }
    }

    /// ε_c(z) = 1 − α²/(ε₀ ρ h_c(z)) on the requested branch.
    pub fn eps_c(&self, z: Complex64, branch: BranchSelector) -> Result<Complex64, SpectralError> {
        let alpha = self.alpha();
        if alpha == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let h = self.hc(z, branch)?;
        if h.norm() == 0.0 {
            return Err(SpectralError::DielectricPole { z });
        }
        Ok(1.0 - alpha * alpha / (EPS_0 * self.rho() * h))
    }

    /// Retarded boundary value h_c(ω + i0) by Richardson extrapolation of
    /// upper-branch evaluations at Im z ∈ {1e-2, 1e-3, 1e-4}.
    pub fn hc_retarded(&self, omega: f64) -> Result<Complex64, SpectralError> {
        let samples =
            self.eta_samples(|ctx, z| ctx.hc(z, BranchSelector::UpperHalfPlane), omega)?;
        Ok(richardson_limit(&samples))
    }

    /// Retarded boundary value ε_c(ω + i0), same extrapolation scheme.
    pub fn eps_c_retarded(&self, omega: f64) -> Result<Complex64, SpectralError> {
        let samples =
            self.eta_samples(|ctx, z| ctx.eps_c(z, BranchSelector::UpperHalfPlane), omega)?;
        Ok(richardson_limit(&samples))
    }

    fn eta_samples(
        &self,
        f: impl Fn(&Self, Complex64) -> Result<Complex64, SpectralError>,
        omega: f64,
    ) -> Result<Vec<(f64, Complex64)>, SpectralError> {
        ETA_LADDER
            .iter()
            .map(|&d| Ok((d, f(self, Complex64::new(omega, d))?)))
            .collect()
    }
}

/// Imaginary offsets used when extrapolating boundary values onto the real
/// axis.
pub const ETA_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Polynomial (Neville) extrapolation of (δ, f(δ)) samples to δ = 0.
pub fn richardson_limit(samples: &[(f64, Complex64)]) -> Complex64 {
    let mut p: Vec<Complex64> = samples.iter().map(|&(_, v)| v).collect();
    let d: Vec<f64> = samples.iter().map(|&(x, _)| x).collect();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (d[i], d[i + level]);
            p[i] = (p[i + 1] * xi - p[i] * xj) / (xi - xj);
        }
    }
    p[0]
}

/// Guard radii TAU_POLE · (nearest-neighbour spacing) for a sorted pole set;
/// the edge poles use their single neighbour gap (or the gap to the origin).
fn guard_radii(poles: &[f64]) -> Vec<(f64, f64)> {
    let n = poles.len();
    (0..n)
        .map(|i| {
            let left = if i == 0 {
                poles[0]
            } else {
                poles[i] - poles[i - 1]
            };
            let right = if i + 1 < n {
                poles[i + 1] - poles[i]
            } else {
                left
            };
            (poles[i], TAU_POLE * left.min(right))
        })
        .collect()
}

/// Find the unique zero of a strictly increasing function on the open
/// interval (lo, hi); the endpoints may be poles (f → ∓∞) unless flagged as
/// regular.
fn bisect_increasing(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    lo_regular: bool,
    hi_regular: bool,
) -> Result<f64, SpectralError> {
    let span = hi - lo;
    // Walk in from singular endpoints until the sign is established.
    let mut a = if lo_regular { lo } else { f64::NAN };
    if !lo_regular {
        let mut step = 0.5 * span;
        for _ in 0..120 {
            let cand = lo + step;
            if f(cand) < 0.0 {
                a = cand;
                break;
            }
            step *= 0.5;
        }
        if a.is_nan() {
            // The zero is numerically indistinguishable from the pole
            // (vanishing residue): report the endpoint itself.
            return Ok(lo);
        }
    } else if f(a) >= 0.0 {
        return Err(SpectralError::Bracketing { lo, hi });
    }
    let mut b = if hi_regular { hi } else { f64::NAN };
    if !hi_regular {
        let mut step = 0.5 * (hi - a);
        for _ in 0..120 {
            let cand = hi - step;
            if cand > a && f(cand) > 0.0 {
                b = cand;
                break;
            }
            step *= 0.5;
        }
        if b.is_nan() {
            return Ok(hi);
        }
    } else if f(b) <= 0.0 {
        return Err(SpectralError::Bracketing { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Convenience: per-grid-point h-zeros for a whole model (the poles of
/// ε(s;x); their union defines the forbidden bands for operator assembly).
pub fn h_zeros_all(
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
) -> Result<Vec<Vec<f64>>, SpectralError> {
    (0..medium.len())
        .map(|x| SpectralContext::discrete(medium, reservoir, x).h_zeros())
        .collect()
}

/// ε(s;x) sampled over the grid at one real frequency.
pub fn epsilon_profile(
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
    s: f64,
) -> Result<Array1<f64>, SpectralError> {
    let mut out = Array1::zeros(medium.len());
    for x in 0..medium.len() {
        let ctx = SpectralContext::discrete(medium, reservoir, x);
        out[x] = ctx.epsilon(Complex64::new(s, 0.0))?.re;
    }
    Ok(out)
}
