//! Green function of the wave operator at complex frequency: direct
//! resolvent solves, complex-symmetric spectral sums, continuum-response
//! variants, and real-axis boundary values by extrapolation.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse};
use num_complex::Complex64;

use crate::model::{ContinuumReservoir, DiscreteReservoir, Geometry, MediumProfile};
use crate::modes::ModesError;
use crate::spectral::{richardson_limit, BranchSelector, SpectralContext, ETA_LADDER};
use crate::C_LIGHT;

/// Relative agreement demanded of the two Green-function code paths and of
/// the symmetry relations.
pub const TAU_GREEN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenMethod {
    /// Linear solve of c⁻²L(z)G = I/Δx.
    DirectSolve,
    /// Σ_k c²·u uᵀ/λ over the complex-orthogonal eigenvectors of L(z).
    SpectralSum,
}

/// G(z; x, x′) on the grid, with the method that produced it.
#[derive(Debug, Clone)]
pub struct GreenEvaluation {
    pub z: Complex64,
    pub matrix: Array2<Complex64>,
    pub method: GreenMethod,
    pub dx: f64,
}

impl GreenEvaluation {
    /// ‖Gᵀ − G‖_max / ‖G‖_max (reciprocity).
    pub fn reciprocity_residual(&self) -> f64 {
        let m = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).norm());
                scale = scale.max(self.matrix[(i, j)].norm());
            }
        }
        worst / scale.max(1e-300)
    }
}

/// Assemble the complex operator L(z) = c²D₂ + z²ε(z;x) for a given ε
/// profile.
pub fn complex_operator(
    geometry: &Geometry,
    eps: &Array1<Complex64>,
    z: Complex64,
) -> Array2<Complex64> {
    let m = geometry.grid_len();
    let dx = geometry.dx();
    let c2 = C_LIGHT * C_LIGHT;
    let inv_dx2 = 1.0 / (dx * dx);
    let z2 = z * z;
    let mut a = Array2::zeros((m, m));
    for x in 0..m {
        a[(x, x)] = z2 * eps[x] - 2.0 * c2 * inv_dx2;
        a[(x, (x + 1) % m)] += Complex64::new(c2 * inv_dx2, 0.0);
        a[(x, (x + m - 1) % m)] += Complex64::new(c2 * inv_dx2, 0.0);
    }
    a
}

fn green_from_operator(
    l: Array2<Complex64>,
    z: Complex64,
    dx: f64,
    method: GreenMethod,
) -> Result<GreenEvaluation, ModesError> {
    let c2 = C_LIGHT * C_LIGHT;
    let matrix = match method {
        GreenMethod::DirectSolve => {
            let inv = l.inv().map_err(|e| ModesError::Linalg(e.to_string()))?;
            inv * Complex64::new(c2 / dx, 0.0)
        }
        GreenMethod::SpectralSum => {
            let (vals, vecs) = l.eig().map_err(|e| ModesError::Linalg(e.to_string()))?;
            let m = vals.len();
            let mut g = Array2::<Complex64>::zeros((m, m));
            let scale = vals.iter().fold(0.0f64, |s, v| s.max(v.norm()));
            // Cluster (near-)degenerate eigenvalues: within a degenerate
            // subspace the returned basis need not be complex-orthogonal, so
            // use the oblique projector U (UᵀU)⁻¹ Uᵀ of the whole cluster.
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| {
                (vals[i].re, vals[i].im)
                    .partial_cmp(&(vals[j].re, vals[j].im))
                    .unwrap()
            });
            let mut start = 0;
            while start < m {
                let mut end = start + 1;
                while end < m
                    && (vals[order[end]] - vals[order[end - 1]]).norm() < 1e-9 * scale.max(1.0)
                {
                    end += 1;
                }
                let cluster = &order[start..end];
                let lambda = vals[cluster[0]];
                if lambda.norm() < 1e-14 * scale {
                    return Err(ModesError::Resonance {
                        z,
                        nearest: lambda.norm(),
                    });
                }
                let d = cluster.len();
                let mut u = Array2::<Complex64>::zeros((m, d));
                for (c, &k) in cluster.iter().enumerate() {
                    u.column_mut(c).assign(&vecs.column(k));
                }
                // Gram matrix in the complex-symmetric bilinear form uᵀv.
                let gram = u.t().dot(&u);
                let gram_inv = gram.inv().map_err(|e| ModesError::Linalg(e.to_string()))?;
                let proj = u.dot(&gram_inv).dot(&u.t());
                let coeff = c2 / (lambda * dx);
                g = g + proj.mapv(|p| p * coeff);
                start = end;
            }
            g
        }
    };
    Ok(GreenEvaluation {
        z,
        matrix,
        method,
        dx,
    })
}

/// Green function for the finite-reservoir model at complex z.
pub fn greens_function(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
    z: Complex64,
    method: GreenMethod,
) -> Result<GreenEvaluation, ModesError> {
    let m = geometry.grid_len();
    let mut eps = Array1::zeros(m);
    for x in 0..m {
        let ctx = SpectralContext::discrete(medium, reservoir, x);
        eps[x] = ctx.epsilon(z)?;
    }
    green_from_operator(
        complex_operator(geometry, &eps, z),
        z,
        geometry.dx(),
        method,
    )
}

/// Green function for the continuum model at complex z on a branch.
pub fn greens_function_continuum(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &ContinuumReservoir,
    z: Complex64,
    branch: BranchSelector,
    method: GreenMethod,
) -> Result<GreenEvaluation, ModesError> {
    let m = geometry.grid_len();
    let mut eps = Array1::zeros(m);
    for x in 0..m {
        let ctx = SpectralContext::continuum(medium, reservoir, x);
        eps[x] = ctx.eps_c(z, branch)?;
    }
    green_from_operator(
        complex_operator(geometry, &eps, z),
        z,
        geometry.dx(),
        method,
    )
}

/// Retarded boundary value G_c(ω + i0) by Richardson extrapolation of
/// upper-half-plane solves at Im z ∈ ETA_LADDER.
pub fn greens_function_retarded(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &ContinuumReservoir,
    omega: f64,
    method: GreenMethod,
) -> Result<GreenEvaluation, ModesError> {
    let m = geometry.grid_len();
    let evals: Vec<GreenEvaluation> = ETA_LADDER
        .iter()
        .map(|&d| {
            greens_function_continuum(
                geometry,
                medium,
                reservoir,
                Complex64::new(omega, d),
                BranchSelector::UpperHalfPlane,
                method,
            )
        })
        .collect::<Result<_, _>>()?;
    let mut matrix = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let samples: Vec<(f64, Complex64)> = ETA_LADDER
                .iter()
                .zip(evals.iter())
                .map(|(&d, e)| (d, e.matrix[(i, j)]))
                .collect();
            matrix[(i, j)] = richardson_limit(&samples);
        }
    }
    Ok(GreenEvaluation {
        z: Complex64::new(omega, 0.0),
        matrix,
        method,
        dx: geometry.dx(),
    })
}

/// Retarded boundary value via the strip continuation of ε_c evaluated
/// directly at real ω (its boundary value from above).
pub fn greens_function_strip(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &ContinuumReservoir,
    omega: f64,
    method: GreenMethod,
) -> Result<GreenEvaluation, ModesError> {
    greens_function_continuum(
        geometry,
        medium,
        reservoir,
        Complex64::new(omega, 0.0),
        BranchSelector::ContinuedStrip,
        method,
    )
}

/// ‖c⁻²L(z)G − I/Δx‖_max · Δx (relative defect of the defining equation).
pub fn defining_equation_residual(
    geometry: &Geometry,
    eps: &Array1<Complex64>,
    eval: &GreenEvaluation,
) -> f64 {
    let l = complex_operator(geometry, eps, eval.z);
    let prod = l.dot(&eval.matrix) / Complex64::new(C_LIGHT * C_LIGHT, 0.0);
    let m = prod.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j {
                Complex64::new(1.0 / eval.dx, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((prod[(i, j)] - target).norm() * eval.dx);
        }
    }
    worst
}

/// Max-entry relative deviation between two Green evaluations.
pub fn relative_deviation(a: &GreenEvaluation, b: &GreenEvaluation) -> f64 {
    let m = a.matrix.nrows();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            worst = worst.max((a.matrix[(i, j)] - b.matrix[(i, j)]).norm());
            scale = scale.max(a.matrix[(i, j)].norm());
        }
    }
    worst / scale.max(1e-300)
}
