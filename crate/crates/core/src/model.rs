//! Geometries, medium and reservoir parameterizations, grids, and the unit
//! system shared by all other modules.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;
use crate::{C_LIGHT, EPS_0, HBAR};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error for key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
}

impl ModelError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        ModelError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Spatial setting of the model.
///
/// `Homogeneous3D` is the analytic sector: constant parameters in a cubic
/// box, plane-wave eigenvectors, closed-form dispersion relations.
/// `Layered1D` is the grid sector: a uniform periodic grid along x with a
/// single fixed transverse polarization, so the curl-curl operator reduces
/// to -d²/dx² and longitudinal projections vanish identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Homogeneous3D { l_box: f64, m_max: usize },
    Layered1D { l_x: f64, points: usize },
}

impl Geometry {
    pub fn homogeneous_3d(l_box: f64, m_max: usize) -> Result<Self, ModelError> {
        if l_box <= 0.0 {
            return Err(ModelError::config(
                "geometry.box",
                "box side must be positive",
            ));
        }
        if m_max < 1 {
            return Err(ModelError::config(
                "geometry.m_max",
                "m_max must be at least 1",
            ));
        }
        Ok(Geometry::Homogeneous3D { l_box, m_max })
    }

    pub fn layered_1d(l_x: f64, points: usize) -> Result<Self, ModelError> {
        if l_x <= 0.0 {
            return Err(ModelError::config(
                "geometry.length",
                "domain length must be positive",
            ));
        }
        if points < 16 {
            return Err(ModelError::config(
                "geometry.points",
                format!("grid needs at least 16 points, got {points}"),
            ));
        }
        if !points.is_multiple_of(2) {
            return Err(ModelError::config(
                "geometry.points",
                format!("grid point count must be even, got {points}"),
            ));
        }
        Ok(Geometry::Layered1D { l_x, points })
    }

    /// Number of spatial sample points profiles are stored on.
    pub fn grid_len(&self) -> usize {
        match self {
            Geometry::Homogeneous3D { .. } => 1,
            Geometry::Layered1D { points, .. } => *points,
        }
    }

    /// Grid spacing; the homogeneous sector uses the box volume as its
    /// single cell.
    pub fn dx(&self) -> f64 {
        match self {
            Geometry::Homogeneous3D { l_box, .. } => l_box.powi(3),
            Geometry::Layered1D { l_x, points } => l_x / *points as f64,
        }
    }

    /// Grid coordinates x_i = i Δx (Layered1D only).
    pub fn grid(&self) -> Array1<f64> {
        match self {
            Geometry::Homogeneous3D { .. } => Array1::zeros(1),
            Geometry::Layered1D { l_x, points } => {
                let dx = l_x / *points as f64;
                Array1::from_iter((0..*points).map(|i| i as f64 * dx))
            }
        }
    }

    /// Eigenvalues q̃² of minus the periodic second-difference operator,
    /// one per branch, in the order plane waves come out of the dense
    /// eigensolver is NOT guaranteed; this is the analytic set.
    pub fn discrete_q_squared(&self) -> Vec<f64> {
        match self {
            Geometry::Homogeneous3D { .. } => Vec::new(),
            Geometry::Layered1D { l_x, points } => {
                let m = *points;
                let dx = l_x / m as f64;
                (0..m)
                    .map(|j| {
                        let q = 2.0 * std::f64::consts::PI * j as f64 / l_x;
                        2.0 * (1.0 - (q * dx).cos()) / (dx * dx)
                    })
                    .collect()
            }
        }
    }
}

/// Matter parameters of the dielectric sampled on the grid: mass density
/// ρ(x), bare frequency ω₀(x), field-matter coupling α(x).
#[derive(Debug, Clone, PartialEq)]
pub struct MediumProfile {
    pub rho: Array1<f64>,
    pub omega0: Array1<f64>,
    pub alpha: Array1<f64>,
}

impl MediumProfile {
    pub fn new(
        rho: Array1<f64>,
        omega0: Array1<f64>,
        alpha: Array1<f64>,
    ) -> Result<Self, ModelError> {
        if rho.len() != omega0.len() || rho.len() != alpha.len() {
            return Err(ModelError::Validation(
                "medium profile arrays differ in length".into(),
            ));
        }
        if rho.iter().any(|&v| v <= 0.0) {
            return Err(ModelError::config(
                "medium.rho",
                "mass density must be positive everywhere",
            ));
        }
        if omega0.iter().any(|&v| v <= 0.0) {
            return Err(ModelError::config(
                "medium.omega0",
                "omega0 must be positive everywhere",
            ));
        }
        if alpha.iter().any(|&v| v < 0.0) {
            return Err(ModelError::config(
                "medium.alpha",
                "alpha must be nonnegative",
            ));
        }
        Ok(MediumProfile { rho, omega0, alpha })
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn is_homogeneous(&self) -> bool {
        let first = (self.rho[0], self.omega0[0], self.alpha[0]);
        (0..self.len()).all(|i| (self.rho[i], self.omega0[i], self.alpha[i]) == first)
    }
}

/// Finite reservoir: N oscillators with spatially constant frequencies ωₙ
/// and per-grid-point couplings βₙ(x).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteReservoir {
    /// Strictly increasing positive frequencies, length N.
    pub omega: Vec<f64>,
    /// Couplings, shape (N, grid_len).
    pub beta: Array2<f64>,
}

impl DiscreteReservoir {
    pub fn new(omega: Vec<f64>, beta: Array2<f64>) -> Result<Self, ModelError> {
        if beta.nrows() != omega.len() {
            return Err(ModelError::Validation(
                "beta rows must match reservoir size".into(),
            ));
        }
        if omega.iter().any(|&w| w <= 0.0) {
            return Err(ModelError::config(
                "reservoir.omegas",
                "reservoir frequencies must be positive",
            ));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::config(
                "reservoir.omegas",
                "reservoir frequencies must be strictly increasing",
            ));
        }
        Ok(DiscreteReservoir { omega, beta })
    }

    pub fn empty(grid_len: usize) -> Self {
        DiscreteReservoir {
            omega: Vec::new(),
            beta: Array2::zeros((0, grid_len)),
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

/// Parametric family for the continuum coupling β(ω;x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaFamily {
    /// β(ω;x) = b(x)·exp(-ω²/(2ω_c²)). Even and entire, so β²(-z*)* = β²(z)
    /// holds on the whole plane and the continuation strip is available.
    Gaussian,
}

/// Reservoir in the continuum limit: a spectral coupling function with a
/// cutoff and a quadrature truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumReservoir {
    pub family: BetaFamily,
    pub omega_c: f64,
    /// Amplitude profile b(x) on the grid.
    pub amplitude: Array1<f64>,
    /// Quadrature truncation: β(ω) is negligible beyond ω_max.
    pub omega_max: f64,
}

impl ContinuumReservoir {
    pub fn new(
        family: BetaFamily,
        omega_c: f64,
        amplitude: Array1<f64>,
        omega_max: f64,
    ) -> Result<Self, ModelError> {
        if omega_c <= 0.0 {
            return Err(ModelError::config(
                "reservoir.omega_c",
                "cutoff must be positive",
            ));
        }
        if omega_max <= omega_c {
            return Err(ModelError::config(
                "reservoir.omega_max",
                "quadrature truncation must exceed the cutoff",
            ));
        }
        Ok(ContinuumReservoir {
            family,
            omega_c,
            amplitude,
            omega_max,
        })
    }

    /// β(ω;x) for real or complex ω. The Gaussian family is entire.
    pub fn beta(&self, omega: f64, x: usize) -> f64 {
        match self.family {
            BetaFamily::Gaussian => {
                self.amplitude[x] * (-omega * omega / (2.0 * self.omega_c * self.omega_c)).exp()
            }
        }
    }

    /// β²(z;x) continued to complex argument.
    pub fn beta_sq_complex(&self, z: num_complex::Complex64, x: usize) -> num_complex::Complex64 {
        match self.family {
            BetaFamily::Gaussian => {
                let b = self.amplitude[x];
                (b * b) * (-z * z / (self.omega_c * self.omega_c)).exp()
            }
        }
    }

    /// Half-width of the strip on which the analytic continuation of h_c is
    /// evaluated.
    pub fn strip_half_width(&self) -> f64 {
        self.omega_c / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reservoir {
    Discrete(DiscreteReservoir),
    Continuum(ContinuumReservoir),
}

/// Internal convention c = ε₀ = ħ = 1, with pure, invertible converters for
/// reporting in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Laboratory length of one internal length unit, in metres.
    pub length_m: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        UnitSystem { length_m: 1.0 }
    }
}

impl UnitSystem {
    pub const C: f64 = C_LIGHT;
    pub const EPS0: f64 = EPS_0;
    pub const HBAR: f64 = HBAR;

    const C_SI: f64 = 299_792_458.0;

    pub fn length_to_si(&self, x: f64) -> f64 {
        x * self.length_m
    }

    pub fn length_from_si(&self, x_m: f64) -> f64 {
        x_m / self.length_m
    }

    /// One internal time unit in seconds (c = 1 internally).
    pub fn time_to_si(&self, t: f64) -> f64 {
        t * self.length_m / Self::C_SI
    }

    pub fn time_from_si(&self, t_s: f64) -> f64 {
        t_s * Self::C_SI / self.length_m
    }

    /// Angular frequency, rad/s.
    pub fn frequency_to_si(&self, w: f64) -> f64 {
        w * Self::C_SI / self.length_m
    }

    pub fn frequency_from_si(&self, w_si: f64) -> f64 {
        w_si * self.length_m / Self::C_SI
    }
}

/// Piecewise description of a spatial parameter, sampled onto the grid by
/// `build_model`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileSpec {
    Constant(f64),
    /// `first` on the half-open interval [0, L_x/2), `second` on [L_x/2, L_x).
    TwoLayer {
        first: f64,
        second: f64,
    },
}

impl ProfileSpec {
    pub fn sample(&self, geometry: &Geometry) -> Array1<f64> {
        let m = geometry.grid_len();
        match *self {
            ProfileSpec::Constant(v) => Array1::from_elem(m, v),
            ProfileSpec::TwoLayer { first, second } => {
                Array1::from_iter((0..m).map(|i| if i < m / 2 { first } else { second }))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ProfileSpec::Constant(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeometryConfig {
    Homogeneous3D { l_box: f64, m_max: usize },
    Layered1D { l_x: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    pub rho: ProfileSpec,
    pub omega0: ProfileSpec,
    pub alpha: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReservoirConfig {
    Discrete {
        omegas: Vec<f64>,
        /// One coupling profile per oscillator.
        betas: Vec<ProfileSpec>,
    },
    Continuum {
        family: BetaFamily,
        omega_c: f64,
        amplitude: ProfileSpec,
        omega_max: f64,
    },
}

/// Parsed configuration record handed over by the command-line layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub geometry: GeometryConfig,
    pub medium: MediumConfig,
    pub reservoir: ReservoirConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub geometry: Geometry,
    pub medium: MediumProfile,
    pub reservoir: Reservoir,
}

/// Build and validate the model from a parsed configuration. Construction
/// is deterministic: the same configuration yields bit-identical profiles.
pub fn build_model(config: &ModelConfig) -> Result<Model, ModelError> {
    let geometry = match config.geometry {
        GeometryConfig::Homogeneous3D { l_box, m_max } => Geometry::homogeneous_3d(l_box, m_max)?,
        GeometryConfig::Layered1D { l_x, points } => Geometry::layered_1d(l_x, points)?,
    };
    if matches!(geometry, Geometry::Homogeneous3D { .. }) {
        let all_const = config.medium.rho.is_constant()
            && config.medium.omega0.is_constant()
            && config.medium.alpha.is_constant();
        if !all_const {
            return Err(ModelError::config(
                "medium",
                "homogeneous geometry requires spatially constant medium parameters",
            ));
        }
    }
    let medium = MediumProfile::new(
        config.medium.rho.sample(&geometry),
        config.medium.omega0.sample(&geometry),
        config.medium.alpha.sample(&geometry),
    )?;
    let reservoir = match &config.reservoir {
        ReservoirConfig::Discrete { omegas, betas } => {
            if omegas.len() != betas.len() {
                return Err(ModelError::config(
                    "reservoir.betas",
                    format!(
                        "expected {} coupling profiles, got {}",
                        omegas.len(),
                        betas.len()
                    ),
                ));
            }
            let m = geometry.grid_len();
            let mut beta = Array2::zeros((omegas.len(), m));
            for (n, spec) in betas.iter().enumerate() {
                beta.row_mut(n).assign(&spec.sample(&geometry));
            }
            Reservoir::Discrete(DiscreteReservoir::new(omegas.clone(), beta)?)
        }
        ReservoirConfig::Continuum {
            family,
            omega_c,
            amplitude,
            omega_max,
        } => Reservoir::Continuum(ContinuumReservoir::new(
            *family,
            *omega_c,
            amplitude.sample(&geometry),
            *omega_max,
        )?),
    };
    Ok(Model {
        geometry,
        medium,
        reservoir,
    })
}

/// ω̃₀²(x) = ω₀²(x) + Σₙ βₙ²(x)/ρ²(x) for the finite reservoir.
pub fn omega_tilde_sq(medium: &MediumProfile, reservoir: &DiscreteReservoir, x: usize) -> f64 {
    let rho = medium.rho[x];
    let sum: f64 = (0..reservoir.len())
        .map(|n| {
            let b = reservoir.beta[(n, x)];
            b * b / (rho * rho)
        })
        .sum();
    medium.omega0[x] * medium.omega0[x] + sum
}

/// Continuum counterpart ω̃₀,c²(x) = ω₀²(x) + ∫₀^∞ β²(ω;x)/ρ²(x) dω.
pub fn omega_tilde_sq_continuum(
    medium: &MediumProfile,
    reservoir: &ContinuumReservoir,
    x: usize,
) -> f64 {
    let rho = medium.rho[x];
    let integral = quad::integrate_real(
        |w| {
            let b = reservoir.beta(w, x);
            b * b / (rho * rho)
        },
        0.0,
        reservoir.omega_max,
        quad::TOL_QUAD,
    )
    .expect("tail-truncated coupling integral converges");
    medium.omega0[x] * medium.omega0[x] + integral
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layered_config(points: usize) -> ModelConfig {
        ModelConfig {
            geometry: GeometryConfig::Layered1D { l_x: 10.0, points },
            medium: MediumConfig {
                rho: ProfileSpec::Constant(1.0),
                omega0: ProfileSpec::Constant(1.0),
                alpha: ProfileSpec::Constant(0.5),
            },
            reservoir: ReservoirConfig::Discrete {
                omegas: vec![],
                betas: vec![],
            },
        }
    }

    #[test]
    fn decoupled_vacuum_case_is_valid() {
        let mut cfg = layered_config(16);
        cfg.medium.alpha = ProfileSpec::Constant(0.0);
        let model = build_model(&cfg).unwrap();
        assert!(model.medium.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn odd_grid_is_rejected() {
        let cfg = layered_config(15);
        let err = build_model(&cfg).unwrap_err();
        assert!(matches!(err, ModelError::Config { ref key, .. } if key == "geometry.points"));
    }

    #[test]
    fn two_layer_midpoint_convention_golden() {
        // Convention: the first layer covers the half-open interval
        // [0, L_x/2); index M/2 already belongs to the second layer.
        let mut cfg = layered_config(16);
        cfg.medium.alpha = ProfileSpec::TwoLayer {
            first: 0.3,
            second: 0.7,
        };
        let model = build_model(&cfg).unwrap();
        let expect = [
            0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7,
        ];
        assert_eq!(model.medium.alpha.to_vec(), expect);
    }

    #[test]
    fn non_monotone_reservoir_rejected() {
        let mut cfg = layered_config(16);
        cfg.reservoir = ReservoirConfig::Discrete {
            omegas: vec![2.0, 1.5],
            betas: vec![ProfileSpec::Constant(0.1), ProfileSpec::Constant(0.1)],
        };
        assert!(build_model(&cfg).is_err());
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let cfg = layered_config(32);
        let a = build_model(&cfg).unwrap();
        let b = build_model(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn omega_tilde_empty_sum() {
        let cfg = layered_config(16);
        let model = build_model(&cfg).unwrap();
        let res = DiscreteReservoir::empty(16);
        assert_eq!(omega_tilde_sq(&model.medium, &res, 3), 1.0);
    }

    #[test]
    fn omega_tilde_unit_ratio() {
        let cfg = layered_config(16);
        let model = build_model(&cfg).unwrap();
        let res = DiscreteReservoir::new(vec![2.0], Array2::from_elem((1, 16), 1.0)).unwrap();
        let v = omega_tilde_sq(&model.medium, &res, 0);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn omega_tilde_monotone_in_coupling() {
        let cfg = layered_config(16);
        let model = build_model(&cfg).unwrap();
        let mut prev = 0.0;
        for i in 1..6 {
            let b = 0.1 * i as f64;
            let res = DiscreteReservoir::new(vec![2.0], Array2::from_elem((1, 16), b)).unwrap();
            let v = omega_tilde_sq(&model.medium, &res, 0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn unit_converters_invert() {
        let u = UnitSystem { length_m: 1.55e-6 };
        let t = 3.7;
        assert!((u.time_from_si(u.time_to_si(t)) - t).abs() < 1e-12);
        assert!((u.frequency_from_si(u.frequency_to_si(t)) - t).abs() < 1e-12);
    }
}
