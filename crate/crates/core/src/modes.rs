//! The frequency-dependent wave operator L(s): assembly, eigensolves,
//! branch tracking in s, mode-frequency root finding, spectral weights,
//! canonical amplitude bundles, and the independent first-order spectrum
//! used for cross-validation.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{DiscreteReservoir, Geometry, MediumProfile};
use crate::spectral::{SpectralContext, SpectralError, TAU_POLE};
use crate::{C_LIGHT, EPS_0};

/// Orthonormality/completeness tolerance per unit matrix dimension.
pub const TAU_ORTH_UNIT: f64 = 1e-10;
/// Relative root tolerance (scaled by the local λ magnitude).
pub const TAU_ROOT: f64 = 1e-12;
/// Relative tolerance for the two independent spectrum computations.
pub const TAU_XVAL: f64 = 1e-8;
/// Minimum eigenvector overlap for a branch link to count as continuous.
pub const OVERLAP_MIN: f64 = 0.9;

#[derive(Debug, Error)]
pub enum ModesError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("s = {s} lies in a forbidden pole band (grid points {points:?})")]
    PoleBand { s: f64, points: Vec<usize> },
    #[error("linear algebra backend failure: {0}")]
    Linalg(String),
    #[error("branch matching stayed ambiguous between s = {s_lo} and s = {s_hi} after refinement")]
    BranchCrossing { s_lo: f64, s_hi: f64 },
    #[error("branch {branch}: expected {expected} roots, found {found} (per-interval tallies {tallies:?})")]
    SpectralCount {
        branch: usize,
        expected: usize,
        found: usize,
        tallies: Vec<usize>,
    },
    #[error("spectra disagree: {unmatched} frequencies have no partner within tolerance (worst deviation {worst:.3e})")]
    CrossValidation { unmatched: usize, worst: f64 },
    #[error("mode frequency {omega} is within the guard band of reservoir frequency {omega_n}")]
    AmplitudeSingularity { omega: f64, omega_n: f64 },
    #[error("operator requires the 1D layered geometry")]
    WrongGeometry,
    #[error("frequency {z} sits on a resonance of the operator (smallest |λ| = {nearest:.3e})")]
    Resonance { z: Complex64, nearest: f64 },
    #[error("operation requires a spatially homogeneous medium and coupling")]
    NotHomogeneous,
    #[error("grid point {x}: polarizable channel is decoupled from the field (α = 0) but still reservoir-coupled; its local modes are not representable in this basis")]
    DecoupledPolarizable { x: usize },
    #[error("argument-principle count failed on branch {branch}: zeros {zeros}, poles {poles}, origin multiplicity {origin}")]
    ArgumentPrinciple {
        branch: usize,
        zeros: usize,
        poles: usize,
        origin: usize,
    },
}

impl From<ndarray_linalg::error::LinalgError> for ModesError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        ModesError::Linalg(e.to_string())
    }
}

/// The operator c²D₂ + s²ε(s;x) at one real frequency (1D layered sector).
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub s: f64,
    pub matrix: Array2<f64>,
    pub dx: f64,
}

/// Eigenpairs of one OperatorMatrix: λ descending, eigenvector columns
/// normalized to Σ u²Δx = 1.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub s: f64,
    pub lambda: Array1<f64>,
    pub vectors: Array2<f64>,
    pub dx: f64,
}

impl EigenSolution {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// ‖VᵀV·Δx − I‖_max.
    pub fn orthonormality_residual(&self) -> f64 {
        let m = self.dim();
        let gram = self.vectors.t().dot(&self.vectors) * self.dx;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// ‖Σ_k u u ᵀ − I/Δx‖_max · Δx (the discrete delta decomposition).
    pub fn completeness_residual(&self) -> f64 {
        let m = self.dim();
        let outer = self.vectors.dot(&self.vectors.t());
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 / self.dx } else { 0.0 };
                worst = worst.max((outer[(i, j)] - target).abs() * self.dx);
            }
        }
        worst
    }

    /// Max deviation between each λ and its Rayleigh-quotient recomputation
    /// −c²Σ(∇u)² + s²Σεu², using the forward-difference gradient that makes
    /// the identity exact for the assembled matrix.
    pub fn rayleigh_residual(&self, op: &OperatorMatrix, eps_profile: &Array1<f64>) -> f64 {
        let m = self.dim();
        let mut worst: f64 = 0.0;
        for k in 0..m {
            let u = self.vectors.column(k);
            let mut grad = 0.0;
            let mut pot = 0.0;
            for i in 0..m {
                let d = (u[(i + 1) % m] - u[i]) / self.dx;
                grad += d * d * self.dx;
                pot += eps_profile[i] * u[i] * u[i] * self.dx;
            }
            let rayleigh = -C_LIGHT * C_LIGHT * grad + op.s * op.s * pot;
            worst = worst.max((rayleigh - self.lambda[k]).abs());
        }
        worst
    }
}

/// One continuity-tracked family λ(k,·) over a forbidden-band-free segment
/// structure.
#[derive(Debug, Clone)]
pub struct BranchTable {
    /// Segment boundaries in s; segments lie between forbidden bands.
    pub segments: Vec<Segment>,
    pub dim: usize,
    pub dx: f64,
    /// Links whose eigenvector overlap stayed below OVERLAP_MIN after
    /// refinement: (segment, sample index of the left end of the link).
    pub flagged: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub s: Vec<f64>,
    /// λ values, shape (branch, sample).
    pub lambda: Array2<f64>,
    /// Eigenvector snapshots per sample, columns ordered by branch.
    pub vectors: Vec<Array2<f64>>,
}

/// One normal mode: branch k, root index l along the branch, frequency Ω,
/// spatial shape u, the exact-derivative dλ/ds at Ω and the weight
/// w = ε₀^{-1/2} Ω (dλ/ds)^{-1/2}.
#[derive(Debug, Clone)]
pub struct ModeEntry {
    pub k: usize,
    pub l: usize,
    pub omega: f64,
    pub u: Array1<f64>,
    pub dlambda_ds: f64,
    pub weight: f64,
    /// Set when dλ/ds came out non-positive at the root; the weight is then
    /// computed from |dλ/ds| and the entry must not be trusted silently.
    pub negative_slope: bool,
    /// Set when the root pinches a reservoir pole ωₙ: `(n, Ω² − ωₙ²)` with
    /// the squared-frequency gap computed by the stable partial-fraction
    /// parametrization. Amplitude evaluations must use this gap instead of
    /// recomputing the catastrophically cancelling difference.
    pub pinched: Option<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct ModeTable {
    pub entries: Vec<ModeEntry>,
    pub dx: f64,
    pub branches: usize,
}

impl ModeTable {
    pub fn frequencies(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.entries.iter().map(|e| e.omega).collect();
        f.sort_by(f64::total_cmp);
        f
    }

    pub fn max_frequency(&self) -> f64 {
        self.entries.iter().map(|e| e.omega).fold(0.0, f64::max)
    }

    pub fn min_frequency(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.omega)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Zero/pole tally of one branch on the positive s axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchCount {
    pub zeros: usize,
    pub poles: usize,
    /// Multiplicity of the zero at the origin (2 for the acoustic branch
    /// with λ(0) = 0, else 0); λ is even in s, so the full-line balance is
    /// 2·zeros + origin − 2·poles = 2.
    pub origin: usize,
}

impl BranchCount {
    pub fn balanced(&self) -> bool {
        2 * self.zeros + self.origin == 2 * self.poles + 2
    }
}

/// Shared setup for operator work on one model: grid, forbidden bands and
/// per-point ε-pole locations.
pub struct ModeProblem<'a> {
    pub geometry: &'a Geometry,
    pub medium: &'a MediumProfile,
    pub reservoir: &'a DiscreteReservoir,
    pub dx: f64,
    pub dim: usize,
    /// Sorted merged forbidden intervals: ε-pole guard bands (h-zeros of
    /// every grid point) and reservoir-pole guard bands.
    pub bands: Vec<(f64, f64)>,
    /// h-zeros per grid point.
    pub zeros_by_x: Vec<Vec<f64>>,
}

impl<'a> ModeProblem<'a> {
    pub fn new(
        geometry: &'a Geometry,
        medium: &'a MediumProfile,
        reservoir: &'a DiscreteReservoir,
    ) -> Result<Self, ModesError> {
        let Geometry::Layered1D { .. } = geometry else {
            return Err(ModesError::WrongGeometry);
        };
        let dim = geometry.grid_len();
        let dx = geometry.dx();
        let fully_decoupled = medium.alpha.iter().all(|&a| a == 0.0);
        let mut zeros_by_x = Vec::with_capacity(dim);
        let mut bands: Vec<(f64, f64)> = Vec::new();
        for x in 0..dim {
            let ctx = SpectralContext::discrete(medium, reservoir, x);
            let zeros = ctx.h_zeros()?;
            // h-zeros are poles of ε only where the field actually couples.
            if medium.alpha[x] != 0.0 {
                for (i, &z) in zeros.iter().enumerate() {
                    let left = if i == 0 { z } else { z - zeros[i - 1] };
                    let right = if i + 1 < zeros.len() {
                        zeros[i + 1] - z
                    } else {
                        left
                    };
                    let tau = TAU_POLE * left.min(right);
                    bands.push((z - tau, z + tau));
                }
            }
            zeros_by_x.push(zeros);
        }
        // Reservoir frequencies are regular points of ε, but evaluations
        // inside their guard radii are refused; exclude them from grids too.
        if !fully_decoupled {
            for (n, &w) in reservoir.omega.iter().enumerate() {
                let left = if n == 0 {
                    w
                } else {
                    w - reservoir.omega[n - 1]
                };
                let right = if n + 1 < reservoir.len() {
                    reservoir.omega[n + 1] - w
                } else {
                    left
                };
                let tau = TAU_POLE * left.min(right);
                bands.push((w - tau, w + tau));
            }
        }
        bands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let merged = merge_intervals(&bands);
        Ok(ModeProblem {
            geometry,
            medium,
            reservoir,
            dx,
            dim,
            bands: merged,
            zeros_by_x,
        })
    }

    fn in_band(&self, s: f64) -> bool {
        self.bands.iter().any(|&(a, b)| s > a && s < b)
    }

    /// Assemble L(s) = c²D₂ + s²ε(s;x) with periodic wrap.
    pub fn assemble(&self, s: f64) -> Result<OperatorMatrix, ModesError> {
        if s <= 0.0 || self.in_band(s) {
            let points: Vec<usize> = (0..self.dim)
                .filter(|&x| {
                    self.zeros_by_x[x]
                        .iter()
                        .any(|&z| (s - z).abs() <= TAU_POLE * z.max(1.0))
                })
                .collect();
            return Err(ModesError::PoleBand { s, points });
        }
        let m = self.dim;
        let c2 = C_LIGHT * C_LIGHT;
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let mut a = Array2::zeros((m, m));
        for x in 0..m {
            let ctx = SpectralContext::discrete(self.medium, self.reservoir, x);
            let eps = ctx.epsilon(Complex64::new(s, 0.0))?.re;
            a[(x, x)] = s * s * eps - 2.0 * c2 * inv_dx2;
            a[(x, (x + 1) % m)] += c2 * inv_dx2;
            a[(x, (x + m - 1) % m)] += c2 * inv_dx2;
        }
        Ok(OperatorMatrix {
            s,
            matrix: a,
            dx: self.dx,
        })
    }

    /// ε(s;x) over the grid without guard-band refusal (used by root
    /// polishing deep inside intervals, where evaluations are legitimate
    /// but may sit close to a reservoir frequency).
    fn eps_profile_raw(&self, s: f64) -> Array1<f64> {
        Array1::from_iter(
            (0..self.dim).map(|x| {
                SpectralContext::discrete(self.medium, self.reservoir, x).epsilon_real_raw(s)
            }),
        )
    }

    fn assemble_raw(&self, s: f64) -> OperatorMatrix {
        let m = self.dim;
        let c2 = C_LIGHT * C_LIGHT;
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let eps = self.eps_profile_raw(s);
        let mut a = Array2::zeros((m, m));
        for x in 0..m {
            a[(x, x)] = s * s * eps[x] - 2.0 * c2 * inv_dx2;
            a[(x, (x + 1) % m)] += c2 * inv_dx2;
            a[(x, (x + m - 1) % m)] += c2 * inv_dx2;
        }
        OperatorMatrix {
            s,
            matrix: a,
            dx: self.dx,
        }
    }

    /// Default sampling grid: every inter-band segment from 0 up to a cap
    /// beyond the last root of every branch, uniformly sampled plus
    /// geometric clustering toward singular segment ends.
    pub fn default_s_grid(&self) -> Result<Vec<Vec<f64>>, ModesError> {
        let s_max = self.spectral_cap()?;
        let mut cuts = vec![0.0];
        for &(a, b) in &self.bands {
            if a > 0.0 && a < s_max {
                cuts.push(a);
                cuts.push(b.min(s_max));
            }
        }
        cuts.push(s_max);
        let mut grids = Vec::new();
        for pair in cuts.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            if b > a {
                grids.push(segment_samples(a, b, a == 0.0));
            }
        }
        grids.retain(|g| !g.is_empty());
        Ok(grids)
    }

    /// A frequency above which every branch eigenvalue is positive (all
    /// roots below it): doubling search on the smallest eigenvalue.
    pub fn spectral_cap(&self) -> Result<f64, ModesError> {
        let top_band = self.bands.last().map_or(0.0, |&(_, b)| b);
        let base = (0..self.dim)
            .map(|x| SpectralContext::discrete(self.medium, self.reservoir, x).omega_tilde_sq())
            .fold(0.0, f64::max)
            .sqrt();
        let q2_max = self
            .geometry
            .discrete_q_squared()
            .into_iter()
            .fold(0.0, f64::max);
        let mut s = 2.0 * (top_band + base + (C_LIGHT * C_LIGHT * q2_max).sqrt() + 1.0);
        for _ in 0..60 {
            let op = self.assemble_raw(s);
            let sol = eigensolve_at(&op)?;
            if sol.lambda[sol.dim() - 1] > 0.0 {
                return Ok(s);
            }
            s *= 2.0;
        }
        Err(ModesError::Linalg("no spectral cap found".into()))
    }

    /// Eigensolve along each segment grid and connect branches by maximal
    /// eigenvector overlap, with adaptive refinement of weak links.
    pub fn track_branches(&self, grids: &[Vec<f64>]) -> Result<BranchTable, ModesError> {
        let mut segments = Vec::new();
        let mut flagged = Vec::new();
        let mut reference: Option<Array2<f64>> = None;
        for (seg_idx, grid) in grids.iter().enumerate() {
            let mut s_out: Vec<f64> = Vec::new();
            let mut lam_out: Vec<Array1<f64>> = Vec::new();
            let mut vec_out: Vec<Array2<f64>> = Vec::new();

            let first = eigensolve_at(&self.assemble(grid[0])?)?;
            let mut cur = match &reference {
                // Carry branch identity across the band separating segments.
                Some(prev) => {
                    let (sol, ok) = match_to_reference(first, prev, self.dx);
                    if !ok {
                        flagged.push((seg_idx, 0));
                    }
                    sol
                }
                None => canonical_phase(first),
            };
            s_out.push(cur.s);
            lam_out.push(cur.lambda.clone());
            vec_out.push(cur.vectors.clone());

            for w in grid.windows(2) {
                let (mut lo, hi) = (w[0], w[1]);
                let mut prev_vectors = cur.vectors.clone();
                // March from lo to hi, bisecting whenever the overlap-based
                // matching is ambiguous.
                let mut target = hi;
                let mut depth = 0;
                loop {
                    let sol = eigensolve_at(&self.assemble(target)?)?;
                    let (matched, ok) = match_to_reference(sol, &prev_vectors, self.dx);
                    if ok || depth >= 24 {
                        if !ok {
                            flagged.push((seg_idx, s_out.len() - 1));
                        }
                        if target < hi {
                            s_out.push(matched.s);
                            lam_out.push(matched.lambda.clone());
                            vec_out.push(matched.vectors.clone());
                            prev_vectors = matched.vectors.clone();
                            lo = target;
                            target = hi;
                            depth = 0;
                            continue;
                        }
                        cur = matched;
                        break;
                    }
                    depth += 1;
                    target = 0.5 * (lo + target);
                }
                s_out.push(cur.s);
                lam_out.push(cur.lambda.clone());
                vec_out.push(cur.vectors.clone());
            }
            reference = Some(cur.vectors.clone());

            let samples = s_out.len();
            let mut lambda = Array2::zeros((self.dim, samples));
            for (j, row) in lam_out.iter().enumerate() {
                lambda.column_mut(j).assign(row);
            }
            segments.push(Segment {
                s: s_out,
                lambda,
                vectors: vec_out,
            });
        }
        Ok(BranchTable {
            segments,
            dim: self.dim,
            dx: self.dx,
            flagged,
        })
    }

    /// Gather all positive mode frequencies. Roots are located on the
    /// fixed-rank eigenvalue sequences (k-th largest at every sample), not
    /// on the continuity-tracked branches: the assembled family is monotone
    /// in s (d(s²ε)/ds > 0 pointwise), so by Weyl monotonicity every
    /// fixed-rank eigenvalue increases strictly across a segment — each
    /// rank holds at most one root, endpoint signs decide existence, and no
    /// mis-tracked near-degenerate crossing can drop a root. Refinement is
    /// bisection plus one guarded secant step; dλ/ds at the root uses the
    /// exact rational derivative of s²ε weighted by the eigenvector.
    pub fn find_mode_frequencies(&self, table: &BranchTable) -> Result<ModeTable, ModesError> {
        let ranked: Vec<Array2<f64>> = table
            .segments
            .iter()
            .map(|seg| {
                let mut lam = seg.lambda.clone();
                for j in 0..seg.s.len() {
                    let mut col: Vec<f64> = lam.column(j).to_vec();
                    col.sort_by(|x, y| y.total_cmp(x));
                    for (i, v) in col.into_iter().enumerate() {
                        lam[(i, j)] = v;
                    }
                }
                lam
            })
            .collect();
        let mut entries = Vec::new();
        for k in 0..self.dim {
            let mut l = 0;
            for (seg, lam) in table.segments.iter().zip(ranked.iter()) {
                let n = seg.s.len();
                let (la, lb) = (lam[(k, 0)], lam[(k, n - 1)]);
                if !(la < 0.0 && lb >= 0.0) {
                    continue;
                }
                // Locate the sign change between samples, then bisect.
                let mut i = 0;
                while lam[(k, i + 1)] < 0.0 {
                    i += 1;
                }
                let (mut a, mut b) = (seg.s[i], seg.s[i + 1]);
                let (mut fa, mut fb) = (lam[(k, i)], lam[(k, i + 1)]);
                let scale = fa.abs().max(fb.abs());
                let mut root;
                let mut froot;
                let mut uroot;
                loop {
                    root = 0.5 * (a + b);
                    let (val, u) = self.rank_lambda_at(root, k)?;
                    froot = val;
                    uroot = u;
                    if val < 0.0 {
                        a = root;
                        fa = val;
                    } else {
                        b = root;
                        fb = val;
                    }
                    if froot.abs() <= TAU_ROOT * scale || (b - a) <= 4.0 * f64::EPSILON * b {
                        break;
                    }
                }
                // One guarded secant step.
                if fb > fa && froot.abs() > 0.0 {
                    let sec = b - fb * (b - a) / (fb - fa);
                    if sec > a && sec < b {
                        let (val, u) = self.rank_lambda_at(sec, k)?;
                        if val.abs() < froot.abs() {
                            root = sec;
                            froot = val;
                            uroot = u;
                        }
                    }
                }
                // Newton polish with the exact branch derivative; λ is
                // smooth at a root, so a few steps reach machine precision.
                for _ in 0..6 {
                    if froot == 0.0 {
                        break;
                    }
                    let mut slope = 0.0;
                    for x in 0..self.dim {
                        let ctx = SpectralContext::discrete(self.medium, self.reservoir, x);
                        slope += uroot[x] * uroot[x] * ctx.d_s2eps_ds_raw(root) * self.dx;
                    }
                    if slope == 0.0 {
                        break;
                    }
                    let step = froot / slope;
                    let next = root - step;
                    if next <= 0.0 || !next.is_finite() || step.abs() <= f64::EPSILON * root {
                        break;
                    }
                    let (val, u) = self.rank_lambda_at(next, k)?;
                    root = next;
                    froot = val;
                    uroot = u;
                }
                let mut dlds = 0.0;
                for x in 0..self.dim {
                    let ctx = SpectralContext::discrete(self.medium, self.reservoir, x);
                    dlds += uroot[x] * uroot[x] * ctx.d_s2eps_ds_raw(root) * self.dx;
                }
                let negative_slope = dlds <= 0.0;
                // w = ε₀^{-1/2} Ω (dλ/ds)^{-1/2}
                let weight = root / (EPS_0 * dlds.abs()).sqrt();
                entries.push(ModeEntry {
                    k,
                    l,
                    omega: root,
                    u: uroot,
                    dlambda_ds: dlds,
                    weight,
                    negative_slope,
                    pinched: None,
                });
                l += 1;
            }
        }
        self.reorthogonalize_degenerate(&mut entries)?;
        Ok(ModeTable {
            entries,
            dx: self.dx,
            branches: self.dim,
        })
    }

    /// Independent root refinements inside a (near-)degenerate eigenvalue
    /// subspace return eigenvectors with error ~ε‖L‖/gap that need not be
    /// mutually orthogonal, which spoils completeness of the mode family.
    /// Cluster close frequencies, draw every cluster vector from a single
    /// eigensolve at the mean frequency (orthonormal by construction), and
    /// refine each frequency by Newton on the fixed-vector Rayleigh
    /// quotient, which is second-order insensitive to basis rotations
    /// inside the cluster subspace.
    fn reorthogonalize_degenerate(&self, entries: &mut [ModeEntry]) -> Result<(), ModesError> {
        let mut idx: Vec<usize> = (0..entries.len()).collect();
        idx.sort_by(|&i, &j| entries[i].omega.total_cmp(&entries[j].omega));
        let mut g = 0;
        while g < idx.len() {
            let mut e = g + 1;
            while e < idx.len()
                && entries[idx[e]].omega - entries[idx[e - 1]].omega < 1e-8 * entries[idx[e]].omega
            {
                e += 1;
            }
            if e - g > 1 {
                let d = e - g;
                let s_mean = idx[g..e].iter().map(|&i| entries[i].omega).sum::<f64>() / d as f64;
                let sol = eigensolve_at(&self.assemble_raw(s_mean))?;
                let mut cols: Vec<usize> = (0..sol.dim()).collect();
                cols.sort_by(|&a, &b| sol.lambda[a].abs().total_cmp(&sol.lambda[b].abs()));
                for (slot, &i) in idx[g..e].iter().enumerate() {
                    let u = sol.vectors.column(cols[slot]).to_owned();
                    let mut root = s_mean;
                    let mut dlds = 0.0;
                    for _ in 0..4 {
                        let op = self.assemble_raw(root);
                        let q = u.dot(&op.matrix.dot(&u)) * self.dx;
                        dlds = 0.0;
                        for x in 0..self.dim {
                            let ctx = SpectralContext::discrete(self.medium, self.reservoir, x);
                            dlds += u[x] * u[x] * ctx.d_s2eps_ds_raw(root) * self.dx;
                        }
                        if dlds == 0.0 {
                            break;
                        }
                        let step = q / dlds;
                        if root - step <= 0.0 || !(root - step).is_finite() {
                            break;
                        }
                        root -= step;
                        if step.abs() <= f64::EPSILON * root {
                            break;
                        }
                    }
                    let entry = &mut entries[i];
                    entry.omega = root;
                    entry.u = u;
                    entry.dlambda_ds = dlds;
                    entry.negative_slope = dlds <= 0.0;
                    entry.weight = root / (EPS_0 * dlds.abs()).sqrt();
                }
            }
            g = e;
        }
        Ok(())
    }

    /// λ and eigenvector of the k-th largest eigenvalue at s. Fixed-rank
    /// evaluations stay consistent under bisection because every rank is
    /// monotone in s; no overlap matching is needed.
    fn rank_lambda_at(&self, s: f64, k: usize) -> Result<(f64, Array1<f64>), ModesError> {
        let sol = eigensolve_at(&self.assemble_raw(s))?;
        Ok((sol.lambda[k], sol.vectors.column(k).to_owned()))
    }

    /// Count sign-change zeros and pole crossings of branch k on
    /// (0, s_max], both from the tracked branch-table sign data. Poles
    /// reveal themselves as downward jumps of λ(k,·) across a forbidden
    /// band; λ is otherwise strictly increasing, so endpoint signs count
    /// the zeros per segment (interior samples never flip the tally even
    /// if an interior near-degenerate link was matched ambiguously).
    pub fn count_zeros_poles(&self, table: &BranchTable, k: usize) -> BranchCount {
        let mut zeros = 0;
        for seg in &table.segments {
            let n = seg.s.len();
            if seg.lambda[(k, 0)] < 0.0 && seg.lambda[(k, n - 1)] >= 0.0 {
                zeros += 1;
            }
        }
        let mut poles = 0;
        for w in table.segments.windows(2) {
            let left = &w[0];
            let right = &w[1];
            let lam_left = left.lambda[(k, left.s.len() - 1)];
            let lam_right = right.lambda[(k, 0)];
            if lam_right < lam_left {
                poles += 1;
            }
        }
        // Acoustic branch: λ(k, s→0) → 0 (double zero of the even
        // extension at the origin).
        let first = &table.segments[0];
        let s0 = first.s[0];
        let lam0 = first.lambda[(k, 0)];
        let scale = first
            .lambda
            .column(0)
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let origin = if lam0.abs() < 1e-4 * scale.max(1.0) && lam0.abs() < 10.0 * s0 * s0 {
            2
        } else {
            0
        };
        BranchCount {
            zeros,
            poles,
            origin,
        }
    }
}

/// Polarization sector of the homogeneous 3D model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Transverse,
    Longitudinal,
}

fn require_homogeneous(
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
) -> Result<(), ModesError> {
    if !medium.is_homogeneous() {
        return Err(ModesError::NotHomogeneous);
    }
    for n in 0..reservoir.len() {
        let first = reservoir.beta[(n, 0)];
        if reservoir.beta.row(n).iter().any(|&b| b != first) {
            return Err(ModesError::NotHomogeneous);
        }
    }
    Ok(())
}

/// Find the unique zero of a strictly increasing scalar function on
/// (lo, hi), where non-regular endpoints are singular (f → ∓∞) and are
/// approached by geometric walk-in.
fn walkin_bisect<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    lo_regular: bool,
    hi_regular: bool,
) -> Result<f64, ModesError> {
    let fail = || ModesError::SpectralCount {
        branch: usize::MAX,
        expected: 1,
        found: 0,
        tallies: vec![],
    };
    let span = hi - lo;
    let mut a = f64::NAN;
    if lo_regular {
        if f(lo) >= 0.0 {
            return Err(fail());
        }
        a = lo;
    } else {
        let mut step = 0.5 * span;
        for _ in 0..200 {
            let cand = lo + step;
            let v = f(cand);
            if v < 0.0 && v.is_finite() {
                a = cand;
                break;
            }
            step *= 0.5;
        }
        if a.is_nan() {
            // Root indistinguishable from the singular endpoint.
            return Ok(lo);
        }
    }
    let mut b = f64::NAN;
    if hi_regular {
        if f(hi) <= 0.0 {
            return Err(fail());
        }
        b = hi;
    } else {
        let mut step = 0.5 * (hi - a);
        for _ in 0..200 {
            let cand = hi - step;
            let v = f(cand);
            if cand > a && v > 0.0 && v.is_finite() {
                b = cand;
                break;
            }
            step *= 0.5;
        }
        if b.is_nan() {
            return Ok(hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let v = f(mid);
        if v < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Positive roots of u·ε(u) = rhs (u = s²) between consecutive ε-poles;
/// `zeros` are the sorted h-zeros (the poles of ε). Returns frequencies s.
fn scalar_transverse_roots(
    ctx: &SpectralContext<'_>,
    zeros: &[f64],
    rhs: f64,
) -> Result<Vec<f64>, ModesError> {
    let g = |u: f64| u * ctx.epsilon_real_raw(u.sqrt()) - rhs;
    let mut roots_u = Vec::new();
    if ctx.alpha() == 0.0 {
        // ε ≡ 1: single root u = rhs (none for the acoustic branch).
        if rhs > 0.0 {
            roots_u.push(rhs);
        }
    } else {
        let z2: Vec<f64> = zeros.iter().map(|&z| z * z).collect();
        if rhs > 0.0 {
            roots_u.push(walkin_bisect(g, 0.0, z2[0], true, false)?);
        }
        for w in z2.windows(2) {
            roots_u.push(walkin_bisect(g, w[0], w[1], false, false)?);
        }
        let last = *z2.last().unwrap();
        let mut hi = 2.0 * (last + rhs.max(1.0));
        let mut tries = 0;
        while g(hi) <= 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(ModesError::SpectralCount {
                    branch: usize::MAX,
                    expected: zeros.len() + 1,
                    found: roots_u.len(),
                    tallies: vec![],
                });
            }
        }
        roots_u.push(walkin_bisect(g, last, hi, false, true)?);
    }
    Ok(roots_u.into_iter().map(f64::sqrt).collect())
}

/// Positive roots of ε(Ω) = 0 (one per inter-pole interval above the first
/// ε-pole, plus the tail interval).
fn scalar_longitudinal_roots(
    ctx: &SpectralContext<'_>,
    zeros: &[f64],
) -> Result<Vec<f64>, ModesError> {
    if ctx.alpha() == 0.0 {
        return Ok(Vec::new()); // ε ≡ 1 never vanishes
    }
    let g = |u: f64| ctx.epsilon_real_raw(u.sqrt());
    let z2: Vec<f64> = zeros.iter().map(|&z| z * z).collect();
    let mut roots_u = Vec::new();
    for w in z2.windows(2) {
        roots_u.push(walkin_bisect(g, w[0], w[1], false, false)?);
    }
    let last = *z2.last().unwrap();
    let mut hi = 4.0 * (last + 1.0);
    let mut tries = 0;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(ModesError::SpectralCount {
                branch: usize::MAX,
                expected: zeros.len(),
                found: roots_u.len(),
                tallies: vec![],
            });
        }
    }
    roots_u.push(walkin_bisect(g, last, hi, false, true)?);
    Ok(roots_u.into_iter().map(f64::sqrt).collect())
}

/// Positive mode frequencies of the homogeneous 3D model at wave number q.
pub fn homogeneous_dispersion(
    q: f64,
    polarization: Polarization,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
) -> Result<Vec<f64>, ModesError> {
    require_homogeneous(medium, reservoir)?;
    let ctx = SpectralContext::discrete(medium, reservoir, 0);
    let zeros = ctx.h_zeros()?;
    match polarization {
        Polarization::Transverse => {
            scalar_transverse_roots(&ctx, &zeros, C_LIGHT * C_LIGHT * q * q)
        }
        Polarization::Longitudinal => scalar_longitudinal_roots(&ctx, &zeros),
    }
}

/// Plane-wave basis of the periodic grid: branch k = 0 is constant, then
/// (cos, sin) pairs per spatial frequency, then the alternating Nyquist
/// vector. Exactly orthonormal in the grid inner product. Returns the
/// eigenvectors together with each branch's discrete-Laplacian q̃².
pub fn plane_wave_branches(geometry: &Geometry) -> (Array2<f64>, Vec<f64>) {
    let m = geometry.grid_len();
    let dx = geometry.dx();
    let l_x = m as f64 * dx;
    let mut vectors = Array2::zeros((m, m));
    let mut q2 = vec![0.0; m];
    let mut k = 0;
    for j in 0..=m / 2 {
        let q = 2.0 * std::f64::consts::PI * j as f64 / l_x;
        let qt2 = 2.0 * (1.0 - (q * dx).cos()) / (dx * dx);
        if j == 0 {
            for i in 0..m {
                vectors[(i, k)] = 1.0 / l_x.sqrt();
            }
            q2[k] = qt2;
            k += 1;
        } else if 2 * j == m {
            for i in 0..m {
                vectors[(i, k)] = if i % 2 == 0 { 1.0 } else { -1.0 } / l_x.sqrt();
            }
            q2[k] = qt2;
            k += 1;
        } else {
            let amp = (2.0 / l_x).sqrt();
            for i in 0..m {
                let phase = q * i as f64 * dx;
                vectors[(i, k)] = amp * phase.cos();
                vectors[(i, k + 1)] = amp * phase.sin();
            }
            q2[k] = qt2;
            q2[k + 1] = qt2;
            k += 2;
        }
    }
    (vectors, q2)
}

/// Mode table for a spatially homogeneous layered model by per-branch
/// scalar root finding. Equivalent to the tracking pipeline but O(M·N) and
/// robust at large reservoir sizes, where eigenvalue branches cluster
/// exponentially close to the ε-poles.
/// Stable data for a root that pinches reservoir pole n (homogeneous
/// medium). From the transverse mode condition u·ε(u) = K one has
/// h(u) = S(u) ≡ uα²/(ε₀ρ(u−K)); writing h(u) = R(u) + cₙ/(uₙ−u) with R
/// regular at the pole gives the gap equation uₙ − u = cₙ/(S(u) − R(u)),
/// solved by fixed-point iteration without catastrophic cancellation. The
/// same parametrization yields h, ε = K/u and d(s²ε)/ds at the root.
/// (Ω, dλ/ds, weight, pinch data) of one resolved root.
type EntryData = (f64, f64, f64, Option<(usize, f64)>);

fn pinched_entry(
    ctx: &SpectralContext,
    alpha: f64,
    rho: f64,
    kc2q2: f64,
    n: usize,
    un: f64,
) -> Result<EntryData, ModesError> {
    let cn = ctx.channel_strength(n)?;
    let s_fun = |u: f64| u * alpha * alpha / (EPS_0 * rho * (u - kc2q2));
    // gap = u − uₙ = −cₙ/(S − R); two refinements reach machine precision.
    let mut gap = -cn / (s_fun(un) - ctx.h_u_excluding(un, n)?);
    for _ in 0..2 {
        let u = un + gap;
        gap = -cn / (s_fun(u) - ctx.h_u_excluding(u, n)?);
    }
    let u_root = un + gap;
    let omega = u_root.sqrt();
    let h = s_fun(u_root);
    let dh_du = ctx.dh_du_excluding(u_root, n)? + cn / (gap * gap);
    let eps = kc2q2 / u_root;
    let deps_du = alpha * alpha / (EPS_0 * rho * h * h) * dh_du;
    let dlds = 2.0 * omega * (eps + u_root * deps_du);
    let weight = omega / (EPS_0 * dlds.abs()).sqrt();
    Ok((omega, dlds, weight, Some((n, gap))))
}

pub fn homogeneous_mode_table(
    geometry: &Geometry,
    medium: &MediumProfile,
    reservoir: &DiscreteReservoir,
) -> Result<ModeTable, ModesError> {
    let Geometry::Layered1D { .. } = geometry else {
        return Err(ModesError::WrongGeometry);
    };
    require_homogeneous(medium, reservoir)?;
    let ctx = SpectralContext::discrete(medium, reservoir, 0);
    let zeros = ctx.h_zeros()?;
    let (vectors, q2) = plane_wave_branches(geometry);
    let m = geometry.grid_len();
    let mut entries = Vec::new();
    let alpha = medium.alpha[0];
    let rho = medium.rho[0];
    for (k, &q2k) in q2.iter().enumerate() {
        let kc2q2 = C_LIGHT * C_LIGHT * q2k;
        let roots = scalar_transverse_roots(&ctx, &zeros, kc2q2)?;
        let mut l = 0;
        for &omega in roots.iter() {
            let u_est = omega * omega;
            // A root inside the reservoir band can pinch the adjacent pole
            // to within the rounding error of the direct evaluations; the
            // gap then needs the stable partial-fraction parametrization.
            let pinch = (alpha != 0.0)
                .then(|| {
                    reservoir
                        .omega
                        .iter()
                        .enumerate()
                        .filter(|&(n, _)| reservoir.beta[(n, 0)] != 0.0)
                        .map(|(n, &wn)| (n, wn * wn))
                        .min_by(|a, b| (a.1 - u_est).abs().total_cmp(&(b.1 - u_est).abs()))
                })
                .flatten()
                .filter(|&(_, un)| (u_est - un).abs() < 1e-6 * un);
            let entry_data = if let Some((n, un)) = pinch {
                pinched_entry(&ctx, alpha, rho, kc2q2, n, un)?
            } else {
                let dlds = ctx.d_s2eps_ds_raw(omega);
                let weight = omega / (EPS_0 * dlds.abs()).sqrt();
                (omega, dlds, weight, None)
            };
            let (omega, dlds, weight, pinched) = entry_data;
            if !dlds.is_finite() || !weight.is_finite() {
                // Gap underflowed even in the stable form: the mode is a
                // bare reservoir oscillator with no optical content.
                continue;
            }
            entries.push(ModeEntry {
                k,
                l,
                omega,
                u: vectors.column(k).to_owned(),
                dlambda_ds: dlds,
                weight,
                negative_slope: dlds <= 0.0,
                pinched,
            });
            l += 1;
        }
    }
    Ok(ModeTable {
        entries,
        dx: geometry.dx(),
        branches: m,
    })
}

fn merge_intervals(sorted: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(a, b) in sorted {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn segment_samples(a: f64, b: f64, from_origin: bool) -> Vec<f64> {
    let span = b - a;
    let mut pts = Vec::new();
    // Cluster toward singular ends: bands are poles of ε on at least one
    // side, and roots may hide close to them.
    let offsets = [1e-7, 1e-5, 1e-3, 1e-2];
    if !from_origin {
        for &o in &offsets {
            pts.push(a + o * span);
        }
    }
    let interior = 12;
    for i in 1..=interior {
        pts.push(a + span * i as f64 / (interior + 1) as f64);
    }
    for &o in &offsets {
        pts.push(b - o * span);
    }
    if from_origin {
        // Keep a small positive anchor for the acoustic-branch diagnostics.
        pts.push(1e-6 * span.max(1.0) + a);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.retain(|&s| s > a && s < b);
    pts
}

/// Full symmetric eigensolve of an assembled operator; λ descending,
/// columns normalized to the grid inner product.
pub fn eigensolve_at(op: &OperatorMatrix) -> Result<EigenSolution, ModesError> {
    let (vals, vecs) = op.matrix.eigh(UPLO::Lower)?;
    let m = vals.len();
    let scale = 1.0 / op.dx.sqrt();
    let mut lambda = Array1::zeros(m);
    let mut vectors = Array2::zeros((m, m));
    for k in 0..m {
        let src = m - 1 - k; // ascending → descending
        lambda[k] = vals[src];
        let col = vecs.column(src);
        for i in 0..m {
            vectors[(i, k)] = col[i] * scale;
        }
    }
    Ok(EigenSolution {
        s: op.s,
        lambda,
        vectors,
        dx: op.dx,
    })
}

/// Fix eigenvector signs deterministically: largest-|component| positive.
fn canonical_phase(mut sol: EigenSolution) -> EigenSolution {
    let m = sol.dim();
    for k in 0..m {
        let mut col = sol.vectors.column_mut(k);
        let mut idx = 0;
        let mut best = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    sol
}

/// Reorder (and possibly rotate, for degenerate clusters) the columns of a
/// fresh eigensolution so column k continues the branch whose previous
/// vector is column k of `reference`. Returns the matched solution and
/// whether every link overlap cleared OVERLAP_MIN.
fn match_to_reference(
    sol: EigenSolution,
    reference: &Array2<f64>,
    dx: f64,
) -> (EigenSolution, bool) {
    let m = sol.dim();
    let overlap = reference.t().dot(&sol.vectors) * dx; // (ref branch, new column)
                                                        // Greedy maximal-|overlap| assignment.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(m * m);
    for r in 0..m {
        for c in 0..m {
            pairs.push((r, c, overlap[(r, c)].abs()));
        }
    }
    pairs.sort_by(|x, y| y.2.total_cmp(&x.2));
    let mut row_used = vec![false; m];
    let mut col_of_branch = vec![usize::MAX; m];
    let mut col_used = vec![false; m];
    for (r, c, _) in pairs {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            col_of_branch[r] = c;
        }
    }
    let mut vectors = Array2::zeros((m, m));
    let mut lambda = Array1::zeros(m);
    for k in 0..m {
        let c = col_of_branch[k];
        lambda[k] = sol.lambda[c];
        let mut col = sol.vectors.column(c).to_owned();
        if col.dot(&reference.column(k).to_owned()) * dx < 0.0 {
            col.mapv_inplace(|v| -v);
        }
        vectors.column_mut(k).assign(&col);
    }
    // Degenerate clusters: rotate within each near-equal-λ group to best
    // match the reference subspace (orthogonal Procrustes via Jacobi-free
    // 2×2 handling is enough at the degeneracies this operator produces,
    // which come in ±q pairs).
    let mut k = 0;
    let mut all_ok = true;
    while k < m {
        let mut kk = k + 1;
        let scale = lambda[k].abs().max(1.0);
        while kk < m && (lambda[kk] - lambda[k]).abs() < 1e-9 * scale {
            kk += 1;
        }
        if kk - k == 2 {
            align_pair(&mut vectors, reference, k, k + 1, dx);
        }
        for b in k..kk {
            let ov = (vectors.column(b).dot(&reference.column(b).to_owned()) * dx).abs();
            if ov < OVERLAP_MIN {
                all_ok = false;
            }
        }
        k = kk;
    }
    (
        EigenSolution {
            s: sol.s,
            lambda,
            vectors,
            dx,
        },
        all_ok,
    )
}

/// Rotate the degenerate pair (columns i, j) to maximize overlap with the
/// reference pair; the optimum is the polar factor of the 2×2 overlap.
fn align_pair(vectors: &mut Array2<f64>, reference: &Array2<f64>, i: usize, j: usize, dx: f64) {
    let vi = vectors.column(i).to_owned();
    let vj = vectors.column(j).to_owned();
    let ri = reference.column(i).to_owned();
    let rj = reference.column(j).to_owned();
    let a = vi.dot(&ri) * dx;
    let b = vj.dot(&ri) * dx;
    let c = vi.dot(&rj) * dx;
    let d = vj.dot(&rj) * dx;
    // Polar decomposition of [[a, b], [c, d]]ᵀ: rotation (plus possible
    // reflection) that best maps the current pair onto the reference pair.
    let (t, u) = (a + d, b - c);
    let (t2, u2) = (a - d, b + c);
    let r1 = (t * t + u * u).sqrt();
    let r2 = (t2 * t2 + u2 * u2).sqrt();
    let (cos, sin, refl) = if r1 >= r2 {
        (t / r1.max(1e-300), u / r1.max(1e-300), false)
    } else {
        (t2 / r2.max(1e-300), u2 / r2.max(1e-300), true)
    };
    let (new_i, new_j): (Array1<f64>, Array1<f64>) = if !refl {
        (&vi * cos + &vj * sin, &vj * cos - &vi * sin)
    } else {
        (&vi * cos + &vj * sin, &vi * sin - &vj * cos)
    };
    vectors.column_mut(i).assign(&new_i);
    vectors.column_mut(j).assign(&new_j);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_model, GeometryConfig, MediumConfig, ModelConfig, ProfileSpec, Reservoir,
        ReservoirConfig,
    };

    pub(crate) fn config(
        points: usize,
        alpha: ProfileSpec,
        omegas: Vec<f64>,
        betas: Vec<ProfileSpec>,
    ) -> ModelConfig {
        ModelConfig {
            geometry: GeometryConfig::Layered1D { l_x: 10.0, points },
            medium: MediumConfig {
                rho: ProfileSpec::Constant(1.0),
                omega0: ProfileSpec::Constant(1.0),
                alpha,
            },
            reservoir: ReservoirConfig::Discrete { omegas, betas },
        }
    }

    fn discrete(model: &crate::model::Model) -> &DiscreteReservoir {
        match &model.reservoir {
            Reservoir::Discrete(r) => r,
            _ => panic!("expected discrete reservoir"),
        }
    }

    #[test]
    fn vacuum_operator_spectrum() {
        let cfg = config(16, ProfileSpec::Constant(0.0), vec![], vec![]);
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let s = 1.0;
        let op = problem.assemble(s).unwrap();
        let sol = eigensolve_at(&op).unwrap();
        let mut expect: Vec<f64> = model
            .geometry
            .discrete_q_squared()
            .iter()
            .map(|&q2| s * s - C_LIGHT * C_LIGHT * q2)
            .collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in sol.lambda.iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(sol.orthonormality_residual() < TAU_ORTH_UNIT * 16.0);
        assert!(sol.completeness_residual() < TAU_ORTH_UNIT * 16.0);
    }

    #[test]
    fn two_layer_assembly_symmetric() {
        let cfg = config(
            32,
            ProfileSpec::TwoLayer {
                first: 0.3,
                second: 0.6,
            },
            vec![2.0, 3.0],
            vec![ProfileSpec::Constant(0.2), ProfileSpec::Constant(0.1)],
        );
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let op = problem.assemble(1.7).unwrap();
        let diff = &op.matrix - &op.matrix.t();
        assert_eq!(diff.iter().fold(0.0f64, |m, &v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn pole_band_refused() {
        let cfg = config(
            16,
            ProfileSpec::Constant(0.5),
            vec![2.0],
            vec![ProfileSpec::Constant(0.3)],
        );
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let ctx = SpectralContext::discrete(&model.medium, discrete(&model), 0);
        let z0 = ctx.h_zeros().unwrap()[0];
        assert!(matches!(
            problem.assemble(z0),
            Err(ModesError::PoleBand { .. })
        ));
    }

    #[test]
    fn rayleigh_identity() {
        let cfg = config(
            32,
            ProfileSpec::TwoLayer {
                first: 0.3,
                second: 0.6,
            },
            vec![2.0],
            vec![ProfileSpec::Constant(0.2)],
        );
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let s = 1.7;
        let op = problem.assemble(s).unwrap();
        let sol = eigensolve_at(&op).unwrap();
        let eps = problem.eps_profile_raw(s);
        assert!(sol.rayleigh_residual(&op, &eps) < 1e-10);
    }

    #[test]
    fn vacuum_branches_and_roots() {
        let cfg = config(16, ProfileSpec::Constant(0.0), vec![], vec![]);
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let grids = problem.default_s_grid().unwrap();
        assert_eq!(grids.len(), 1); // ε ≡ 1: no forbidden bands at all
        let table = problem.track_branches(&grids).unwrap();
        assert!(table.flagged.is_empty());
        let modes = problem.find_mode_frequencies(&table).unwrap();
        // One positive root c·q̃ per branch with q̃ ≠ 0.
        let mut q: Vec<f64> = model
            .geometry
            .discrete_q_squared()
            .iter()
            .map(|&q2| (C_LIGHT * C_LIGHT * q2).sqrt())
            .filter(|&w| w > 0.0)
            .collect();
        q.sort_by(f64::total_cmp);
        let freqs = modes.frequencies();
        assert_eq!(freqs.len(), q.len());
        for (got, want) in freqs.iter().zip(q.iter()) {
            assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
        }
        // Weights: vacuum dλ/ds = 2Ω so w = (Ω/2ε₀)^{1/2}.
        for e in &modes.entries {
            assert!((e.dlambda_ds - 2.0 * e.omega).abs() < 1e-8 * e.omega);
            assert!(!e.negative_slope);
        }
    }

    #[test]
    fn vacuum_branch_counts() {
        let cfg = config(16, ProfileSpec::Constant(0.0), vec![], vec![]);
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let grids = problem.default_s_grid().unwrap();
        let table = problem.track_branches(&grids).unwrap();
        let _modes = problem.find_mode_frequencies(&table).unwrap();
        let mut acoustic = 0;
        for k in 0..16 {
            let count = problem.count_zeros_poles(&table, k);
            assert!(count.balanced(), "branch {k}: {count:?}");
            assert_eq!(count.poles, 0);
            if count.origin == 2 {
                acoustic += 1;
                assert_eq!(count.zeros, 0);
            } else {
                assert_eq!(count.zeros, 1);
            }
        }
        assert_eq!(acoustic, 1);
    }

    #[test]
    fn two_layer_branch_counts() {
        let cfg = config(
            16,
            ProfileSpec::TwoLayer {
                first: 0.3,
                second: 0.6,
            },
            vec![2.0, 3.0],
            vec![ProfileSpec::Constant(0.2), ProfileSpec::Constant(0.15)],
        );
        let model = build_model(&cfg).unwrap();
        let problem = ModeProblem::new(&model.geometry, &model.medium, discrete(&model)).unwrap();
        let grids = problem.default_s_grid().unwrap();
        let table = problem.track_branches(&grids).unwrap();
        let modes = problem.find_mode_frequencies(&table).unwrap();
        let n = 2;
        for k in 0..16 {
            let count = problem.count_zeros_poles(&table, k);
            assert!(count.balanced(), "branch {k}: {count:?}");
            assert_eq!(count.poles, n + 1, "branch {k}: {count:?}");
        }
        // Total mode count: (M−1)(N+2) + (N+1).
        assert_eq!(modes.entries.len(), 15 * (n + 2) + n + 1);
    }
}
