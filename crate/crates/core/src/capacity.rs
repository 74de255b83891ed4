//! Per-realization capacities under per-port power constraints.
//!
//! Covariances act on the `NL` channel row vector `h` (port-major) through
//! the quadratic form `h Q h^H`. Block `(m, n)` of `Q` is the `L x L`
//! correlation between the signals of ports `m` and `n`; port `n` may spend
//! at most `S_n` on the trace of its diagonal block.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::ChannelRealization;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, PortLayout};

/// Smallest eigenvalue accepted for a covariance matrix.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Which side of the link knows the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CsiMode {
    /// Channel known at the receiver only: independent equal-power signals.
    CsirOnly,
    /// Channel known at both ends: per-port beamforming, coherent sum.
    Csit,
}

/// Which ports serve the user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    AllPorts,
    /// Only the port nearest to the user transmits.
    SingleTransmission,
}

/// Per-port power budgets, optionally with a cap on their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    per_port: Vec<f64>,
    sum_cap: Option<f64>,
}

impl PowerAllocation {
    pub fn new(per_port: Vec<f64>, sum_cap: Option<f64>) -> Result<Self> {
        if per_port.is_empty() {
            return Err(invalid("per_port", "at least one port required"));
        }
        if per_port.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(invalid("per_port", "powers must be finite and non-negative"));
        }
        if let Some(cap) = sum_cap {
            let total: f64 = per_port.iter().sum();
            if total > cap * (1.0 + 1e-9) {
                return Err(invalid("per_port", format!("total {total} exceeds sum cap {cap}")));
            }
        }
        Ok(PowerAllocation { per_port, sum_cap })
    }

    /// `n` ports with the same budget `s`.
    pub fn uniform(n: usize, s: f64) -> Result<Self> {
        PowerAllocation::new(vec![s; n], None)
    }

    pub fn per_port(&self) -> &[f64] {
        &self.per_port
    }

    pub fn sum_cap(&self) -> Option<f64> {
        self.sum_cap
    }

    pub fn total(&self) -> f64 {
        self.per_port.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.per_port.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_port.is_empty()
    }

    /// Every budget multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        PowerAllocation::new(
            self.per_port.iter().map(|s| s * factor).collect(),
            self.sum_cap.map(|c| c * factor),
        )
    }
}

/// `log2(1 + (1 / (L sigma_z^2)) sum_n ||h_n||^2 S_n)`.
pub fn capacity_csir(h: &ChannelRealization, powers: &PowerAllocation, sigma_z_sq: f64) -> f64 {
    let l = h.n_antennas() as f64;
    let signal: f64 = (0..h.n_ports())
        .map(|n| h.port_norm_sq(n) * powers.per_port()[n])
        .sum();
    (signal / (l * sigma_z_sq)).ln_1p() / std::f64::consts::LN_2
}

/// `log2(1 + (1 / sigma_z^2) (sum_n ||h_n|| sqrt(S_n))^2)`.
pub fn capacity_csit(h: &ChannelRealization, powers: &PowerAllocation, sigma_z_sq: f64) -> f64 {
    let amplitude: f64 = (0..h.n_ports())
        .map(|n| (h.port_norm_sq(n) * powers.per_port()[n]).sqrt())
        .sum();
    (amplitude * amplitude / sigma_z_sq).ln_1p() / std::f64::consts::LN_2
}

pub fn capacity(mode: CsiMode, h: &ChannelRealization, powers: &PowerAllocation, sigma_z_sq: f64) -> f64 {
    match mode {
        CsiMode::CsirOnly => capacity_csir(h, powers, sigma_z_sq),
        CsiMode::Csit => capacity_csit(h, powers, sigma_z_sq),
    }
}

/// Rate when only the port nearest to `u` transmits (ties to the lowest
/// index). With receiver-only CSI the selected port splits its budget
/// equally over its antennas; with transmitter CSI it beamforms.
pub fn rate_single_transmission(
    layout: &PortLayout,
    u: Point,
    h: &ChannelRealization,
    powers: &PowerAllocation,
    mode: CsiMode,
    sigma_z_sq: f64,
) -> f64 {
    let m = layout.nearest_port(u);
    let l = h.n_antennas() as f64;
    let gain = h.port_norm_sq(m) * powers.per_port()[m];
    let snr = match mode {
        CsiMode::CsirOnly => gain / (l * sigma_z_sq),
        CsiMode::Csit => gain / sigma_z_sq,
    };
    snr.ln_1p() / std::f64::consts::LN_2
}

/// Hermitian PSD transmit covariance of a DAS(N, L).
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<Complex64>,
    n_ports: usize,
    n_antennas: usize,
}

impl CovarianceMatrix {
    /// Validates symmetry and positive semidefiniteness; never repairs.
    pub fn from_matrix(matrix: DMatrix<Complex64>, n_ports: usize, n_antennas: usize) -> Result<Self> {
        let dim = n_ports * n_antennas;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: matrix.nrows() });
        }
        let scale = matrix.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        let mut asym: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                asym = asym.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
            }
        }
        if asym > 1e-12 * scale {
            return Err(Error::NotHermitian(asym));
        }
        let min_eig = min_eigenvalue(&matrix);
        if min_eig < -PSD_TOLERANCE * scale {
            return Err(Error::NotPsd(min_eig));
        }
        Ok(CovarianceMatrix { matrix, n_ports, n_antennas })
    }

    pub fn zeros(n_ports: usize, n_antennas: usize) -> Self {
        let dim = n_ports * n_antennas;
        CovarianceMatrix {
            matrix: DMatrix::zeros(dim, dim),
            n_ports,
            n_antennas,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn n_ports(&self) -> usize {
        self.n_ports
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    /// Trace of diagonal block `n`, the power spent by port `n`.
    pub fn block_trace(&self, n: usize) -> f64 {
        let l = self.n_antennas;
        (0..l).map(|i| self.matrix[(n * l + i, n * l + i)].re).sum()
    }

    /// `L x L` block `(m, n)`.
    pub fn block(&self, m: usize, n: usize) -> DMatrix<Complex64> {
        let l = self.n_antennas;
        self.matrix.view((m * l, n * l), (l, l)).into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Checks every block trace against its budget.
    pub fn check_budget(&self, powers: &PowerAllocation) -> Result<()> {
        if powers.len() != self.n_ports {
            return Err(Error::DimensionMismatch { expected: self.n_ports, got: powers.len() });
        }
        for (n, budget) in powers.per_port().iter().enumerate() {
            let trace = self.block_trace(n);
            if trace > budget + 1e-12 * budget.max(1.0) {
                return Err(Error::BudgetExceeded { port: n, trace, budget: *budget });
            }
        }
        Ok(())
    }
}

fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `diag(S_1/L I_L, ..., S_N/L I_L)`.
pub fn q_star_csir(powers: &PowerAllocation, n_ports: usize, n_antennas: usize) -> Result<CovarianceMatrix> {
    if powers.len() != n_ports {
        return Err(Error::DimensionMismatch { expected: n_ports, got: powers.len() });
    }
    let dim = n_ports * n_antennas;
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..n_ports {
        let s = powers.per_port()[n] / n_antennas as f64;
        for i in 0..n_antennas {
            m[(n * n_antennas + i, n * n_antennas + i)] = Complex64::new(s, 0.0);
        }
    }
    Ok(CovarianceMatrix { matrix: m, n_ports, n_antennas })
}

/// Optimal covariance with transmitter CSI.
#[derive(Clone, Debug)]
pub struct CsitBeamformer {
    /// Rank-one `Q = w w^H`.
    pub covariance: CovarianceMatrix,
    /// Beam weights `w_n = conj(h_n) / ||h_n|| * sqrt(S_n)`, port-major.
    pub weights: Vec<Complex64>,
    /// Ports with a zero channel; they are left silent.
    pub silent_ports: Vec<usize>,
}

/// Per-port maximum-ratio beamforming at full power.
pub fn q_star_csit(h: &ChannelRealization, powers: &PowerAllocation) -> Result<CsitBeamformer> {
    let (n_ports, l) = h.h.shape();
    if powers.len() != n_ports {
        return Err(Error::DimensionMismatch { expected: n_ports, got: powers.len() });
    }
    let mut weights = vec![Complex64::new(0.0, 0.0); n_ports * l];
    let mut silent_ports = Vec::new();
    for n in 0..n_ports {
        let norm = h.port_norm_sq(n).sqrt();
        if norm == 0.0 {
            silent_ports.push(n);
            continue;
        }
        let scale = powers.per_port()[n].sqrt() / norm;
        for i in 0..l {
            weights[n * l + i] = h.h[(n, i)].conj() * scale;
        }
    }
    let dim = n_ports * l;
    let matrix = DMatrix::from_fn(dim, dim, |a, b| weights[a] * weights[b].conj());
    Ok(CsitBeamformer {
        covariance: CovarianceMatrix { matrix, n_ports, n_antennas: l },
        weights,
        silent_ports,
    })
}

/// `(1 / sigma_z^2) h Q h^H`.
pub fn snr_of_covariance(h: &ChannelRealization, q: &CovarianceMatrix, sigma_z_sq: f64) -> Result<f64> {
    let flat = h.flattened();
    let dim = flat.len();
    if q.matrix.nrows() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: q.matrix.nrows() });
    }
    let scale = q.matrix.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
    let min_eig = q.min_eigenvalue();
    if min_eig < -PSD_TOLERANCE * scale {
        return Err(Error::NotPsd(min_eig));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..dim {
        let mut row = Complex64::new(0.0, 0.0);
        for b in 0..dim {
            row += q.matrix[(a, b)] * flat[b].conj();
        }
        acc += flat[a] * row;
    }
    Ok(acc.re.max(0.0) / sigma_z_sq)
}

/// Outcome of the brute-force covariance search.
#[derive(Clone, Debug)]
pub struct BruteForceResult {
    pub covariance: CovarianceMatrix,
    /// Sample-average rate of the returned covariance.
    pub objective: f64,
    /// Finest grid step used, as a fraction of the port budgets.
    pub grid_step: f64,
    pub candidates_evaluated: usize,
}

/// Searches Hermitian PSD covariances within the per-port budgets for the
/// best sample-average `log2(1 + h Q h^H / sigma_z^2)` over `samples`.
///
/// For `N L = 2` the covariance is parameterised by its two diagonal
/// entries and an off-diagonal `rho = m sqrt(t1 t2) e^{i phi}`; a full grid
/// at step `4 * grid_resolution` is refined around the incumbent at steps
/// `2 * grid_resolution` and `grid_resolution`. For `N L` of 3 or 4 a seeded
/// random search over `Q = A A^H` with block rescaling is used instead.
pub fn brute_force_best_covariance(
    samples: &[ChannelRealization],
    powers: &PowerAllocation,
    n_ports: usize,
    n_antennas: usize,
    sigma_z_sq: f64,
    grid_resolution: f64,
) -> Result<BruteForceResult> {
    let dim = n_ports * n_antennas;
    if dim == 0 || dim > 4 {
        return Err(Error::OracleTooLarge(dim));
    }
    if samples.is_empty() {
        return Err(invalid("samples", "need at least one channel sample"));
    }
    if !(grid_resolution > 0.0 && grid_resolution <= 0.5) {
        return Err(invalid("grid_resolution", "must lie in (0, 0.5]"));
    }
    if powers.len() != n_ports {
        return Err(Error::DimensionMismatch { expected: n_ports, got: powers.len() });
    }
    for s in samples {
        if s.h.shape() != (n_ports, n_antennas) {
            return Err(Error::DimensionMismatch { expected: dim, got: s.h.len() });
        }
    }
    match dim {
        1 => Ok(search_scalar(samples, powers, sigma_z_sq, grid_resolution)),
        2 => Ok(search_2x2(samples, powers, n_ports, n_antennas, sigma_z_sq, grid_resolution)),
        _ => Ok(search_random(samples, powers, n_ports, n_antennas, sigma_z_sq, grid_resolution)),
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

fn search_scalar(samples: &[ChannelRealization], powers: &PowerAllocation, sigma_z_sq: f64, step: f64) -> BruteForceResult {
    let gains: Vec<f64> = samples.iter().map(|s| s.h[(0, 0)].norm_sqr()).collect();
    let budget = powers.per_port()[0];
    let k = (1.0 / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=k {
        let t = budget * (i as f64 / k as f64).min(1.0);
        let obj = gains.iter().map(|g| log2_1p(g * t / sigma_z_sq)).sum::<f64>() / gains.len() as f64;
        if obj > best.0 {
            best = (obj, t);
        }
    }
    let matrix = DMatrix::from_element(1, 1, Complex64::new(best.1, 0.0));
    BruteForceResult {
        covariance: CovarianceMatrix { matrix, n_ports: 1, n_antennas: 1 },
        objective: best.0,
        grid_step: step,
        candidates_evaluated: k + 1,
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate2 {
    x1: f64,
    x2: f64,
    m: f64,
    phi: f64,
}

fn search_2x2(
    samples: &[ChannelRealization],
    powers: &PowerAllocation,
    n_ports: usize,
    n_antennas: usize,
    sigma_z_sq: f64,
    resolution: f64,
) -> BruteForceResult {
    // entries of the flattened channel
    let stats: Vec<(f64, f64, Complex64)> = samples
        .iter()
        .map(|s| {
            let f = s.flattened();
            (f[0].norm_sqr(), f[1].norm_sqr(), f[0] * f[1].conj())
        })
        .collect();
    // diagonal entries are fractions of a budget; with one port the two
    // antennas share it, with two ports each has its own
    let shared = n_ports == 1;
    let (cap1, cap2) = if shared {
        (powers.per_port()[0], powers.per_port()[0])
    } else {
        (powers.per_port()[0], powers.per_port()[1])
    };
    let feasible = |c: &Candidate2| {
        (0.0..=1.0).contains(&c.x1)
            && (0.0..=1.0).contains(&c.x2)
            && (0.0..=1.0).contains(&c.m)
            && (!shared || c.x1 + c.x2 <= 1.0 + 1e-12)
    };
    let entries = |c: &Candidate2| {
        let t1 = c.x1 * cap1;
        let t2 = c.x2 * cap2;
        let rho = Complex64::from_polar(c.m * (t1 * t2).sqrt(), c.phi);
        (t1, t2, rho)
    };
    let objective = |c: &Candidate2| {
        let (t1, t2, rho) = entries(c);
        stats
            .iter()
            .map(|(a, b, cross)| {
                let quad = t1 * a + t2 * b + 2.0 * (rho * cross).re;
                log2_1p(quad.max(0.0) / sigma_z_sq)
            })
            .sum::<f64>()
            / stats.len() as f64
    };

    let mut evaluated = 0usize;
    let mut evaluate_all = |cands: Vec<Candidate2>| -> (f64, Candidate2) {
        evaluated += cands.len();
        cands
            .par_iter()
            .map(|c| (objective(c), *c))
            .reduce_with(|a, b| if b.0 > a.0 { b } else { a })
            .expect("non-empty candidate set")
    };

    let coarse = (4.0 * resolution).min(0.5);
    let k = (1.0 / coarse).round() as usize;
    let k_phi = (2.0 * std::f64::consts::PI / coarse).ceil() as usize;
    let mut grid = Vec::new();
    for i in 0..=k {
        for j in 0..=k {
            for a in 0..=k {
                for p in 0..k_phi {
                    let c = Candidate2 {
                        x1: i as f64 / k as f64,
                        x2: j as f64 / k as f64,
                        m: a as f64 / k as f64,
                        phi: p as f64 * 2.0 * std::f64::consts::PI / k_phi as f64,
                    };
                    if feasible(&c) {
                        grid.push(c);
                    }
                }
            }
        }
    }
    let mut best = evaluate_all(grid);
    for step in [2.0 * resolution, resolution] {
        let phi_step = step * std::f64::consts::PI;
        let mut local = Vec::new();
        for di in -2i32..=2 {
            for dj in -2i32..=2 {
                for da in -2i32..=2 {
                    for dp in -2i32..=2 {
                        let c = Candidate2 {
                            x1: (best.1.x1 + di as f64 * step).clamp(0.0, 1.0),
                            x2: (best.1.x2 + dj as f64 * step).clamp(0.0, 1.0),
                            m: (best.1.m + da as f64 * step).clamp(0.0, 1.0),
                            phi: best.1.phi + dp as f64 * phi_step,
                        };
                        if feasible(&c) {
                            local.push(c);
                        }
                    }
                }
            }
        }
        let cand = evaluate_all(local);
        if cand.0 > best.0 {
            best = cand;
        }
    }

    let (t1, t2, rho) = entries(&best.1);
    let matrix = DMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(t1, 0.0), rho, rho.conj(), Complex64::new(t2, 0.0)],
    );
    BruteForceResult {
        covariance: CovarianceMatrix { matrix, n_ports, n_antennas },
        objective: best.0,
        grid_step: resolution,
        candidates_evaluated: evaluated,
    }
}

fn search_random(
    samples: &[ChannelRealization],
    powers: &PowerAllocation,
    n_ports: usize,
    n_antennas: usize,
    sigma_z_sq: f64,
    resolution: f64,
) -> BruteForceResult {
    let dim = n_ports * n_antennas;
    let flats: Vec<Vec<Complex64>> = samples.iter().map(|s| s.flattened()).collect();
    let build = |a: &DMatrix<Complex64>, fractions: &[f64]| -> DMatrix<Complex64> {
        let mut q = a * a.adjoint();
        for n in 0..n_ports {
            let l = n_antennas;
            let trace: f64 = (0..l).map(|i| q[(n * l + i, n * l + i)].re).sum();
            let target = fractions[n] * powers.per_port()[n];
            let d = if trace > 0.0 { (target / trace).sqrt() } else { 0.0 };
            for i in 0..l {
                for c in 0..dim {
                    q[(n * l + i, c)] *= d;
                    q[(c, n * l + i)] *= d;
                }
            }
        }
        q
    };
    let objective = |q: &DMatrix<Complex64>| -> f64 {
        flats
            .iter()
            .map(|h| {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..dim {
                    for b in 0..dim {
                        acc += h[a] * q[(a, b)] * h[b].conj();
                    }
                }
                log2_1p(acc.re.max(0.0) / sigma_z_sq)
            })
            .sum::<f64>()
            / flats.len() as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x0DA5_C0DE);
    let random_a = |rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(dim, dim, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    };
    let n_start = (64.0 / resolution) as usize;
    let mut evaluated = 0;
    let mut best_a = DMatrix::identity(dim, dim);
    let mut best_x = vec![1.0; n_ports];
    let mut best_obj = objective(&build(&best_a, &best_x));
    for _ in 0..n_start {
        let a = random_a(&mut rng);
        let x: Vec<f64> = (0..n_ports).map(|_| rng.random::<f64>()).collect();
        let obj = objective(&build(&a, &x));
        evaluated += 1;
        if obj > best_obj {
            best_obj = obj;
            best_a = a;
            best_x = x;
        }
    }
    let mut step = 0.25;
    while step > resolution / 4.0 {
        for _ in 0..200 {
            let a = &best_a + random_a(&mut rng) * Complex64::new(step, 0.0);
            let x: Vec<f64> = best_x
                .iter()
                .map(|v| (v + (rng.random::<f64>() - 0.5) * step).clamp(0.0, 1.0))
                .collect();
            let obj = objective(&build(&a, &x));
            evaluated += 1;
            if obj > best_obj {
                best_obj = obj;
                best_a = a;
                best_x = x;
            }
        }
        step /= 2.0;
    }
    let matrix = build(&best_a, &best_x);
    BruteForceResult {
        covariance: CovarianceMatrix { matrix, n_ports, n_antennas },
        objective: best_obj,
        grid_step: resolution,
        candidates_evaluated: evaluated,
    }
}
