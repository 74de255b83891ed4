//! Path loss, shadowing, fast fading and interference-plus-noise variance.

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::geometry::{clamped_distance, neighbor_offsets, Point, PortLayout};

/// Large-scale propagation and receiver noise.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Attenuation at unit distance.
    pub beta: f64,
    /// Standard deviation of the log-normal shadowing, in dB.
    pub sigma_sh_db: f64,
    /// Far-field radius below which distances are clamped.
    pub r0: f64,
    /// Receiver noise power.
    pub sigma_n_sq: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha: 4.0,
            beta: 1.0,
            sigma_sh_db: 8.0,
            r0: 1.0,
            sigma_n_sq: 1.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(2.0..=6.0).contains(&self.alpha) {
            warn!("path-loss exponent {} outside the usual range [2, 6]", self.alpha);
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.sigma_sh_db >= 0.0 && self.sigma_sh_db.is_finite()) {
            return Err(invalid("sigma_sh_db", format!("must be non-negative, got {}", self.sigma_sh_db)));
        }
        if !(self.r0 >= 0.0 && self.r0.is_finite()) {
            return Err(invalid("r0", format!("must be non-negative, got {}", self.r0)));
        }
        if !(self.sigma_n_sq > 0.0 && self.sigma_n_sq.is_finite()) {
            return Err(invalid("sigma_n_sq", format!("must be positive, got {}", self.sigma_n_sq)));
        }
        Ok(())
    }

    /// `1 / L(r)` without the singularity check; `r` is already clamped.
    #[inline]
    pub(crate) fn gain(&self, r: f64) -> f64 {
        1.0 / (self.beta * r.powf(self.alpha))
    }
}

/// `L(r) = beta * r^alpha`.
pub fn path_loss(r: f64, params: &ChannelParams) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::SingularPathLoss(r));
    }
    Ok(params.beta * r.powf(params.alpha))
}

/// `n` log-normal shadowing gains `10^(X/10)` with `X ~ N(0, sigma_sh_db^2)`.
pub fn draw_shadowing<R: Rng + ?Sized>(rng: &mut R, sigma_sh_db: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if sigma_sh_db == 0.0 {
                1.0
            } else {
                let x: f64 = rng.sample(StandardNormal);
                10f64.powf(sigma_sh_db * x / 10.0)
            }
        })
        .collect()
}

/// `n x l` i.i.d. CN(0, 1) fading coefficients.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R, n: usize, l: usize) -> DMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(n, l, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    })
}

/// Unit fading, used when fast fading is neglected.
pub fn unit_fading(n: usize, l: usize) -> DMatrix<Complex64> {
    DMatrix::from_element(n, l, Complex64::new(1.0, 0.0))
}

/// One channel draw: shadowing, fading and the resulting per-port channel
/// rows `h_n = sqrt(g_n / L(r_n)) * f_n`.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub shadowing: Vec<f64>,
    pub fading: DMatrix<Complex64>,
    pub h: DMatrix<Complex64>,
}

impl ChannelRealization {
    /// Realization directly from channel coefficients (`N x L`).
    pub fn from_channel(h: DMatrix<Complex64>) -> Self {
        ChannelRealization {
            shadowing: vec![1.0; h.nrows()],
            fading: h.clone(),
            h,
        }
    }

    pub fn n_ports(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.h.ncols()
    }

    /// `||h_n||^2`.
    pub fn port_norm_sq(&self, n: usize) -> f64 {
        self.h.row(n).iter().map(|c| c.norm_sqr()).sum()
    }

    /// The channel flattened to the `NL` row vector, port-major.
    pub fn flattened(&self) -> Vec<Complex64> {
        let (n, l) = self.h.shape();
        let mut out = Vec::with_capacity(n * l);
        for i in 0..n {
            for k in 0..l {
                out.push(self.h[(i, k)]);
            }
        }
        out
    }
}

/// Assembles the channel seen by a user at `u`.
pub fn channel_vector(
    layout: &PortLayout,
    u: Point,
    shadowing: &[f64],
    fading: &DMatrix<Complex64>,
    params: &ChannelParams,
) -> Result<ChannelRealization> {
    let n = layout.len();
    if shadowing.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: shadowing.len() });
    }
    if fading.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: fading.nrows() });
    }
    if !u.is_finite() {
        return Err(invalid("u", "user position must be finite"));
    }
    let mut h = fading.clone();
    for (i, p) in layout.ports().iter().enumerate() {
        let r = clamped_distance(*p, u, params.r0);
        let amp = (shadowing[i] / path_loss(r, params)?).sqrt();
        for c in h.row_mut(i).iter_mut() {
            *c *= amp;
        }
    }
    Ok(ChannelRealization {
        shadowing: shadowing.to_vec(),
        fading: fading.clone(),
        h,
    })
}

/// Transmit power of the ports in the neighbouring cells.
#[derive(Clone, Debug, PartialEq)]
pub enum NeighborPower {
    /// Every neighbouring port transmits `S`.
    Common(f64),
    /// Port `i` of every neighbouring cell transmits the central cell's `S_i`.
    MatchCentral,
}

/// One-tier interference model.
#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceParams {
    pub gamma: [f64; 6],
    pub neighbor_power: NeighborPower,
}

impl InterferenceParams {
    pub fn none() -> Self {
        InterferenceParams {
            gamma: [0.0; 6],
            neighbor_power: NeighborPower::MatchCentral,
        }
    }

    /// The same coefficient `gamma` for all six neighbours.
    pub fn shared(gamma: f64, neighbor_power: NeighborPower) -> Self {
        InterferenceParams {
            gamma: [gamma; 6],
            neighbor_power,
        }
    }

    pub fn is_active(&self) -> bool {
        self.gamma.iter().any(|g| *g > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(invalid("gamma", "interference coefficients must be non-negative"));
        }
        if let NeighborPower::Common(s) = self.neighbor_power {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("neighbor_power", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub(crate) fn port_power(&self, i: usize, central: &[f64]) -> f64 {
        match self.neighbor_power {
            NeighborPower::Common(s) => s,
            NeighborPower::MatchCentral => central[i],
        }
    }
}

/// `sigma_z^2 = sum_j sum_i gamma_j S_i / L(r(p_i + o_j, u)) + sigma_n^2`.
///
/// `central` holds the central cell's per-port powers; it is only read when
/// the neighbour power is [`NeighborPower::MatchCentral`].
pub fn interference_noise_variance(
    layout: &PortLayout,
    u: Point,
    intf: &InterferenceParams,
    params: &ChannelParams,
    central: &[f64],
) -> Result<f64> {
    if !intf.is_active() {
        return Ok(params.sigma_n_sq);
    }
    if matches!(intf.neighbor_power, NeighborPower::MatchCentral) && central.len() != layout.len() {
        return Err(Error::DimensionMismatch { expected: layout.len(), got: central.len() });
    }
    let offsets = neighbor_offsets(layout.region())?;
    let mut total = 0.0;
    for (j, o) in offsets.iter().enumerate() {
        if intf.gamma[j] == 0.0 {
            continue;
        }
        for (i, p) in layout.ports().iter().enumerate() {
            let r = clamped_distance(*p + *o, u, params.r0);
            total += intf.gamma[j] * intf.port_power(i, central) / path_loss(r, params)?;
        }
    }
    Ok(total + params.sigma_n_sq)
}
