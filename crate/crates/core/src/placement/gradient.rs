//! Analytic gradients of the instantaneous capacity with respect to port
//! positions and port powers.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::capacity::CsiMode;
use crate::channel::{ChannelParams, InterferenceParams, NeighborPower};
use crate::error::{Error, Result};
use crate::geometry::{neighbor_offsets, Point, PortLayout};

/// Gradient of `C(u, P, g, S)` at one user draw.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacityGradient {
    /// The capacity itself, in bit/s/Hz.
    pub value: f64,
    /// `dC/dp_n`, one entry per port.
    pub positions: Vec<Point>,
    /// `dC/dS_n`, one entry per port.
    pub powers: Vec<f64>,
}

impl CapacityGradient {
    /// Positions flattened to `[x_1, y_1, ..., x_N, y_N]`.
    pub fn position_vector(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

/// `1 / L(r)` and its gradient with respect to the port position `p`,
/// with `r = max(|p - u|, r0)`; zero gradient inside the clamp.
fn inv_loss_and_grad(p: Point, u: Point, params: &ChannelParams) -> Result<(f64, Point)> {
    let d = p - u;
    let dist = d.norm();
    if dist <= params.r0 {
        if params.r0 <= 0.0 {
            return Err(Error::SingularPathLoss(dist));
        }
        return Ok((params.gain(params.r0), Point::ORIGIN));
    }
    let inv = params.gain(dist);
    // d/dp r^-alpha = -alpha r^(-alpha-2) (p - u)
    Ok((inv, d * (-params.alpha * inv / (dist * dist))))
}

/// Gradient of the instantaneous capacity (all ports transmitting).
///
/// `shadowing` holds the large-scale gains `g_n`; `fading` the `N x L`
/// small-scale coefficients, or `None` for unit fading (`||f_n||^2 = L`).
/// With interference active every central port also moves its six
/// replicas, which enter the interference-plus-noise variance.
#[allow(clippy::too_many_arguments)]
pub fn capacity_gradient(
    u: Point,
    layout: &PortLayout,
    shadowing: &[f64],
    fading: Option<&DMatrix<Complex64>>,
    powers: &[f64],
    n_antennas: usize,
    mode: CsiMode,
    params: &ChannelParams,
    intf: &InterferenceParams,
) -> Result<CapacityGradient> {
    let n = layout.len();
    for len in [shadowing.len(), powers.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let l = n_antennas as f64;
    let fading_energy: Vec<f64> = match fading {
        Some(f) => {
            if f.nrows() != n {
                return Err(Error::DimensionMismatch { expected: n, got: f.nrows() });
            }
            (0..n).map(|i| f.row(i).iter().map(|c| c.norm_sqr()).sum()).collect()
        }
        None => vec![l; n],
    };

    // per-port received energy d_n = g_n F_n / L(r_n) and its gradient
    let mut d = vec![0.0; n];
    let mut dd = vec![Point::ORIGIN; n];
    for (i, p) in layout.ports().iter().enumerate() {
        let (inv, grad) = inv_loss_and_grad(*p, u, params)?;
        let k = shadowing[i] * fading_energy[i];
        d[i] = k * inv;
        dd[i] = grad * k;
    }

    let total_power: f64 = powers.iter().sum();
    let (signal, d_sig_pos, d_sig_pow): (f64, Vec<Point>, Vec<f64>) = match mode {
        CsiMode::CsirOnly => {
            let signal = (0..n).map(|i| powers[i] * d[i]).sum::<f64>() / l;
            let dp = (0..n).map(|i| dd[i] * (powers[i] / l)).collect();
            let ds = (0..n).map(|i| d[i] / l).collect();
            (signal, dp, ds)
        }
        CsiMode::Csit => {
            let amp: f64 = (0..n).map(|i| (powers[i] * d[i]).sqrt()).sum();
            let dp = (0..n)
                .map(|i| if d[i] > 0.0 { dd[i] * (amp * (powers[i] / d[i]).sqrt()) } else { Point::ORIGIN })
                .collect();
            let floor = 1e-12 * total_power;
            let ds = (0..n).map(|i| amp * (d[i] / powers[i].max(floor)).sqrt()).collect();
            (amp * amp, dp, ds)
        }
    };

    let mut sigma_z_sq = params.sigma_n_sq;
    let mut d_noise_pos = vec![Point::ORIGIN; n];
    let mut d_noise_pow = vec![0.0; n];
    if intf.is_active() {
        let offsets = neighbor_offsets(layout.region())?;
        for (j, o) in offsets.iter().enumerate() {
            let gamma = intf.gamma[j];
            if gamma == 0.0 {
                continue;
            }
            for (i, p) in layout.ports().iter().enumerate() {
                let (inv, grad) = inv_loss_and_grad(*p + *o, u, params)?;
                let s = intf.port_power(i, powers);
                sigma_z_sq += gamma * s * inv;
                d_noise_pos[i] = d_noise_pos[i] + grad * (gamma * s);
                if matches!(intf.neighbor_power, NeighborPower::MatchCentral) {
                    d_noise_pow[i] += gamma * inv;
                }
            }
        }
    }

    // dC = (dSig - SNR dsigma^2) / ((sigma^2 + Sig) ln 2)
    let snr = signal / sigma_z_sq;
    let denom = (sigma_z_sq + signal) * std::f64::consts::LN_2;
    let positions = (0..n)
        .map(|i| (d_sig_pos[i] - d_noise_pos[i] * snr) * (1.0 / denom))
        .collect();
    let power_grad = (0..n).map(|i| (d_sig_pow[i] - snr * d_noise_pow[i]) / denom).collect();
    Ok(CapacityGradient {
        value: snr.ln_1p() / std::f64::consts::LN_2,
        positions,
        powers: power_grad,
    })
}
