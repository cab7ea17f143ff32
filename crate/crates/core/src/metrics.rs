//! NMSE, closed-form pilot overheads and the effective sum-rate with a
//! phase-alignment plus zero-forcing beamforming heuristic.

use faer::{Col, Mat};
use num_complex::Complex64;

use crate::baselines::SchemeId;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_dist_sq, frobenius_sq, LeastSquares, DEFAULT_RCOND};

/// `Σ_k ‖Ĥ_k − H_k‖²_F / Σ_k ‖H_k‖²_F` for one realization.
pub fn nmse(estimates: &[Mat<Complex64>], truth: &[Mat<Complex64>]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} estimates", truth.len()),
            got: estimates.len().to_string(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if (e.nrows(), e.ncols()) != (t.nrows(), t.ncols()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", t.nrows(), t.ncols()),
                got: format!("{}x{}", e.nrows(), e.ncols()),
            });
        }
        num += frobenius_dist_sq(e, t);
        den += frobenius_sq(t);
    }
    if !(den > 0.0) {
        return Err(Error::ZeroGroundTruth);
    }
    Ok(num / den)
}

/// Training slots per coherence block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overhead {
    /// With the anchor phase spread over `κ` blocks.
    pub exact: f64,
    /// With `κ → ∞`.
    pub amortized: usize,
}

/// Closed-form overheads:
///
/// | scheme | slots |
/// |---|---|
/// | proposed | `N/κ + ⌈KÑ/M⌉` |
/// | proposed, no VR | `N/κ + ⌈KN/M⌉` |
/// | common channel | `N + ⌈(K−1)N/M⌉` |
/// | DFT | `KN` |
///
/// `kappa` may be `f64::INFINITY`.
pub fn pilot_overhead(
    scheme: SchemeId,
    users: usize,
    antennas: usize,
    elements: usize,
    visible: usize,
    kappa: f64,
) -> Result<Overhead> {
    if users == 0 || antennas == 0 || elements == 0 || visible > elements {
        return Err(Error::Config(format!(
            "invalid overhead arguments K={users} M={antennas} N={elements} N~={visible}"
        )));
    }
    if !(kappa >= 1.0) {
        return Err(Error::Config(format!("kappa must be >= 1, got {kappa}")));
    }
    let anchor = elements as f64 / kappa;
    let amortized = match scheme {
        SchemeId::Proposed => (users * visible).div_ceil(antennas),
        SchemeId::ProposedNoVr => (users * elements).div_ceil(antennas),
        SchemeId::CommonChannel => elements + ((users - 1) * elements).div_ceil(antennas),
        SchemeId::Dft => users * elements,
    };
    let exact = match scheme {
        SchemeId::Proposed | SchemeId::ProposedNoVr => anchor + amortized as f64,
        _ => amortized as f64,
    };
    Ok(Overhead { exact, amortized })
}

/// IRS phases and BS beamformers for the data phase.
#[derive(Debug, Clone)]
pub struct Beamforming {
    /// Unit-modulus reflection vector, length N.
    pub phi: Vec<Complex64>,
    /// Beamformers as columns, M x K.
    pub w: Mat<Complex64>,
    /// False when zero-forcing fell back to matched filtering.
    pub zero_forcing: bool,
}

/// Effective channel `g = H φ`.
pub fn effective_channel(h: &Mat<Complex64>, phi: &[Complex64]) -> Col<Complex64> {
    Col::from_fn(h.nrows(), |i| (0..h.ncols()).map(|j| h[(i, j)] * phi[j]).sum())
}

/// Aligns each IRS element to the phase of its summed estimated response,
/// then zero-forces on the effective channels with power `power` per user.
/// Falls back to matched filtering when the effective channels are rank
/// deficient.
pub fn design_beamforming(estimates: &[Mat<Complex64>], power: f64) -> Result<Beamforming> {
    let first = estimates.first().ok_or(Error::NoBeamformingChannel)?;
    let (m, n) = (first.nrows(), first.ncols());
    if estimates.iter().all(|h| frobenius_sq(h) == 0.0) {
        return Err(Error::NoBeamformingChannel);
    }
    let phi: Vec<Complex64> = (0..n)
        .map(|j| {
            let s: Complex64 = estimates
                .iter()
                .map(|h| (0..m).map(|i| h[(i, j)]).sum::<Complex64>())
                .sum();
            if s.norm() > 0.0 {
                Complex64::from_polar(1.0, -s.arg())
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();

    let k = estimates.len();
    let g = Mat::from_fn(m, k, |i, u| effective_channel(&estimates[u], &phi)[i]);
    let zf = LeastSquares::new(&g, DEFAULT_RCOND).ok().map(|ls| {
        // Columns of pinv(G)ᴴ: W = G (GᴴG)⁻¹.
        let mut w = Mat::zeros(m, k);
        for i in 0..m {
            let e = Col::from_fn(m, |r| Complex64::from(f64::from(u8::from(r == i))));
            let row = ls.solve(&e).expect("shape checked");
            for u in 0..k {
                w[(i, u)] = row[u].conj();
            }
        }
        w
    });
    let zero_forcing = zf.is_some();
    let mut w = zf.unwrap_or(g);
    for u in 0..k {
        let norm = (0..m).map(|i| w[(i, u)].norm_sqr()).sum::<f64>().sqrt();
        let c = if norm > 0.0 { power.sqrt() / norm } else { 0.0 };
        for i in 0..m {
            w[(i, u)] *= c;
        }
    }
    Ok(Beamforming { phi, w, zero_forcing })
}

/// `SINR_k = |g_kᴴ w_k|² / (Σ_{k'≠k} |g_kᴴ w_{k'}|² + σ²)` with `g_k = H_k φ`
/// on the given (true) channels.
pub fn sinr(channels: &[Mat<Complex64>], bf: &Beamforming, noise_var: f64) -> Vec<f64> {
    let k = channels.len();
    let m = bf.w.nrows();
    channels
        .iter()
        .enumerate()
        .map(|(u, h)| {
            let g = effective_channel(h, &bf.phi);
            let gain = |v: usize| -> f64 {
                (0..m).map(|i| g[i].conj() * bf.w[(i, v)]).sum::<Complex64>().norm_sqr()
            };
            let interference: f64 = (0..k).filter(|&v| v != u).map(gain).sum();
            gain(u) / (interference + noise_var)
        })
        .collect()
}

/// `(1 − T_e/T) Σ_k log2(1 + SINR_k)`.
pub fn effective_sum_rate(sinrs: &[f64], coherence: f64, training: f64) -> Result<f64> {
    if training > coherence {
        return Err(Error::TrainingExceedsCoherence { training, coherence });
    }
    let prefactor = 1.0 - training / coherence;
    Ok(prefactor * sinrs.iter().map(|s| (1.0 + s).log2()).sum::<f64>())
}
