//! Benchmark schemes run on the same realizations as the proposed estimator.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, VisibilityMask};
use crate::error::{Error, Result};
use crate::estimator::{
    anchor_estimate, dft_reflection_matrix, estimate_anchor, estimate_proposed,
    estimate_users_on_support, finish, simulate_step1, PilotPlan,
};
use crate::linalg::frobenius_sq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Proposed,
    ProposedNoVr,
    CommonChannel,
    Dft,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::Proposed,
        SchemeId::ProposedNoVr,
        SchemeId::CommonChannel,
        SchemeId::Dft,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Proposed => "proposed",
            SchemeId::ProposedNoVr => "proposed_no_vr",
            SchemeId::CommonChannel => "common_channel",
            SchemeId::Dft => "dft",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// What every scheme hands to the metrics stage.
#[derive(Debug, Clone)]
pub struct SchemeEstimate {
    pub scheme: SchemeId,
    pub h_users: Vec<Mat<Complex64>>,
    /// Training slots spent in this coherence block, with the anchor phase
    /// amortized over `κ` blocks where it applies.
    pub training_slots: f64,
    /// Configured step-3 margin slots included in `training_slots`.
    pub margin_slots: usize,
    /// Slots added by the rank fallback, included in `training_slots`.
    pub extra_slots: usize,
    /// Number of IRS columns the scheme estimated.
    pub reduced_dim: usize,
}

/// Per-user DFT training: `K N` slots, LS per user.
pub fn estimate_dft_scheme<R: Rng + ?Sized>(
    real: &ChannelRealization,
    user_power: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Mat<Complex64>>> {
    let phi1 = dft_reflection_matrix(real.irs_elements());
    real.h_users
        .iter()
        .map(|h| {
            let y = simulate_step1(h, &phi1, user_power, noise_var, rng)?;
            estimate_anchor(&y, &phi1, user_power)
        })
        .collect()
}

/// Output of [`estimate_common_channel_scheme`].
#[derive(Debug, Clone)]
pub struct CommonChannelOutput {
    pub h_users: Vec<Mat<Complex64>>,
    /// Columns of the typical user's estimate used as the reference.
    pub support: Vec<usize>,
    pub nominal_slots: usize,
    pub margin_slots: usize,
    pub extra_slots: usize,
}

/// Typical user (index 0) trained by DFT over `N` slots; the others are
/// modelled as `Ĥ_1 diag(λ_k)` with full-length scaling vectors.
///
/// Columns where the typical user's estimate has no energy cannot carry a
/// ratio; they get `λ = 0` and a zero estimate.
pub fn estimate_common_channel_scheme<R: Rng + ?Sized>(
    real: &ChannelRealization,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<CommonChannelOutput> {
    plan.validate()?;
    let n = real.irs_elements();
    let phi1 = dft_reflection_matrix(n);
    let y = simulate_step1(&real.h_users[0], &phi1, plan.user_power, plan.noise_var, rng)?;
    let typical = estimate_anchor(&y, &phi1, plan.user_power)?;

    let total = frobenius_sq(&typical);
    if !(total > 0.0) {
        return Err(Error::ZeroReferenceChannel);
    }
    let support: Vec<usize> = (0..n)
        .filter(|&j| {
            let e: f64 = (0..typical.nrows()).map(|i| typical[(i, j)].norm_sqr()).sum();
            e > 1e-20 * total
        })
        .collect();

    let others: Vec<usize> = (1..real.users()).collect();
    let mut h_users = vec![typical.clone()];
    let (nominal_slots, margin_slots, extra_slots) = if others.is_empty() {
        (0, 0, 0)
    } else {
        let (_, estimates, step3) =
            estimate_users_on_support(real, &typical, &support, &others, plan, rng)?;
        h_users.extend(estimates);
        (step3.nominal_slots, step3.margin_slots, step3.extra_slots)
    };
    Ok(CommonChannelOutput {
        h_users,
        support,
        nominal_slots,
        margin_slots,
        extra_slots,
    })
}

/// Proposed pipeline with `Ω_G` forced to every column.
pub fn estimate_proposed_no_vr<R: Rng + ?Sized>(
    real: &ChannelRealization,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<crate::estimator::EstimationOutput> {
    plan.validate()?;
    let h_anchor = anchor_estimate(real, plan, rng)?;
    let (m, n) = (real.bs_antennas(), real.irs_elements());
    finish(real, h_anchor, VisibilityMask::new(m, n, true), (0..n).collect(), plan, rng)
}

/// Runs `scheme` and reports its estimates with the slot accounting used for
/// the effective rate.
pub fn run_scheme<R: Rng + ?Sized>(
    scheme: SchemeId,
    real: &ChannelRealization,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<SchemeEstimate> {
    let (m, n, k) = (real.bs_antennas(), real.irs_elements(), real.users());
    let anchor_share = if plan.oracle_anchor { 0.0 } else { n as f64 / plan.kappa };
    match scheme {
        SchemeId::Proposed | SchemeId::ProposedNoVr => {
            let out = if scheme == SchemeId::Proposed {
                estimate_proposed(real, plan, rng)?
            } else {
                estimate_proposed_no_vr(real, plan, rng)?
            };
            Ok(SchemeEstimate {
                scheme,
                training_slots: anchor_share + out.step3_slots() as f64,
                margin_slots: out.margin_slots,
                extra_slots: out.extra_slots,
                reduced_dim: out.reduced_dim(),
                h_users: out.h_users,
            })
        }
        SchemeId::CommonChannel => {
            let out = estimate_common_channel_scheme(real, plan, rng)?;
            let closed = (n + ((k - 1) * n).div_ceil(m)) as f64;
            Ok(SchemeEstimate {
                scheme,
                training_slots: closed + (out.margin_slots + out.extra_slots) as f64,
                margin_slots: out.margin_slots,
                extra_slots: out.extra_slots,
                reduced_dim: out.support.len(),
                h_users: out.h_users,
            })
        }
        SchemeId::Dft => Ok(SchemeEstimate {
            scheme,
            h_users: estimate_dft_scheme(real, plan.user_power, plan.noise_var, rng)?,
            training_slots: (k * n) as f64,
            margin_slots: 0,
            extra_slots: 0,
            reduced_dim: n,
        }),
    }
}
