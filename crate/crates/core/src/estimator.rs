//! Anchor-assisted three-step estimator: LS anchor estimation with DFT
//! reflection, BS-side VR detection, and reduced-dimension estimation of the
//! per-user scaling vectors.

use std::f64::consts::TAU;

use faer::{Col, Mat};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, VisibilityMask};
use crate::error::{Error, Result};
use crate::linalg::{mul_diag, noise_matrix, noise_vector, scale, LeastSquares, DEFAULT_RCOND};

/// Powers, noise level and tuning knobs shared by every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPlan {
    /// Anchor transmit power `p` (linear).
    pub anchor_power: f64,
    /// User transmit power `p_u` (linear).
    pub user_power: f64,
    /// Receiver noise variance `σ²`.
    pub noise_var: f64,
    /// Number of coherence blocks one anchor estimate is reused for.
    pub kappa: f64,
    /// VR detection threshold in units of `σ²/(pN)`.
    pub threshold_multiplier: f64,
    /// Step-3 slots always added to the nominal `⌈KÑ/M⌉`.
    pub step3_margin: usize,
    /// Upper bound on step-3 slots added by the rank fallback.
    pub max_extra_slots: usize,
    /// Use the true anchor channel in steps 2-3 instead of the estimate.
    pub oracle_anchor: bool,
}

impl PilotPlan {
    pub fn new(anchor_power: f64, user_power: f64, noise_var: f64) -> Self {
        Self {
            anchor_power,
            user_power,
            noise_var,
            kappa: 64.0,
            threshold_multiplier: 3.0,
            step3_margin: 0,
            max_extra_slots: 16,
            oracle_anchor: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.anchor_power > 0.0 && self.user_power > 0.0) {
            return Err(Error::Config("transmit powers must be positive".into()));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!("invalid noise variance {}", self.noise_var)));
        }
        if !(self.kappa >= 1.0) {
            return Err(Error::Config(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        if !(self.threshold_multiplier >= 0.0) {
            return Err(Error::Config("threshold multiplier must be non-negative".into()));
        }
        Ok(())
    }
}

/// N-point DFT reflection matrix, entry `(n, i) = exp(-j 2π n i / N)`.
pub fn dft_reflection_matrix(n: usize) -> Mat<Complex64> {
    Mat::from_fn(n, n, |r, c| {
        Complex64::from_polar(1.0, -TAU * ((r * c) % n) as f64 / n as f64)
    })
}

/// `Y1 = √p · H Φ1 + Z1` with `Z1` i.i.d. CN(0, σ²).
pub fn simulate_step1<R: Rng + ?Sized>(
    h: &Mat<Complex64>,
    phi1: &Mat<Complex64>,
    power: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<Mat<Complex64>> {
    if h.ncols() != phi1.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} reflection rows", h.ncols()),
            got: phi1.nrows().to_string(),
        });
    }
    let z = noise_matrix(h.nrows(), phi1.ncols(), noise_var, rng);
    Ok(scale(&(h * phi1), Complex64::from(power.sqrt())) + z)
}

/// LS estimate `Ĥ = Y1 Φ1ᴴ / (√p N)`.
pub fn estimate_anchor(
    y1: &Mat<Complex64>,
    phi1: &Mat<Complex64>,
    power: f64,
) -> Result<Mat<Complex64>> {
    if y1.ncols() != phi1.ncols() || phi1.nrows() != phi1.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0} reflection matrix", y1.ncols()),
            got: format!("{}x{}", phi1.nrows(), phi1.ncols()),
        });
    }
    let n = phi1.nrows() as f64;
    Ok(scale(&(y1 * phi1.adjoint()), Complex64::from(1.0 / (power.sqrt() * n))))
}

/// Detection threshold `ζ = c σ²/(pN)`, floored at `(1e-10 · max|Ĥ|)²` so
/// that round-off in a noiseless estimate never counts as visible.
pub fn detection_threshold(h_hat: &Mat<Complex64>, plan: &PilotPlan) -> f64 {
    let n = h_hat.ncols() as f64;
    let nominal = plan.threshold_multiplier * plan.noise_var / (plan.anchor_power * n);
    let mut peak = 0.0f64;
    for j in 0..h_hat.ncols() {
        for i in 0..h_hat.nrows() {
            peak = peak.max(h_hat[(i, j)].norm_sqr());
        }
    }
    nominal.max(DEFAULT_RCOND * DEFAULT_RCOND * peak)
}

/// Thresholds `|Ĥ(m,n)|² > ζ` and returns the mask with the sorted set of
/// columns holding at least one detection.
pub fn detect_vr(h_hat: &Mat<Complex64>, zeta: f64) -> Result<(VisibilityMask, Vec<usize>)> {
    let mask = VisibilityMask::from_fn(h_hat.nrows(), h_hat.ncols(), |i, j| {
        h_hat[(i, j)].norm_sqr() > zeta
    });
    let omega = mask.visible_columns();
    if omega.is_empty() {
        return Err(Error::EmptyVisibility);
    }
    Ok((mask, omega))
}

fn check_indices(omega: &[usize], len: usize) -> Result<()> {
    match omega.iter().find(|&&j| j >= len) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

/// Keeps the columns listed in `omega`, in order.
pub fn reduce_columns(m: &Mat<Complex64>, omega: &[usize]) -> Result<Mat<Complex64>> {
    check_indices(omega, m.ncols())?;
    Ok(Mat::from_fn(m.nrows(), omega.len(), |i, j| m[(i, omega[j])]))
}

pub fn reduce_vector(v: &[Complex64], omega: &[usize]) -> Result<Vec<Complex64>> {
    check_indices(omega, v.len())?;
    Ok(omega.iter().map(|&j| v[j]).collect())
}

/// Inverse of [`reduce_columns`]: places column `j` of `reduced` at
/// `omega[j]` of an `M x n` zero matrix.
pub fn scatter_columns(reduced: &Mat<Complex64>, omega: &[usize], n: usize) -> Result<Mat<Complex64>> {
    check_indices(omega, n)?;
    if reduced.ncols() != omega.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} columns", omega.len()),
            got: reduced.ncols().to_string(),
        });
    }
    let mut out = Mat::zeros(reduced.nrows(), n);
    for (j, &col) in omega.iter().enumerate() {
        for i in 0..reduced.nrows() {
            out[(i, col)] = reduced[(i, j)];
        }
    }
    Ok(out)
}

/// Pilot symbols and reflection patterns for the scaling-vector step.
///
/// `x_{k,i} = exp(-j 2π k i / L)` with `L = max(K, slots)`, and pattern
/// `φ̃_i` is column `i mod Ñ` of the Ñ-point DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Step3Schedule {
    pub users: usize,
    pub reduced: usize,
    /// `pilots[i][k]`
    pub pilots: Vec<Vec<Complex64>>,
    /// `patterns[i][ñ]`
    pub patterns: Vec<Vec<Complex64>>,
}

impl Step3Schedule {
    pub fn new(users: usize, reduced: usize, slots: usize) -> Self {
        let period = users.max(slots);
        let pilots = (0..slots)
            .map(|i| {
                (0..users)
                    .map(|k| Complex64::from_polar(1.0, -TAU * ((k * i) % period) as f64 / period as f64))
                    .collect()
            })
            .collect();
        let patterns = (0..slots)
            .map(|i| {
                let c = i % reduced;
                (0..reduced)
                    .map(|r| Complex64::from_polar(1.0, -TAU * ((r * c) % reduced) as f64 / reduced as f64))
                    .collect()
            })
            .collect();
        Self {
            users,
            reduced,
            pilots,
            patterns,
        }
    }

    pub fn slots(&self) -> usize {
        self.pilots.len()
    }
}

/// Nominal slot count `⌈K Ñ / M⌉`.
pub fn nominal_slots(users: usize, reduced: usize, antennas: usize) -> usize {
    (users * reduced).div_ceil(antennas)
}

/// Stacked training matrix: row block `i`, column block `k` is
/// `x_{k,i} · H̄ diag(φ̃_i)`.
pub fn build_xi(h_bar: &Mat<Complex64>, schedule: &Step3Schedule) -> Result<Mat<Complex64>> {
    let (m, nr) = (h_bar.nrows(), h_bar.ncols());
    if nr != schedule.reduced {
        return Err(Error::ShapeMismatch {
            expected: format!("{} reduced columns", schedule.reduced),
            got: nr.to_string(),
        });
    }
    let k = schedule.users;
    let mut xi = Mat::zeros(schedule.slots() * m, k * nr);
    for (i, (pilots, pattern)) in schedule.pilots.iter().zip(&schedule.patterns).enumerate() {
        for (u, &x) in pilots.iter().enumerate() {
            for j in 0..nr {
                let c = x * pattern[j];
                for r in 0..m {
                    xi[(i * m + r, u * nr + j)] = c * h_bar[(r, j)];
                }
            }
        }
    }
    Ok(xi)
}

/// Received step-3 signal stacked over slots:
/// `y_i = Σ_k √p_u H̃_k φ̃_i x_{k,i} + z_i`.
pub fn simulate_step3<R: Rng + ?Sized>(
    h_reduced: &[Mat<Complex64>],
    schedule: &Step3Schedule,
    user_power: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<Col<Complex64>> {
    if h_reduced.len() != schedule.users {
        return Err(Error::ShapeMismatch {
            expected: format!("{} users", schedule.users),
            got: h_reduced.len().to_string(),
        });
    }
    let m = h_reduced.first().map_or(0, |h| h.nrows());
    for h in h_reduced {
        if (h.nrows(), h.ncols()) != (m, schedule.reduced) {
            return Err(Error::ShapeMismatch {
                expected: format!("{m}x{}", schedule.reduced),
                got: format!("{}x{}", h.nrows(), h.ncols()),
            });
        }
    }
    let amp = user_power.sqrt();
    let mut y = noise_vector(schedule.slots() * m, noise_var, rng);
    for (i, (pilots, pattern)) in schedule.pilots.iter().zip(&schedule.patterns).enumerate() {
        for (h, &x) in h_reduced.iter().zip(pilots) {
            for j in 0..schedule.reduced {
                let c = amp * x * pattern[j];
                for r in 0..m {
                    y[i * m + r] += c * h[(r, j)];
                }
            }
        }
    }
    Ok(y)
}

/// A factored step-3 system together with its slot accounting.
#[derive(Debug)]
pub struct Step3Plan {
    pub schedule: Step3Schedule,
    pub solver: LeastSquares,
    /// `⌈K Ñ / M⌉`.
    pub nominal_slots: usize,
    /// Configured slots on top of the nominal count.
    pub margin_slots: usize,
    /// Slots added by the rank fallback.
    pub extra_slots: usize,
}

impl Step3Plan {
    pub fn slots(&self) -> usize {
        self.schedule.slots()
    }
}

/// Chooses the step-3 slot count and factors `Ξ`.
///
/// Starts at `⌈K Ñ / M⌉ + margin`. If `Ξ` is rank deficient, it retries at
/// `⌈K Ñ / min(M, Ñ)⌉` (fewer slots can never reach full rank), then one slot
/// at a time up to `max_extra_slots` beyond the start. The last failure is
/// returned if nothing works.
pub fn plan_step3(
    h_bar: &Mat<Complex64>,
    users: usize,
    margin: usize,
    max_extra_slots: usize,
) -> Result<Step3Plan> {
    let (m, nr) = (h_bar.nrows(), h_bar.ncols());
    if m == 0 || nr == 0 || users == 0 {
        return Err(Error::ShapeMismatch {
            expected: "non-empty step-3 system".into(),
            got: format!("M={m} N~={nr} K={users}"),
        });
    }
    let nominal = nominal_slots(users, nr, m);
    let bound = nominal_slots(users, nr, m.min(nr));
    let start = nominal + margin;
    let last = (start + max_extra_slots).max(bound);

    let mut candidates = vec![start];
    candidates.extend(bound.max(start + 1)..=last);

    let mut failure = None;
    for slots in candidates {
        let schedule = Step3Schedule::new(users, nr, slots);
        let xi = build_xi(h_bar, &schedule)?;
        match LeastSquares::new(&xi, DEFAULT_RCOND) {
            Ok(solver) => {
                return Ok(Step3Plan {
                    schedule,
                    solver,
                    nominal_slots: nominal,
                    margin_slots: margin,
                    extra_slots: slots - start,
                })
            }
            Err(e @ Error::RankDeficient { .. }) => failure = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(failure.expect("at least one candidate slot count"))
}

/// `λ̄ = Ξ⁺ y / √p_u`, split into one length-Ñ vector per user.
pub fn solve_scaling(plan: &Step3Plan, y: &Col<Complex64>, user_power: f64) -> Result<Vec<Vec<Complex64>>> {
    let x = plan.solver.solve(y)?;
    let nr = plan.schedule.reduced;
    let inv = 1.0 / user_power.sqrt();
    Ok((0..plan.schedule.users)
        .map(|k| (0..nr).map(|j| x[k * nr + j] * inv).collect())
        .collect())
}

/// `Ĥ_k = scatter(H̄ diag(λ̄_k))`, zero outside `omega`.
pub fn reconstruct(
    h_bar: &Mat<Complex64>,
    lambdas: &[Vec<Complex64>],
    omega: &[usize],
    n: usize,
) -> Result<Vec<Mat<Complex64>>> {
    lambdas
        .iter()
        .map(|l| {
            if l.len() != h_bar.ncols() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} scaling entries", h_bar.ncols()),
                    got: l.len().to_string(),
                });
            }
            scatter_columns(&mul_diag(h_bar, l), omega, n)
        })
        .collect()
}

/// Result of one scaling-vector estimation.
#[derive(Debug, Clone)]
pub struct EstimationOutput {
    /// Anchor estimate `Ĥ_a`, M x N.
    pub h_anchor: Mat<Complex64>,
    /// Detected BS-side mask `V̂_G`.
    pub detected_mask: VisibilityMask,
    /// Sorted support `Ω_G`.
    pub support: Vec<usize>,
    /// Per-user scaling vectors `λ̄_k` on `Ω_G`.
    pub lambdas: Vec<Vec<Complex64>>,
    /// Per-user estimates `Ĥ_k`, zero outside `Ω_G`.
    pub h_users: Vec<Mat<Complex64>>,
    pub nominal_slots: usize,
    pub margin_slots: usize,
    pub extra_slots: usize,
    pub condition_estimate: f64,
}

impl EstimationOutput {
    pub fn reduced_dim(&self) -> usize {
        self.support.len()
    }

    /// Step-3 slots actually transmitted.
    pub fn step3_slots(&self) -> usize {
        self.nominal_slots + self.margin_slots + self.extra_slots
    }
}

/// Steps 2-3 given an anchor estimate and support: factors `Ξ` from
/// `H̄ = Ĥ_a(:, Ω)`, simulates the users' joint transmission on the true
/// reduced channels and reconstructs every `Ĥ_k`.
pub(crate) fn estimate_users_on_support<R: Rng + ?Sized>(
    real: &ChannelRealization,
    h_ref: &Mat<Complex64>,
    support: &[usize],
    users: &[usize],
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<(Vec<Vec<Complex64>>, Vec<Mat<Complex64>>, Step3Plan)> {
    let h_bar = reduce_columns(h_ref, support)?;
    let step3 = plan_step3(&h_bar, users.len(), plan.step3_margin, plan.max_extra_slots)?;
    let truth = users
        .iter()
        .map(|&k| reduce_columns(&real.h_users[k], support))
        .collect::<Result<Vec<_>>>()?;
    let y = simulate_step3(&truth, &step3.schedule, plan.user_power, plan.noise_var, rng)?;
    let lambdas = solve_scaling(&step3, &y, plan.user_power)?;
    let h_users = reconstruct(&h_bar, &lambdas, support, real.irs_elements())?;
    Ok((lambdas, h_users, step3))
}

/// Anchor estimate (or the truth under `oracle_anchor`).
pub(crate) fn anchor_estimate<R: Rng + ?Sized>(
    real: &ChannelRealization,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<Mat<Complex64>> {
    if plan.oracle_anchor {
        return Ok(real.h_anchor.clone());
    }
    let phi1 = dft_reflection_matrix(real.irs_elements());
    let y1 = simulate_step1(&real.h_anchor, &phi1, plan.anchor_power, plan.noise_var, rng)?;
    estimate_anchor(&y1, &phi1, plan.anchor_power)
}

/// Full three-step pipeline. Noise is drawn from `rng` in slot order.
pub fn estimate_proposed<R: Rng + ?Sized>(
    real: &ChannelRealization,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<EstimationOutput> {
    plan.validate()?;
    let h_anchor = anchor_estimate(real, plan, rng)?;
    let zeta = detection_threshold(&h_anchor, plan);
    let (detected_mask, support) = detect_vr(&h_anchor, zeta)?;
    finish(real, h_anchor, detected_mask, support, plan, rng)
}

pub(crate) fn finish<R: Rng + ?Sized>(
    real: &ChannelRealization,
    h_anchor: Mat<Complex64>,
    detected_mask: VisibilityMask,
    support: Vec<usize>,
    plan: &PilotPlan,
    rng: &mut R,
) -> Result<EstimationOutput> {
    let users: Vec<usize> = (0..real.users()).collect();
    let (lambdas, h_users, step3) =
        estimate_users_on_support(real, &h_anchor, &support, &users, plan, rng)?;
    Ok(EstimationOutput {
        h_anchor,
        detected_mask,
        support,
        lambdas,
        h_users,
        nominal_slots: step3.nominal_slots,
        margin_slots: step3.margin_slots,
        extra_slots: step3.extra_slots,
        condition_estimate: step3.solver.condition_estimate(),
    })
}
