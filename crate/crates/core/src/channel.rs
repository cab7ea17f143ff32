//! Ground-truth channel synthesis: near-field LoS links, double-sided
//! visibility-region masks and the cascaded BS–IRS–user matrices.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, SystemGeometry};
use crate::linalg::mul_diag;

/// Free-space LoS coefficient `λ/(4πd) · exp(-j 2π d / λ)`.
pub fn los_entry(d: f64, wavelength: f64) -> Result<Complex64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    let amplitude = wavelength / (4.0 * PI * d);
    Ok(Complex64::from_polar(amplitude, -TAU * d / wavelength))
}

/// Phase model for the per-link gain of the BS–IRS channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsLinkPhase {
    /// Pure spherical-wave phase. The resulting matrix is numerically
    /// rank 2-3 for the default geometry.
    FreeSpace,
    /// Spherical-wave phase times an i.i.d. uniform phase per (antenna,
    /// element) link.
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub bs_link_phase: BsLinkPhase,
}

/// Unmasked channels straight from the propagation model.
#[derive(Debug, Clone)]
pub struct RawChannels {
    /// BS–IRS channel, M x N.
    pub g: Mat<Complex64>,
    /// Anchor–IRS reflected vector, length N.
    pub r_anchor: Vec<Complex64>,
    /// User–IRS reflected vectors, K x N.
    pub r_users: Vec<Vec<Complex64>>,
}

impl RawChannels {
    /// Mean per-entry power of the unmasked anchor cascade `G diag(r_a)`.
    pub fn anchor_gain(&self) -> f64 {
        let (m, n) = (self.g.nrows(), self.g.ncols());
        let mut acc = 0.0;
        for j in 0..n {
            let ra = self.r_anchor[j].norm_sqr();
            for i in 0..m {
                acc += self.g[(i, j)].norm_sqr() * ra;
            }
        }
        acc / (m * n) as f64
    }
}

fn reflected_vector(
    geometry: &SystemGeometry,
    source: crate::geometry::Point3,
) -> Result<Vec<Complex64>> {
    geometry
        .irs_positions
        .iter()
        .map(|&e| los_entry(distance(source, e), geometry.wavelength))
        .collect()
}

/// LoS channels for every link in `geometry`. `rng` is only consumed by the
/// random BS-link phase model.
pub fn synth_full_channel<R: Rng + ?Sized>(
    geometry: &SystemGeometry,
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<RawChannels> {
    let (m, n) = (geometry.bs_antennas(), geometry.irs_elements());
    let mut g = Mat::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            let d = distance(geometry.bs_positions[i], geometry.irs_positions[j]);
            g[(i, j)] = los_entry(d, geometry.wavelength)?;
        }
    }
    if config.bs_link_phase == BsLinkPhase::Random {
        for j in 0..n {
            for i in 0..m {
                g[(i, j)] *= Complex64::from_polar(1.0, TAU * rng.random::<f64>());
            }
        }
    }
    let r_anchor = reflected_vector(geometry, geometry.anchor_position)?;
    let r_users = geometry
        .user_positions
        .iter()
        .map(|&u| reflected_vector(geometry, u))
        .collect::<Result<_>>()?;
    Ok(RawChannels {
        g,
        r_anchor,
        r_users,
    })
}

/// How a visibility mask is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// A uniformly random subset of exactly `round(ρN)` elements is visible;
    /// on the BS side every antenna shares the same set.
    ColumnConstant,
    /// A single rectangular sub-grid of area closest to `ρN` at a random
    /// offset; on the BS side every antenna shares it.
    ContiguousBlock,
    /// Independent Bernoulli(ρ) per mask entry.
    PerEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VrConfig {
    /// Target fraction of IRS elements visible to the BS.
    pub bs_fraction: f64,
    /// Target fraction of IRS elements visible to each user.
    pub user_fraction: f64,
    pub bs_mode: MaskMode,
    pub user_mode: MaskMode,
}

impl Default for VrConfig {
    fn default() -> Self {
        Self {
            bs_fraction: 128.0 / 480.0,
            user_fraction: 0.5,
            bs_mode: MaskMode::ColumnConstant,
            user_mode: MaskMode::ContiguousBlock,
        }
    }
}

impl VrConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [("bs", self.bs_fraction), ("user", self.user_fraction)] {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidVrConfig(format!(
                    "{name} visible fraction must lie in (0, 1], got {rho}"
                )));
            }
        }
        Ok(())
    }

    /// Number of BS-visible elements implied by `bs_fraction` for the
    /// exact-count modes.
    pub fn bs_visible_target(&self, elements: usize) -> usize {
        target_count(self.bs_fraction, elements)
    }
}

fn target_count(rho: f64, elements: usize) -> usize {
    ((rho * elements as f64).round() as usize).clamp(1, elements)
}

/// Binary M x N mask stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl VisibilityMask {
    pub fn new(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(rows, cols, false);
        for j in 0..cols {
            for i in 0..rows {
                mask.set(i, j, f(i, j));
            }
        }
        mask
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[col * self.rows + row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[col * self.rows + row] = value;
    }

    /// Number of visible entries.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Sorted indices of columns with at least one visible entry.
    pub fn visible_columns(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&j| (0..self.rows).any(|i| self.get(i, j)))
            .collect()
    }

    /// Hadamard product with a complex matrix.
    pub fn apply(&self, m: &Mat<Complex64>) -> Mat<Complex64> {
        assert_eq!((m.nrows(), m.ncols()), (self.rows, self.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| {
            if self.get(i, j) {
                m[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// BS-side and user-side visibility masks for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct VrMasks {
    pub bs: VisibilityMask,
    pub users: Vec<Vec<bool>>,
}

/// Rectangle `(bx, by)` inside an `nx x ny` grid whose area is closest to
/// `target`; ties go to the shape closest to the grid's aspect ratio.
fn block_shape(nx: usize, ny: usize, target: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let mut best_key = (usize::MAX, f64::INFINITY);
    for bx in 1..=nx {
        let by = ((target as f64 / bx as f64).round() as usize).clamp(1, ny);
        let err = (bx * by).abs_diff(target);
        let aspect = (bx as f64 / nx as f64 - by as f64 / ny as f64).abs();
        if err < best_key.0 || (err == best_key.0 && aspect < best_key.1) {
            best = (bx, by);
            best_key = (err, aspect);
        }
    }
    best
}

fn draw_visible_set<R: Rng + ?Sized>(
    mode: MaskMode,
    rho: f64,
    nx: usize,
    ny: usize,
    rng: &mut R,
) -> Vec<bool> {
    let n = nx * ny;
    let mut visible = vec![false; n];
    match mode {
        MaskMode::ColumnConstant => {
            for idx in sample(rng, n, target_count(rho, n)) {
                visible[idx] = true;
            }
        }
        MaskMode::ContiguousBlock => {
            let (bx, by) = block_shape(nx, ny, target_count(rho, n));
            let x0 = rng.random_range(0..=nx - bx);
            let y0 = rng.random_range(0..=ny - by);
            for iy in y0..y0 + by {
                for ix in x0..x0 + bx {
                    visible[iy * nx + ix] = true;
                }
            }
        }
        MaskMode::PerEntry => {
            for v in visible.iter_mut() {
                *v = rng.random::<f64>() < rho;
            }
        }
    }
    visible
}

/// Draws the BS-side mask `V_G` and one user-side mask `v_k` per user.
///
/// Every user mask has at least one visible element.
pub fn gen_vr_masks<R: Rng + ?Sized>(
    geometry: &SystemGeometry,
    config: &VrConfig,
    rng: &mut R,
) -> Result<VrMasks> {
    config.validate()?;
    let (m, nx, ny) = (geometry.bs_antennas(), geometry.irs_nx, geometry.irs_ny);
    let n = nx * ny;

    let bs = match config.bs_mode {
        MaskMode::PerEntry => {
            let mut mask = VisibilityMask::new(m, n, false);
            for j in 0..n {
                for i in 0..m {
                    mask.set(i, j, rng.random::<f64>() < config.bs_fraction);
                }
            }
            mask
        }
        mode => {
            let columns = draw_visible_set(mode, config.bs_fraction, nx, ny, rng);
            VisibilityMask::from_fn(m, n, |_, j| columns[j])
        }
    };

    let users = (0..geometry.users())
        .map(|_| {
            let mut v = draw_visible_set(config.user_mode, config.user_fraction, nx, ny, rng);
            if !v.iter().any(|&x| x) {
                v[rng.random_range(0..n)] = true;
            }
            v
        })
        .collect();

    Ok(VrMasks { bs, users })
}

/// One ground-truth channel realization.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Masked BS–IRS channel `G = Ǧ ⊙ V_G`, M x N.
    pub g: Mat<Complex64>,
    pub bs_mask: VisibilityMask,
    /// Masked user reflected vectors `r_k`.
    pub r_users: Vec<Vec<Complex64>>,
    pub user_masks: Vec<Vec<bool>>,
    /// Unmasked anchor reflected vector `r_a`.
    pub r_anchor: Vec<Complex64>,
    /// Cascaded user channels `H_k = G diag(r_k)`.
    pub h_users: Vec<Mat<Complex64>>,
    /// Cascaded anchor channel `H_a = G diag(r_a)`.
    pub h_anchor: Mat<Complex64>,
    /// Mean per-entry power of the unmasked anchor cascade; the reference
    /// gain for SNR definitions.
    pub anchor_gain: f64,
}

impl ChannelRealization {
    pub fn bs_antennas(&self) -> usize {
        self.g.nrows()
    }

    pub fn irs_elements(&self) -> usize {
        self.g.ncols()
    }

    pub fn users(&self) -> usize {
        self.h_users.len()
    }

    /// Indices of IRS elements visible to at least one BS antenna.
    pub fn visible_support(&self) -> Vec<usize> {
        self.bs_mask.visible_columns()
    }
}

/// Applies the masks and forms the cascaded channels.
pub fn apply_masks_and_cascade(raw: &RawChannels, masks: &VrMasks) -> Result<ChannelRealization> {
    let (m, n) = (raw.g.nrows(), raw.g.ncols());
    let mismatch = |what: &str, expected: String, got: String| {
        Err(Error::ShapeMismatch {
            expected: format!("{what} {expected}"),
            got,
        })
    };
    if (masks.bs.rows(), masks.bs.cols()) != (m, n) {
        return mismatch(
            "BS mask",
            format!("{m}x{n}"),
            format!("{}x{}", masks.bs.rows(), masks.bs.cols()),
        );
    }
    if raw.r_anchor.len() != n {
        return mismatch("anchor vector", n.to_string(), raw.r_anchor.len().to_string());
    }
    if masks.users.len() != raw.r_users.len() {
        return mismatch(
            "user mask count",
            raw.r_users.len().to_string(),
            masks.users.len().to_string(),
        );
    }
    for (r, v) in raw.r_users.iter().zip(&masks.users) {
        if r.len() != n || v.len() != n {
            return mismatch("user vector", n.to_string(), format!("{}/{}", r.len(), v.len()));
        }
    }

    let g = masks.bs.apply(&raw.g);
    let r_users: Vec<Vec<Complex64>> = raw
        .r_users
        .iter()
        .zip(&masks.users)
        .map(|(r, v)| {
            r.iter()
                .zip(v)
                .map(|(&x, &vis)| if vis { x } else { Complex64::new(0.0, 0.0) })
                .collect()
        })
        .collect();
    let h_users = r_users.iter().map(|r| mul_diag(&g, r)).collect();
    let h_anchor = mul_diag(&g, &raw.r_anchor);

    Ok(ChannelRealization {
        g,
        bs_mask: masks.bs.clone(),
        r_users,
        user_masks: masks.users.clone(),
        r_anchor: raw.r_anchor.clone(),
        h_users,
        h_anchor,
        anchor_gain: raw.anchor_gain(),
    })
}

/// Synthesizes channels and masks and cascades them, all from one stream.
pub fn realize<R: Rng + ?Sized>(
    geometry: &SystemGeometry,
    channel: &ChannelConfig,
    vr: &VrConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let raw = synth_full_channel(geometry, channel, rng)?;
    let masks = gen_vr_masks(geometry, vr, rng)?;
    apply_masks_and_cascade(&raw, &masks)
}

/// Writes a realization as whitespace-separated columns
/// `quantity index real imag mask`, one line per entry.
///
/// Matrices use the row-major linear index `m * N + n`; vectors use `n`.
/// Quantities are `G`, `r_a`, `H_a`, then `r_k<k>` and `H_k<k>` per user
/// (0-based `k`).
pub fn write_columnar<W: Write>(real: &ChannelRealization, mut out: W) -> Result<()> {
    let (m, n) = (real.bs_antennas(), real.irs_elements());
    writeln!(
        out,
        "# M={m} N={n} K={} anchor_gain={:e}",
        real.users(),
        real.anchor_gain
    )?;
    writeln!(out, "# quantity index real imag mask")?;

    let mut matrix = |name: &str, h: &Mat<Complex64>, mask: &dyn Fn(usize, usize) -> bool| {
        for i in 0..m {
            for j in 0..n {
                let z = h[(i, j)];
                writeln!(
                    out,
                    "{name} {} {:e} {:e} {}",
                    i * n + j,
                    z.re,
                    z.im,
                    u8::from(mask(i, j))
                )?;
            }
        }
        Ok::<_, std::io::Error>(())
    };
    matrix("G", &real.g, &|i, j| real.bs_mask.get(i, j))?;
    matrix("H_a", &real.h_anchor, &|i, j| real.bs_mask.get(i, j))?;
    for (k, h) in real.h_users.iter().enumerate() {
        let v = &real.user_masks[k];
        matrix(&format!("H_k{k}"), h, &|i, j| real.bs_mask.get(i, j) && v[j])?;
    }
    for (j, z) in real.r_anchor.iter().enumerate() {
        writeln!(out, "r_a {j} {:e} {:e} 1", z.re, z.im)?;
    }
    for (k, r) in real.r_users.iter().enumerate() {
        for (j, z) in r.iter().enumerate() {
            let vis = u8::from(real.user_masks[k][j]);
            writeln!(out, "r_k{k} {j} {:e} {:e} {vis}", z.re, z.im)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometryConfig, Point3};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_geometry(m: usize, nx: usize, ny: usize, k: usize, seed: u64) -> SystemGeometry {
        let config = GeometryConfig {
            bs_antennas: m,
            irs_nx: nx,
            irs_ny: ny,
            ..GeometryConfig::default()
        };
        build_geometry(&config, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn los_entry_examples() {
        let lam = 0.03;
        let z = los_entry(lam, lam).unwrap();
        assert_relative_eq!(z.norm(), 1.0 / (4.0 * PI), max_relative = 1e-12);
        assert!(z.arg().abs() < 1e-9);

        let half = los_entry(lam / 2.0, lam).unwrap();
        assert!(half.re < 0.0);
        assert!(half.im.abs() < 1e-12 * half.norm());

        let far = los_entry(104.403, lam).unwrap();
        assert_relative_eq!(far.norm(), 0.03 / (4.0 * PI * 104.403), max_relative = 1e-12);
        assert_relative_eq!(far.norm(), 2.287e-5, max_relative = 1e-3);

        assert!(matches!(los_entry(0.0, lam), Err(Error::NonPositiveDistance(_))));
        assert!(los_entry(-1.0, lam).is_err());
    }

    #[test]
    fn single_link_reduction() {
        let geometry = small_geometry(1, 1, 1, 1, 0);
        let raw = synth_full_channel(
            &geometry,
            &ChannelConfig {
                bs_link_phase: BsLinkPhase::FreeSpace,
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let e = geometry.irs_positions[0];
        let lam = geometry.wavelength;
        assert_eq!(raw.g[(0, 0)], los_entry(distance(geometry.bs_positions[0], e), lam).unwrap());
        assert_eq!(raw.r_anchor[0], los_entry(distance(geometry.anchor_position, e), lam).unwrap());
        assert_eq!(
            raw.r_users[0][0],
            los_entry(distance(geometry.user_positions[0], e), lam).unwrap()
        );
    }

    #[test]
    fn equidistant_elements_match() {
        // The BS sits on the perpendicular bisector of elements 0 and 1.
        let mut geometry = small_geometry(1, 2, 1, 1, 0);
        geometry.bs_positions[0] = Point3::new(0.0, 30.0, 50.0);
        let raw = synth_full_channel(
            &geometry,
            &ChannelConfig {
                bs_link_phase: BsLinkPhase::FreeSpace,
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(raw.g[(0, 0)], raw.g[(0, 1)]);
    }

    #[test]
    fn far_field_phase_limit() {
        // Two elements spaced along x; a user far away at angle θ from
        // broadside (+y) sees a phase step of 2π s sinθ / λ.
        let lam = 0.03;
        let s = lam / 2.0;
        let theta: f64 = 0.3;
        let range = 1e6;
        let e0 = Point3::new(0.0, 0.0, 0.0);
        let e1 = Point3::new(s, 0.0, 0.0);
        let user = Point3::new(range * theta.sin(), range * theta.cos(), 0.0);
        let a0 = los_entry(distance(user, e0), lam).unwrap();
        let a1 = los_entry(distance(user, e1), lam).unwrap();
        let step = (a1 * a0.conj()).arg();
        let planar = TAU * s * theta.sin() / lam;
        assert!((step - planar).abs() < 1e-6, "{step} vs {planar}");
    }

    #[test]
    fn random_phase_keeps_magnitudes() {
        let geometry = small_geometry(4, 3, 2, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let free = synth_full_channel(
            &geometry,
            &ChannelConfig {
                bs_link_phase: BsLinkPhase::FreeSpace,
            },
            &mut rng,
        )
        .unwrap();
        let random = synth_full_channel(&geometry, &ChannelConfig::default(), &mut rng).unwrap();
        for j in 0..6 {
            for i in 0..4 {
                assert_relative_eq!(free.g[(i, j)].norm(), random.g[(i, j)].norm(), max_relative = 1e-12);
            }
        }
        assert_relative_eq!(free.anchor_gain(), random.anchor_gain(), max_relative = 1e-12);
    }

    #[test]
    fn full_visibility_masks() {
        let geometry = small_geometry(4, 5, 6, 3, 0);
        let vr = VrConfig {
            bs_fraction: 1.0,
            user_fraction: 1.0,
            ..VrConfig::default()
        };
        for mode in [MaskMode::ColumnConstant, MaskMode::ContiguousBlock, MaskMode::PerEntry] {
            let vr = VrConfig {
                bs_mode: mode,
                user_mode: mode,
                ..vr.clone()
            };
            let masks = gen_vr_masks(&geometry, &vr, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            assert_eq!(masks.bs.count(), 4 * 30);
            assert!(masks.users.iter().all(|v| v.iter().all(|&x| x)));
        }
    }

    #[test]
    fn column_constant_count() {
        let geometry = small_geometry(128, 20, 24, 8, 0);
        let vr = VrConfig::default();
        let masks = gen_vr_masks(&geometry, &vr, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let support = masks.bs.visible_columns();
        assert_eq!(support.len(), 128);
        for &j in &support {
            assert!((0..128).all(|i| masks.bs.get(i, j)));
        }
        assert_eq!(masks.bs.count(), 128 * 128);
        // ⌈K Ñ / M⌉ = K at K = 8.
        assert_eq!((8 * support.len()).div_ceil(128), 8);
    }

    #[test]
    fn contiguous_block_shape() {
        let geometry = small_geometry(2, 20, 24, 4, 0);
        let vr = VrConfig {
            user_fraction: 0.25,
            user_mode: MaskMode::ContiguousBlock,
            ..VrConfig::default()
        };
        assert_eq!(block_shape(20, 24, 120), (10, 12));
        let masks = gen_vr_masks(&geometry, &vr, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for v in &masks.users {
            let idx: Vec<usize> = (0..480).filter(|&n| v[n]).collect();
            assert_eq!(idx.len(), 120);
            let xs: Vec<usize> = idx.iter().map(|n| n % 20).collect();
            let ys: Vec<usize> = idx.iter().map(|n| n / 20).collect();
            let (x0, x1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
            let (y0, y1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
            assert_eq!((x1 - x0 + 1, y1 - y0 + 1), (10, 12));
        }
    }

    #[test]
    fn rejects_invisible_user() {
        let geometry = small_geometry(2, 4, 4, 1, 0);
        let vr = VrConfig {
            user_fraction: 0.0,
            ..VrConfig::default()
        };
        assert!(matches!(
            gen_vr_masks(&geometry, &vr, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::InvalidVrConfig(_))
        ));
    }

    #[test]
    fn per_entry_user_never_empty() {
        let geometry = small_geometry(2, 2, 2, 50, 0);
        let vr = VrConfig {
            user_fraction: 0.01,
            user_mode: MaskMode::PerEntry,
            ..VrConfig::default()
        };
        let masks = gen_vr_masks(&geometry, &vr, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(masks.users.iter().all(|v| v.iter().any(|&x| x)));
    }

    fn random_raw(m: usize, n: usize, k: usize, rng: &mut ChaCha8Rng) -> RawChannels {
        let c = |rng: &mut ChaCha8Rng| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        RawChannels {
            g: Mat::from_fn(m, n, |_, _| c(rng)),
            r_anchor: (0..n).map(|_| c(rng)).collect(),
            r_users: (0..k).map(|_| (0..n).map(|_| c(rng)).collect()).collect(),
        }
    }

    #[test]
    fn cascade_entrywise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = random_raw(3, 4, 2, &mut rng);
        let masks = VrMasks {
            bs: VisibilityMask::from_fn(3, 4, |i, j| (i + j) % 3 != 0),
            users: vec![vec![true, false, true, true], vec![false, true, true, false]],
        };
        let real = apply_masks_and_cascade(&raw, &masks).unwrap();
        for k in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    let g = if masks.bs.get(i, j) { raw.g[(i, j)] } else { Complex64::new(0.0, 0.0) };
                    let r = if masks.users[k][j] { raw.r_users[k][j] } else { Complex64::new(0.0, 0.0) };
                    assert_eq!(real.h_users[k][(i, j)], g * r);
                    assert_eq!(real.h_anchor[(i, j)], g * raw.r_anchor[j]);
                }
            }
        }
    }

    #[test]
    fn identity_mask_and_annihilated_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw = random_raw(3, 4, 2, &mut rng);
        let all = VrMasks {
            bs: VisibilityMask::new(3, 4, true),
            users: vec![vec![true; 4]; 2],
        };
        let real = apply_masks_and_cascade(&raw, &all).unwrap();
        assert_eq!(real.h_users[1], mul_diag(&raw.g, &raw.r_users[1]));

        let dead = VrMasks {
            bs: VisibilityMask::from_fn(3, 4, |_, j| j != 2),
            users: vec![vec![true; 4]; 2],
        };
        let real = apply_masks_and_cascade(&raw, &dead).unwrap();
        for i in 0..3 {
            assert_eq!(real.h_anchor[(i, 2)], Complex64::new(0.0, 0.0));
            for h in &real.h_users {
                assert_eq!(h[(i, 2)], Complex64::new(0.0, 0.0));
            }
        }
        assert_eq!(real.visible_support(), vec![0, 1, 3]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let raw = random_raw(3, 4, 1, &mut rng);
        let masks = VrMasks {
            bs: VisibilityMask::new(3, 5, true),
            users: vec![vec![true; 4]],
        };
        assert!(matches!(
            apply_masks_and_cascade(&raw, &masks),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn realization_invariants() {
        let geometry = small_geometry(8, 6, 5, 3, 21);
        let real = realize(
            &geometry,
            &ChannelConfig::default(),
            &VrConfig {
                bs_mode: MaskMode::PerEntry,
                ..VrConfig::default()
            },
            &mut ChaCha8Rng::seed_from_u64(21),
        )
        .unwrap();
        assert!(real.r_anchor.iter().all(|z| z.norm() > 0.0));
        for j in 0..30 {
            for i in 0..8 {
                if !real.bs_mask.get(i, j) {
                    assert_eq!(real.g[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
            for k in 0..3 {
                if !real.user_masks[k][j] {
                    assert_eq!(real.r_users[k][j], Complex64::new(0.0, 0.0));
                }
            }
        }
        // Zero columns of H_a are exactly the invisible columns of V_G.
        let zero_cols: Vec<usize> = (0..30)
            .filter(|&j| (0..8).all(|i| real.h_anchor[(i, j)] == Complex64::new(0.0, 0.0)))
            .collect();
        let invisible: Vec<usize> = (0..30).filter(|j| !real.visible_support().contains(j)).collect();
        assert_eq!(zero_cols, invisible);
    }

    #[test]
    fn columnar_dump_layout() {
        let geometry = small_geometry(2, 2, 1, 1, 0);
        let real = realize(
            &geometry,
            &ChannelConfig::default(),
            &VrConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_columnar(&real, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        // G, H_a, H_k0 (2x2 each) + r_a, r_k0 (2 each)
        assert_eq!(lines.len(), 4 * 3 + 2 * 2);
        assert!(lines[0].starts_with("G 0 "));
        assert_eq!(lines[0].split_whitespace().count(), 5);
    }

    proptest! {
        #[test]
        fn mask_idempotent_and_cascade_linear(seed in 0u64..1000, cre in -2.0..2.0f64, cim in -2.0..2.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = random_raw(3, 5, 1, &mut rng);
            let mask = VisibilityMask::from_fn(3, 5, |i, j| (seed as usize + i * 7 + j * 3) % 4 != 0);
            prop_assert_eq!(mask.apply(&mask.apply(&raw.g)), mask.apply(&raw.g));

            let c = Complex64::new(cre, cim);
            let scaled: Vec<Complex64> = raw.r_users[0].iter().map(|&x| c * x).collect();
            let g = mask.apply(&raw.g);
            let h = mul_diag(&g, &raw.r_users[0]);
            let hc = mul_diag(&g, &scaled);
            for i in 0..3 {
                for j in 0..5 {
                    prop_assert!((hc[(i, j)] - c * h[(i, j)]).norm() <= 1e-12 * (1.0 + h[(i, j)].norm()));
                }
            }
        }
    }
}
