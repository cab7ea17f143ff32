//! Node placement for the BS array, the planar IRS, the users and the anchor.
//!
//! Coordinates are in meters. The IRS is a uniform rectangular grid lying in
//! the x-z plane (a wall facing +y), indexed row-major: element
//! `n = iy * nx + ix`, with `ix` running along +x and `iy` along +z. The BS is a
//! uniform linear array along the x-axis.

use std::ops::Sub;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point (or displacement) in 3-D space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Sub for Point3 {
    type Output = Point3;

    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

/// Euclidean distance between two points.
pub fn distance(a: Point3, b: Point3) -> f64 {
    (a - b).norm()
}

/// Rayleigh distance `2 (D_R + D_other)^2 / λ` separating near and far field
/// for two apertures `D_R` and `D_other`.
pub fn rayleigh_distance(irs_aperture: f64, other_aperture: f64, wavelength: f64) -> f64 {
    let d = irs_aperture + other_aperture;
    2.0 * d * d / wavelength
}

/// Where users are dropped in each trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserDisc {
    pub center: Point3,
    pub radius: f64,
}

impl Default for UserDisc {
    fn default() -> Self {
        Self {
            center: Point3::new(0.0, 20.0, 0.0),
            radius: 100.0,
        }
    }
}

/// Geometry section of the experiment configuration.
///
/// Defaults reproduce the simulation table: λ = 0.03 m, M = 128,
/// N = 20 x 24 = 480, BS at (100, 0, 20), IRS at (0, 0, 50) and anchor at
/// (20, 20, 50).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub wavelength: f64,
    pub bs_antennas: usize,
    pub irs_nx: usize,
    pub irs_ny: usize,
    /// IRS element spacing; `None` means λ/2.
    pub element_spacing: Option<f64>,
    /// BS antenna spacing; `None` means λ/2.
    pub bs_spacing: Option<f64>,
    pub bs_position: Point3,
    pub irs_position: Point3,
    pub anchor_position: Point3,
    pub user_disc: UserDisc,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            wavelength: 0.03,
            bs_antennas: 128,
            irs_nx: 20,
            irs_ny: 24,
            element_spacing: None,
            bs_spacing: None,
            bs_position: Point3::new(100.0, 0.0, 20.0),
            irs_position: Point3::new(0.0, 0.0, 50.0),
            anchor_position: Point3::new(20.0, 20.0, 50.0),
            user_disc: UserDisc::default(),
        }
    }
}

impl GeometryConfig {
    pub fn irs_elements(&self) -> usize {
        self.irs_nx * self.irs_ny
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing.unwrap_or(self.wavelength / 2.0)
    }

    pub fn bs_spacing(&self) -> f64 {
        self.bs_spacing.unwrap_or(self.wavelength / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGeometry(msg.to_string()));
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return bad("wavelength must be positive");
        }
        if self.bs_antennas == 0 {
            return bad("BS antenna count must be positive");
        }
        if self.irs_nx == 0 || self.irs_ny == 0 {
            return bad("IRS dimensions must be positive");
        }
        if !(self.element_spacing() > 0.0) || !(self.bs_spacing() > 0.0) {
            return bad("element spacing must be positive");
        }
        if !(self.user_disc.radius >= 0.0) {
            return bad("user disc radius must be non-negative");
        }
        let points = [
            self.bs_position,
            self.irs_position,
            self.anchor_position,
            self.user_disc.center,
        ];
        if points.iter().any(|p| !p.is_finite()) {
            return bad("positions must be finite");
        }
        Ok(())
    }
}

/// Positions of every radiating element in the system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGeometry {
    pub wavelength: f64,
    pub irs_nx: usize,
    pub irs_ny: usize,
    pub element_spacing: f64,
    pub bs_spacing: f64,
    pub bs_positions: Vec<Point3>,
    pub irs_positions: Vec<Point3>,
    pub user_positions: Vec<Point3>,
    pub anchor_position: Point3,
}

impl SystemGeometry {
    /// Number of BS antennas, M.
    pub fn bs_antennas(&self) -> usize {
        self.bs_positions.len()
    }

    /// Number of IRS elements, N.
    pub fn irs_elements(&self) -> usize {
        self.irs_positions.len()
    }

    /// Number of users, K.
    pub fn users(&self) -> usize {
        self.user_positions.len()
    }

    /// Diagonal of the IRS grid (first to last element centre).
    pub fn irs_aperture(&self) -> f64 {
        let dx = (self.irs_nx - 1) as f64 * self.element_spacing;
        let dy = (self.irs_ny - 1) as f64 * self.element_spacing;
        dx.hypot(dy)
    }

    /// Length of the BS array (first to last antenna).
    pub fn bs_aperture(&self) -> f64 {
        (self.bs_antennas() - 1) as f64 * self.bs_spacing
    }

    /// Near-field boundary between the IRS and the BS.
    pub fn bs_rayleigh_distance(&self) -> f64 {
        rayleigh_distance(self.irs_aperture(), self.bs_aperture(), self.wavelength)
    }

    /// Near-field boundary between the IRS and a single-antenna user.
    pub fn user_rayleigh_distance(&self) -> f64 {
        rayleigh_distance(self.irs_aperture(), 0.0, self.wavelength)
    }

    fn check_distances(&self) -> Result<()> {
        let check = |tx: &[Point3], tx_name: &str| -> Result<()> {
            for (i, a) in tx.iter().enumerate() {
                for (n, b) in self.irs_positions.iter().enumerate() {
                    if distance(*a, *b) <= 0.0 {
                        return Err(Error::ZeroDistance {
                            from: format!("{tx_name} {i}"),
                            to: format!("IRS element {n}"),
                        });
                    }
                }
            }
            Ok(())
        };
        check(&self.bs_positions, "BS antenna")?;
        check(&self.user_positions, "user")?;
        check(std::slice::from_ref(&self.anchor_position), "anchor")
    }
}

/// Offsets of `count` points evenly spaced by `spacing` and centred on zero.
fn centred_offsets(count: usize, spacing: f64) -> impl Iterator<Item = f64> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count).map(move |i| (i as f64 - mid) * spacing)
}

/// Row-major IRS grid centred on `centre` in the x-z plane.
pub fn irs_grid(centre: Point3, nx: usize, ny: usize, spacing: f64) -> Vec<Point3> {
    let xs: Vec<f64> = centred_offsets(nx, spacing).collect();
    centred_offsets(ny, spacing)
        .flat_map(|dz| {
            xs.iter()
                .map(move |&dx| Point3::new(centre.x + dx, centre.y, centre.z + dz))
        })
        .collect()
}

/// Uniform linear array along x centred on `centre`.
pub fn bs_array(centre: Point3, antennas: usize, spacing: f64) -> Vec<Point3> {
    centred_offsets(antennas, spacing)
        .map(|dx| Point3::new(centre.x + dx, centre.y, centre.z))
        .collect()
}

/// Draws `users` points uniformly over the horizontal disc.
pub fn drop_users<R: Rng + ?Sized>(disc: &UserDisc, users: usize, rng: &mut R) -> Vec<Point3> {
    (0..users)
        .map(|_| {
            let r = disc.radius * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            Point3::new(
                disc.center.x + r * theta.cos(),
                disc.center.y + r * theta.sin(),
                disc.center.z,
            )
        })
        .collect()
}

/// Builds the full system geometry. Users are the only random part; they are
/// drawn from `rng`.
pub fn build_geometry<R: Rng + ?Sized>(
    config: &GeometryConfig,
    users: usize,
    rng: &mut R,
) -> Result<SystemGeometry> {
    config.validate()?;
    if users == 0 {
        return Err(Error::InvalidGeometry("user count must be positive".into()));
    }
    let geometry = SystemGeometry {
        wavelength: config.wavelength,
        irs_nx: config.irs_nx,
        irs_ny: config.irs_ny,
        element_spacing: config.element_spacing(),
        bs_spacing: config.bs_spacing(),
        bs_positions: bs_array(config.bs_position, config.bs_antennas, config.bs_spacing()),
        irs_positions: irs_grid(
            config.irs_position,
            config.irs_nx,
            config.irs_ny,
            config.element_spacing(),
        ),
        user_positions: drop_users(&config.user_disc, users, rng),
        anchor_position: config.anchor_position,
    };
    geometry.check_distances()?;
    Ok(geometry)
}
