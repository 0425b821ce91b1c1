//! Planar-array geometry and user placement.
//!
//! The base station carries a uniform planar array (UPA) of `M = M_H * M_V`
//! elements. In the array's local frame the elements lie in the x–y plane on
//! a rectangular lattice,
//!
//! ```text
//! u_m = [ i(m) * d_H * lambda,  j(m) * d_V * lambda,  0 ],
//! i(m) = (m - 1) mod M_H,   j(m) = floor((m - 1) / M_H),   m = 1..=M,
//! ```
//!
//! with spacings `d_H`, `d_V` in wavelengths and boresight along local +z.
//! An [`Orientation`] maps the local frame into the global frame (x, y
//! horizontal, z up): a horizontal panel keeps the identity, a vertical
//! panel stands in the global y–z plane with boresight along +x.
//!
//! A ground user is described by a [`UserPlacement`]: azimuth and
//! horizontal distance from the point under the base station, the platform
//! height, and the radius of the one-ring scatterer disk around the user.
//! [`one_ring_spreads`] converts a placement into the angular box over
//! which the scattered field arrives.
//!
//! # Example
//!
//! ```
//! use hapsim_core::geometry::{ArrayGeometry, Orientation, UserPlacement, one_ring_spreads};
//!
//! let geom = ArrayGeometry::new(4, 2, 0.5, 0.5, 0.12, Orientation::Horizontal).unwrap();
//! let p = geom.element_position(2).unwrap();
//! assert!((p[0] - 0.06).abs() < 1e-15);
//!
//! let user = UserPlacement::new(0.3, 500.0, 20_000.0, 50.0).unwrap();
//! let spreads = one_ring_spreads(&user).unwrap();
//! assert!(spreads.delta_phi > 0.0 && spreads.delta_theta > 0.0);
//! ```

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

// ---------- Errors ----------

/// Domain errors for array geometry and user placement.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// Panel dimensions must both be at least 1.
    #[error("panel dimensions must be at least 1x1 (got {m_h}x{m_v})")]
    InvalidPanel { m_h: usize, m_v: usize },
    /// Element spacings must be positive.
    #[error("element spacings must be positive (got d_h = {d_h}, d_v = {d_v})")]
    InvalidSpacing { d_h: f64, d_v: f64 },
    /// Carrier wavelength must be positive.
    #[error("wavelength must be positive (got {0})")]
    InvalidWavelength(f64),
    /// 1-based element index outside the panel.
    #[error("element index {m} outside 1..={n_elements}")]
    ElementIndex { m: usize, n_elements: usize },
    /// Horizontal distance must be positive.
    #[error("horizontal distance must be positive (got {0})")]
    InvalidDistance(f64),
    /// Platform height must be positive.
    #[error("platform height must be positive (got {0})")]
    InvalidHeight(f64),
    /// The scatterer ring must fit strictly inside the horizontal distance.
    #[error(
        "scatterer ring radius must satisfy 0 <= r < d (got r = {ring_radius}, d = {horizontal_distance})"
    )]
    RingTooLarge {
        ring_radius: f64,
        horizontal_distance: f64,
    },
}

// ---------- Array geometry ----------

/// Mounting orientation of the panel, fixing the local-to-global rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Panel parallel to the ground, boresight straight down at the cell.
    /// Local frame equals the global frame: because the elevation angle of
    /// the platform seen from the user equals the depression angle of the
    /// user seen from the platform, the user-to-platform direction already
    /// is the local steering direction.
    Horizontal,
    /// Panel standing in the global y–z plane, boresight along global +x
    /// (local x -> global y, local y -> global z, local z -> global x).
    Vertical,
}

impl Orientation {
    /// Rotation matrix taking local-frame coordinates to global-frame ones.
    pub fn rotation(self) -> Matrix3<f64> {
        match self {
            Orientation::Horizontal => Matrix3::identity(),
            Orientation::Vertical => Matrix3::new(
                0.0, 0.0, 1.0, //
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0,
            ),
        }
    }
}

/// Uniform planar array: `m_h x m_v` elements, spacings in wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    m_h: usize,
    m_v: usize,
    d_h: f64,
    d_v: f64,
    wavelength: f64,
    orientation: Orientation,
}

impl ArrayGeometry {
    /// Builds a panel, validating dimensions, spacings, and wavelength.
    pub fn new(
        m_h: usize,
        m_v: usize,
        d_h: f64,
        d_v: f64,
        wavelength: f64,
        orientation: Orientation,
    ) -> Result<Self, GeometryError> {
        if m_h < 1 || m_v < 1 {
            return Err(GeometryError::InvalidPanel { m_h, m_v });
        }
        if !(d_h > 0.0) || !(d_v > 0.0) {
            return Err(GeometryError::InvalidSpacing { d_h, d_v });
        }
        if !(wavelength > 0.0) {
            return Err(GeometryError::InvalidWavelength(wavelength));
        }
        Ok(Self {
            m_h,
            m_v,
            d_h,
            d_v,
            wavelength,
            orientation,
        })
    }

    /// Builds the most-square panel holding exactly `m_total` elements, the
    /// wider side horizontal (e.g. 4 -> 2x2, 6 -> 3x2, 100 -> 10x10).
    pub fn near_square(
        m_total: usize,
        spacing: f64,
        wavelength: f64,
        orientation: Orientation,
    ) -> Result<Self, GeometryError> {
        if m_total < 1 {
            return Err(GeometryError::InvalidPanel { m_h: m_total, m_v: 1 });
        }
        let mut m_v = (m_total as f64).sqrt().floor() as usize;
        while m_v > 1 && m_total % m_v != 0 {
            m_v -= 1;
        }
        Self::new(m_total / m_v, m_v, spacing, spacing, wavelength, orientation)
    }

    /// Horizontal element count `M_H`.
    pub fn m_h(&self) -> usize {
        self.m_h
    }

    /// Vertical element count `M_V`.
    pub fn m_v(&self) -> usize {
        self.m_v
    }

    /// Horizontal spacing in wavelengths.
    pub fn d_h(&self) -> f64 {
        self.d_h
    }

    /// Vertical spacing in wavelengths.
    pub fn d_v(&self) -> f64 {
        self.d_v
    }

    /// Carrier wavelength in metres.
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Mounting orientation.
    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Total element count `M = M_H * M_V`.
    pub fn n_elements(&self) -> usize {
        self.m_h * self.m_v
    }

    /// Position of element `m` (1-based) in the local frame, metres:
    /// `[ i(m)*d_H*lambda, j(m)*d_V*lambda, 0 ]`.
    pub fn element_position_local(&self, m: usize) -> Result<Vector3<f64>, GeometryError> {
        let n = self.n_elements();
        if m < 1 || m > n {
            return Err(GeometryError::ElementIndex { m, n_elements: n });
        }
        let i = ((m - 1) % self.m_h) as f64;
        let j = ((m - 1) / self.m_h) as f64;
        Ok(Vector3::new(
            i * self.d_h * self.wavelength,
            j * self.d_v * self.wavelength,
            0.0,
        ))
    }

    /// Position of element `m` (1-based) in the global frame, i.e. the local
    /// lattice position transformed by the orientation rotation.
    pub fn element_position(&self, m: usize) -> Result<Vector3<f64>, GeometryError> {
        Ok(self.orientation.rotation() * self.element_position_local(m)?)
    }

    /// Maps a global-frame direction given as (azimuth, elevation) to the
    /// same direction expressed as (azimuth, elevation) in the panel's local
    /// frame. Steering vectors and covariance integrals evaluate in the
    /// local frame, so this is the bridge from user placements to angles.
    pub fn local_angles(&self, azimuth: f64, elevation: f64) -> (f64, f64) {
        match self.orientation {
            Orientation::Horizontal => (azimuth, elevation),
            Orientation::Vertical => {
                let dir = direction(azimuth, elevation);
                let local = self.orientation.rotation().transpose() * dir;
                let el = local.z.clamp(-1.0, 1.0).asin();
                let az = local.y.atan2(local.x);
                (az, el)
            }
        }
    }
}

/// Unit direction vector for (azimuth, elevation) in a right-handed frame:
/// `[cos(el)cos(az), cos(el)sin(az), sin(el)]`.
pub fn direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let (sin_el, cos_el) = elevation.sin_cos();
    let (sin_az, cos_az) = azimuth.sin_cos();
    Vector3::new(cos_el * cos_az, cos_el * sin_az, sin_el)
}

/// Wave vector for a plane wave from (azimuth, elevation):
/// `k = (2*pi/lambda) * [cos(el)cos(az), cos(el)sin(az), sin(el)]`.
///
/// Its Euclidean norm is `2*pi/lambda` for every angle pair.
pub fn wave_vector(
    azimuth: f64,
    elevation: f64,
    wavelength: f64,
) -> Result<Vector3<f64>, GeometryError> {
    if !(wavelength > 0.0) {
        return Err(GeometryError::InvalidWavelength(wavelength));
    }
    Ok(direction(azimuth, elevation) * (2.0 * std::f64::consts::PI / wavelength))
}

// ---------- User placement ----------

/// A ground user relative to the base station.
///
/// `elevation` and `distance` are derived at construction: the slant range
/// is `hypot(h, d)` and the elevation is the centre of the one-ring angular
/// box, `(atan(h/(d-r)) + atan(h/(d+r))) / 2`, which tends to `atan(h/d)` as
/// the ring radius vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPlacement {
    /// Azimuth of the user seen from under the base station, radians.
    pub azimuth: f64,
    /// Elevation of the base station seen from the user (ring-box centre), radians.
    pub elevation: f64,
    /// Slant range from user to base station, metres.
    pub distance: f64,
    /// Ground-plane distance from the point under the base station, metres.
    pub horizontal_distance: f64,
    /// Base-station height above the ground plane, metres.
    pub platform_height: f64,
    /// Radius of the scatterer ring around the user, metres.
    pub ring_radius: f64,
}

impl UserPlacement {
    /// Builds a placement, validating `d > 0`, `h > 0`, `0 <= r < d`.
    pub fn new(
        azimuth: f64,
        horizontal_distance: f64,
        platform_height: f64,
        ring_radius: f64,
    ) -> Result<Self, GeometryError> {
        if !(horizontal_distance > 0.0) {
            return Err(GeometryError::InvalidDistance(horizontal_distance));
        }
        if !(platform_height > 0.0) {
            return Err(GeometryError::InvalidHeight(platform_height));
        }
        if !(ring_radius >= 0.0) || ring_radius >= horizontal_distance {
            return Err(GeometryError::RingTooLarge {
                ring_radius,
                horizontal_distance,
            });
        }
        let theta_max = (platform_height / (horizontal_distance - ring_radius)).atan();
        let theta_min = (platform_height / (horizontal_distance + ring_radius)).atan();
        Ok(Self {
            azimuth,
            elevation: 0.5 * (theta_max + theta_min),
            distance: platform_height.hypot(horizontal_distance),
            horizontal_distance,
            platform_height,
            ring_radius,
        })
    }
}

/// Angular box of the one-ring scattering model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneRingSpreads {
    /// Azimuth half-spread `atan(r/d)`, radians.
    pub delta_phi: f64,
    /// Elevation half-spread `(atan(h/(d-r)) - atan(h/(d+r))) / 2`, radians.
    pub delta_theta: f64,
    /// Elevation of the box centre `(atan(h/(d-r)) + atan(h/(d+r))) / 2`, radians.
    pub center_elevation: f64,
}

/// Angular spreads seen at the base station when the user's scatterers sit
/// on a ring of radius `r` at horizontal distance `d` below a platform of
/// height `h`. Degenerates to zero spreads as `r -> 0`.
pub fn one_ring_spreads(user: &UserPlacement) -> Result<OneRingSpreads, GeometryError> {
    let (d, h, r) = (
        user.horizontal_distance,
        user.platform_height,
        user.ring_radius,
    );
    if r >= d {
        return Err(GeometryError::RingTooLarge {
            ring_radius: r,
            horizontal_distance: d,
        });
    }
    let theta_max = (h / (d - r)).atan();
    let theta_min = (h / (d + r)).atan();
    Ok(OneRingSpreads {
        delta_phi: (r / d).atan(),
        delta_theta: 0.5 * (theta_max - theta_min),
        center_elevation: 0.5 * (theta_max + theta_min),
    })
}

/// Clamps an elevation into the physically meaningful open-top interval
/// `(0, pi/2]` used by the line-of-sight probability model.
pub fn clamp_elevation(elevation: f64) -> f64 {
    elevation.clamp(f64::MIN_POSITIVE, FRAC_PI_2)
}

// ---------- Tests ----------
