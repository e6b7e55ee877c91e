//! Constellation geometry: Walker shells on circular orbits, two-body
//! propagation, ground visibility, and the geographic block index used to
//! narrow the candidate satellites considered during access selection.
//!
//! All positions are meters in an Earth-centered inertial frame. Ground
//! nodes rotate with the Earth at the sidereal rate; satellite orbits are
//! treated as unperturbed circles (drag and J2 are out of scope).

pub mod tle;

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spherical Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Geocentric gravitational parameter, m^3/s^2.
pub const MU_EARTH: f64 = 3.986_004_418e14;

/// Earth rotation rate (sidereal), rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_0e-5;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("invalid constellation config: {0}")]
    InvalidConfig(String),
    #[error("malformed TLE: {0}")]
    Tle(String),
}

// ===== Vectors =====

/// Cartesian vector in meters (or meters/second for velocities).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

// ===== Satellites =====

/// Stable satellite identifier: `plane * sats_per_plane + slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatId(pub u32);

/// North-south travel direction, from the sign of the latitude rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Ascending,
    Descending,
}

/// Instantaneous satellite state on a circular orbit.
#[derive(Debug, Clone, Copy)]
pub struct SatelliteState {
    pub id: SatId,
    pub position_m: Vec3,
    pub velocity_m_s: Vec3,
}

impl SatelliteState {
    /// On a circular orbit the latitude rate has the sign of the inertial
    /// z velocity, so the direction flips exactly at the orbit's extremes.
    pub fn direction(&self) -> Direction {
        if self.velocity_m_s.z >= 0.0 {
            Direction::Ascending
        } else {
            Direction::Descending
        }
    }
}

/// Walker-delta shell description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationConfig {
    pub name: String,
    pub planes: u32,
    pub sats_per_plane: u32,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    /// Walker phasing factor F; slot offset between adjacent planes is
    /// F * 360 / (planes * sats_per_plane) degrees.
    pub phase_factor: u32,
    pub min_elevation_deg: f64,
    /// RAAN of plane 0, degrees.
    #[serde(default)]
    pub raan0_deg: f64,
    /// RAAN step between consecutive planes, degrees. `None` spreads the
    /// planes evenly over 360 degrees (a closed shell); `Some` lays them
    /// out as an open arc, which leaves the plane ring unclosed.
    #[serde(default)]
    pub raan_step_deg: Option<f64>,
}

impl ConstellationConfig {
    /// 550 km shell with a 40 degree service threshold.
    pub fn starlink_shell() -> Self {
        ConstellationConfig {
            name: "starlink-550".into(),
            planes: 72,
            sats_per_plane: 22,
            altitude_m: 550_000.0,
            inclination_deg: 53.0,
            phase_factor: 11,
            min_elevation_deg: 40.0,
            raan0_deg: 0.0,
            raan_step_deg: None,
        }
    }

    /// 630 km shell with a 35 degree service threshold.
    pub fn kuiper_shell() -> Self {
        ConstellationConfig {
            name: "kuiper-630".into(),
            planes: 34,
            sats_per_plane: 34,
            altitude_m: 630_000.0,
            inclination_deg: 51.9,
            phase_factor: 17,
            min_elevation_deg: 35.0,
            raan0_deg: 0.0,
            raan_step_deg: None,
        }
    }

    /// Reduced 550 km shell (200 satellites) sized for desk-scale runs: an
    /// open arc of closely spaced planes, so neighbor distances match the
    /// full shell and plane-index distance tracks RAAN distance. The 60
    /// degree inclination puts the turnaround density peak just above the
    /// mid-fifties service band, and the spacing/phasing pair gives a
    /// fixed ground point an evenly staggered ladder of passes.
    pub fn starlink_desk() -> Self {
        ConstellationConfig {
            name: "starlink-desk".into(),
            planes: 25,
            sats_per_plane: 8,
            altitude_m: 550_000.0,
            inclination_deg: 60.0,
            phase_factor: 3,
            min_elevation_deg: 40.0,
            raan0_deg: 356.0,
            raan_step_deg: Some(4.2),
        }
    }

    /// Reduced 630 km shell (200 satellites) sized for desk-scale runs.
    pub fn kuiper_desk() -> Self {
        ConstellationConfig {
            name: "kuiper-desk".into(),
            planes: 25,
            sats_per_plane: 8,
            altitude_m: 630_000.0,
            inclination_deg: 60.0,
            phase_factor: 3,
            min_elevation_deg: 35.0,
            raan0_deg: 356.0,
            raan_step_deg: Some(4.2),
        }
    }

    pub fn validate(&self) -> Result<(), OrbitError> {
        let mut problems = Vec::new();
        if self.planes == 0 {
            problems.push("planes must be >= 1");
        }
        if self.sats_per_plane == 0 {
            problems.push("sats_per_plane must be >= 1");
        }
        if !(self.altitude_m > 0.0) {
            problems.push("altitude_m must be positive");
        }
        if !(self.inclination_deg > 0.0 && self.inclination_deg <= 180.0) {
            problems.push("inclination_deg must be in (0, 180]");
        }
        if self.planes > 0 && self.phase_factor >= self.planes {
            problems.push("phase_factor must be < planes");
        }
        if !(self.min_elevation_deg >= 0.0 && self.min_elevation_deg < 90.0) {
            problems.push("min_elevation_deg must be in [0, 90)");
        }
        if let Some(step) = self.raan_step_deg {
            if !(step > 0.0) {
                problems.push("raan_step_deg must be positive");
            } else if step * (self.planes as f64 - 1.0) >= 360.0 {
                problems.push("raan arc must span less than 360 degrees");
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(OrbitError::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn total_sats(&self) -> u32 {
        self.planes * self.sats_per_plane
    }

    pub fn semimajor_axis_m(&self) -> f64 {
        EARTH_RADIUS_M + self.altitude_m
    }

    /// Circular orbital speed, m/s.
    pub fn orbital_speed_m_s(&self) -> f64 {
        (MU_EARTH / self.semimajor_axis_m()).sqrt()
    }

    /// Orbital period, seconds.
    pub fn orbital_period_s(&self) -> f64 {
        let a = self.semimajor_axis_m();
        2.0 * std::f64::consts::PI * (a * a * a / MU_EARTH).sqrt()
    }

    pub fn plane_of(&self, sat: SatId) -> u32 {
        sat.0 / self.sats_per_plane
    }

    pub fn slot_of(&self, sat: SatId) -> u32 {
        sat.0 % self.sats_per_plane
    }

    pub fn sat_id(&self, plane: u32, slot: u32) -> SatId {
        SatId(plane * self.sats_per_plane + slot)
    }

    /// RAAN of a plane, radians.
    pub fn raan_of_plane(&self, plane: u32) -> f64 {
        let step = self
            .raan_step_deg
            .unwrap_or(360.0 / self.planes as f64);
        (self.raan0_deg + step * plane as f64).to_radians()
    }

    /// Whether the plane sequence closes into a ring (last plane adjacent
    /// to plane 0). Open arcs do not close.
    pub fn plane_ring_closed(&self) -> bool {
        self.raan_step_deg.is_none()
    }
}

/// Builds the epoch (t = 0) states of a Walker-delta shell. Plane RAANs
/// follow the config's spacing (even over 360 degrees, or an open arc) and
/// slots are even within each plane, with the inter-plane phase offset
/// given by `phase_factor`.
pub fn build_walker(config: &ConstellationConfig) -> Result<Vec<SatelliteState>, OrbitError> {
    config.validate()?;
    let a = config.semimajor_axis_m();
    let speed = config.orbital_speed_m_s();
    let incl = config.inclination_deg.to_radians();
    let total = config.total_sats() as f64;
    let mut sats = Vec::with_capacity(config.total_sats() as usize);
    for plane in 0..config.planes {
        let raan = config.raan_of_plane(plane);
        // In-plane basis: p_hat at the ascending node, q_hat 90 degrees ahead.
        let p_hat = Vec3::new(raan.cos(), raan.sin(), 0.0);
        let q_hat = Vec3::new(-raan.sin() * incl.cos(), raan.cos() * incl.cos(), incl.sin());
        for slot in 0..config.sats_per_plane {
            let u = 2.0 * std::f64::consts::PI
                * (slot as f64 / config.sats_per_plane as f64
                    + config.phase_factor as f64 * plane as f64 / total);
            let position = p_hat * (a * u.cos()) + q_hat * (a * u.sin());
            let velocity = p_hat * (-speed * u.sin()) + q_hat * (speed * u.cos());
            sats.push(SatelliteState {
                id: config.sat_id(plane, slot),
                position_m: position,
                velocity_m_s: velocity,
            });
        }
    }
    Ok(sats)
}

/// Advances a circular orbit by `dt` seconds: an in-plane rotation by the
/// mean motion. Exact for circular two-body motion, no accumulated drift.
pub fn propagate(state: &SatelliteState, dt: f64) -> SatelliteState {
    let r = state.position_m.norm();
    let n = state.velocity_m_s.norm() / r;
    let theta = n * dt;
    let (sin_t, cos_t) = theta.sin_cos();
    SatelliteState {
        id: state.id,
        position_m: state.position_m * cos_t + state.velocity_m_s * (sin_t / n),
        velocity_m_s: state.velocity_m_s * cos_t - state.position_m * (n * sin_t),
    }
}

/// A Walker shell frozen at its epoch, queried for states at arbitrary times.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub config: ConstellationConfig,
    epoch_states: Vec<SatelliteState>,
}

impl Constellation {
    pub fn build(config: ConstellationConfig) -> Result<Self, OrbitError> {
        let epoch_states = build_walker(&config)?;
        Ok(Constellation { config, epoch_states })
    }

    /// Constellation from pre-computed circular states (e.g. TLE ingestion).
    pub fn from_states(config: ConstellationConfig, epoch_states: Vec<SatelliteState>) -> Self {
        Constellation { config, epoch_states }
    }

    pub fn len(&self) -> usize {
        self.epoch_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epoch_states.is_empty()
    }

    pub fn sat_ids(&self) -> impl Iterator<Item = SatId> + '_ {
        self.epoch_states.iter().map(|s| s.id)
    }

    /// State of one satellite at time `t` (seconds past epoch). Always
    /// propagated directly from the epoch, so results do not depend on the
    /// query history.
    pub fn state_at(&self, sat: SatId, t: f64) -> SatelliteState {
        propagate(&self.epoch_states[sat.0 as usize], t)
    }

    /// All satellite states at time `t`, in id order.
    pub fn snapshot(&self, t: f64) -> Vec<SatelliteState> {
        self.epoch_states.iter().map(|s| propagate(s, t)).collect()
    }
}

// ===== Ground geometry =====

/// A point rotating with the Earth, given in geographic coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundNode {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

impl GroundNode {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Self {
        GroundNode { lat_deg, lon_deg, alt_m: 0.0 }
    }

    /// Inertial position at time `t`; the longitude advances at the
    /// sidereal rate.
    pub fn position_eci(&self, t: f64) -> Vec3 {
        let lat = self.lat_deg.to_radians();
        let lon = self.lon_deg.to_radians() + EARTH_ROTATION_RAD_S * t;
        let r = EARTH_RADIUS_M + self.alt_m;
        Vec3::new(r * lat.cos() * lon.cos(), r * lat.cos() * lon.sin(), r * lat.sin())
    }
}

/// Elevation (degrees) and slant range (meters) of `sat_pos` as seen from
/// `ground_pos`. Both positions must be in the same frame at the same time.
/// Elevation is negative below the local horizon.
pub fn elevation_and_range(ground_pos: Vec3, sat_pos: Vec3) -> (f64, f64) {
    let to_sat = sat_pos - ground_pos;
    let range = to_sat.norm();
    let up = ground_pos.normalized();
    let sin_el = (to_sat.dot(up) / range).clamp(-1.0, 1.0);
    (sin_el.asin().to_degrees(), range)
}

/// Ids of all satellites at or above `min_elevation_deg` for the node,
/// in snapshot order.
pub fn visible_satellites(
    node: &GroundNode,
    snapshot: &[SatelliteState],
    t: f64,
    min_elevation_deg: f64,
) -> Vec<SatId> {
    let ground = node.position_eci(t);
    snapshot
        .iter()
        .filter(|s| elevation_and_range(ground, s.position_m).0 >= min_elevation_deg)
        .map(|s| s.id)
        .collect()
}

/// Earth-central half angle of one satellite's service cone, radians:
/// the maximum ground distance (as an angle) at which the satellite still
/// clears the minimum elevation.
pub fn coverage_half_angle_rad(altitude_m: f64, min_elevation_deg: f64) -> f64 {
    let eps = min_elevation_deg.to_radians();
    let ratio = EARTH_RADIUS_M / (EARTH_RADIUS_M + altitude_m);
    (ratio * eps.cos()).acos() - eps
}

/// Sub-satellite geographic point at time `t` (earth-fixed longitude).
pub fn subsatellite_point(position_m: Vec3, t: f64) -> (f64, f64) {
    let lat = (position_m.z / position_m.norm()).asin().to_degrees();
    let mut lon = position_m.y.atan2(position_m.x).to_degrees()
        - (EARTH_ROTATION_RAD_S * t).to_degrees();
    lon = lon.rem_euclid(360.0);
    if lon > 180.0 {
        lon -= 360.0;
    }
    (lat, lon)
}

// ===== Geographic block index =====

/// Grid cell sizes for the block index, degrees. The longitude step is
/// widened so that a cell spans at least one service diameter of ground
/// distance even at the highest latitude the shell serves; this is what
/// makes the 3x3 neighborhood a superset of every feasible handover target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub lat_step_deg: f64,
    pub lon_step_deg: f64,
}

impl BlockSpec {
    /// Steps derived from the shell's service diameter.
    pub fn for_shell(config: &ConstellationConfig) -> Self {
        let beta_deg = coverage_half_angle_rad(config.altitude_m, config.min_elevation_deg).to_degrees();
        let diameter = 2.0 * beta_deg;
        let cap_lat = (config.inclination_deg.min(180.0 - config.inclination_deg) + beta_deg).min(80.0);
        BlockSpec {
            lat_step_deg: diameter,
            lon_step_deg: diameter / cap_lat.to_radians().cos(),
        }
    }

    /// Square cells of `step_deg` degrees on both axes.
    pub fn square(step_deg: f64) -> Self {
        BlockSpec { lat_step_deg: step_deg, lon_step_deg: step_deg }
    }
}

/// Satellites bucketed by the grid cell of their sub-satellite point at one
/// instant. Rebuilt per planning step; lookups stay O(cell occupancy).
#[derive(Debug, Clone)]
pub struct BlockIndex {
    n_lat: u32,
    n_lon: u32,
    lat_step: f64,
    lon_step: f64,
    cells: HashMap<(u32, u32), Vec<SatId>>,
    sat_cell: HashMap<SatId, (u32, u32)>,
}

/// Buckets `snapshot` into grid cells by sub-satellite point at time `t`.
pub fn block_partition(snapshot: &[SatelliteState], t: f64, spec: BlockSpec) -> BlockIndex {
    // Snap the step counts so cells tile the sphere without a remainder sliver.
    let n_lat = (180.0 / spec.lat_step_deg).ceil().max(1.0) as u32;
    let n_lon = (360.0 / spec.lon_step_deg).ceil().max(1.0) as u32;
    let mut index = BlockIndex {
        n_lat,
        n_lon,
        lat_step: 180.0 / n_lat as f64,
        lon_step: 360.0 / n_lon as f64,
        cells: HashMap::new(),
        sat_cell: HashMap::new(),
    };
    for sat in snapshot {
        let (lat, lon) = subsatellite_point(sat.position_m, t);
        let cell = index.cell_of(lat, lon);
        index.cells.entry(cell).or_default().push(sat.id);
        index.sat_cell.insert(sat.id, cell);
    }
    index
}

impl BlockIndex {
    fn cell_of(&self, lat_deg: f64, lon_deg: f64) -> (u32, u32) {
        let row = (((lat_deg + 90.0) / self.lat_step) as i64).clamp(0, self.n_lat as i64 - 1);
        let col = ((lon_deg + 180.0).rem_euclid(360.0) / self.lon_step) as i64;
        (row as u32, col.clamp(0, self.n_lon as i64 - 1) as u32)
    }

    fn gather_neighborhood(&self, center: (u32, u32)) -> Vec<SatId> {
        let mut out = Vec::new();
        let rows = [center.0 as i64 - 1, center.0 as i64, center.0 as i64 + 1];
        for row in rows {
            if row < 0 || row >= self.n_lat as i64 {
                continue;
            }
            let mut cols: Vec<u32> = Vec::with_capacity(3);
            for dc in [-1i64, 0, 1] {
                let col = (center.1 as i64 + dc).rem_euclid(self.n_lon as i64) as u32;
                if !cols.contains(&col) {
                    cols.push(col);
                }
            }
            cols.sort_unstable();
            for col in cols {
                if let Some(ids) = self.cells.get(&(row as u32, col)) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Satellites in the cell of `sat` plus its 8 neighbors (longitude
    /// wraps, latitude clamps at the poles), sorted by id. Superset of the
    /// feasible handover targets of any node currently served by `sat`.
    pub fn nearby_satellites(&self, sat: SatId) -> Vec<SatId> {
        match self.sat_cell.get(&sat) {
            Some(&cell) => self.gather_neighborhood(cell),
            None => Vec::new(),
        }
    }

    /// Same 3x3 gather, centered on a geographic point.
    pub fn nearby_of_point(&self, lat_deg: f64, lon_deg: f64) -> Vec<SatId> {
        self.gather_neighborhood(self.cell_of(lat_deg, lon_deg))
    }

    pub fn cell_count(&self) -> usize {
        (self.n_lat * self.n_lon) as usize
    }
}

// ===== Ephemeris error =====

/// How precisely the scheduler knows satellite positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EphemerisMode {
    /// Planner sees true positions.
    Exact,
    /// Positions refreshed every minute; errors at the decimeter scale.
    MinuteEphemeris,
    /// Day-old elements; errors at the kilometer scale.
    DailyTle,
}

impl EphemerisMode {
    /// RMS of the injected position error vector, meters.
    pub fn rms_error_m(&self) -> f64 {
        match self {
            EphemerisMode::Exact => 0.0,
            EphemerisMode::MinuteEphemeris => 0.1,
            EphemerisMode::DailyTle => 2_000.0,
        }
    }

    /// How long one drawn error vector stays in effect, seconds.
    pub fn refresh_period_s(&self) -> f64 {
        match self {
            EphemerisMode::Exact => f64::INFINITY,
            EphemerisMode::MinuteEphemeris => 60.0,
            EphemerisMode::DailyTle => 86_400.0,
        }
    }
}

/// Adds a zero-mean Gaussian position error with the given total RMS,
/// truncated at 5x the RMS so a single draw can never be unbounded.
/// `rms_m == 0` returns the state unchanged.
pub fn inject_ephemeris_error<R: Rng>(state: &SatelliteState, rms_m: f64, rng: &mut R) -> SatelliteState {
    if rms_m == 0.0 {
        return *state;
    }
    let per_axis = Normal::new(0.0, rms_m / 3.0_f64.sqrt()).expect("positive sigma");
    let mut err = Vec3::new(per_axis.sample(rng), per_axis.sample(rng), per_axis.sample(rng));
    let cap = 5.0 * rms_m;
    let norm = err.norm();
    if norm > cap {
        err = err * (cap / norm);
    }
    SatelliteState {
        id: state.id,
        position_m: state.position_m + err,
        velocity_m_s: state.velocity_m_s,
    }
}

/// Error vector a planner would see for `sat` during refresh bucket
/// `bucket`, derived only from (seed, sat, bucket) so every query of the
/// same epoch sees the same error.
pub fn ephemeris_error_for(seed: u64, sat: SatId, bucket: u64, rms_m: f64) -> Vec3 {
    if rms_m == 0.0 {
        return Vec3::ZERO;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((sat.0 as u64) << 32) ^ bucket.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let base = SatelliteState { id: sat, position_m: Vec3::ZERO, velocity_m_s: Vec3::ZERO };
    inject_ephemeris_error(&base, rms_m, &mut rng).position_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn shell_6x8() -> ConstellationConfig {
        ConstellationConfig {
            name: "test-6x8".into(),
            planes: 6,
            sats_per_plane: 8,
            altitude_m: 550_000.0,
            inclination_deg: 53.0,
            phase_factor: 1,
            min_elevation_deg: 40.0,
            raan0_deg: 0.0,
            raan_step_deg: None,
        }
    }

    #[test]
    fn walker_counts_and_radii() {
        let cfg = shell_6x8();
        let sats = build_walker(&cfg).unwrap();
        assert_eq!(sats.len(), 48);
        let a = cfg.semimajor_axis_m();
        for s in &sats {
            assert!((s.position_m.norm() - a).abs() < 1e-6 * a, "radius off for {:?}", s.id);
            assert!((s.velocity_m_s.norm() - cfg.orbital_speed_m_s()).abs() < 1e-9 * a);
            assert!(s.position_m.dot(s.velocity_m_s).abs() < 1.0, "not circular");
        }
    }

    #[test]
    fn walker_in_plane_spacing_is_even() {
        let cfg = shell_6x8();
        let sats = build_walker(&cfg).unwrap();
        let a = cfg.semimajor_axis_m();
        let expected = 2.0 * std::f64::consts::PI / cfg.sats_per_plane as f64;
        for plane in 0..cfg.planes {
            for slot in 0..cfg.sats_per_plane {
                let here = sats[cfg.sat_id(plane, slot).0 as usize].position_m;
                let next = sats[cfg.sat_id(plane, (slot + 1) % cfg.sats_per_plane).0 as usize].position_m;
                let cosang = (here.dot(next) / (a * a)).clamp(-1.0, 1.0);
                assert!((cosang.acos() - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn walker_planes_are_planar_with_even_raan() {
        let cfg = shell_6x8();
        let sats = build_walker(&cfg).unwrap();
        let incl = cfg.inclination_deg.to_radians();
        for plane in 0..cfg.planes {
            let raan = 2.0 * std::f64::consts::PI * plane as f64 / cfg.planes as f64;
            let normal = Vec3::new(raan.sin() * incl.sin(), -raan.cos() * incl.sin(), incl.cos());
            for slot in 0..cfg.sats_per_plane {
                let s = &sats[cfg.sat_id(plane, slot).0 as usize];
                assert!(s.position_m.dot(normal).abs() < 1e-3, "sat off its plane");
                assert!(s.velocity_m_s.dot(normal).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vis_viva_speed_at_550km() {
        let cfg = ConstellationConfig::starlink_desk();
        // sqrt(mu / a) with a = 6921 km comes out near 7.59 km/s.
        let v = cfg.orbital_speed_m_s();
        assert!((v - 7_590.0).abs() < 10.0, "speed {v}");
        let t = cfg.orbital_period_s();
        assert!((5_700.0..5_760.0).contains(&t), "period {t}");
    }

    /// RK4 integration of the two-body acceleration is the independent
    /// oracle for the closed-form propagation.
    #[test]
    fn propagate_matches_numerical_integration() {
        let cfg = shell_6x8();
        let start = build_walker(&cfg).unwrap()[5];
        let period = cfg.orbital_period_s();

        let accel = |p: Vec3| -> Vec3 {
            let r = p.norm();
            p * (-MU_EARTH / (r * r * r))
        };
        let mut pos = start.position_m;
        let mut vel = start.velocity_m_s;
        let h = 1.0;
        let steps = period.round() as usize;
        for _ in 0..steps {
            let k1v = accel(pos);
            let k1p = vel;
            let k2v = accel(pos + k1p * (h / 2.0));
            let k2p = vel + k1v * (h / 2.0);
            let k3v = accel(pos + k2p * (h / 2.0));
            let k3p = vel + k2v * (h / 2.0);
            let k4v = accel(pos + k3p * h);
            let k4p = vel + k3v * h;
            pos = pos + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            vel = vel + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        }
        let closed = propagate(&start, steps as f64 * h);
        assert!(closed.position_m.distance(pos) < 10.0, "closed-form vs RK4 drift");

        // One full period returns to the start.
        let full = propagate(&start, period);
        assert!(full.position_m.distance(start.position_m) < 1.0);
    }

    #[test]
    fn propagate_preserves_radius_and_speed() {
        let cfg = shell_6x8();
        let start = build_walker(&cfg).unwrap()[0];
        let r0 = start.position_m.norm();
        let v0 = start.velocity_m_s.norm();
        for k in 0..500 {
            let s = propagate(&start, k as f64 * 37.3);
            assert!((s.position_m.norm() - r0).abs() < 1e-6 * r0);
            assert!((s.velocity_m_s.norm() - v0).abs() < 1e-6 * v0);
        }
        let same = propagate(&start, 0.0);
        assert_eq!(same.position_m, start.position_m);
    }

    #[test]
    fn direction_flips_twice_per_orbit() {
        let cfg = shell_6x8();
        let start = build_walker(&cfg).unwrap()[3];
        let period = cfg.orbital_period_s();
        let steps = 2_000;
        let mut flips = 0;
        let mut last = propagate(&start, 0.0).direction();
        for k in 1..=steps {
            let d = propagate(&start, period * k as f64 / steps as f64).direction();
            if d != last {
                flips += 1;
            }
            last = d;
        }
        assert_eq!(flips, 2);
    }

    /// Spherical law of cosines gives elevation and range independently of
    /// the vector math in `elevation_and_range`.
    #[test]
    fn elevation_matches_spherical_trig_oracle() {
        let mut rng = StdRng::seed_from_u64(0x0e11);
        for _ in 0..300 {
            let g_lat: f64 = rng.random_range(-80.0..80.0);
            let g_lon: f64 = rng.random_range(-180.0..180.0);
            let s_lat: f64 = rng.random_range(-80.0..80.0);
            let s_lon: f64 = rng.random_range(-180.0..180.0);
            let rs = EARTH_RADIUS_M + rng.random_range(400_000.0..1_500_000.0);

            let ground = GroundNode::new(g_lat, g_lon).position_eci(0.0);
            let sat = Vec3::new(
                rs * s_lat.to_radians().cos() * s_lon.to_radians().cos(),
                rs * s_lat.to_radians().cos() * s_lon.to_radians().sin(),
                rs * s_lat.to_radians().sin(),
            );
            let (el, range) = elevation_and_range(ground, sat);

            let cos_psi = g_lat.to_radians().sin() * s_lat.to_radians().sin()
                + g_lat.to_radians().cos()
                    * s_lat.to_radians().cos()
                    * (g_lon - s_lon).to_radians().cos();
            let psi = cos_psi.clamp(-1.0, 1.0).acos();
            let expected_range =
                (EARTH_RADIUS_M.powi(2) + rs * rs - 2.0 * EARTH_RADIUS_M * rs * cos_psi).sqrt();
            let expected_el = ((cos_psi - EARTH_RADIUS_M / rs) / psi.sin()).atan().to_degrees();

            assert!((range - expected_range).abs() < 1e-5 * expected_range);
            if psi > 1e-4 {
                assert!((el - expected_el).abs() < 1e-6, "el {el} vs {expected_el}");
            }
        }
    }

    #[test]
    fn elevation_is_90_at_zenith() {
        let node = GroundNode::new(31.0, 121.0);
        let ground = node.position_eci(0.0);
        let sat = ground * ((EARTH_RADIUS_M + 550_000.0) / EARTH_RADIUS_M);
        let (el, range) = elevation_and_range(ground, sat);
        assert!((el - 90.0).abs() < 1e-9);
        assert!((range - 550_000.0).abs() < 1e-6);
    }

    #[test]
    fn visibility_boundary_matches_coverage_angle() {
        let altitude = 550_000.0;
        let min_el = 40.0;
        let beta = coverage_half_angle_rad(altitude, min_el).to_degrees();
        let rs = EARTH_RADIUS_M + altitude;
        let ground = GroundNode::new(0.0, 0.0).position_eci(0.0);
        // Satellites slightly inside and outside the service cone, placed
        // along the equator so the central angle equals the longitude gap.
        for (offset, expect_visible) in [(beta - 0.1, true), (beta + 0.1, false)] {
            let lon = offset.to_radians();
            let sat = Vec3::new(rs * lon.cos(), rs * lon.sin(), 0.0);
            let (el, _) = elevation_and_range(ground, sat);
            assert_eq!(el >= min_el, expect_visible, "offset {offset} el {el}");
        }
    }

    #[test]
    fn ground_node_rotates_with_earth() {
        let node = GroundNode::new(10.0, 20.0);
        let day = 2.0 * std::f64::consts::PI / EARTH_ROTATION_RAD_S;
        assert!(node.position_eci(0.0).distance(node.position_eci(day)) < 1e-4);
        let quarter = node.position_eci(day / 4.0);
        let (lat, lon) = subsatellite_point(quarter, day / 4.0);
        assert!((lat - 10.0).abs() < 1e-9);
        assert!((lon - 20.0).abs() < 1e-9);
    }

    /// Brute-force check of the block neighborhood superset property: every
    /// satellite visible to a node appears in the 3x3 gather around the
    /// node's point and around each of its visible satellites.
    #[test]
    fn block_neighborhood_covers_visible_sats() {
        let cfg = ConstellationConfig {
            name: "block-test".into(),
            planes: 8,
            sats_per_plane: 12,
            altitude_m: 1_000_000.0,
            inclination_deg: 60.0,
            phase_factor: 2,
            min_elevation_deg: 25.0,
            raan0_deg: 0.0,
            raan_step_deg: None,
        };
        let constellation = Constellation::build(cfg.clone()).unwrap();
        let spec = BlockSpec::for_shell(&cfg);
        let mut rng = StdRng::seed_from_u64(0xb10c);
        for trial in 0..40 {
            let t = rng.random_range(0.0..7200.0);
            let snapshot = constellation.snapshot(t);
            let index = block_partition(&snapshot, t, spec);
            for _ in 0..25 {
                let node = GroundNode::new(rng.random_range(-70.0..70.0), rng.random_range(-180.0..180.0));
                let visible = visible_satellites(&node, &snapshot, t, cfg.min_elevation_deg);
                let from_point = index.nearby_of_point(node.lat_deg, node.lon_deg);
                for v in &visible {
                    assert!(from_point.contains(v), "trial {trial}: point gather missed {v:?}");
                }
                for access in &visible {
                    let nearby = index.nearby_satellites(*access);
                    assert!(
                        nearby.len() < constellation.len(),
                        "neighborhood should stay a strict subset"
                    );
                    for v in &visible {
                        assert!(nearby.contains(v), "trial {trial}: {access:?} gather missed {v:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn ephemeris_error_statistics() {
        let cfg = shell_6x8();
        let base = build_walker(&cfg).unwrap()[0];
        let mut rng = StdRng::seed_from_u64(7);

        let n = 20_000;
        let mut sum = Vec3::ZERO;
        let mut sq = 0.0;
        for _ in 0..n {
            let e = inject_ephemeris_error(&base, 2_000.0, &mut rng).position_m - base.position_m;
            sum = sum + e;
            sq += e.dot(e);
        }
        let mean = sum * (1.0 / n as f64);
        assert!(mean.norm() < 60.0, "bias {mean:?}");
        let rms = (sq / n as f64).sqrt();
        assert!((rms - 2_000.0).abs() < 100.0, "rms {rms}");

        // Minute-scale ephemeris: decimeter RMS, hard cap at half a meter.
        let mut max_err: f64 = 0.0;
        for _ in 0..n {
            let e = inject_ephemeris_error(&base, 0.1, &mut rng).position_m - base.position_m;
            max_err = max_err.max(e.norm());
        }
        assert!(max_err <= 0.5 + 1e-12, "max {max_err}");

        let exact = inject_ephemeris_error(&base, 0.0, &mut rng);
        assert_eq!(exact.position_m, base.position_m);
    }

    #[test]
    fn deterministic_planner_error_is_stable_per_bucket() {
        let a = ephemeris_error_for(42, SatId(7), 3, 2_000.0);
        let b = ephemeris_error_for(42, SatId(7), 3, 2_000.0);
        assert_eq!(a, b);
        let other_bucket = ephemeris_error_for(42, SatId(7), 4, 2_000.0);
        assert!(a.distance(other_bucket) > 1.0);
        let other_sat = ephemeris_error_for(42, SatId(8), 3, 2_000.0);
        assert!(a.distance(other_sat) > 1.0);
        assert_eq!(ephemeris_error_for(42, SatId(7), 3, 0.0), Vec3::ZERO);
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = shell_6x8();
        cfg.planes = 0;
        cfg.altitude_m = -1.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("planes"), "{err}");
        assert!(err.contains("altitude"), "{err}");
        assert!(ConstellationConfig::starlink_shell().validate().is_ok());
        assert!(ConstellationConfig::kuiper_shell().validate().is_ok());
    }
}
