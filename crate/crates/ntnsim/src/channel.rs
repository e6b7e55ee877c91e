//! Satellite-to-ground channel: free-space path loss plus shadow fading,
//! clutter, atmospheric absorption and optional scintillation, and the
//! closed-form received-strength model used for prediction.
//!
//! Loss components follow the narrowband link-budget decomposition
//! `PL = PL_basic + PL_atmospheric + PL_scintillation + PL_entry`, with
//! `PL_basic = FSPL + shadow fading + clutter`. The atmospheric term uses
//! the flat-layer zenith-attenuation scaling `A_zenith / sin(elevation)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

use crate::orbit::EARTH_RADIUS_M;

/// First line of every trace CSV; readers reject anything else.
pub const TRACE_FORMAT_LINE: &str = "# ntnsim-trace v1";

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    BadDistance(f64),
    #[error("frequency must be positive, got {0}")]
    BadFrequency(f64),
    #[error("elevation must be in (0, 90] degrees, got {0}")]
    BadElevation(f64),
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace format: {0}")]
    Format(String),
}

/// Which unit the carrier is expressed in when fed to the 32.45-constant
/// path loss formula. `Gigahertz` is dimensionally consistent with a
/// distance in meters; `Megahertz` reproduces the alternate textbook
/// reading and is kept for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqConvention {
    Gigahertz,
    Megahertz,
}

/// Scintillation handling; the default leaves it off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scintillation {
    Off,
    /// Zero-mean Gaussian residual with the given sigma, dB.
    GaussianResidual { sigma_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub carrier_ghz: f64,
    pub freq_convention: FreqConvention,
    /// Shadow fading standard deviation, dB.
    pub sigma_sf_db: f64,
    /// Zenith atmospheric attenuation, dB.
    pub a_zenith_db: f64,
    pub clutter_loss_db: f64,
    pub building_entry_db: f64,
    pub scintillation: Scintillation,
    /// Transmit EIRP folded with antenna gains, dBm. The default puts the
    /// zenith received strength near -100 dBm for a 550 km shell at 2 GHz.
    pub eirp_dbm: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            carrier_ghz: 2.0,
            freq_convention: FreqConvention::Gigahertz,
            sigma_sf_db: 3.0,
            a_zenith_db: 0.5,
            clutter_loss_db: 0.0,
            building_entry_db: 0.0,
            scintillation: Scintillation::Off,
            eirp_dbm: 53.8,
        }
    }
}

impl ChannelParams {
    fn formula_frequency(&self) -> f64 {
        match self.freq_convention {
            FreqConvention::Gigahertz => self.carrier_ghz,
            FreqConvention::Megahertz => self.carrier_ghz * 1000.0,
        }
    }
}

/// Free-space path loss in dB for a distance in meters and carrier in GHz:
/// `32.45 + 20 log10(f) + 20 log10(d)`.
pub fn fspl(distance_m: f64, carrier_ghz: f64) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::BadDistance(distance_m));
    }
    if !(carrier_ghz > 0.0) {
        return Err(ChannelError::BadFrequency(carrier_ghz));
    }
    Ok(32.45 + 20.0 * carrier_ghz.log10() + 20.0 * distance_m.log10())
}

/// Slant geometry of one link at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlantGeometry {
    pub distance_m: f64,
    pub elevation_deg: f64,
}

/// Per-component loss record; `total_db` is the sum of the fields in
/// declaration order, so the breakdown always reconciles exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossBreakdown {
    pub fspl_db: f64,
    pub shadow_fading_db: f64,
    pub clutter_db: f64,
    pub atmospheric_db: f64,
    pub scintillation_db: f64,
    pub building_entry_db: f64,
    pub total_db: f64,
}

fn check_elevation(elevation_deg: f64) -> Result<f64, ChannelError> {
    if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
        return Err(ChannelError::BadElevation(elevation_deg));
    }
    Ok(elevation_deg.to_radians().sin())
}

/// Full stochastic path loss: FSPL plus a fresh shadow-fading draw plus the
/// deterministic terms (and a scintillation draw when enabled).
pub fn total_path_loss<R: Rng>(
    geometry: SlantGeometry,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<PathLossBreakdown, ChannelError> {
    let sin_el = check_elevation(geometry.elevation_deg)?;
    let fspl_db = fspl(geometry.distance_m, params.formula_frequency())?;
    let shadow_fading_db = if params.sigma_sf_db > 0.0 {
        Normal::new(0.0, params.sigma_sf_db).expect("positive sigma").sample(rng)
    } else {
        0.0
    };
    let scintillation_db = match params.scintillation {
        Scintillation::Off => 0.0,
        Scintillation::GaussianResidual { sigma_db } => {
            Normal::new(0.0, sigma_db).expect("positive sigma").sample(rng)
        }
    };
    let atmospheric_db = params.a_zenith_db / sin_el;
    let clutter_db = params.clutter_loss_db;
    let building_entry_db = params.building_entry_db;
    let total_db = fspl_db
        + shadow_fading_db
        + clutter_db
        + atmospheric_db
        + scintillation_db
        + building_entry_db;
    Ok(PathLossBreakdown {
        fspl_db,
        shadow_fading_db,
        clutter_db,
        atmospheric_db,
        scintillation_db,
        building_entry_db,
        total_db,
    })
}

/// Deterministic part of the path loss (no fading draws).
pub fn mean_path_loss(geometry: SlantGeometry, params: &ChannelParams) -> Result<f64, ChannelError> {
    let sin_el = check_elevation(geometry.elevation_deg)?;
    Ok(fspl(geometry.distance_m, params.formula_frequency())?
        + params.clutter_loss_db
        + params.a_zenith_db / sin_el
        + params.building_entry_db)
}

/// Deterministic received strength in dBm at the given geometry.
pub fn mean_received_dbm(geometry: SlantGeometry, params: &ChannelParams) -> Result<f64, ChannelError> {
    Ok(params.eirp_dbm - mean_path_loss(geometry, params)?)
}

/// Projects a reference measurement `(s0, d0, alpha0)` to the geometry
/// `(d, alpha)`: the FSPL delta `20 log10(d / d0)` (frequency cancels) and
/// the atmospheric delta between the two elevations.
pub fn model_signal_strength(
    s0_dbm: f64,
    d0_m: f64,
    alpha0_deg: f64,
    d_m: f64,
    alpha_deg: f64,
    params: &ChannelParams,
) -> Result<f64, ChannelError> {
    if !(d0_m > 0.0) {
        return Err(ChannelError::BadDistance(d0_m));
    }
    if !(d_m > 0.0) {
        return Err(ChannelError::BadDistance(d_m));
    }
    let sin_a0 = check_elevation(alpha0_deg)?;
    let sin_a = check_elevation(alpha_deg)?;
    Ok(s0_dbm - 20.0 * (d_m / d0_m).log10() - params.a_zenith_db / sin_a
        + params.a_zenith_db / sin_a0)
}

/// Slant range for a satellite at `altitude_m` seen at `elevation_deg`,
/// on a spherical Earth.
pub fn slant_range_m(altitude_m: f64, elevation_deg: f64) -> f64 {
    let el = elevation_deg.to_radians();
    let ratio = (EARTH_RADIUS_M + altitude_m) / EARTH_RADIUS_M;
    EARTH_RADIUS_M * ((ratio * ratio - el.cos() * el.cos()).sqrt() - el.sin())
}

// ===== Synthetic traces =====

/// One labelled observation: the features a predictor sees (current
/// geometry plus a reference measurement taken `horizon` seconds earlier)
/// and the measured strength at the current instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub t_s: f64,
    /// Current elevation, degrees.
    pub elevation_deg: f64,
    /// Orbit altitude, meters.
    pub altitude_m: f64,
    /// Elevation at the reference measurement, degrees.
    pub ref_elevation_deg: f64,
    /// Measured strength at the reference measurement, dBm.
    pub ref_strength_dbm: f64,
    /// Measured strength now, dBm (the prediction target).
    pub strength_dbm: f64,
}

/// Deterministic elevation-dependent strength offset, standing in for
/// obstruction or antenna-pattern effects a pure link budget misses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ElevationBias {
    None,
    /// `-amplitude_db * exp(-elevation / scale_deg)`: strongest extra loss
    /// near the horizon, fading out toward zenith.
    Exponential { amplitude_db: f64, scale_deg: f64 },
}

impl ElevationBias {
    pub fn at(&self, elevation_deg: f64) -> f64 {
        match *self {
            ElevationBias::None => 0.0,
            ElevationBias::Exponential { amplitude_db, scale_deg } => {
                -amplitude_db * (-elevation_deg / scale_deg).exp()
            }
        }
    }
}

/// Noise applied to synthetic measurements, separate from `ChannelParams`
/// so traces can be generated cleaner or dirtier than the nominal channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub shadow_sigma_db: f64,
    pub bias: ElevationBias,
}

impl NoiseProfile {
    pub fn none() -> Self {
        NoiseProfile { shadow_sigma_db: 0.0, bias: ElevationBias::None }
    }
}

/// Geometry of one pass: `(t, elevation_deg, distance_m)` per step.
/// Produced analytically here; the harness can also feed real orbit tracks.
pub fn pass_geometry(
    altitude_m: f64,
    peak_elevation_deg: f64,
    min_elevation_deg: f64,
    step_s: f64,
) -> Vec<(f64, f64, f64)> {
    let rs = EARTH_RADIUS_M + altitude_m;
    let k = EARTH_RADIUS_M / rs;
    // Central angle at a given elevation (station-to-subsatellite point).
    let psi_at = |el_deg: f64| -> f64 {
        let el = el_deg.to_radians();
        std::f64::consts::FRAC_PI_2 - el - (k * el.cos()).asin()
    };
    let psi_min = psi_at(peak_elevation_deg);
    let psi_max = psi_at(min_elevation_deg);
    // The subsatellite track is a great circle with closest approach
    // psi_min; the pass spans the arc where psi(t) <= psi_max.
    let omega = (MU_EARTH_LOCAL / (rs * rs * rs)).sqrt();
    let cos_ratio = (psi_max.cos() / psi_min.cos()).clamp(-1.0, 1.0);
    let half_span = cos_ratio.acos() / omega;
    let mut out = Vec::new();
    let mut t = -half_span;
    while t <= half_span + 1e-9 {
        let cos_psi = psi_min.cos() * (omega * t).cos();
        let psi = cos_psi.clamp(-1.0, 1.0).acos();
        let distance =
            (EARTH_RADIUS_M * EARTH_RADIUS_M + rs * rs - 2.0 * EARTH_RADIUS_M * rs * cos_psi)
                .sqrt();
        let elevation = ((cos_psi - k) / psi.sin()).atan().to_degrees();
        if elevation >= min_elevation_deg {
            out.push((t + half_span, elevation, distance));
        }
        t += step_s;
    }
    out
}

const MU_EARTH_LOCAL: f64 = crate::orbit::MU_EARTH;

/// Turns pass geometry into labelled samples. Measurements are the
/// deterministic strength plus bias plus fresh shadow fading; each sample
/// references the measurement `horizon_steps` earlier, so the trace starts
/// once a reference exists. With `NoiseProfile::none()` every sample
/// satisfies the closed-form projection exactly.
pub fn synth_trace<R: Rng>(
    geometry: &[(f64, f64, f64)],
    params: &ChannelParams,
    noise: &NoiseProfile,
    altitude_m: f64,
    horizon_steps: usize,
    rng: &mut R,
) -> Vec<ChannelSample> {
    let normal = if noise.shadow_sigma_db > 0.0 {
        Some(Normal::new(0.0, noise.shadow_sigma_db).expect("positive sigma"))
    } else {
        None
    };
    let measured: Vec<f64> = geometry
        .iter()
        .map(|&(_, el, d)| {
            let base = mean_received_dbm(SlantGeometry { distance_m: d, elevation_deg: el }, params)
                .expect("pass geometry stays above the horizon");
            let fading = normal.map_or(0.0, |n| n.sample(rng));
            base + noise.bias.at(el) + fading
        })
        .collect();
    geometry
        .iter()
        .enumerate()
        .skip(horizon_steps)
        .map(|(i, &(t, el, _))| {
            let r = i - horizon_steps;
            ChannelSample {
                t_s: t,
                elevation_deg: el,
                altitude_m,
                ref_elevation_deg: geometry[r].1,
                ref_strength_dbm: measured[r],
                strength_dbm: measured[i],
            }
        })
        .collect()
}

// ===== Trace CSV =====

/// Writes samples with a format-version line then a header row. The file
/// is written in full to a temp sibling and renamed into place.
pub fn write_trace_csv(path: &Path, samples: &[ChannelSample]) -> Result<(), ChannelError> {
    let mut buf = String::new();
    buf.push_str(TRACE_FORMAT_LINE);
    buf.push('\n');
    buf.push_str("t_s,elevation_deg,altitude_m,ref_elevation_deg,ref_strength_dbm,strength_dbm\n");
    for s in samples {
        buf.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.t_s, s.elevation_deg, s.altitude_m, s.ref_elevation_deg, s.ref_strength_dbm,
            s.strength_dbm
        ));
    }
    crate::harness::write_atomic(path, buf.as_bytes())?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<ChannelSample>, ChannelError> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != TRACE_FORMAT_LINE {
        return Err(ChannelError::Format(format!(
            "expected {TRACE_FORMAT_LINE:?}, found {:?}",
            first.trim_end()
        )));
    }
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in csv_reader.records().enumerate() {
        let record = record.map_err(|e| ChannelError::Format(e.to_string()))?;
        if record.len() != 6 {
            return Err(ChannelError::Format(format!(
                "row {}: expected 6 fields, found {}",
                line + 3,
                record.len()
            )));
        }
        let mut fields = [0.0f64; 6];
        for (i, raw) in record.iter().enumerate() {
            fields[i] = raw.trim().parse().map_err(|_| {
                ChannelError::Format(format!("row {}: bad number {raw:?}", line + 3))
            })?;
        }
        out.push(ChannelSample {
            t_s: fields[0],
            elevation_deg: fields[1],
            altitude_m: fields[2],
            ref_elevation_deg: fields[3],
            ref_strength_dbm: fields[4],
            strength_dbm: fields[5],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn fspl_spot_values() {
        // 1 m at 1 GHz isolates the formula constant.
        assert!((fspl(1.0, 1.0).unwrap() - 32.45).abs() < 1e-12);
        // Hand-computed: 32.45 + 20 log10(2) + 20 log10(550e3).
        assert!((fspl(550_000.0, 2.0).unwrap() - 153.2779).abs() < 1e-3);
        // Doubling the distance adds 6.0206 dB.
        let d1 = fspl(700_000.0, 2.0).unwrap();
        let d2 = fspl(1_400_000.0, 2.0).unwrap();
        assert!((d2 - d1 - 6.0206).abs() < 1e-3);
        assert!(fspl(0.0, 2.0).is_err());
        assert!(fspl(100.0, -1.0).is_err());
    }

    #[test]
    fn megahertz_convention_reproduces_the_alternate_reading() {
        let mut params = ChannelParams::default();
        let geom = SlantGeometry { distance_m: 550_000.0, elevation_deg: 90.0 };
        let ghz = mean_path_loss(geom, &params).unwrap();
        params.freq_convention = FreqConvention::Megahertz;
        let mhz = mean_path_loss(geom, &params).unwrap();
        // Same carrier fed as 2000 "MHz" into the same constant: +60 dB.
        assert!((mhz - ghz - 60.0).abs() < 1e-9);
    }

    #[test]
    fn breakdown_reconciles_and_matches_direct_formula() {
        let params = ChannelParams {
            sigma_sf_db: 2.0,
            clutter_loss_db: 1.5,
            building_entry_db: 0.7,
            scintillation: Scintillation::GaussianResidual { sigma_db: 0.4 },
            ..ChannelParams::default()
        };
        let geom = SlantGeometry { distance_m: 812_000.0, elevation_deg: 40.0 };
        let mut rng = StdRng::seed_from_u64(1);
        let b = total_path_loss(geom, &params, &mut rng).unwrap();
        // The breakdown must sum to the total in declaration order, exactly.
        let resum = b.fspl_db
            + b.shadow_fading_db
            + b.clutter_db
            + b.atmospheric_db
            + b.scintillation_db
            + b.building_entry_db;
        assert_eq!(resum, b.total_db);
        // Independent straight-line recomputation of the deterministic part.
        let expected_det = 32.45
            + 20.0 * 2.0f64.log10()
            + 20.0 * 812_000.0f64.log10()
            + 1.5
            + 0.5 / 40.0f64.to_radians().sin()
            + 0.7;
        let det = b.total_db - b.shadow_fading_db - b.scintillation_db;
        assert!((det - expected_det).abs() < 1e-9);
        assert!(total_path_loss(SlantGeometry { distance_m: 1.0, elevation_deg: 0.0 }, &params, &mut rng)
            .is_err());
    }

    #[test]
    fn shadow_fading_matches_configured_sigma() {
        let params = ChannelParams::default();
        let geom = SlantGeometry { distance_m: 600_000.0, elevation_deg: 60.0 };
        let det = mean_path_loss(geom, &params).unwrap();
        let mut rng = StdRng::seed_from_u64(99);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let sf = total_path_loss(geom, &params, &mut rng).unwrap().total_db - det;
            sum += sf;
            sumsq += sf * sf;
        }
        let mean = sum / n as f64;
        let sigma = (sumsq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((sigma - 3.0).abs() < 0.06, "sigma {sigma}");
    }

    #[test]
    fn projection_is_identity_at_the_reference() {
        let params = ChannelParams::default();
        let s = model_signal_strength(-104.2, 812_000.0, 40.0, 812_000.0, 40.0, &params).unwrap();
        assert_eq!(s, -104.2);
        // Frequency never enters the projection: only the ratio of distances.
        let hi = ChannelParams { carrier_ghz: 30.0, ..params };
        let a = model_signal_strength(-100.0, 600_000.0, 50.0, 900_000.0, 35.0, &params).unwrap();
        let b = model_signal_strength(-100.0, 600_000.0, 50.0, 900_000.0, 35.0, &hi).unwrap();
        assert_eq!(a, b);
        assert!(model_signal_strength(-100.0, 0.0, 50.0, 900_000.0, 35.0, &params).is_err());
        assert!(model_signal_strength(-100.0, 600_000.0, 95.0, 900_000.0, 35.0, &params).is_err());
    }

    #[test]
    fn default_zenith_strength_is_near_minus_100_dbm() {
        let params = ChannelParams::default();
        let geom = SlantGeometry { distance_m: 550_000.0, elevation_deg: 90.0 };
        let s = mean_received_dbm(geom, &params).unwrap();
        assert!((s + 100.0).abs() < 0.5, "zenith strength {s}");
    }

    #[test]
    fn slant_range_limits() {
        assert!((slant_range_m(550_000.0, 90.0) - 550_000.0).abs() < 1e-6);
        // At lower elevation the slant range only grows.
        assert!(slant_range_m(550_000.0, 40.0) > 550_000.0);
        let d40 = slant_range_m(550_000.0, 40.0);
        assert!((700_000.0..900_000.0).contains(&d40), "d40 {d40}");
    }

    #[test]
    fn clean_synth_trace_satisfies_the_projection_exactly() {
        let params = ChannelParams::default();
        let altitude = 550_000.0;
        let geometry = pass_geometry(altitude, 75.0, 40.0, 1.0);
        assert!(geometry.len() > 60, "pass too short: {}", geometry.len());
        let mut rng = StdRng::seed_from_u64(5);
        let samples = synth_trace(&geometry, &params, &NoiseProfile::none(), altitude, 5, &mut rng);
        assert_eq!(samples.len(), geometry.len() - 5);
        for s in &samples {
            let d0 = slant_range_m(altitude, s.ref_elevation_deg);
            let d = slant_range_m(altitude, s.elevation_deg);
            let projected = model_signal_strength(
                s.ref_strength_dbm,
                d0,
                s.ref_elevation_deg,
                d,
                s.elevation_deg,
                &params,
            )
            .unwrap();
            assert!((projected - s.strength_dbm).abs() < 1e-6, "t={} {} vs {}", s.t_s, projected,
                s.strength_dbm);
        }
        // Peak elevation reached, strength strongest near the peak.
        let peak = samples.iter().map(|s| s.elevation_deg).fold(f64::MIN, f64::max);
        assert!((peak - 75.0).abs() < 1.5, "peak {peak}");
    }

    #[test]
    fn trace_csv_round_trips_exactly() {
        let params = ChannelParams::default();
        let geometry = pass_geometry(550_000.0, 60.0, 40.0, 2.0);
        let mut rng = StdRng::seed_from_u64(11);
        let noise = NoiseProfile {
            shadow_sigma_db: 1.3,
            bias: ElevationBias::Exponential { amplitude_db: 4.0, scale_deg: 15.0 },
        };
        let samples = synth_trace(&geometry, &params, &noise, 550_000.0, 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &samples).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(samples, back);

        let mut garbled = std::fs::read_to_string(&path).unwrap();
        garbled = garbled.replace(TRACE_FORMAT_LINE, "# something-else v9");
        std::fs::write(&path, garbled).unwrap();
        assert!(read_trace_csv(&path).is_err());
    }
}
