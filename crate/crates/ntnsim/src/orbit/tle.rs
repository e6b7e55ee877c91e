//! Minimal two-line-element ingestion. Only the fields needed to place a
//! satellite on a circular orbit are read: inclination, RAAN, mean anomaly
//! and mean motion. Eccentricity and argument of perigee are ignored, so
//! the result is the circular orbit with the same plane, phase and period.

use super::{OrbitError, SatId, SatelliteState, Vec3, MU_EARTH};

/// Circular elements extracted from one TLE entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularElements {
    pub name: Option<String>,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub mean_anomaly_deg: f64,
    /// Semi-major axis recovered from the mean motion.
    pub semimajor_axis_m: f64,
}

impl CircularElements {
    /// Epoch state on the circular orbit these elements describe.
    pub fn to_state(&self, id: SatId) -> SatelliteState {
        let incl = self.inclination_deg.to_radians();
        let raan = self.raan_deg.to_radians();
        let u = self.mean_anomaly_deg.to_radians();
        let a = self.semimajor_axis_m;
        let speed = (MU_EARTH / a).sqrt();
        let p_hat = Vec3::new(raan.cos(), raan.sin(), 0.0);
        let q_hat = Vec3::new(-raan.sin() * incl.cos(), raan.cos() * incl.cos(), incl.sin());
        SatelliteState {
            id,
            position_m: p_hat * (a * u.cos()) + q_hat * (a * u.sin()),
            velocity_m_s: p_hat * (-speed * u.sin()) + q_hat * (speed * u.cos()),
        }
    }
}

fn field(line: &str, range: std::ops::Range<usize>, what: &str) -> Result<f64, OrbitError> {
    let raw = line
        .get(range.clone())
        .ok_or_else(|| OrbitError::Tle(format!("line too short for {what}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| OrbitError::Tle(format!("bad {what} field {raw:?}")))
}

/// Parses TLE text: optional name lines followed by "1 ..."/"2 ..." pairs.
/// Blank lines are skipped. Returns one element set per pair, in file order.
pub fn parse_tle(text: &str) -> Result<Vec<CircularElements>, OrbitError> {
    let mut out = Vec::new();
    let mut name: Option<String> = None;
    let mut line1: Option<&str> = None;
    for line in text.lines() {
        let line = line.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("1 ") {
            if line1.is_some() {
                return Err(OrbitError::Tle("line 1 without a matching line 2".into()));
            }
            line1 = Some(line);
        } else if line.starts_with("2 ") {
            let l1 = line1
                .take()
                .ok_or_else(|| OrbitError::Tle("line 2 without a preceding line 1".into()))?;
            // Column positions are fixed by the TLE format (0-based here).
            let _ = l1; // line 1 carries identity and epoch only.
            let inclination_deg = field(line, 8..16, "inclination")?;
            let raan_deg = field(line, 17..25, "RAAN")?;
            let mean_anomaly_deg = field(line, 43..51, "mean anomaly")?;
            let mean_motion_rev_day = field(line, 52..63, "mean motion")?;
            if mean_motion_rev_day <= 0.0 {
                return Err(OrbitError::Tle("mean motion must be positive".into()));
            }
            let n_rad_s = mean_motion_rev_day * 2.0 * std::f64::consts::PI / 86_400.0;
            let semimajor_axis_m = (MU_EARTH / (n_rad_s * n_rad_s)).cbrt();
            out.push(CircularElements {
                name: name.take(),
                inclination_deg,
                raan_deg,
                mean_anomaly_deg,
                semimajor_axis_m,
            });
        } else {
            name = Some(line.trim().to_string());
        }
    }
    if line1.is_some() {
        return Err(OrbitError::Tle("dangling line 1 at end of input".into()));
    }
    if out.is_empty() {
        return Err(OrbitError::Tle("no element sets found".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::EARTH_RADIUS_M;

    const ISS: &str = "\
ISS (ZARYA)
1 25544U 98067A   24023.58152778  .00016717  00000-0  30270-3 0  9000
2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391434280";

    #[test]
    fn parses_iss_elements() {
        let sets = parse_tle(ISS).unwrap();
        assert_eq!(sets.len(), 1);
        let e = &sets[0];
        assert_eq!(e.name.as_deref(), Some("ISS (ZARYA)"));
        assert!((e.inclination_deg - 51.6416).abs() < 1e-9);
        assert!((e.raan_deg - 247.4627).abs() < 1e-9);
        assert!((e.mean_anomaly_deg - 325.0288).abs() < 1e-9);

        // Oracle: a = (mu / n^2)^(1/3) for n = 15.72125391 rev/day.
        let n = 15.72125391 * 2.0 * std::f64::consts::PI / 86_400.0;
        let expected_a = (MU_EARTH / (n * n)).cbrt();
        assert!((e.semimajor_axis_m - expected_a).abs() < 1.0);
        let alt_km = (e.semimajor_axis_m - EARTH_RADIUS_M) / 1000.0;
        assert!((350.0..450.0).contains(&alt_km), "altitude {alt_km} km");
    }

    #[test]
    fn element_state_sits_on_the_declared_orbit() {
        let e = &parse_tle(ISS).unwrap()[0];
        let s = e.to_state(SatId(0));
        assert!((s.position_m.norm() - e.semimajor_axis_m).abs() < 1e-6);
        assert!(s.position_m.dot(s.velocity_m_s).abs() < 1e-3);
        let incl = e.inclination_deg.to_radians();
        let raan = e.raan_deg.to_radians();
        let normal = Vec3::new(raan.sin() * incl.sin(), -raan.cos() * incl.sin(), incl.cos());
        assert!(s.position_m.dot(normal).abs() < 1e-3);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_tle("").is_err());
        assert!(parse_tle("2 25544  51.6416").is_err());
        let truncated = "1 25544U 98067A   24023.58152778\n2 25544  51.6416 247.4627";
        assert!(parse_tle(truncated).is_err());
    }
}
