//! User terminal motion and position reporting. Terminals fly great
//! circles at a class-specific speed; what the network knows about them
//! depends on the reporting policy.

use serde::{Deserialize, Serialize};

use crate::orbit::{GroundNode, EARTH_RADIUS_M};

/// Terminal class. Speeds are fixed per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MobilityModel {
    Static,
    Pedestrian,
    Train,
    Airplane,
}

impl MobilityModel {
    pub fn speed_m_s(self) -> f64 {
        match self {
            MobilityModel::Static => 0.0,
            MobilityModel::Pedestrian => 1.5,
            MobilityModel::Train => 100.0,
            MobilityModel::Airplane => 250.0,
        }
    }
}

/// How fresh the network's copy of the terminal position is. Active
/// terminals report course and speed, so the network can extrapolate
/// exactly; inactive ones are only as current as their last fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ReportingPolicy {
    Active,
    Inactive { staleness_s: f64 },
}

/// One terminal's track: a great circle from `home` along `heading_deg`
/// (clockwise from north) at the class speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeMotion {
    pub home: GroundNode,
    pub heading_deg: f64,
    pub model: MobilityModel,
}

impl UeMotion {
    /// Where the terminal actually is at `t`.
    pub fn true_position(&self, t: f64) -> GroundNode {
        let speed = self.model.speed_m_s();
        if speed == 0.0 || t == 0.0 {
            return self.home;
        }
        let delta = speed * t / EARTH_RADIUS_M;
        let theta = self.heading_deg.to_radians();
        let phi1 = self.home.lat_deg.to_radians();
        let lam1 = self.home.lon_deg.to_radians();
        let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
        let lam2 = lam1
            + (theta.sin() * delta.sin() * phi1.cos())
                .atan2(delta.cos() - phi1.sin() * phi2.sin());
        let mut lon = lam2.to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GroundNode { lat_deg: phi2.to_degrees(), lon_deg: lon, alt_m: self.home.alt_m }
    }

    /// Where the network believes the terminal is at `t`.
    pub fn reported_position(&self, t: f64, policy: ReportingPolicy) -> GroundNode {
        match policy {
            ReportingPolicy::Active => self.true_position(t),
            ReportingPolicy::Inactive { staleness_s } => {
                self.true_position((t - staleness_s).max(0.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_terminals_never_move() {
        let motion = UeMotion {
            home: GroundNode::new(35.0, 139.0),
            heading_deg: 123.0,
            model: MobilityModel::Static,
        };
        assert_eq!(motion.true_position(86_400.0), motion.home);
        assert_eq!(
            motion.reported_position(7200.0, ReportingPolicy::Inactive { staleness_s: 600.0 }),
            motion.home
        );
    }

    #[test]
    fn displacement_matches_speed_times_time() {
        for (model, speed) in [
            (MobilityModel::Pedestrian, 1.5),
            (MobilityModel::Train, 100.0),
            (MobilityModel::Airplane, 250.0),
        ] {
            for heading in [0.0, 37.0, 90.0, 215.0] {
                let motion = UeMotion {
                    home: GroundNode::new(20.0, 60.0),
                    heading_deg: heading,
                    model,
                };
                let t = 600.0;
                let there = motion.true_position(t);
                // Great-circle distance from the start.
                let phi1 = motion.home.lat_deg.to_radians();
                let phi2 = there.lat_deg.to_radians();
                let dlam = (there.lon_deg - motion.home.lon_deg).to_radians();
                let cos_d = phi1.sin() * phi2.sin() + phi1.cos() * phi2.cos() * dlam.cos();
                let dist = cos_d.clamp(-1.0, 1.0).acos() * EARTH_RADIUS_M;
                let expected = speed * t;
                assert!(
                    (dist - expected).abs() < 1.0,
                    "{model:?} heading {heading}: {dist} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn northbound_motion_raises_latitude_only() {
        let motion = UeMotion {
            home: GroundNode::new(10.0, 50.0),
            heading_deg: 0.0,
            model: MobilityModel::Train,
        };
        let p = motion.true_position(3600.0);
        assert!(p.lat_deg > 10.0);
        assert!((p.lon_deg - 50.0).abs() < 1e-9);
        // 360 km north is about 3.24 degrees of latitude.
        let expected = 10.0 + (100.0 * 3600.0 / EARTH_RADIUS_M).to_degrees();
        assert!((p.lat_deg - expected).abs() < 1e-9);
    }

    #[test]
    fn inactive_reports_lag_by_the_staleness() {
        let motion = UeMotion {
            home: GroundNode::new(0.0, 0.0),
            heading_deg: 90.0,
            model: MobilityModel::Airplane,
        };
        let policy = ReportingPolicy::Inactive { staleness_s: 600.0 };
        let reported = motion.reported_position(1000.0, policy);
        assert_eq!(reported, motion.true_position(400.0));
        // Before the first fix interval elapses, the home fix stands.
        assert_eq!(motion.reported_position(300.0, policy), motion.true_position(0.0));
        assert_eq!(
            motion.reported_position(1000.0, ReportingPolicy::Active),
            motion.true_position(1000.0)
        );
    }
}
