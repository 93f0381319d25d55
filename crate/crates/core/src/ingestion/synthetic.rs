//! Seeded synthetic communities for desk-scale runs and tests.
//!
//! Households get a diurnal load (base load, morning and evening peaks,
//! random appliance spikes, winter uplift). Prosumers add rooftop PV shaped
//! by day length and a community-wide daily cloud cover. Output is a pure
//! function of the [`SyntheticSpec`], seed included.

use chrono::{DateTime, Datelike, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use thiserror::Error;

use super::{IntervalSeries, ParticipantProfile, ProfileSet};
use crate::model::{CommunityConfig, Method, Participant, Role, Scheme, Strategy, Tariff};

const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntheticError {
    #[error("synthetic community needs at least one participant")]
    NoParticipants,
    #[error("synthetic community needs at least one day")]
    NoDays,
    #[error("interval of {0} minutes does not divide a day")]
    BadInterval(u32),
}

/// Fifteen households on four feeders; H6, H8, H9, H12, H14 and H15 are
/// consumers.
pub fn reference_roster() -> Vec<Participant> {
    let layout: [(&str, &[&str]); 4] = [
        ("F1", &["H1", "H9", "H10", "H11", "H13", "H14"]),
        ("F2", &["H2", "H3"]),
        ("F3", &["H4", "H5", "H6", "H12"]),
        ("F4", &["H7", "H8", "H15"]),
    ];
    let consumers = ["H6", "H8", "H9", "H12", "H14", "H15"];
    layout
        .iter()
        .flat_map(|(feeder, ids)| {
            ids.iter().map(move |id| {
                let role = if consumers.contains(id) {
                    Role::Consumer
                } else {
                    Role::Prosumer
                };
                Participant::new(id, feeder, role)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub roster: Vec<Participant>,
    pub days: u32,
    pub interval_minutes: u32,
    pub seed: u64,
    pub start: DateTime<Utc>,
}

impl SyntheticSpec {
    /// Reference roster at one-minute resolution from 2020-01-01.
    pub fn reference(seed: u64, days: u32) -> Self {
        Self {
            roster: reference_roster(),
            days,
            interval_minutes: 1,
            seed,
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    /// `count` households dealt round-robin onto `feeders` feeders; every
    /// third household is a consumer.
    pub fn uniform(count: usize, feeders: usize, seed: u64, days: u32) -> Self {
        let roster = (0..count)
            .map(|i| {
                let role = if i % 3 == 2 { Role::Consumer } else { Role::Prosumer };
                Participant::new(&format!("H{}", i + 1), &format!("F{}", i % feeders.max(1) + 1), role)
            })
            .collect();
        Self {
            roster,
            ..Self::reference(seed, days)
        }
    }

    pub fn with_interval(mut self, minutes: u32) -> Self {
        self.interval_minutes = minutes;
        self
    }

    pub fn with_start(mut self, start: DateTime<Utc>) -> Self {
        self.start = start;
        self
    }

    /// Every participant made a consumer.
    pub fn consumers_only(mut self) -> Self {
        for p in &mut self.roster {
            p.role = Role::Consumer;
        }
        self
    }
}

struct Household {
    base_kw: f64,
    morning_kw: f64,
    morning_hour: f64,
    midday_kw: f64,
    evening_kw: f64,
    evening_hour: f64,
    spike_kw: f64,
    spikes_per_hour: f64,
    pv_kwp: f64,
    solar_shift_hours: f64,
}

impl Household {
    fn draw(rng: &mut ChaCha8Rng, role: Role) -> Self {
        Self {
            base_kw: rng.gen_range(0.15..0.45),
            morning_kw: rng.gen_range(0.3..1.0),
            morning_hour: rng.gen_range(6.5..8.5),
            midday_kw: rng.gen_range(0.05..0.4),
            evening_kw: rng.gen_range(0.6..1.6),
            evening_hour: rng.gen_range(18.0..20.5),
            spike_kw: rng.gen_range(1.0..2.5),
            spikes_per_hour: rng.gen_range(0.2..0.8),
            pv_kwp: match role {
                Role::Prosumer => rng.gen_range(3.0..9.0),
                Role::Consumer => 0.0,
            },
            solar_shift_hours: rng.gen_range(-0.5..0.5),
        }
    }

    fn load_kw(&self, hour: f64, season: f64) -> f64 {
        let bump = |center: f64, width: f64| (-((hour - center) / width).powi(2)).exp();
        let daytime = if (9.0..17.0).contains(&hour) {
            self.midday_kw
        } else {
            0.0
        };
        (self.base_kw
            + self.morning_kw * bump(self.morning_hour, 1.0)
            + daytime
            + self.evening_kw * bump(self.evening_hour, 1.6))
            * (1.0 + 0.25 * season)
    }
}

/// Day of year in [0, 366) and winter-ness in [-1, 1] (1 at midwinter).
fn season(day: u32) -> (f64, f64) {
    let doy = (day % 366) as f64;
    (doy, (2.0 * PI * (doy + 10.0) / 365.25).cos())
}

fn solar_kw(kwp: f64, hour: f64, doy: f64, cloud: f64) -> f64 {
    let summer = (2.0 * PI * (doy - 80.0) / 365.25).sin();
    let day_length = 12.0 + 3.5 * summer;
    let sunrise = 12.5 - day_length / 2.0;
    let x = (hour - sunrise) / day_length;
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let elevation = (PI * x).sin().powf(1.3);
    let peak = 0.7 + 0.3 * summer;
    kwp * 0.85 * elevation * peak * cloud
}

fn round_kwh(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Builds a reproducible community and its profiles. The config defaults to
/// feeder-aware, dynamic proportional sharing with the default tariff.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(ProfileSet, CommunityConfig), SyntheticError> {
    if spec.roster.is_empty() {
        return Err(SyntheticError::NoParticipants);
    }
    if spec.days == 0 {
        return Err(SyntheticError::NoDays);
    }
    if spec.interval_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(spec.interval_minutes) {
        return Err(SyntheticError::BadInterval(spec.interval_minutes));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_day = (MINUTES_PER_DAY / spec.interval_minutes) as usize;
    let n = per_day * spec.days as usize;
    let hours = 24 * spec.days as usize;
    let step_hours = spec.interval_minutes as f64 / 60.0;
    let first_day = spec.start.ordinal0();

    // Shared weather: daily clearness and hourly variability.
    let mut cloud = Vec::with_capacity(hours);
    for _ in 0..spec.days {
        let clear: f64 = rng.gen_range(0.25..1.0);
        let variability: f64 = rng.gen_range(0.0..0.5);
        for _ in 0..24 {
            cloud.push(clear * (1.0 - variability * rng.gen::<f64>()));
        }
    }

    let mut roster = spec.roster.clone();
    roster.sort_by(|a, b| a.id.cmp(&b.id));
    let mut profiles = Vec::with_capacity(roster.len());
    for p in &roster {
        let house = Household::draw(&mut rng, p.role);
        let spike_p = house.spikes_per_hour * step_hours;
        let mut generation = Vec::with_capacity(n);
        let mut consumption = Vec::with_capacity(n);
        for t in 0..n {
            let day = (t / per_day) as u32;
            let hour = ((t % per_day) as f64 + 0.5) * step_hours;
            let (doy, winter) = season(first_day + day);
            let noise: f64 = rng.gen_range(0.8..1.2);
            let mut load = house.load_kw(hour, winter) * noise;
            if rng.gen::<f64>() < spike_p {
                load += house.spike_kw;
            }
            consumption.push(round_kwh(load * step_hours));
            let pv = if house.pv_kwp > 0.0 {
                let c = cloud[day as usize * 24 + hour as usize];
                solar_kw(house.pv_kwp, hour - house.solar_shift_hours, doy, c) * rng.gen_range(0.95..1.0)
            } else {
                0.0
            };
            generation.push(round_kwh(pv * step_hours));
        }
        let series = |values| IntervalSeries {
            start: spec.start,
            step_minutes: spec.interval_minutes,
            values,
        };
        profiles.push(ParticipantProfile {
            id: p.id.clone(),
            generation: series(generation),
            consumption: series(consumption),
        });
    }

    let config = CommunityConfig {
        participants: spec.roster.clone(),
        strategy: Strategy::FeederAware,
        scheme: Scheme::Proportional,
        method: Method::Dynamic,
        interval_minutes: spec.interval_minutes,
        tariff: Tariff::default(),
    };
    let set = ProfileSet::new(profiles).expect("synthetic profiles are aligned");
    Ok((set, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::write_timeseries;
    use crate::model::validate_config;

    fn bytes(spec: &SyntheticSpec) -> Vec<u8> {
        let (set, config) = generate_synthetic(spec).unwrap();
        let mut out = config.to_json().into_bytes();
        write_timeseries(&set, &mut out).unwrap();
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec::reference(42, 2);
        assert_eq!(bytes(&spec), bytes(&spec));
        assert_ne!(bytes(&spec), bytes(&SyntheticSpec::reference(43, 2)));
    }

    #[test]
    fn consumers_only_has_no_surplus() {
        let (set, _) = generate_synthetic(&SyntheticSpec::reference(7, 2).consumers_only()).unwrap();
        for p in set.profiles() {
            assert!(p.generation.values.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn reference_roster_roles() {
        let (set, config) = generate_synthetic(&SyntheticSpec::reference(42, 1)).unwrap();
        assert!(validate_config(&config).is_empty());
        let prosumers = config.participants.iter().filter(|p| p.role == Role::Prosumer).count();
        assert_eq!((prosumers, config.participants.len() - prosumers), (9, 6));
        assert_eq!(set.intervals(), 1440);
        let surplus: f64 = set
            .profiles()
            .iter()
            .map(|p| {
                p.generation
                    .values
                    .iter()
                    .zip(&p.consumption.values)
                    .map(|(g, c)| (g - c).max(0.0))
                    .sum::<f64>()
            })
            .sum();
        assert!(surplus > 0.0);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let mut spec = SyntheticSpec::reference(1, 1);
        spec.roster.clear();
        assert_eq!(generate_synthetic(&spec).unwrap_err(), SyntheticError::NoParticipants);
        assert_eq!(
            generate_synthetic(&SyntheticSpec::reference(1, 0)).unwrap_err(),
            SyntheticError::NoDays
        );
        assert_eq!(
            generate_synthetic(&SyntheticSpec::reference(1, 1).with_interval(7)).unwrap_err(),
            SyntheticError::BadInterval(7)
        );
    }

    #[test]
    fn uniform_layout() {
        let spec = SyntheticSpec::uniform(15, 4, 1, 1);
        let feeders: std::collections::BTreeSet<_> = spec.roster.iter().map(|p| p.feeder.clone()).collect();
        assert_eq!(feeders.len(), 4);
        assert_eq!(spec.roster.iter().filter(|p| p.role == Role::Consumer).count(), 5);
    }
}
