//! Domain types shared by every stage of the simulator.
//!
//! Energies are kWh per settlement interval, prices are EUR/kWh. Everything in
//! here is an immutable value once constructed.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Relative tolerance used by every energy and money identity check.
pub const REL_TOL: f64 = 1e-9;
/// Absolute floor below which two quantities are considered equal (kWh or EUR).
pub const ABS_TOL: f64 = 1e-12;

/// `a == b` up to [`REL_TOL`] relative to the larger magnitude, with an
/// [`ABS_TOL`] floor.
pub fn approx_eq(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= (REL_TOL * scale).max(ABS_TOL)
}

/// `a <= b` with the same tolerance as [`approx_eq`].
pub fn approx_le(a: f64, b: f64) -> bool {
    a <= b || approx_eq(a, b)
}

macro_rules! label_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(label: impl Into<String>) -> Self {
                Self(label.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(label: &str) -> Self {
                Self(label.to_owned())
            }
        }
    };
}

label_type!(
    /// Participant label such as `H1`. Ordering is lexicographic on the label
    /// and is the tie-break order everywhere in the engine.
    ParticipantId
);
label_type!(
    /// Distribution feeder label such as `F1`.
    FeederId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Prosumer,
    Consumer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Surplus is first shared inside each feeder, leftovers community-wide.
    FeederAware,
    /// One community-wide pool.
    FeederAgnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Equal,
    Proportional,
    /// Sequential fill in ascending-demand order.
    #[serde(rename = "rank", alias = "rank-based")]
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Rules fixed once from annual demand.
    Static,
    /// Rules recomputed every interval from current demand.
    Dynamic,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::FeederAware, Strategy::FeederAgnostic];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FeederAware => "feeder-aware",
            Strategy::FeederAgnostic => "feeder-agnostic",
        }
    }
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Equal, Scheme::Proportional, Scheme::Rank];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Equal => "equal",
            Scheme::Proportional => "proportional",
            Scheme::Rank => "rank",
        }
    }
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Dynamic, Method::Static];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Static => "static",
            Method::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (strategy, scheme, method) selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Combination {
    pub strategy: Strategy,
    pub scheme: Scheme,
    pub method: Method,
}

impl Combination {
    pub fn new(strategy: Strategy, scheme: Scheme, method: Method) -> Self {
        Self {
            strategy,
            scheme,
            method,
        }
    }

    /// All twelve combinations, strategy-major.
    pub fn all() -> Vec<Combination> {
        let mut out = Vec::with_capacity(12);
        for strategy in Strategy::ALL {
            for scheme in Scheme::ALL {
                for method in Method::ALL {
                    out.push(Combination::new(strategy, scheme, method));
                }
            }
        }
        out
    }

    /// Schemes whose shared energy is `min(total surplus, total demand)` in
    /// every interval under either strategy.
    pub fn is_maximal_sharing(&self) -> bool {
        matches!(
            (self.scheme, self.method),
            (Scheme::Proportional, Method::Dynamic) | (Scheme::Rank, _)
        )
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.strategy, self.scheme, self.method)
    }
}

/// Flat tariff. All prices EUR/kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tariff {
    pub feed_in_price: f64,
    pub grid_energy_price: f64,
    pub grid_network_price: f64,
    pub grid_other_price: f64,
    pub community_energy_price: f64,
    pub same_feeder_network_discount: f64,
    pub other_feeder_network_discount: f64,
}

impl Default for Tariff {
    /// Swiss municipal household prices.
    fn default() -> Self {
        Self {
            feed_in_price: 0.08,
            grid_energy_price: 0.1137,
            grid_network_price: 0.1092,
            grid_other_price: 0.0333,
            community_energy_price: 0.1137,
            same_feeder_network_discount: 0.40,
            other_feeder_network_discount: 0.20,
        }
    }
}

impl Tariff {
    /// Retail price of one kWh bought from the grid.
    pub fn grid_retail_price(&self) -> f64 {
        self.grid_energy_price + self.grid_network_price + self.grid_other_price
    }

    /// Network charge on one kWh sourced from a prosumer on the buyer's feeder.
    pub fn same_feeder_network_price(&self) -> f64 {
        self.grid_network_price * (1.0 - self.same_feeder_network_discount)
    }

    /// Network charge on one kWh sourced from a prosumer on another feeder.
    pub fn other_feeder_network_price(&self) -> f64 {
        self.grid_network_price * (1.0 - self.other_feeder_network_discount)
    }

    /// All-in buyer price of one kWh of same-feeder community energy.
    pub fn community_price_same(&self) -> f64 {
        self.community_energy_price + self.same_feeder_network_price() + self.grid_other_price
    }

    /// All-in buyer price of one kWh of cross-feeder community energy.
    pub fn community_price_other(&self) -> f64 {
        self.community_energy_price + self.other_feeder_network_price() + self.grid_other_price
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let prices = [
            ("feed_in_price", self.feed_in_price),
            ("grid_energy_price", self.grid_energy_price),
            ("grid_network_price", self.grid_network_price),
            ("grid_other_price", self.grid_other_price),
            ("community_energy_price", self.community_energy_price),
        ];
        for (name, value) in prices {
            if !value.is_finite() || value < 0.0 {
                out.push(Violation::new(
                    format!("tariff.{name}"),
                    format!("price must be finite and non-negative, got {value}"),
                ));
            }
        }
        let discounts = [
            ("same_feeder_network_discount", self.same_feeder_network_discount),
            ("other_feeder_network_discount", self.other_feeder_network_discount),
        ];
        for (name, value) in discounts {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::new(
                    format!("tariff.{name}"),
                    format!("discount must lie in [0, 1], got {value}"),
                ));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Participant {
    pub id: ParticipantId,
    pub feeder: FeederId,
    pub role: Role,
}

impl Participant {
    pub fn new(id: &str, feeder: &str, role: Role) -> Self {
        Self {
            id: id.into(),
            feeder: feeder.into(),
            role,
        }
    }
}

fn one_minute() -> u32 {
    1
}

/// Community roster plus scheme selection and tariff, as read from the JSON
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityConfig {
    pub participants: Vec<Participant>,
    pub strategy: Strategy,
    pub scheme: Scheme,
    pub method: Method,
    #[serde(default = "one_minute")]
    pub interval_minutes: u32,
    #[serde(default)]
    pub tariff: Tariff,
}

impl CommunityConfig {
    pub fn combination(&self) -> Combination {
        Combination::new(self.strategy, self.scheme, self.method)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// A broken config invariant. `subject` names the participant, feeder or
/// field at fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl Violation {
    pub fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Checks every [`CommunityConfig`] invariant. An empty list means the config
/// is usable.
pub fn validate_config(config: &CommunityConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.participants.is_empty() {
        out.push(Violation::new("participants", "no participants"));
    }

    let mut seen: BTreeMap<&ParticipantId, &FeederId> = BTreeMap::new();
    for p in &config.participants {
        if p.id.as_str().trim().is_empty() {
            out.push(Violation::new("participants", "participant with empty id"));
            continue;
        }
        if p.feeder.as_str().trim().is_empty() {
            out.push(Violation::new(p.id.to_string(), "empty feeder id"));
        }
        match seen.get(&p.id) {
            Some(&feeder) if feeder != &p.feeder => out.push(Violation::new(
                p.id.to_string(),
                format!("assigned to more than one feeder ({feeder} and {})", p.feeder),
            )),
            Some(_) => out.push(Violation::new(p.id.to_string(), "listed more than once")),
            None => {
                seen.insert(&p.id, &p.feeder);
            }
        }
    }

    if config.interval_minutes == 0 {
        out.push(Violation::new("interval_minutes", "interval length must be positive"));
    }
    config.tariff.violations(&mut out);
    out
}

/// Surplus and demand of one participant in one interval after
/// self-consumption.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NetPosition {
    pub surplus: f64,
    pub demand: f64,
}

/// Where one participant's energy went in one interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    /// Received from prosumers on the same feeder.
    pub allocated_same: f64,
    /// Received from prosumers on other feeders.
    pub allocated_other: f64,
    pub grid_import: f64,
    /// Own surplus consumed by other members.
    pub sold_community: f64,
    /// Own surplus sent to the grid at the feed-in price.
    pub grid_export: f64,
}

impl AllocationOutcome {
    pub fn allocated(&self) -> f64 {
        self.allocated_same + self.allocated_other
    }

    /// Demand implied by the outcome.
    pub fn demand(&self) -> f64 {
        self.allocated() + self.grid_import
    }

    /// Surplus implied by the outcome.
    pub fn surplus(&self) -> f64 {
        self.sold_community + self.grid_export
    }
}

/// Index-based view of a validated roster. Participants are sorted by id and
/// feeders by label, so index order is the deterministic tie-break order.
#[derive(Debug, Clone)]
pub struct Community {
    participants: Vec<Participant>,
    feeders: Vec<FeederId>,
    feeder_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Community {
    pub fn new(participants: &[Participant]) -> Result<Self, Vec<Violation>> {
        let mut participants = participants.to_vec();
        participants.sort_by(|a, b| a.id.cmp(&b.id));

        let mut violations = Vec::new();
        if participants.is_empty() {
            violations.push(Violation::new("participants", "no participants"));
        }
        for pair in participants.windows(2) {
            if pair[0].id == pair[1].id {
                violations.push(Violation::new(pair[0].id.to_string(), "listed more than once"));
            }
        }
        if !violations.is_empty() {
            return Err(violations);
        }

        let mut feeders: Vec<FeederId> = participants.iter().map(|p| p.feeder.clone()).collect();
        feeders.sort();
        feeders.dedup();
        let feeder_of: Vec<usize> = participants
            .iter()
            .map(|p| feeders.binary_search(&p.feeder).expect("feeder listed"))
            .collect();
        let mut members = vec![Vec::new(); feeders.len()];
        for (i, &f) in feeder_of.iter().enumerate() {
            members[f].push(i);
        }
        Ok(Self {
            participants,
            feeders,
            feeder_of,
            members,
        })
    }

    pub fn from_config(config: &CommunityConfig) -> Result<Self, Vec<Violation>> {
        let violations = validate_config(config);
        if !violations.is_empty() {
            return Err(violations);
        }
        Self::new(&config.participants)
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn participant(&self, index: usize) -> &Participant {
        &self.participants[index]
    }

    pub fn index_of(&self, id: &ParticipantId) -> Option<usize> {
        self.participants.binary_search_by(|p| p.id.cmp(id)).ok()
    }

    pub fn feeders(&self) -> &[FeederId] {
        &self.feeders
    }

    pub fn feeder_count(&self) -> usize {
        self.feeders.len()
    }

    /// Feeder index of participant `index`.
    pub fn feeder_of(&self, index: usize) -> usize {
        self.feeder_of[index]
    }

    /// Participant indices on feeder `feeder`, ascending.
    pub fn members(&self, feeder: usize) -> &[usize] {
        &self.members[feeder]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_roster() -> Vec<Participant> {
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

    fn config(participants: Vec<Participant>) -> CommunityConfig {
        CommunityConfig {
            participants,
            strategy: Strategy::FeederAware,
            scheme: Scheme::Equal,
            method: Method::Static,
            interval_minutes: 1,
            tariff: Tariff::default(),
        }
    }

    #[test]
    fn reference_roster_is_valid() {
        let cfg = config(reference_roster());
        assert!(validate_config(&cfg).is_empty());
        let community = Community::from_config(&cfg).unwrap();
        assert_eq!(community.len(), 15);
        assert_eq!(community.feeder_count(), 4);
        assert_eq!(community.members(0).len(), 6);
    }

    #[test]
    fn participant_on_two_feeders_is_one_violation() {
        let mut roster = reference_roster();
        roster.push(Participant::new("H1", "F2", Role::Prosumer));
        let violations = validate_config(&config(roster));
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].subject, "H1");
        assert!(violations[0].message.contains("more than one feeder"));
    }

    #[test]
    fn empty_roster() {
        let violations = validate_config(&config(vec![]));
        assert_eq!(violations, vec![Violation::new("participants", "no participants")]);
    }

    #[test]
    fn bad_tariff_fields_are_named() {
        let mut cfg = config(reference_roster());
        cfg.tariff.feed_in_price = -0.1;
        cfg.tariff.other_feeder_network_discount = 1.5;
        let subjects: Vec<_> = validate_config(&cfg).into_iter().map(|v| v.subject).collect();
        assert_eq!(
            subjects,
            ["tariff.feed_in_price", "tariff.other_feeder_network_discount"]
        );
    }

    #[test]
    fn default_tariff_prices() {
        let t = Tariff::default();
        assert_eq!(t.grid_retail_price(), 0.1137 + 0.1092 + 0.0333);
        assert!((t.grid_retail_price() - 0.2562).abs() < 1e-15);
        assert!((t.community_price_same() - 0.21252).abs() < 1e-15);
        assert!((t.community_price_other() - 0.23436).abs() < 1e-15);
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let good = config(reference_roster()).to_json();
        assert!(CommunityConfig::from_json(&good).is_ok());
        let bad = good.replacen("\"strategy\"", "\"colour\": 1, \"strategy\"", 1);
        assert!(CommunityConfig::from_json(&bad).is_err());
        let bad_tariff = good.replacen("\"feed_in_price\"", "\"vat\": 0.1, \"feed_in_price\"", 1);
        assert!(CommunityConfig::from_json(&bad_tariff).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let text = r#"{"participants":[{"id":"H1","feeder":"F1","role":"prosumer"}],
            "strategy":"feeder-agnostic","scheme":"rank-based","method":"static"}"#;
        let config = CommunityConfig::from_json(text).unwrap();
        assert_eq!(config.interval_minutes, 1);
        assert_eq!(config.tariff, Tariff::default());
        assert_eq!(config.scheme, Scheme::Rank);
    }

    #[test]
    fn scheme_names() {
        let s: Scheme = serde_json::from_str("\"rank-based\"").unwrap();
        assert_eq!(s, Scheme::Rank);
        assert_eq!(serde_json::to_string(&Scheme::Rank).unwrap(), "\"rank\"");
        assert_eq!(
            serde_json::to_string(&Strategy::FeederAware).unwrap(),
            "\"feeder-aware\""
        );
        assert_eq!(Combination::all().len(), 12);
    }

    #[test]
    fn tolerance_helpers() {
        assert!(approx_eq(1.0, 1.0 + 1e-10));
        assert!(!approx_eq(1.0, 1.0 + 1e-8));
        assert!(approx_eq(0.0, 1e-13));
        assert!(approx_le(2.0, 2.0 - 1e-12));
    }
}
