use ecshare_core::{Community, FeederId, NetPosition, Participant, ParticipantId, Role};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleParticipant {
    pub id: ParticipantId,
    pub feeder: FeederId,
    pub position: NetPosition,
    /// Demand summed over the year, used by static rules.
    pub annual_demand: f64,
}

/// One interval of a small community.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleInstance {
    /// Sorted by id.
    pub participants: Vec<OracleParticipant>,
}

impl OracleInstance {
    pub fn new(mut participants: Vec<OracleParticipant>) -> Self {
        participants.sort_by(|a, b| a.id.cmp(&b.id));
        Self { participants }
    }

    /// Roster for the engine. Roles are inferred from the interval: anyone
    /// with surplus is a prosumer.
    pub fn community(&self) -> Community {
        let roster: Vec<Participant> = self
            .participants
            .iter()
            .map(|p| Participant {
                id: p.id.clone(),
                feeder: p.feeder.clone(),
                role: if p.position.surplus > 0.0 {
                    Role::Prosumer
                } else {
                    Role::Consumer
                },
            })
            .collect();
        Community::new(&roster).expect("instance ids are unique")
    }

    /// Positions in id order (the engine's index order).
    pub fn positions(&self) -> Vec<NetPosition> {
        self.participants.iter().map(|p| p.position).collect()
    }

    pub fn annual_demands(&self) -> Vec<f64> {
        self.participants.iter().map(|p| p.annual_demand).collect()
    }
}

fn energy(rng: &mut ChaCha8Rng, quantized: bool) -> f64 {
    if quantized {
        rng.gen_range(1..=4) as f64
    } else {
        rng.gen_range(0.01..10.0)
    }
}

/// A random interval with 1..=`max_participants` members over
/// 1..=`max_feeders` feeders. Roughly half the instances use small integer
/// energies so that ties and exact saturation show up often.
pub fn random_instance(rng: &mut ChaCha8Rng, max_participants: usize, max_feeders: usize) -> OracleInstance {
    let n = rng.gen_range(1..=max_participants);
    let feeders = rng.gen_range(1..=max_feeders);
    let quantized = rng.gen_bool(0.5);
    let participants = (0..n)
        .map(|i| {
            let position = match rng.gen_range(0..10) {
                0..=3 => NetPosition {
                    surplus: energy(rng, quantized),
                    demand: 0.0,
                },
                4..=8 => NetPosition {
                    surplus: 0.0,
                    demand: energy(rng, quantized),
                },
                _ => NetPosition::default(),
            };
            let annual_demand = match rng.gen_range(0..8) {
                0 => 0.0,
                1 => 100.0,
                _ => rng.gen_range(10.0..1000.0),
            };
            OracleParticipant {
                id: ParticipantId::new(format!("P{i}")),
                feeder: FeederId::new(format!("F{}", rng.gen_range(0..feeders))),
                position,
                annual_demand,
            }
        })
        .collect();
    OracleInstance::new(participants)
}
