//! One paging round of contention-based random access.
//!
//! A paging round opens `Y` trigger-defined sets of `R` access occasions (AOs).
//! Every attempting device makes a single uniform draw over all `Y·R` AOs and
//! sends MSG1 (a 16-bit RandomID) there. An AO chosen by exactly one device is
//! a success and the reader echoes the RandomID in MSG2. An AO chosen by two or
//! more devices is a collision for all of them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y` trigger-defined sets of `r` access occasions each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessOccasionGrid {
    pub r: u32,
    pub y: u32,
}

impl Default for AccessOccasionGrid {
    fn default() -> Self {
        Self { r: 8, y: 1 }
    }
}

impl AccessOccasionGrid {
    pub fn new(r: u32, y: u32) -> Result<Self> {
        let grid = Self { r, y };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("grid.r", "must be >= 1"));
        }
        if self.y == 0 {
            return Err(Error::invalid("grid.y", "must be >= 1"));
        }
        if self.r.checked_mul(self.y).is_none() {
            return Err(Error::invalid("grid", "r * y overflows"));
        }
        Ok(())
    }

    /// Number of AOs configured in the round, `y · r`.
    pub fn total(&self) -> u32 {
        self.r * self.y
    }
}

/// Access Random ID message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Msg1 {
    pub device_id: u32,
    pub ao_index: u32,
    pub random_id: u16,
}

/// Random ID Response entry, addressed by `(ao_index, echoed_random_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Msg2 {
    pub ao_index: u32,
    pub device_id: u32,
    pub echoed_random_id: u16,
}

/// Everything that happened in one paging round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round_index: u64,
    /// Paging instant (s).
    pub time: f64,
    /// Opaque TransactionID carried by the paging message.
    pub transaction_id: u64,
    pub q_used: f64,
    pub total_aos: u32,
    pub attempted: BTreeSet<u32>,
    pub ao_map: BTreeMap<u32, Vec<Msg1>>,
    pub successes: BTreeSet<u32>,
    pub collided: BTreeSet<u32>,
    /// Ideal-round overflow: contenders the scheduler left out.
    pub not_attempted: BTreeSet<u32>,
    pub used_aos: u32,
}

impl RoundOutcome {
    pub fn empty(total_aos: u32) -> Self {
        Self {
            round_index: 0,
            time: 0.0,
            transaction_id: 0,
            q_used: 1.0,
            total_aos,
            attempted: BTreeSet::new(),
            ao_map: BTreeMap::new(),
            successes: BTreeSet::new(),
            collided: BTreeSet::new(),
            not_attempted: BTreeSet::new(),
            used_aos: 0,
        }
    }

    pub fn attempts(&self) -> usize {
        self.attempted.len()
    }

    /// Re-derives the success and collision sets from AO occupancy alone.
    pub fn relabel_from_occupancy(&self) -> (BTreeSet<u32>, BTreeSet<u32>) {
        let mut successes = BTreeSet::new();
        let mut collided = BTreeSet::new();
        for msgs in self.ao_map.values() {
            match msgs.len() {
                0 => {}
                1 => {
                    successes.insert(msgs[0].device_id);
                }
                _ => collided.extend(msgs.iter().map(|m| m.device_id)),
            }
        }
        (successes, collided)
    }
}

/// Uniform sampler over the AO indices `[0, grid.total())`.
///
/// Build it once per round: constructing the distribution costs a division,
/// sampling does not.
#[derive(Debug, Clone, Copy)]
pub struct AoSampler(Uniform<u32>);

impl AoSampler {
    pub fn new(grid: &AccessOccasionGrid) -> Self {
        AoSampler(Uniform::new(0, grid.total()))
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.0.sample(rng)
    }
}

/// Uniform AO index in `[0, grid.total())`; same draw as [`AoSampler::draw`].
pub fn draw_ao_index<R: Rng + ?Sized>(rng: &mut R, grid: &AccessOccasionGrid) -> u32 {
    AoSampler::new(grid).draw(rng)
}

/// Success/collision counts of one round, without device identities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundTally {
    pub attempts: u32,
    pub successes: u32,
    pub collided: u32,
    pub used_aos: u32,
}

/// Applies the collision rule to an occupancy vector.
pub fn tally_occupancy(counts: &[u32]) -> RoundTally {
    let mut tally = RoundTally::default();
    for &c in counts {
        tally.attempts += c;
        match c {
            0 => {}
            1 => {
                tally.successes += 1;
                tally.used_aos += 1;
            }
            _ => {
                tally.collided += c;
                tally.used_aos += 1;
            }
        }
    }
    tally
}

/// Throws `k` anonymous contenders onto the grid and counts the result.
///
/// Same draw and same collision rule as [`run_contention_round`], without the
/// per-device bookkeeping; `counts` is scratch space reused across calls.
pub fn tally_round<R: Rng + ?Sized>(
    rng: &mut R,
    k: u32,
    grid: &AccessOccasionGrid,
    counts: &mut Vec<u32>,
) -> RoundTally {
    counts.clear();
    counts.resize(grid.total() as usize, 0);
    let sampler = AoSampler::new(grid);
    for _ in 0..k {
        counts[sampler.draw(rng) as usize] += 1;
    }
    tally_occupancy(counts)
}

/// Runs slotted-ALOHA contention among `attempters`.
///
/// The attempters are already filtered for eligibility and for the access
/// probability. AO choices come from `ao_rng`, RandomIDs from `id_rng`.
pub fn run_contention_round<A: Rng + ?Sized, B: Rng + ?Sized>(
    attempters: &[u32],
    grid: &AccessOccasionGrid,
    ao_rng: &mut A,
    id_rng: &mut B,
) -> RoundOutcome {
    let mut out = RoundOutcome::empty(grid.total());
    let sampler = AoSampler::new(grid);
    for &device_id in attempters {
        let ao_index = sampler.draw(ao_rng);
        let random_id: u16 = id_rng.gen();
        out.attempted.insert(device_id);
        out.ao_map.entry(ao_index).or_default().push(Msg1 {
            device_id,
            ao_index,
            random_id,
        });
    }
    let (successes, collided) = out.relabel_from_occupancy();
    out.successes = successes;
    out.collided = collided;
    out.used_aos = out.ao_map.len() as u32;
    out
}

/// Genie scheduler: distinct AOs for every contender, never a collision.
///
/// When contenders outnumber AOs, a uniformly random subset of exactly
/// `grid.total()` of them is served; the rest are recorded as not attempted.
pub fn run_ideal_round<A: Rng + ?Sized, B: Rng + ?Sized>(
    attempters: &[u32],
    grid: &AccessOccasionGrid,
    select_rng: &mut A,
    id_rng: &mut B,
) -> RoundOutcome {
    let total = grid.total() as usize;
    let mut out = RoundOutcome::empty(grid.total());
    let served: Vec<u32> = if attempters.len() <= total {
        attempters.to_vec()
    } else {
        let mut picked: Vec<usize> = index::sample(select_rng, attempters.len(), total).into_vec();
        picked.sort_unstable();
        let chosen: BTreeSet<usize> = picked.iter().copied().collect();
        out.not_attempted = attempters
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(_, &id)| id)
            .collect();
        picked.into_iter().map(|i| attempters[i]).collect()
    };
    // Distinct AOs, spread at random over the grid.
    let aos = index::sample(select_rng, total, served.len());
    for (device_id, ao) in served.into_iter().zip(aos.into_iter()) {
        let ao_index = ao as u32;
        out.attempted.insert(device_id);
        out.successes.insert(device_id);
        out.ao_map.entry(ao_index).or_default().push(Msg1 {
            device_id,
            ao_index,
            random_id: id_rng.gen(),
        });
    }
    out.used_aos = out.ao_map.len() as u32;
    out
}

/// MSG2 entries for every singleton AO.
pub fn resolve_msg2(outcome: &RoundOutcome) -> Vec<Msg2> {
    outcome
        .ao_map
        .iter()
        .filter(|(_, msgs)| msgs.len() == 1)
        .map(|(&ao_index, msgs)| Msg2 {
            ao_index,
            device_id: msgs[0].device_id,
            echoed_random_id: msgs[0].random_id,
        })
        .collect()
}
