//! Static vertical-queue game.
//!
//! Agents arrive in order and each picks one of the downstream lanes. Lane
//! `m` starts with `Q_m` queued vehicles and dispatches one per time unit, so
//! the delay of an agent joining `m` behind `j_m` earlier choosers is
//! `Q_m + j_m` (optionally `- 1`). Given a coalition structure, every agent
//! maximizes its own valuation plus the continuation value of its coalition's
//! followers; the recursion depends on the history only through the per-lane
//! counts, which keeps it polynomial in `n` for a fixed number of lanes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::PartitionFunctionGame;
use crate::partitions::{Coalition, Partition, MAX_AGENTS};

pub const MAX_LANES: usize = 4;

/// `−θ d`, with an undelayed agent valued at `+0`.
pub(crate) fn valuation(theta: f64, delay: f64) -> f64 {
    -(theta * delay) + 0.0
}

/// Two lane scores closer than this are a tie, resolved to the lower lane.
pub const TIE_TOL: f64 = 1e-9;

/// Ordered agents with their values of time and the initial queue lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalInstance {
    /// Value of time per agent, in arrival order.
    pub thetas: Vec<f64>,
    /// Initial queue per lane, non-increasing in lane index.
    #[serde(rename = "queues")]
    pub initial_queues: Vec<u32>,
    /// Subtract one from every delay (the agent's own service slot).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub delay_offset: bool,
}

impl VerticalInstance {
    pub fn new(thetas: Vec<f64>, initial_queues: Vec<u32>) -> Result<Self> {
        let inst = VerticalInstance {
            thetas,
            initial_queues,
            delay_offset: false,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_delay_offset(mut self, on: bool) -> Self {
        self.delay_offset = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.thetas.len();
        if !(1..=MAX_AGENTS).contains(&n) {
            return Err(Error::AgentCount {
                n,
                min: 1,
                max: MAX_AGENTS,
            });
        }
        if let Some(t) = self.thetas.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidInstance(format!(
                "value of time must be positive and finite, got {t}"
            )));
        }
        let l = self.initial_queues.len();
        if !(1..=MAX_LANES).contains(&l) {
            return Err(Error::InvalidInstance(format!(
                "lane count {l} outside 1..={MAX_LANES}"
            )));
        }
        if self.initial_queues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInstance(format!(
                "queues must be non-increasing in lane index, got {:?}",
                self.initial_queues
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.thetas.len()
    }

    pub fn lanes(&self) -> usize {
        self.initial_queues.len()
    }
}

/// Recursion state: agent `level` is about to choose, `counts[m]` earlier
/// agents are already in lane `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LaneCountState {
    pub level: usize,
    pub counts: Vec<u32>,
}

impl LaneCountState {
    pub fn initial(lanes: usize) -> Self {
        LaneCountState {
            level: 0,
            counts: vec![0; lanes],
        }
    }
}

/// Delay of the acting agent if it joins `lane` from `state`.
pub fn delay(instance: &VerticalInstance, state: &LaneCountState, lane: usize) -> Result<i64> {
    let lanes = instance.lanes();
    if lane >= lanes || state.counts.len() != lanes {
        return Err(Error::LaneIndex { lane, lanes });
    }
    Ok(lane_delay(instance, &state.counts, lane))
}

fn lane_delay(instance: &VerticalInstance, counts: &[u32], lane: usize) -> i64 {
    let d = instance.initial_queues[lane] as i64 + counts[lane] as i64;
    if instance.delay_offset {
        d - 1
    } else {
        d
    }
}

/// Outcome of the coalitional Stackelberg recursion for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergOutcome {
    /// `v(S, P)` per block of the partition, canonical block order.
    pub block_values: Vec<f64>,
    /// Lane chosen by each agent on the equilibrium path.
    pub assignment: Vec<usize>,
    /// Each agent's valuation `-θ_i d_i` on the equilibrium path.
    pub agent_values: Vec<f64>,
    /// Distinct recursion states visited (memo table size).
    pub states: usize,
}

struct Memo {
    /// (level, packed counts) -> (continuation value per block, chosen lane)
    table: HashMap<(usize, u64), (Vec<f64>, usize)>,
}

fn pack(counts: &[u32]) -> u64 {
    counts
        .iter()
        .enumerate()
        .fold(0u64, |k, (m, &c)| k | ((c as u64) << (8 * m)))
}

fn recurse(
    instance: &VerticalInstance,
    partition: &Partition,
    level: usize,
    counts: &mut Vec<u32>,
    memo: &mut Memo,
) -> Vec<f64> {
    let nb = partition.num_blocks();
    if level == instance.n() {
        return vec![0.0; nb];
    }
    let key = (level, pack(counts));
    if let Some((v, _)) = memo.table.get(&key) {
        return v.clone();
    }
    let own = partition.block_of(level);
    let theta = instance.thetas[level];
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for lane in 0..instance.lanes() {
        let valuation = valuation(theta, lane_delay(instance, counts, lane) as f64);
        counts[lane] += 1;
        let mut cont = recurse(instance, partition, level + 1, counts, memo);
        counts[lane] -= 1;
        let score = valuation + cont[own];
        if best.as_ref().is_none_or(|(b, _, _)| score > *b + TIE_TOL) {
            cont[own] += valuation;
            best = Some((score, cont, lane));
        }
    }
    let (_, values, lane) = best.expect("at least one lane");
    memo.table.insert(key, (values.clone(), lane));
    values
}

/// Solves the n-level Stackelberg game with coalitions given by `partition`.
pub fn solve_stackelberg(
    instance: &VerticalInstance,
    partition: &Partition,
) -> Result<StackelbergOutcome> {
    instance.validate()?;
    if partition.n() != instance.n() {
        return Err(Error::InvalidInstance(format!(
            "partition over {} agents for an instance of {}",
            partition.n(),
            instance.n()
        )));
    }
    let mut memo = Memo {
        table: HashMap::new(),
    };
    let mut counts = vec![0u32; instance.lanes()];
    let block_values = recurse(instance, partition, 0, &mut counts, &mut memo);

    let mut assignment = Vec::with_capacity(instance.n());
    let mut agent_values = Vec::with_capacity(instance.n());
    let mut counts = vec![0u32; instance.lanes()];
    for level in 0..instance.n() {
        let (_, lane) = memo.table[&(level, pack(&counts))];
        agent_values.push(valuation(instance.thetas[level], lane_delay(instance, &counts, lane) as f64));
        assignment.push(lane);
        counts[lane] += 1;
    }
    Ok(StackelbergOutcome {
        block_values,
        assignment,
        agent_values,
        states: memo.table.len(),
    })
}

/// Upper bound `n (n + l)^l` on the recursion's state count.
pub fn state_bound(n: usize, lanes: usize) -> u64 {
    n as u64 * ((n + lanes) as u64).pow(lanes as u32)
}

/// First-come first-served benchmark: every agent joins the currently
/// shortest queue. Same as the recursion under the all-singletons partition.
pub fn fcfs_baseline(instance: &VerticalInstance) -> Result<(Vec<usize>, Vec<f64>)> {
    let out = solve_stackelberg(instance, &Partition::singletons(instance.n()))?;
    Ok((out.assignment, out.agent_values))
}

/// Instrumentation from building a full game.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub partitions: usize,
    pub max_states: usize,
}

/// Solves the recursion for every partition of the instance's agents.
pub fn build_pfg(instance: &VerticalInstance) -> Result<PartitionFunctionGame> {
    build_pfg_with_stats(instance).map(|(g, _)| g)
}

pub fn build_pfg_with_stats(
    instance: &VerticalInstance,
) -> Result<(PartitionFunctionGame, BuildStats)> {
    instance.validate()?;
    let mut stats = BuildStats::default();
    let mut failure = None;
    let game = PartitionFunctionGame::from_partition_fn(instance.n(), |p| {
        stats.partitions += 1;
        match solve_stackelberg(instance, p) {
            Ok(out) => {
                stats.max_states = stats.max_states.max(out.states);
                out.block_values
            }
            Err(e) => {
                failure.get_or_insert(e);
                vec![0.0; p.num_blocks()]
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok((game, stats)),
    }
}

/// JSON result record for one partition.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionResult {
    pub partition: Partition,
    /// Keyed by the 1-based coalition, e.g. `"[1,3]"`.
    pub values: std::collections::BTreeMap<String, f64>,
    pub assignment: Vec<usize>,
}

impl PartitionResult {
    pub fn new(partition: &Partition, outcome: &StackelbergOutcome) -> Self {
        let values = partition
            .blocks()
            .iter()
            .zip(&outcome.block_values)
            .map(|(b, &v)| (coalition_key(*b), v))
            .collect();
        PartitionResult {
            partition: partition.clone(),
            values,
            assignment: outcome.assignment.clone(),
        }
    }
}

pub fn coalition_key(c: Coalition) -> String {
    serde_json::to_string(&c).expect("coalition serializes")
}
