//! The partition function game container: a worth for every block of every
//! partition of the agent set.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::{enumerate_partitions, Coalition, Partition};

/// `v(S, P)` for every partition `P` of `0..n` and every block `S ∈ P`.
#[derive(Debug, Clone)]
pub struct PartitionFunctionGame {
    n: usize,
    partitions: Vec<Partition>,
    /// `values[p][b]` is the worth of block `b` of `partitions[p]`.
    values: Vec<Vec<f64>>,
    index: HashMap<u64, usize>,
}

/// One serialized `(partition, coalition, value)` entry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PfgEntry {
    pub partition: Partition,
    pub coalition: Coalition,
    pub value: f64,
}

impl PartitionFunctionGame {
    /// Builds a game by evaluating `worth` on every partition. The closure
    /// returns one value per block, in the partition's canonical block order.
    pub fn from_partition_fn<F>(n: usize, mut worth: F) -> Result<Self>
    where
        F: FnMut(&Partition) -> Vec<f64>,
    {
        let partitions = enumerate_partitions(n)?;
        let mut values = Vec::with_capacity(partitions.len());
        for p in &partitions {
            let v = worth(p);
            if v.len() != p.num_blocks() {
                return Err(Error::InvalidInstance(format!(
                    "worth function returned {} values for {} blocks of {p}",
                    v.len(),
                    p.num_blocks()
                )));
            }
            values.push(v);
        }
        Ok(Self::assemble(n, partitions, values))
    }

    /// Builds a game from a per-block worth `(coalition, partition) -> v`.
    pub fn from_fn<F>(n: usize, mut worth: F) -> Result<Self>
    where
        F: FnMut(Coalition, &Partition) -> f64,
    {
        Self::from_partition_fn(n, |p| p.blocks().iter().map(|&b| worth(b, p)).collect())
    }

    /// Reassembles a game from serialized entries; every block of every
    /// partition must be present.
    pub fn from_entries(n: usize, entries: &[PfgEntry]) -> Result<Self> {
        let mut lookup: HashMap<(u64, u16), f64> = HashMap::new();
        for e in entries {
            if e.partition.n() != n {
                return Err(Error::InvalidInstance(format!(
                    "entry partition {} is not over {n} agents",
                    e.partition
                )));
            }
            lookup.insert((e.partition.key(), e.coalition.mask()), e.value);
        }
        let partitions = enumerate_partitions(n)?;
        let mut values = Vec::with_capacity(partitions.len());
        for p in &partitions {
            let mut row = Vec::with_capacity(p.num_blocks());
            for &b in p.blocks() {
                let v = lookup.get(&(p.key(), b.mask())).copied().ok_or_else(|| {
                    Error::MissingEntry {
                        coalition: b.to_string(),
                        partition: p.to_string(),
                    }
                })?;
                row.push(v);
            }
            values.push(row);
        }
        Ok(Self::assemble(n, partitions, values))
    }

    fn assemble(n: usize, partitions: Vec<Partition>, values: Vec<Vec<f64>>) -> Self {
        let index = partitions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.key(), i))
            .collect();
        PartitionFunctionGame {
            n,
            partitions,
            values,
            index,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Partitions in enumeration order.
    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// Block worths of partition `idx`, in canonical block order.
    pub fn block_values(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn partition_index(&self, p: &Partition) -> Option<usize> {
        self.index.get(&p.key()).copied()
    }

    /// `v(S, P)`.
    pub fn value(&self, coalition: Coalition, partition: &Partition) -> Result<f64> {
        let missing = || Error::MissingEntry {
            coalition: coalition.to_string(),
            partition: partition.to_string(),
        };
        let p = self.partition_index(partition).ok_or_else(missing)?;
        let b = self.partitions[p].block_index(coalition).ok_or_else(missing)?;
        Ok(self.values[p][b])
    }

    /// Worth of the grand coalition, `v(N, {N})`.
    pub fn grand_value(&self) -> f64 {
        let p = self
            .partition_index(&Partition::grand(self.n))
            .expect("grand partition present");
        self.values[p][0]
    }

    /// `v({i}, [N])` for each agent.
    pub fn singleton_values(&self) -> Vec<f64> {
        let p = self
            .partition_index(&Partition::singletons(self.n))
            .expect("singleton partition present");
        self.values[p].clone()
    }

    /// `v(S, {S} ∪ singletons of N∖S)`.
    pub fn worth_among_singletons(&self, s: Coalition) -> Result<f64> {
        let rest = Coalition::full(self.n).minus(s);
        let mut blocks = vec![s];
        blocks.extend(rest.members().map(Coalition::singleton));
        self.value(s, &Partition::from_blocks(self.n, &blocks)?)
    }

    /// `v(S, {S, N∖S})`; when `S = N` this is `v(N, {N})`.
    pub fn worth_against_complement(&self, s: Coalition) -> Result<f64> {
        let rest = Coalition::full(self.n).minus(s);
        let blocks: Vec<Coalition> = if rest.is_empty() { vec![s] } else { vec![s, rest] };
        self.value(s, &Partition::from_blocks(self.n, &blocks)?)
    }

    /// Number of `(coalition, partition)` entries.
    pub fn num_entries(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = PfgEntry> + '_ {
        self.partitions
            .iter()
            .zip(&self.values)
            .flat_map(|(p, vals)| {
                p.blocks().iter().zip(vals).map(move |(&c, &v)| PfgEntry {
                    partition: p.clone(),
                    coalition: c,
                    value: v,
                })
            })
    }

    /// Smallest and largest worth over all entries.
    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.entries().collect::<Vec<_>>()).expect("entries serialize")
    }
}
