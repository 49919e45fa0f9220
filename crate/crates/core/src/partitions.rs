//! Coalitions and set partitions over a small ordered agent set.
//!
//! Coalitions are bitmasks over at most [`MAX_AGENTS`] agents. Partitions are
//! held as restricted growth strings (RGS): `rgs[i]` is the block label of
//! agent `i`, labels appear in first-occurrence order, so block `b` is the
//! block whose smallest member is the `b`-th smallest block minimum.
//! Enumeration walks the RGS in lexicographic order.
//!
//! Agents are 0-based in memory and 1-based in every serialized form.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest agent set the enumerators accept. Bell(10) = 115975.
pub const MAX_AGENTS: usize = 10;

fn check_n(n: usize) -> Result<()> {
    if (1..=MAX_AGENTS).contains(&n) {
        Ok(())
    } else {
        Err(Error::AgentCount {
            n,
            min: 1,
            max: MAX_AGENTS,
        })
    }
}

/// A non-empty set of agents, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(u16);

impl Coalition {
    pub fn from_mask(mask: u16) -> Self {
        Coalition(mask)
    }

    pub fn singleton(agent: usize) -> Self {
        Coalition(1 << agent)
    }

    /// Everyone in `0..n`.
    pub fn full(n: usize) -> Self {
        Coalition(((1u32 << n) - 1) as u16)
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Self {
        Coalition(members.into_iter().fold(0u16, |m, i| m | (1 << i)))
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < 16 && self.0 & (1 << agent) != 0
    }

    pub fn union(self, other: Coalition) -> Coalition {
        Coalition(self.0 | other.0)
    }

    pub fn minus(self, other: Coalition) -> Coalition {
        Coalition(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// Smallest member, if any.
    pub fn min_member(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    /// Members in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..16).filter(move |i| mask & (1 << i) != 0)
    }

    pub fn to_one_based(self) -> Vec<usize> {
        self.members().map(|i| i + 1).collect()
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Coalition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coalition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(d)?;
        if ids.is_empty() {
            return Err(D::Error::custom("empty coalition"));
        }
        if ids.iter().any(|&i| i == 0 || i > MAX_AGENTS) {
            return Err(D::Error::custom("agent ids are 1-based and at most 10"));
        }
        Ok(Coalition::from_members(ids.into_iter().map(|i| i - 1)))
    }
}

/// A disjoint cover of `0..n` by non-empty coalitions.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    rgs: Vec<u8>,
    blocks: Vec<Coalition>,
}

impl Partition {
    /// Builds a partition from a restricted growth string.
    pub fn from_rgs(rgs: Vec<u8>) -> Result<Self> {
        check_n(rgs.len())?;
        let mut next = 0u8;
        for &label in &rgs {
            if label > next {
                return Err(Error::InvalidInstance(format!(
                    "not a restricted growth string: {rgs:?}"
                )));
            }
            if label == next {
                next += 1;
            }
        }
        let mut blocks = vec![0u16; next as usize];
        for (i, &label) in rgs.iter().enumerate() {
            blocks[label as usize] |= 1 << i;
        }
        Ok(Partition {
            rgs,
            blocks: blocks.into_iter().map(Coalition).collect(),
        })
    }

    /// Builds a partition from blocks given in any order; they must cover
    /// `0..n` exactly once.
    pub fn from_blocks(n: usize, blocks: &[Coalition]) -> Result<Self> {
        check_n(n)?;
        let mut seen = 0u16;
        for b in blocks {
            if b.is_empty() || b.0 & seen != 0 {
                return Err(Error::Overlap);
            }
            seen |= b.0;
        }
        if seen != Coalition::full(n).0 {
            return Err(Error::Overlap);
        }
        let mut sorted = blocks.to_vec();
        sorted.sort_by_key(|b| b.min_member());
        let mut rgs = vec![0u8; n];
        for (label, b) in sorted.iter().enumerate() {
            for i in b.members() {
                rgs[i] = label as u8;
            }
        }
        Ok(Partition {
            rgs,
            blocks: sorted,
        })
    }

    /// All-singletons partition `[N]`.
    pub fn singletons(n: usize) -> Self {
        Partition::from_rgs((0..n as u8).collect()).expect("valid singleton RGS")
    }

    /// One-block partition `{N}`.
    pub fn grand(n: usize) -> Self {
        Partition::from_rgs(vec![0; n]).expect("valid grand RGS")
    }

    pub fn n(&self) -> usize {
        self.rgs.len()
    }

    pub fn rgs(&self) -> &[u8] {
        &self.rgs
    }

    pub fn blocks(&self) -> &[Coalition] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Index of the block containing `agent`.
    pub fn block_of(&self, agent: usize) -> usize {
        self.rgs[agent] as usize
    }

    pub fn block_index(&self, coalition: Coalition) -> Option<usize> {
        let first = coalition.min_member()?;
        let idx = *self.rgs.get(first)? as usize;
        (self.blocks[idx] == coalition).then_some(idx)
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.len() == self.rgs.len()
    }

    pub fn is_grand(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Blocks with more than one member, in canonical order.
    pub fn non_singleton_blocks(&self) -> impl Iterator<Item = Coalition> + '_ {
        self.blocks.iter().copied().filter(|b| b.len() > 1)
    }

    /// Packed RGS, 4 bits per agent. Unique per partition for a fixed `n`.
    pub fn key(&self) -> u64 {
        self.rgs
            .iter()
            .enumerate()
            .fold(0u64, |k, (i, &l)| k | ((l as u64) << (4 * i)))
    }

    /// The partition obtained by fusing blocks `a` and `b`.
    pub fn merge_blocks(&self, a: usize, b: usize) -> Partition {
        let mut blocks: Vec<Coalition> = self
            .blocks
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != a && k != b)
            .map(|(_, &c)| c)
            .collect();
        blocks.push(self.blocks[a].union(self.blocks[b]));
        Partition::from_blocks(self.n(), &blocks).expect("merge keeps a cover")
    }

    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.to_one_based()).collect()
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Coalition>::deserialize(d)?;
        let n = blocks.iter().map(|b| b.len()).sum();
        Partition::from_blocks(n, &blocks).map_err(D::Error::custom)
    }
}

/// Every set partition of `0..n`, each exactly once, in RGS-lexicographic
/// order. The first is `{N}`, the last is `[N]`.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    check_n(n)?;
    let mut out = Vec::new();
    let mut rgs = vec![0u8; n];
    // maxes[i] = max(rgs[0..=i])
    let mut maxes = vec![0u8; n];
    loop {
        out.push(Partition::from_rgs(rgs.clone())?);
        // find the rightmost position that can still grow
        let mut i = n;
        loop {
            if i <= 1 {
                return Ok(out);
            }
            i -= 1;
            if rgs[i] <= maxes[i - 1] {
                break;
            }
        }
        rgs[i] += 1;
        maxes[i] = maxes[i - 1].max(rgs[i]);
        for j in i + 1..n {
            rgs[j] = 0;
            maxes[j] = maxes[i];
        }
    }
}

/// All `2^n - 1` non-empty coalitions of `0..n`, in increasing mask order.
pub fn enumerate_coalitions(n: usize) -> Result<Vec<Coalition>> {
    check_n(n)?;
    Ok((1..(1u32 << n)).map(|m| Coalition(m as u16)).collect())
}

pub fn singleton_partition(n: usize) -> Partition {
    Partition::singletons(n)
}

pub fn grand_partition(n: usize) -> Partition {
    Partition::grand(n)
}

/// All partitions of an arbitrary agent subset, each block a sub-coalition.
/// The subset may be empty, which yields a single empty partition.
pub fn partitions_of(set: Coalition) -> Vec<Vec<Coalition>> {
    let members: Vec<usize> = set.members().collect();
    if members.is_empty() {
        return vec![Vec::new()];
    }
    enumerate_partitions(members.len())
        .expect("subset of a capped agent set")
        .into_iter()
        .map(|p| {
            p.blocks()
                .iter()
                .map(|b| Coalition::from_members(b.members().map(|k| members[k])))
                .collect()
        })
        .collect()
}
