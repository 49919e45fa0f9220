//! Solution concepts on a partition function game: externality and
//! superadditivity diagnostics, the externality-free and McQuillin values,
//! and strong-core membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::PartitionFunctionGame;
use crate::partitions::{partitions_of, Coalition, Partition};

/// Absolute slack tolerance on core constraints.
pub const CORE_TOL: f64 = 1e-9;
/// Allowed gap between `Σ x` and `v(N, {N})` for an imputation.
pub const EFFICIENCY_TOL: f64 = 1e-6;

/// A payoff vector, one entry per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Imputation(pub Vec<f64>);

impl Imputation {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn coalition_sum(&self, s: Coalition) -> f64 {
        s.members().map(|i| self.0[i]).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// How many non-singleton blocks of each partition must be group rational.
///
/// `AnyBlock` is the strong core proper: every partition other than the
/// all-singletons one must contain at least one non-singleton block whose
/// members jointly get at least its worth. `EveryBlock` requires all of them,
/// which is what the per-partition selector bound yields when it is imposed
/// on every sub-collection of blocks (all selectors forced to zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreRule {
    #[default]
    AnyBlock,
    EveryBlock,
}

impl std::str::FromStr for CoreRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "any-block" => Ok(CoreRule::AnyBlock),
            "every-block" => Ok(CoreRule::EveryBlock),
            other => Err(format!("unknown core rule '{other}' (any-block | every-block)")),
        }
    }
}

impl std::fmt::Display for CoreRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoreRule::AnyBlock => "any-block",
            CoreRule::EveryBlock => "every-block",
        })
    }
}

fn fact(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Shapley weight of worth `w(S)` in agent `i`'s value.
pub fn zeta(i: usize, s: Coalition, n: usize) -> f64 {
    let k = s.len();
    if s.contains(i) {
        fact(k - 1) * fact(n - k) / fact(n)
    } else if k == n {
        0.0
    } else {
        -fact(k) * fact(n - k - 1) / fact(n)
    }
}

fn shapley_by_zeta<F>(pfg: &PartitionFunctionGame, mut embedded: F) -> Result<Imputation>
where
    F: FnMut(Coalition) -> Result<f64>,
{
    let n = pfg.n();
    let mut phi = vec![0.0; n];
    for mask in 1..(1u32 << n) {
        let s = Coalition::from_mask(mask as u16);
        let w = embedded(s)?;
        for (i, p) in phi.iter_mut().enumerate() {
            *p += zeta(i, s, n) * w;
        }
    }
    Ok(Imputation(phi))
}

/// Shapley value of `w(S) = v(S, {S} ∪ singletons)`: a leaver always stands
/// alone.
pub fn externality_free_value(pfg: &PartitionFunctionGame) -> Result<Imputation> {
    shapley_by_zeta(pfg, |s| pfg.worth_among_singletons(s))
}

/// Shapley value of `w(S) = v(S, {S, N∖S})`: a leaver always joins the rest.
pub fn mcquillin_value(pfg: &PartitionFunctionGame) -> Result<Imputation> {
    shapley_by_zeta(pfg, |s| pfg.worth_against_complement(s))
}

/// `v(C; {S∪T, C} ∪ ρ) - v(C; {S, T, C} ∪ ρ)`. Positive means `C` gains when
/// `S` and `T` merge.
pub fn classify_externality(
    pfg: &PartitionFunctionGame,
    c: Coalition,
    s: Coalition,
    t: Coalition,
    rho: &[Coalition],
) -> Result<f64> {
    let n = pfg.n();
    if c.is_empty() || s.is_empty() || t.is_empty() {
        return Err(Error::Overlap);
    }
    if !(c.is_disjoint(s) && c.is_disjoint(t) && s.is_disjoint(t)) {
        return Err(Error::Overlap);
    }
    let mut merged = vec![s.union(t), c];
    merged.extend_from_slice(rho);
    let mut split = vec![s, t, c];
    split.extend_from_slice(rho);
    let merged = Partition::from_blocks(n, &merged)?;
    let split = Partition::from_blocks(n, &split)?;
    Ok(pfg.value(c, &merged)? - pfg.value(c, &split)?)
}

/// Exhaustive externality census (see [`externality_census`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalityCensus {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    /// First negative witness found: `(C, S, T, ρ, difference)`.
    pub negative_witness: Option<(Coalition, Coalition, Coalition, Vec<Coalition>, f64)>,
    pub positive_witness: Option<(Coalition, Coalition, Coalition, Vec<Coalition>, f64)>,
}

/// Largest agent count accepted by [`externality_census`].
pub const CENSUS_MAX_AGENTS: usize = 6;

/// Evaluates [`classify_externality`] over every admissible `(C, S, T, ρ)`
/// with unordered `{S, T}`.
pub fn externality_census(pfg: &PartitionFunctionGame) -> Result<ExternalityCensus> {
    let n = pfg.n();
    if n > CENSUS_MAX_AGENTS {
        return Err(Error::AgentCount {
            n,
            min: 1,
            max: CENSUS_MAX_AGENTS,
        });
    }
    let full = Coalition::full(n).mask();
    let mut census = ExternalityCensus::default();
    for cm in 1..=full {
        let c = Coalition::from_mask(cm);
        let rest_c = Coalition::full(n).minus(c);
        for sm in 1..=full {
            let s = Coalition::from_mask(sm);
            if !s.is_subset_of(rest_c) {
                continue;
            }
            for tm in (sm + 1)..=full {
                let t = Coalition::from_mask(tm);
                if !t.is_subset_of(rest_c.minus(s)) {
                    continue;
                }
                let remainder = rest_c.minus(s).minus(t);
                for rho in partitions_of(remainder) {
                    let d = classify_externality(pfg, c, s, t, &rho)?;
                    if d > CORE_TOL {
                        census.positive += 1;
                        census.positive_witness.get_or_insert((c, s, t, rho, d));
                    } else if d < -CORE_TOL {
                        census.negative += 1;
                        census.negative_witness.get_or_insert((c, s, t, rho, d));
                    } else {
                        census.zero += 1;
                    }
                }
            }
        }
    }
    Ok(census)
}

/// A failure of `v(S∪T; {S∪T}∪ρ) ≥ v(S; {S,T}∪ρ) + v(T; {S,T}∪ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperadditivityViolation {
    pub s: Coalition,
    pub t: Coalition,
    pub rho: Vec<Coalition>,
    pub merged: f64,
    pub separate: f64,
}

/// All superadditivity violations (empty iff the game is superadditive).
pub fn check_superadditivity(pfg: &PartitionFunctionGame) -> Vec<SuperadditivityViolation> {
    let mut out = Vec::new();
    for (pi, p) in pfg.partitions().iter().enumerate() {
        let vals = pfg.block_values(pi);
        let k = p.num_blocks();
        for a in 0..k {
            for b in (a + 1)..k {
                let merged_p = p.merge_blocks(a, b);
                let s = p.blocks()[a];
                let t = p.blocks()[b];
                let merged = pfg
                    .value(s.union(t), &merged_p)
                    .expect("merged partition is enumerated");
                let separate = vals[a] + vals[b];
                if merged < separate - CORE_TOL {
                    let rho = p
                        .blocks()
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != a && j != b)
                        .map(|(_, &c)| c)
                        .collect();
                    out.push(SuperadditivityViolation {
                        s,
                        t,
                        rho,
                        merged,
                        separate,
                    });
                }
            }
        }
    }
    out
}

/// Result of a strong-core membership test.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoreCheck {
    pub in_core: bool,
    /// Partitions (other than `[N]` and `{N}`) whose group-rationality
    /// requirement fails.
    pub blocking: Vec<Partition>,
    /// Agents with `x_i < v({i}, [N])`.
    pub ir_violations: Vec<usize>,
}

/// Tests `x` against the strong-core conditions under `rule`.
pub fn is_in_strong_core(
    pfg: &PartitionFunctionGame,
    x: &Imputation,
    rule: CoreRule,
) -> Result<CoreCheck> {
    if x.0.len() != pfg.n() {
        return Err(Error::ImputationLength {
            got: x.0.len(),
            expected: pfg.n(),
        });
    }
    let grand = pfg.grand_value();
    if (x.total() - grand).abs() > EFFICIENCY_TOL {
        return Err(Error::Inefficient {
            sum: x.total(),
            grand,
        });
    }
    let mut check = CoreCheck::default();
    for (pi, p) in pfg.partitions().iter().enumerate() {
        if p.is_grand() || p.is_singletons() {
            continue;
        }
        let vals = pfg.block_values(pi);
        let mut sat = p
            .blocks()
            .iter()
            .zip(vals)
            .filter(|(b, _)| b.len() > 1)
            .map(|(&b, &v)| x.coalition_sum(b) >= v - CORE_TOL);
        let ok = match rule {
            CoreRule::AnyBlock => sat.any(|s| s),
            CoreRule::EveryBlock => sat.all(|s| s),
        };
        if !ok {
            check.blocking.push(p.clone());
        }
    }
    for (i, v) in pfg.singleton_values().into_iter().enumerate() {
        if x.0[i] < v - CORE_TOL {
            check.ir_violations.push(i);
        }
    }
    check.in_core = check.blocking.is_empty() && check.ir_violations.is_empty();
    Ok(check)
}
