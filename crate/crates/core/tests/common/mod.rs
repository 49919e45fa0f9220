//! Reference implementations used only to cross-check the library.
#![allow(dead_code)]

use lanetrade::core_program::EpsilonProgram;
use lanetrade::game::PartitionFunctionGame;
use lanetrade::horizontal::EpochParticipant;
use lanetrade::lp::{LinearProgram, LpError, Relation};
use lanetrade::partitions::{Coalition, Partition};
use lanetrade::vertical::VerticalInstance;

/// Score comparisons closer than this are ties, broken to the lower lane.
const TIE: f64 = 1e-9;

/// Equilibrium of a sequential lane game given per-history valuations:
/// explores every history explicitly and lets agent `k` maximize the summed
/// valuation of the members of its block acting at or after `k`.
fn solve_tree<F>(n: usize, lanes: usize, partition: &Partition, leaf_values: &F) -> Vec<usize>
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    fn go<F: Fn(&[usize]) -> Vec<f64>>(
        history: &mut Vec<usize>,
        n: usize,
        lanes: usize,
        partition: &Partition,
        leaf_values: &F,
    ) -> Vec<usize> {
        let k = history.len();
        if k == n {
            return history.clone();
        }
        let team: Vec<usize> = (k..n).filter(|&j| partition.block_of(j) == partition.block_of(k)).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for lane in 0..lanes {
            history.push(lane);
            let leaf = go(history, n, lanes, partition, leaf_values);
            history.pop();
            let vals = leaf_values(&leaf);
            let score: f64 = team.iter().map(|&j| vals[j]).sum();
            match &best {
                Some((b, _)) if score <= *b + TIE => {}
                _ => best = Some((score, leaf)),
            }
        }
        best.unwrap().1
    }
    go(&mut Vec::new(), n, lanes, partition, leaf_values)
}

fn block_worths(partition: &Partition, vals: &[f64]) -> Vec<f64> {
    partition
        .blocks()
        .iter()
        .map(|b| b.members().map(|j| vals[j]).sum())
        .collect()
}

/// Valuations of one full vertical history: an agent's delay is its lane's
/// initial queue plus everyone ahead of it who picked that lane.
pub fn vertical_history_values(inst: &VerticalInstance, history: &[usize]) -> Vec<f64> {
    history
        .iter()
        .enumerate()
        .map(|(k, &lane)| {
            let ahead = history[..k].iter().filter(|&&l| l == lane).count() as f64;
            let mut d = inst.initial_queues[lane] as f64 + ahead;
            if inst.delay_offset {
                d -= 1.0;
            }
            -inst.thetas[k] * d
        })
        .collect()
}

pub fn brute_force_vertical(inst: &VerticalInstance, partition: &Partition) -> Vec<f64> {
    let leaf = solve_tree(inst.n(), inst.lanes(), partition, &|h: &[usize]| vertical_history_values(inst, h));
    block_worths(partition, &vertical_history_values(inst, &leaf))
}

/// Valuations of one horizontal history: participants queue in order,
/// each departing one headway after the previous car in its lane or at
/// its free-flow time, whichever is later.
pub fn horizontal_history_values(
    participants: &[EpochParticipant],
    tails: &[Option<f64>],
    headway: f64,
    history: &[usize],
) -> Vec<f64> {
    let mut last: Vec<Option<f64>> = tails.to_vec();
    let mut out = Vec::new();
    for (p, &lane) in participants.iter().zip(history) {
        let dep = match last[lane] {
            Some(t) if t + headway > p.free_flow => t + headway,
            _ => p.free_flow,
        };
        last[lane] = Some(dep);
        out.push(-p.theta * (dep - p.free_flow));
    }
    out
}

pub fn brute_force_horizontal(
    participants: &[EpochParticipant],
    tails: &[Option<f64>],
    headway: f64,
    partition: &Partition,
) -> Vec<f64> {
    let f = |h: &[usize]| horizontal_history_values(participants, tails, headway, h);
    let leaf = solve_tree(participants.len(), tails.len(), partition, &f);
    block_worths(partition, &f(&leaf))
}

/// Shapley value of a characteristic function by averaging marginal
/// contributions over all `n!` orders.
pub fn permutation_shapley(n: usize, w: impl Fn(Coalition) -> f64) -> Vec<f64> {
    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0usize;
    permute(&mut order, 0, &mut |perm| {
        count += 1;
        let mut s = Coalition::from_mask(0);
        for &i in perm {
            let before = if s.is_empty() { 0.0 } else { w(s) };
            s = s.union(Coalition::singleton(i));
            phi[i] += w(s) - before;
        }
    });
    phi.iter().map(|v| v / count as f64).collect()
}

fn permute(items: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, f);
        items.swap(k, i);
    }
}

/// `v(S, {S} ∪ singletons)`.
pub fn among_singletons(pfg: &PartitionFunctionGame, s: Coalition) -> f64 {
    let n = pfg.n();
    let mut blocks = vec![s];
    blocks.extend((0..n).filter(|&i| !s.contains(i)).map(Coalition::singleton));
    pfg.value(s, &Partition::from_blocks(n, &blocks).unwrap()).unwrap()
}

/// `v(S, {S, N∖S})`.
pub fn against_complement(pfg: &PartitionFunctionGame, s: Coalition) -> f64 {
    let n = pfg.n();
    let rest = Coalition::full(n).minus(s);
    let blocks = if rest.is_empty() { vec![s] } else { vec![s, rest] };
    pfg.value(s, &Partition::from_blocks(n, &blocks).unwrap()).unwrap()
}

/// Minimal ε of the big-M program by enumerating selector assignments.
///
/// Setting more selectors to one only removes constraints, so for each
/// partition only assignments with exactly `limit` ones are tried. A
/// partition is skipped when one of its blocks already carries a mandatory
/// row at least as strong. Returns `None` when more than `max_lps`
/// assignments remain.
pub fn z_enumeration_epsilon(program: &EpsilonProgram, max_lps: usize) -> Option<Result<f64, LpError>> {
    let n = program.n();
    let mut mandatory = vec![f64::NEG_INFINITY; 1 << n];
    for b in program.selector_bounds.iter().filter(|b| b.limit == 0) {
        for &s in &b.selectors {
            let r = &program.group_rows[s];
            let m = &mut mandatory[r.coalition.mask() as usize];
            *m = m.max(r.value);
        }
    }
    // each open partition: the selector choices (which rows stay enforced)
    let mut choices: Vec<Vec<Vec<usize>>> = Vec::new();
    for b in program.selector_bounds.iter().filter(|b| b.limit > 0) {
        let dominated = b.selectors.iter().any(|&s| {
            let r = &program.group_rows[s];
            mandatory[r.coalition.mask() as usize] >= r.value
        });
        if dominated {
            continue;
        }
        let keep = b.selectors.len() - b.limit;
        choices.push(subsets(&b.selectors, keep));
    }
    let total: usize = choices.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()))?;
    if total > max_lps {
        return None;
    }
    let rows = program.group_rows.len();
    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; choices.len()];
    loop {
        // z = 1 everywhere except mandatory rows and the kept rows
        let mut z = vec![1.0; rows];
        for b in program.selector_bounds.iter().filter(|b| b.limit == 0) {
            for &s in &b.selectors {
                z[s] = 0.0;
            }
        }
        for (c, &p) in choices.iter().zip(&pick) {
            for &s in &c[p] {
                z[s] = 0.0;
            }
        }
        match big_m_lp(program, &z) {
            Ok(e) => best = best.min(e),
            Err(e) => return Some(Err(e)),
        }
        let mut k = 0;
        loop {
            if k == pick.len() {
                return Some(Ok(best));
            }
            pick[k] += 1;
            if pick[k] < choices[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    if items.len() < size {
        return Vec::new();
    }
    let mut with: Vec<Vec<usize>> = subsets(&items[1..], size - 1)
        .into_iter()
        .map(|mut s| {
            s.insert(0, items[0]);
            s
        })
        .collect();
    with.extend(subsets(&items[1..], size));
    with
}

/// `min ε` with every group row written as `Σx + ε ≥ v − M z`.
fn big_m_lp(program: &EpsilonProgram, z: &[f64]) -> Result<f64, LpError> {
    let n = program.n();
    // x⁺ (n), x⁻ (n), ε
    let mut lp = LinearProgram::new(2 * n + 1);
    let mut c = vec![0.0; 2 * n + 1];
    c[2 * n] = 1.0;
    lp.set_objective(c);
    let row = |members: &[usize]| {
        let mut r = vec![0.0; 2 * n + 1];
        for &i in members {
            r[i] = 1.0;
            r[n + i] = -1.0;
        }
        r
    };
    let all: Vec<usize> = (0..n).collect();
    lp.add_row(row(&all), Relation::Eq, program.efficiency_rhs);
    for (i, &v) in program.ir_values.iter().enumerate() {
        let mut r = row(&[i]);
        r[2 * n] = 1.0;
        lp.add_row(r, Relation::Ge, v);
    }
    for (g, &zg) in program.group_rows.iter().zip(z) {
        let members: Vec<usize> = g.coalition.members().collect();
        let mut r = row(&members);
        r[2 * n] = 1.0;
        lp.add_row(r, Relation::Ge, g.value - program.big_m * zg);
    }
    Ok(lp.solve()?.objective)
}

/// A game whose worths depend on the block and on how the rest is split.
pub fn random_game(n: usize, seed: u64) -> PartitionFunctionGame {
    PartitionFunctionGame::from_fn(n, |s: Coalition, p: &Partition| {
        let h = (s.mask() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ p.key().wrapping_mul(0xbf58_476d_1ce4_e5b9)
            ^ seed;
        (h % 1000) as f64 / 10.0 - 50.0
    })
    .unwrap()
}

/// Agents 0 and 1 are interchangeable; agent 2 adds nothing anywhere.
pub fn symmetric_with_null(n: usize) -> PartitionFunctionGame {
    PartitionFunctionGame::from_fn(n, |s: Coalition, p: &Partition| {
        let core = s.minus(Coalition::singleton(2));
        let pair = core.contains(0) as u32 + core.contains(1) as u32;
        let others = core.len() as u32 - pair;
        // externality: worth falls with each other block that has a member besides agent 2
        let rest_blocks = p
            .blocks()
            .iter()
            .filter(|&&b| b != s && !b.minus(Coalition::singleton(2)).is_empty())
            .count() as f64;
        if core.is_empty() {
            0.0
        } else {
            3.0 * pair as f64 + 7.0 * others as f64 + 2.0 * (pair * others) as f64 - rest_blocks * core.len() as f64
        }
    })
    .unwrap()
}

/// Noisy worths with a team externality, so that several partitions carry
/// competing group rows.
pub fn hashed_game(n: usize, seed: u64, spread: f64) -> PartitionFunctionGame {
    PartitionFunctionGame::from_fn(n, |s: Coalition, p: &Partition| {
        let h = (s.mask() as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ p.key().wrapping_mul(0xbf58_476d_1ce4_e5b9)
            ^ seed.wrapping_mul(0x94d0_49bb_1331_11eb);
        let h = h ^ (h >> 29);
        // teams gain when the rest also forms teams, so two-team partitions compete
        let teams = p.blocks().iter().filter(|b| b.len() > 1).count() as f64;
        s.len() as f64 * s.len() as f64 * (1.0 + 0.6 * (teams - 1.0).max(0.0)) + spread * ((h % 2001) as f64 / 1000.0 - 1.0)
    })
    .unwrap()
}
