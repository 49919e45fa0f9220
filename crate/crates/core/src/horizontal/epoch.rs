//! The epoch game: participants choose lanes in order, each history leaf is
//! priced by the Newell departures it induces, and every partition is solved
//! by backward induction over the complete `lanes^n` tree.

use crate::error::{Error, Result};
use crate::game::PartitionFunctionGame;
use crate::horizontal::kinematics::{departure_time, predict_delay};
use crate::partitions::Partition;
use crate::vertical::{valuation, TIE_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochParticipant {
    pub theta: f64,
    /// Undelayed bottleneck arrival time.
    pub free_flow: f64,
}

#[derive(Debug, Clone)]
pub struct EpochGame {
    pub pfg: PartitionFunctionGame,
    /// Number of leaf histories evaluated.
    pub leaves: usize,
    /// Lanes chosen under the grand coalition.
    pub assignment: Vec<usize>,
    /// Per-participant valuations under the grand coalition.
    pub grand_values: Vec<f64>,
}

/// Per-leaf valuations `−θ_i d_i`, leaf index `Σ_k lane_k · l^(n−1−k)`.
pub fn leaf_valuations(
    participants: &[EpochParticipant],
    lane_tails: &[Option<f64>],
    headway: f64,
) -> Vec<Vec<f64>> {
    let n = participants.len();
    let l = lane_tails.len();
    let leaves = l.pow(n as u32);
    let mut out = Vec::with_capacity(leaves);
    let mut tails = lane_tails.to_vec();
    let mut lanes = vec![0usize; n];
    for leaf in 0..leaves {
        let mut rest = leaf;
        for k in (0..n).rev() {
            lanes[k] = rest % l;
            rest /= l;
        }
        tails.copy_from_slice(lane_tails);
        let vals = participants
            .iter()
            .zip(&lanes)
            .map(|(p, &lane)| {
                let d = predict_delay(p.free_flow, tails[lane], headway);
                tails[lane] = Some(departure_time(p.free_flow, tails[lane], headway));
                valuation(p.theta, d)
            })
            .collect();
        out.push(vals);
    }
    out
}

/// Builds the epoch game with every lane open to every participant.
pub fn build_epoch_pfg(
    participants: &[EpochParticipant],
    lane_tails: &[Option<f64>],
    headway: f64,
    cap: usize,
) -> Result<EpochGame> {
    build_epoch_pfg_with(participants, lane_tails, headway, cap, |_, _| true)
}

/// As [`build_epoch_pfg`], with `allowed(participant, lane) == false`
/// pruning that branch from every participant's choice set.
pub fn build_epoch_pfg_with<F>(
    participants: &[EpochParticipant],
    lane_tails: &[Option<f64>],
    headway: f64,
    cap: usize,
    allowed: F,
) -> Result<EpochGame>
where
    F: Fn(usize, usize) -> bool,
{
    let n = participants.len();
    if n > cap {
        return Err(Error::ParticipantOverflow { got: n, cap });
    }
    let l = lane_tails.len();
    if l == 0 {
        return Err(Error::InvalidInstance("epoch game needs at least one lane".into()));
    }
    if let Some(k) = (0..n).find(|&k| !(0..l).any(|c| allowed(k, c))) {
        return Err(Error::InvalidInstance(format!("participant {k} has no open lane")));
    }
    let vals = leaf_valuations(participants, lane_tails, headway);
    let leaves = vals.len();
    let mut grand_leaf = 0;
    let pfg = PartitionFunctionGame::from_partition_fn(n, |p| {
        let leaf = backward_induction(p, &vals, l, &allowed);
        if p.is_grand() {
            grand_leaf = leaf;
        }
        p.blocks()
            .iter()
            .map(|b| b.members().map(|j| vals[leaf][j]).sum())
            .collect()
    })?;
    let mut assignment = vec![0; n];
    let mut rest = grand_leaf;
    for k in (0..n).rev() {
        assignment[k] = rest % l;
        rest /= l;
    }
    Ok(EpochGame {
        pfg,
        leaves,
        assignment,
        grand_values: vals[grand_leaf].clone(),
    })
}

/// Equilibrium leaf of `partition`. Participant `k` picks the child that
/// maximizes the summed valuation of its coalition's members from `k` on,
/// lowest lane on ties.
fn backward_induction<F>(partition: &Partition, vals: &[Vec<f64>], l: usize, allowed: &F) -> usize
where
    F: Fn(usize, usize) -> bool,
{
    let n = partition.n();
    let mut best: Vec<usize> = (0..vals.len()).collect();
    for k in (0..n).rev() {
        let block = partition.blocks()[partition.block_of(k)];
        let nodes = l.pow(k as u32);
        let mut next = Vec::with_capacity(nodes);
        for p in 0..nodes {
            let mut chosen: Option<(f64, usize)> = None;
            for c in (0..l).filter(|&c| allowed(k, c)) {
                let leaf = best[p * l + c];
                let score: f64 = block.members().filter(|&j| j >= k).map(|j| vals[leaf][j]).sum();
                if chosen.is_none_or(|(s, _)| score > s + TIE_TOL) {
                    chosen = Some((score, leaf));
                }
            }
            next.push(chosen.expect("an open lane exists").1);
        }
        best = next;
    }
    best[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::Coalition;

    fn part(theta: f64, free_flow: f64) -> EpochParticipant {
        EpochParticipant { theta, free_flow }
    }

    #[test]
    fn one_participant_takes_least_delay() {
        let g = build_epoch_pfg(&[part(3.0, 10.0)], &[Some(20.0), Some(12.0)], 4.0, 6).unwrap();
        assert_eq!(g.assignment, vec![1]);
        assert_eq!(g.grand_values, vec![-3.0 * 6.0]);
        assert_eq!(g.leaves, 2);
    }

    #[test]
    fn two_participants_grand_is_best_of_four() {
        let ps = [part(1.0, 10.0), part(9.0, 10.5)];
        let tails = [Some(14.0), Some(11.0)];
        let g = build_epoch_pfg(&ps, &tails, 4.0, 6).unwrap();
        assert_eq!(g.leaves, 4);
        let best = leaf_valuations(&ps, &tails, 4.0)
            .iter()
            .map(|v| v.iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(g.pfg.grand_value(), best);
        // the low-value leader yields the short lane
        assert_eq!(g.assignment, vec![0, 1]);
    }

    #[test]
    fn tree_size_is_lanes_to_the_n() {
        let ps: Vec<_> = (0..4).map(|i| part(1.0 + i as f64, 10.0 + i as f64)).collect();
        let g = build_epoch_pfg(&ps, &[Some(12.0), None, Some(9.0)], 4.0, 6).unwrap();
        assert_eq!(g.leaves, 81);
        assert_eq!(g.pfg.num_entries(), 37);
    }

    #[test]
    fn overflow_and_blocked_lanes() {
        let ps: Vec<_> = (0..3).map(|i| part(1.0, i as f64)).collect();
        assert!(matches!(
            build_epoch_pfg(&ps, &[None, None], 4.0, 2),
            Err(Error::ParticipantOverflow { got: 3, cap: 2 })
        ));
        let g = build_epoch_pfg_with(&ps[..1], &[None, Some(50.0)], 4.0, 6, |_, c| c == 1).unwrap();
        assert_eq!(g.assignment, vec![1]);
        assert!(build_epoch_pfg_with(&ps[..1], &[None], 4.0, 6, |_, _| false).is_err());
    }

    #[test]
    fn singleton_block_values_are_selfish() {
        let ps = [part(5.0, 10.0), part(1.0, 10.0)];
        let g = build_epoch_pfg(&ps, &[Some(9.0), Some(20.0)], 4.0, 6).unwrap();
        let v = g.pfg.singleton_values();
        // leader grabs lane 0 (delay 3), follower then waits 7 there or 14 in lane 1
        assert_eq!(v, vec![-15.0, -7.0]);
        let g2 = g.pfg.value(Coalition::full(2), &Partition::grand(2)).unwrap();
        assert!(g2 >= v[0] + v[1]);
    }
}
