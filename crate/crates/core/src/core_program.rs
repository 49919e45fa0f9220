//! The ε-relaxed strong-core program.
//!
//! ```text
//! min ε
//!   Σ_{i∈S} x_i ≥ v(S,P) − ε − M z_{S,P}   every non-singleton S ∈ P, P ∉ {[N], {N}}
//!   x_i ≥ v({i},[N]) − ε                    every agent
//!   Σ_i x_i = v(N,{N})
//!   Σ_{S∈P} z_{S,P} ≤ limit(P)              every P ∉ {[N], {N}}
//!   ε ≥ 0, z binary
//! ```
//!
//! Under [`CoreRule::AnyBlock`] the limit is `|non-singleton blocks of P| − 1`
//! so at least one block per partition is enforced; under
//! [`CoreRule::EveryBlock`] it is zero.
//!
//! The solver does not relax `z` through the big-M rows. Each partition with
//! a real choice is a disjunction over its blocks: a branch-and-bound node
//! carries the blocks enforced so far, its LP keeps only those rows (plus the
//! forced ones), and a node whose LP point leaves some disjunction without a
//! satisfied block branches on that disjunction. A selector at 1 therefore
//! removes its row entirely, which is exact for any `M`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::PartitionFunctionGame;
use crate::lp::{LinearProgram, LpError, Relation};
use crate::partitions::{Coalition, Partition};
use crate::values::{externality_free_value, CoreRule, Imputation, CORE_TOL, EFFICIENCY_TOL};

/// One group-rationality row `Σ_{i∈S} x_i ≥ v(S,P) − ε − M z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    /// Index into the game's partition list.
    pub partition: usize,
    pub coalition: Coalition,
    pub value: f64,
    /// Index of the row's binary selector.
    pub selector: usize,
}

/// `Σ z ≤ limit` over the selectors of one partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectorBound {
    pub partition: usize,
    pub selectors: Vec<usize>,
    pub limit: usize,
}

#[derive(Debug, Clone)]
pub struct EpsilonProgram {
    pfg: PartitionFunctionGame,
    pub rule: CoreRule,
    pub group_rows: Vec<GroupRow>,
    pub selector_bounds: Vec<SelectorBound>,
    /// `v({i}, [N])`.
    pub ir_values: Vec<f64>,
    /// Right-hand side of the efficiency equality.
    pub efficiency_rhs: f64,
    pub big_m: f64,
}

impl EpsilonProgram {
    pub fn pfg(&self) -> &PartitionFunctionGame {
        &self.pfg
    }

    pub fn n(&self) -> usize {
        self.pfg.n()
    }

    pub fn num_selectors(&self) -> usize {
        self.group_rows.len()
    }

    /// Constraint rows excluding variable bounds: group rows, IR rows, the
    /// efficiency equality, and selector bounds.
    pub fn num_constraints(&self) -> usize {
        self.group_rows.len() + self.ir_values.len() + 1 + self.selector_bounds.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let partitions = self.pfg.partitions();
        serde_json::json!({
            "n": self.n(),
            "rule": self.rule,
            "big_m": self.big_m,
            "efficiency_rhs": self.efficiency_rhs,
            "group_rows": self.group_rows.iter().map(|r| serde_json::json!({
                "partition": partitions[r.partition],
                "coalition": r.coalition,
                "value": r.value,
                "selector": r.selector,
            })).collect::<Vec<_>>(),
            "ir_rows": self.ir_values,
            "selector_bounds": self.selector_bounds.iter().map(|b| serde_json::json!({
                "partition": partitions[b.partition],
                "selectors": b.selectors,
                "limit": b.limit,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Assembles the program for `pfg` under `rule`.
pub fn build_program(pfg: &PartitionFunctionGame, rule: CoreRule) -> EpsilonProgram {
    let mut group_rows = Vec::new();
    let mut selector_bounds = Vec::new();
    for (pi, p) in pfg.partitions().iter().enumerate() {
        if p.is_grand() || p.is_singletons() {
            continue;
        }
        let vals = pfg.block_values(pi);
        let mut selectors = Vec::new();
        for (&b, &v) in p.blocks().iter().zip(vals) {
            if b.len() > 1 {
                selectors.push(group_rows.len());
                group_rows.push(GroupRow {
                    partition: pi,
                    coalition: b,
                    value: v,
                    selector: group_rows.len(),
                });
            }
        }
        let limit = match rule {
            CoreRule::AnyBlock => selectors.len() - 1,
            CoreRule::EveryBlock => 0,
        };
        selector_bounds.push(SelectorBound {
            partition: pi,
            selectors,
            limit,
        });
    }
    let (lo, hi) = pfg.value_range();
    EpsilonProgram {
        pfg: pfg.clone(),
        rule,
        group_rows,
        selector_bounds,
        ir_values: pfg.singleton_values(),
        efficiency_rhs: pfg.grand_value(),
        big_m: (hi - lo) + 1.0,
    }
}

/// Search effort counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub nodes: usize,
    pub lps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnforcedSet {
    pub partition: Partition,
    /// Non-singleton blocks whose row holds at the solution (selector 0).
    pub coalitions: Vec<Coalition>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSolution {
    pub x: Imputation,
    pub epsilon: f64,
    pub enforced: Vec<EnforcedSet>,
    pub stats: SearchStats,
}

impl EpsilonSolution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("solution serializes")
    }
}

/// Stage-two objective: after ε* is known, pick the ε*-feasible point
/// nearest to a target in L1.
#[derive(Debug, Clone)]
enum Objective {
    Epsilon,
    Distance { target: Vec<f64>, eps_cap: f64 },
}

struct NodePoint {
    x: Vec<f64>,
    eps: f64,
    value: f64,
}

struct Search<'a> {
    program: &'a EpsilonProgram,
    n: usize,
    /// Forced per-coalition lower bounds, indexed by mask.
    base: Vec<f64>,
    /// Disjunctions in branching order.
    disjunctions: Vec<Vec<(Coalition, f64)>>,
    stats: SearchStats,
}

/// Slack tolerance used when the LP generates rows.
const ROW_TOL: f64 = 1e-10;

/// Slack a row of right-hand side `v` may miss by and still count as held.
fn held_tol(v: f64) -> f64 {
    CORE_TOL * (1.0 + v.abs())
}

impl<'a> Search<'a> {
    fn new(program: &'a EpsilonProgram) -> Self {
        let n = program.n();
        let mut base = vec![f64::NEG_INFINITY; 1 << n];
        let mut disjunctions = Vec::new();
        for bound in &program.selector_bounds {
            let rows: Vec<(Coalition, f64)> = bound
                .selectors
                .iter()
                .map(|&s| {
                    let r = &program.group_rows[s];
                    (r.coalition, r.value)
                })
                .collect();
            if bound.limit == 0 {
                for (c, v) in rows {
                    let b = &mut base[c.mask() as usize];
                    *b = b.max(v);
                }
            } else {
                disjunctions.push(rows);
            }
        }
        // most valuable disjunctions first; stable sort keeps partition order on ties
        disjunctions.sort_by(|a, b| {
            let ma = a.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
            let mb = b.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
            mb.total_cmp(&ma)
        });
        Search {
            program,
            n,
            base,
            disjunctions,
            stats: SearchStats::default(),
        }
    }

    fn node_lp(&mut self, bounds: &[f64], objective: &Objective) -> std::result::Result<NodePoint, LpError> {
        let n = self.n;
        let mut active: Vec<usize> = Vec::new();
        loop {
            let point = self.solve_restricted(bounds, &active, objective)?;
            let mut violated: Vec<(f64, usize)> = bounds
                .iter()
                .enumerate()
                .filter(|(_, b)| b.is_finite())
                .filter_map(|(mask, &b)| {
                    let sum: f64 = (0..n)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| point.x[i])
                        .sum();
                    let gap = b - (sum + point.eps);
                    (gap > ROW_TOL * (1.0 + b.abs())).then_some((gap, mask))
                })
                .collect();
            if violated.is_empty() {
                return Ok(point);
            }
            violated.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let batch = (2 * n).max(4);
            for &(_, mask) in violated.iter().take(batch) {
                if active.contains(&mask) {
                    return Err(LpError::Numerical(format!(
                        "row for coalition mask {mask} violated after being added"
                    )));
                }
                active.push(mask);
            }
        }
    }

    /// Variables: `x⁺ (n)`, `x⁻ (n)`, `ε`, then `t (n)` for the distance stage.
    fn solve_restricted(
        &mut self,
        bounds: &[f64],
        active: &[usize],
        objective: &Objective,
    ) -> std::result::Result<NodePoint, LpError> {
        self.stats.lps += 1;
        let n = self.n;
        let eps = 2 * n;
        let with_t = matches!(objective, Objective::Distance { .. });
        let vars = if with_t { 3 * n + 1 } else { 2 * n + 1 };
        let mut lp = LinearProgram::new(vars);
        let mut c = vec![0.0; vars];
        match objective {
            Objective::Epsilon => c[eps] = 1.0,
            Objective::Distance { .. } => c[eps + 1..].iter_mut().for_each(|v| *v = 1.0),
        }
        lp.set_objective(c);

        let coalition_terms = |mask: usize| -> Vec<(usize, f64)> {
            let mut t: Vec<(usize, f64)> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .flat_map(|i| [(i, 1.0), (n + i, -1.0)])
                .collect();
            t.push((eps, 1.0));
            t
        };
        let mut eff: Vec<(usize, f64)> = (0..n).flat_map(|i| [(i, 1.0), (n + i, -1.0)]).collect();
        lp.add_sparse_row(&eff, Relation::Eq, self.program.efficiency_rhs);
        eff.clear();
        for (i, &v) in self.program.ir_values.iter().enumerate() {
            lp.add_sparse_row(&coalition_terms(1 << i), Relation::Ge, v);
        }
        for &mask in active {
            lp.add_sparse_row(&coalition_terms(mask), Relation::Ge, bounds[mask]);
        }
        if let Objective::Distance { target, eps_cap } = objective {
            for (i, &goal) in target.iter().enumerate() {
                let t = eps + 1 + i;
                lp.add_sparse_row(&[(t, 1.0), (i, -1.0), (n + i, 1.0)], Relation::Ge, -goal);
                lp.add_sparse_row(&[(t, 1.0), (i, 1.0), (n + i, -1.0)], Relation::Ge, goal);
            }
            lp.add_sparse_row(&[(eps, 1.0)], Relation::Le, *eps_cap);
        }
        let sol = lp.solve()?;
        let x = (0..n).map(|i| sol.x[i] - sol.x[n + i]).collect();
        Ok(NodePoint {
            x,
            eps: sol.x[eps],
            value: sol.objective,
        })
    }

    fn first_open_disjunction(&self, point: &NodePoint) -> Option<usize> {
        self.disjunctions.iter().position(|rows| {
            !rows.iter().any(|&(c, v)| {
                let sum: f64 = c.members().map(|i| point.x[i]).sum();
                sum + point.eps >= v - held_tol(v)
            })
        })
    }

    fn branch_and_bound(&mut self, objective: &Objective) -> Result<Option<NodePoint>> {
        let mut incumbent: Option<NodePoint> = None;
        let mut stack = vec![self.base.clone()];
        while let Some(bounds) = stack.pop() {
            self.stats.nodes += 1;
            let point = match self.node_lp(&bounds, objective) {
                Ok(p) => p,
                Err(LpError::Infeasible(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            if let Some(best) = &incumbent {
                if point.value >= best.value - ROW_TOL * (1.0 + best.value.abs()) {
                    continue;
                }
            }
            match self.first_open_disjunction(&point) {
                None => incumbent = Some(point),
                Some(d) => {
                    for &(c, v) in self.disjunctions[d].iter().rev() {
                        let mut child = bounds.clone();
                        let slot = &mut child[c.mask() as usize];
                        *slot = slot.max(v);
                        stack.push(child);
                    }
                }
            }
        }
        Ok(incumbent)
    }
}

/// Finds the globally minimal ε and, among its optimal points, the
/// imputation nearest to the externality-free value.
pub fn solve_exact(program: &EpsilonProgram) -> Result<EpsilonSolution> {
    let target = externality_free_value(program.pfg())?.0;
    solve_with_target(program, Some(&target))
}

/// Finds the globally minimal ε only; the returned point is whichever
/// optimal point the search met first.
pub fn solve_min_epsilon(program: &EpsilonProgram) -> Result<EpsilonSolution> {
    solve_with_target(program, None)
}

fn solve_with_target(program: &EpsilonProgram, target: Option<&[f64]>) -> Result<EpsilonSolution> {
    let mut search = Search::new(program);
    let first = search
        .branch_and_bound(&Objective::Epsilon)?
        .ok_or_else(|| LpError::Numerical("ε-program reported no feasible point".into()))?;
    let eps_star = if first.eps < ROW_TOL { 0.0 } else { first.eps };
    let eps_cap = eps_star + ROW_TOL * (1.0 + eps_star);
    let second = match target {
        Some(target) => {
            // shift the target onto the efficiency hyperplane
            let shift = (program.efficiency_rhs - target.iter().sum::<f64>()) / program.n() as f64;
            let target: Vec<f64> = target.iter().map(|t| t + shift).collect();
            search.branch_and_bound(&Objective::Distance { target, eps_cap })?
        }
        None => None,
    };
    // the reported ε is the one the returned point actually needs
    let (x, eps) = match second {
        Some(p) => (p.x, eps_star.max(p.eps)),
        None => (first.x, eps_star),
    };
    // with ε* = 0 the cap itself is ROW_TOL
    let eps = if eps <= ROW_TOL { 0.0 } else { eps };
    let solution = EpsilonSolution {
        enforced: enforced_sets(program, &x, eps),
        x: Imputation(x),
        epsilon: eps,
        stats: search.stats,
    };
    verify(program, &solution)?;
    Ok(solution)
}

fn enforced_sets(program: &EpsilonProgram, x: &[f64], eps: f64) -> Vec<EnforcedSet> {
    let partitions = program.pfg().partitions();
    program
        .selector_bounds
        .iter()
        .map(|b| EnforcedSet {
            partition: partitions[b.partition].clone(),
            coalitions: b
                .selectors
                .iter()
                .map(|&s| &program.group_rows[s])
                .filter(|r| {
                    r.coalition.members().map(|i| x[i]).sum::<f64>() + eps >= r.value - held_tol(r.value)
                })
                .map(|r| r.coalition)
                .collect(),
        })
        .collect()
}

/// Checks every program constraint at the reported point.
fn verify(program: &EpsilonProgram, sol: &EpsilonSolution) -> Result<()> {
    let x = sol.x.as_slice();
    let fail = |what: String| Err(Error::Lp(LpError::Numerical(what)));
    if sol.epsilon < 0.0 {
        return fail(format!("negative ε {}", sol.epsilon));
    }
    let total: f64 = x.iter().sum();
    if (total - program.efficiency_rhs).abs() > EFFICIENCY_TOL {
        return fail(format!("efficiency residual {}", total - program.efficiency_rhs));
    }
    for (i, &v) in program.ir_values.iter().enumerate() {
        if x[i] + sol.epsilon < v - held_tol(v) {
            return fail(format!("individual rationality of agent {i}"));
        }
    }
    for (b, e) in program.selector_bounds.iter().zip(&sol.enforced) {
        if e.coalitions.len() < b.selectors.len() - b.limit {
            return fail(format!("selector bound of partition {}", e.partition));
        }
    }
    Ok(())
}

/// Payments and imputation for one epoch of the dynamic program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSolution {
    /// Incremental payment `p_i^t` charged at this epoch (negative = received).
    pub payments: Vec<f64>,
    /// `x_i^t = v_i^t − p_i^t − π_i^{t−1}`.
    pub solution: EpsilonSolution,
}

/// Solves the epoch program for participants with accumulated payments
/// `pi_prev` and grand-coalition valuations `grand_values`.
///
/// Payments already made are sunk for every coalition: a deviating `S`
/// keeps its members' `π`, so each row is shifted by `Σ_{i∈S} π_i`. The
/// stable point of the shifted program is the static solution `y` of
/// `pfg_t`, giving `x = y − π` and `p = v(N) − y`, hence `Σ p = 0`.
pub fn solve_dynamic_epoch(
    pfg_t: &PartitionFunctionGame,
    pi_prev: &[f64],
    grand_values: &[f64],
    rule: CoreRule,
) -> Result<EpochSolution> {
    let n = pfg_t.n();
    for len in [pi_prev.len(), grand_values.len()] {
        if len != n {
            return Err(Error::ImputationLength { got: len, expected: n });
        }
    }
    let grand = pfg_t.grand_value();
    let total: f64 = grand_values.iter().sum();
    if (total - grand).abs() > EFFICIENCY_TOL {
        return Err(Error::Inefficient { sum: total, grand });
    }
    let program = build_program(pfg_t, rule);
    let mut solution = solve_exact(&program)?;
    let payments: Vec<f64> = grand_values
        .iter()
        .zip(solution.x.as_slice())
        .map(|(v, y)| v - y)
        .collect();
    for (x, p) in solution.x.0.iter_mut().zip(pi_prev) {
        *x -= p;
    }
    Ok(EpochSolution { payments, solution })
}
