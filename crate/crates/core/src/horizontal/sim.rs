use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

use crate::core_program::solve_dynamic_epoch;
use crate::error::{Error, Result};
use crate::horizontal::config::SimConfig;
use crate::horizontal::epoch::{build_epoch_pfg, EpochParticipant};
use crate::horizontal::kinematics::{departure_time, join_time, predict_delay};
use crate::vertical::TIE_TOL;

/// Time tolerance for treating two instants as one epoch.
const TIME_TOL: f64 = 1e-9;
/// `ε^t` at or below this counts as strong-core stable.
pub const STABLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleStatus {
    Approaching,
    Queued,
    Departed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vehicle {
    pub id: usize,
    pub theta: f64,
    /// Link entry time.
    pub arrival: f64,
    /// Undelayed bottleneck arrival time.
    pub free_flow: f64,
    /// Current lane while approaching, queue lane afterwards.
    pub lane: usize,
    pub lane_history: Vec<usize>,
    pub status: VehicleStatus,
    pub departure: Option<f64>,
    pub accumulated_payment: f64,
    /// Epochs in which the vehicle was a participant.
    pub optimizations: usize,
}

impl Vehicle {
    /// Longitudinal position at time `t`, from the link entry.
    pub fn position(&self, t: f64, cfg: &SimConfig) -> f64 {
        match (self.status, self.departure) {
            (VehicleStatus::Approaching, _) | (_, None) => {
                (cfg.free_speed * (t - self.arrival)).min(cfg.link_length)
            }
            (_, Some(dep)) => {
                let join = join_time(self.arrival, dep, cfg.link_length, cfg.free_speed, cfg.queue_speed);
                if t <= join {
                    cfg.free_speed * (t - self.arrival)
                } else {
                    (cfg.link_length - cfg.queue_speed * (dep - t)).min(cfg.link_length)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    ImminentJoin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub t: f64,
    pub participants: Vec<usize>,
    pub epsilon: f64,
    /// Mean `θ_i d_i` over participants under the chosen plan.
    pub mean_cost: f64,
    pub payments: Vec<f64>,
    pub assignment: Vec<usize>,
    pub leaves: usize,
    /// `Σ π` over all vehicles after this epoch's payments.
    pub budget_residual: f64,
}

impl EpochRecord {
    pub fn stable(&self) -> bool {
        self.epsilon <= STABLE_TOL
    }

    /// `ε / mean cost`, zero when nobody is delayed.
    pub fn ratio(&self) -> f64 {
        if self.mean_cost > 0.0 {
            self.epsilon / self.mean_cost
        } else {
            0.0
        }
    }
}

struct Plan {
    lane: usize,
    imminent_at: f64,
}

/// Arrival `(entry time, lane, θ)` in generation order.
type Arrival = (f64, usize, f64);

pub struct Simulation {
    config: SimConfig,
    clock: f64,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    vehicles: Vec<Vehicle>,
    /// Approaching vehicle ids in (free-flow time, id) order.
    approaching: Vec<usize>,
    plans: Vec<Option<Plan>>,
    /// Departure times of queued vehicles, per lane, in queue order.
    lane_departures: Vec<Vec<f64>>,
    records: Vec<EpochRecord>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let arrivals = generate_arrivals(&config)?;
        let lanes = config.lanes;
        Ok(Simulation {
            config,
            clock: 0.0,
            arrivals,
            next_arrival: 0,
            vehicles: Vec::new(),
            approaching: Vec::new(),
            plans: Vec::new(),
            lane_departures: vec![Vec::new(); lanes],
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn lane_departures(&self) -> &[Vec<f64>] {
        &self.lane_departures
    }

    fn lane_tails(&self) -> Vec<Option<f64>> {
        self.lane_departures.iter().map(|d| d.last().copied()).collect()
    }

    /// Earliest pending event, arrivals first on ties.
    pub fn next_event(&self) -> Option<Event> {
        let arrival = self.arrivals.get(self.next_arrival).map(|a| Event {
            time: a.0,
            kind: EventKind::Arrival,
            vehicle: self.vehicles.len(),
        });
        let join = self
            .approaching
            .iter()
            .map(|&id| Event {
                time: self.plans[id].as_ref().expect("approaching vehicles are planned").imminent_at.max(self.clock),
                kind: EventKind::ImminentJoin,
                vehicle: id,
            })
            .min_by(|a, b| a.time.total_cmp(&b.time).then(a.vehicle.cmp(&b.vehicle)));
        match (arrival, join) {
            (Some(a), Some(j)) if j.time < a.time - TIME_TOL => Some(j),
            (Some(a), _) => Some(a),
            (None, j) => j,
        }
    }

    /// Processes every event at `event.time` as one epoch: admit arrivals,
    /// optimize over the leading approaching vehicles, then commit those
    /// whose queue join is imminent.
    pub fn step_event(&mut self, event: Event) -> Result<()> {
        if event.time < self.clock - TIME_TOL {
            return Err(Error::InvalidInstance(format!(
                "event at {} precedes clock {}",
                event.time, self.clock
            )));
        }
        let t = event.time.max(self.clock);
        self.clock = t;
        while let Some(&(time, lane, theta)) = self.arrivals.get(self.next_arrival) {
            if time > t + TIME_TOL {
                break;
            }
            self.admit(time, lane, theta);
            self.next_arrival += 1;
        }
        let triggered: Vec<usize> = self
            .approaching
            .iter()
            .copied()
            .filter(|&id| self.plans[id].as_ref().is_some_and(|p| p.imminent_at <= t + TIME_TOL))
            .collect();

        let cap = self.config.participant_cap.min(self.approaching.len());
        let participants: Vec<usize> = self.approaching[..cap].to_vec();
        if !participants.is_empty() {
            self.optimize(t, &participants)
                .map_err(|e| Error::Epoch { time: t, source: Box::new(e) })?;
        }
        self.replan();
        self.commit(t, &triggered);
        self.replan();
        Ok(())
    }

    /// Runs until every generated vehicle has joined a queue.
    pub fn run(mut self) -> Result<SimulationReport> {
        while let Some(ev) = self.next_event() {
            self.step_event(ev)?;
        }
        for v in &mut self.vehicles {
            v.status = VehicleStatus::Departed;
        }
        Ok(SimulationReport::new(self))
    }

    fn admit(&mut self, time: f64, lane: usize, theta: f64) {
        let id = self.vehicles.len();
        self.vehicles.push(Vehicle {
            id,
            theta,
            arrival: time,
            free_flow: time + self.config.link_time(),
            lane,
            lane_history: vec![lane],
            status: VehicleStatus::Approaching,
            departure: None,
            accumulated_payment: 0.0,
            optimizations: 0,
        });
        self.plans.push(None);
        self.approaching.push(id);
        let vs = &self.vehicles;
        self.approaching
            .sort_by(|&a, &b| vs[a].free_flow.total_cmp(&vs[b].free_flow).then(a.cmp(&b)));
    }

    fn optimize(&mut self, t: f64, ids: &[usize]) -> Result<()> {
        let players: Vec<EpochParticipant> = ids
            .iter()
            .map(|&id| EpochParticipant {
                theta: self.vehicles[id].theta,
                free_flow: self.vehicles[id].free_flow,
            })
            .collect();
        let game = build_epoch_pfg(
            &players,
            &self.lane_tails(),
            self.config.headway(),
            self.config.participant_cap,
        )?;
        let pi_prev: Vec<f64> = ids.iter().map(|&id| self.vehicles[id].accumulated_payment).collect();
        let sol = solve_dynamic_epoch(&game.pfg, &pi_prev, &game.grand_values, self.config.core_rule)?;
        for ((&id, &lane), &p) in ids.iter().zip(&game.assignment).zip(&sol.payments) {
            let v = &mut self.vehicles[id];
            v.accumulated_payment += p;
            v.optimizations += 1;
            if v.lane != lane {
                v.lane = lane;
                v.lane_history.push(lane);
            }
        }
        let mean_cost = -game.grand_values.iter().sum::<f64>() / ids.len() as f64;
        self.records.push(EpochRecord {
            t,
            participants: ids.to_vec(),
            epsilon: sol.solution.epsilon,
            mean_cost,
            payments: sol.payments,
            assignment: game.assignment,
            leaves: game.leaves,
            budget_residual: self.vehicles.iter().map(|v| v.accumulated_payment).sum(),
        });
        Ok(())
    }

    /// Predicts departures and imminence times for approaching vehicles.
    /// Vehicles outside the latest optimization pick their least-delay lane
    /// in order; a vehicle never becomes imminent before its planned
    /// predecessor in the same lane.
    fn replan(&mut self) {
        let cfg = &self.config;
        let h = cfg.headway();
        let mut tails = self.lane_tails();
        let mut tail_imminent: Vec<f64> = vec![f64::NEG_INFINITY; cfg.lanes];
        for &id in &self.approaching {
            let v = &mut self.vehicles[id];
            if v.optimizations == 0 {
                let lane = least_delay_lane(v.free_flow, &tails, h);
                if v.lane != lane {
                    v.lane = lane;
                    v.lane_history.push(lane);
                }
            }
            let dep = departure_time(v.free_flow, tails[v.lane], h);
            let join = join_time(v.arrival, dep, cfg.link_length, cfg.free_speed, cfg.queue_speed);
            let imminent_at = (join - cfg.time_step).max(tail_imminent[v.lane]);
            tails[v.lane] = Some(dep);
            tail_imminent[v.lane] = imminent_at;
            self.plans[id] = Some(Plan { lane: v.lane, imminent_at });
        }
    }

    /// Commits imminent vehicles, and those whose join triggered this epoch,
    /// to the back of their current lane.
    fn commit(&mut self, t: f64, triggered: &[usize]) {
        let h = self.config.headway();
        let ready: Vec<usize> = self
            .approaching
            .iter()
            .copied()
            .filter(|&id| {
                triggered.contains(&id)
                    || self.plans[id].as_ref().is_some_and(|p| p.imminent_at <= t + TIME_TOL)
            })
            .collect();
        for id in ready {
            let lane = self.plans[id].as_ref().expect("planned").lane;
            let v = &mut self.vehicles[id];
            debug_assert_eq!(v.lane, lane);
            let dep = departure_time(v.free_flow, self.lane_departures[lane].last().copied(), h);
            v.departure = Some(dep);
            v.status = VehicleStatus::Queued;
            self.lane_departures[lane].push(dep);
            self.plans[id] = None;
            self.approaching.retain(|&a| a != id);
        }
    }
}

fn least_delay_lane(free_flow: f64, tails: &[Option<f64>], h: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (lane, &tail) in tails.iter().enumerate() {
        let d = predict_delay(free_flow, tail, h);
        if d < best.0 - TIE_TOL {
            best = (d, lane);
        }
    }
    best.1
}

fn generate_arrivals(cfg: &SimConfig) -> Result<Vec<Arrival>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let thetas = LogNormal::new(cfg.theta_mu, cfg.theta_sigma)
        .map_err(|e| Error::InvalidConfig(format!("theta distribution: {e}")))?;
    let p = cfg.arrival_probability();
    let steps = (cfg.horizon / cfg.time_step).ceil() as u64;
    let mut out = Vec::new();
    for k in 0..steps {
        let time = k as f64 * cfg.time_step;
        if time >= cfg.horizon {
            break;
        }
        for lane in 0..cfg.lanes {
            if rng.random_bool(p) {
                out.push((time, lane, thetas.sample(&mut rng)));
            }
        }
    }
    Ok(out)
}

/// Per-vehicle ledger row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleRecord {
    pub id: usize,
    pub theta: f64,
    pub arrival: f64,
    pub lane_history: String,
    pub departure: f64,
    pub total_delay: f64,
    pub accumulated_payment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub vehicles: usize,
    pub epochs: usize,
    pub stable_epochs: usize,
    /// Fraction of optimization epochs with `ε ≤ 1e-9`; 1 if there were none.
    pub stable_fraction: f64,
    /// Mean `ε / mean cost` over all optimization epochs.
    pub mean_ratio_all: f64,
    /// Mean `ε / mean cost` over unstable epochs; 0 if there were none.
    pub mean_ratio_unstable: f64,
    pub max_participants: usize,
    pub max_abs_budget_residual: f64,
    /// Smallest gap between consecutive departures in a lane; `None` if no
    /// lane saw two departures.
    pub min_departure_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub epochs: Vec<EpochRecord>,
    pub vehicles: Vec<VehicleRecord>,
    pub lane_departures: Vec<Vec<f64>>,
    pub summary: SimulationSummary,
}

impl SimulationReport {
    fn new(sim: Simulation) -> Self {
        let epochs = sim.records;
        let n = epochs.len();
        let stable = epochs.iter().filter(|e| e.stable()).count();
        let mean = |it: &mut dyn Iterator<Item = f64>| {
            let (s, c) = it.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
            if c == 0 {
                0.0
            } else {
                s / c as f64
            }
        };
        let summary = SimulationSummary {
            vehicles: sim.vehicles.len(),
            epochs: n,
            stable_epochs: stable,
            stable_fraction: if n == 0 { 1.0 } else { stable as f64 / n as f64 },
            mean_ratio_all: mean(&mut epochs.iter().map(EpochRecord::ratio)),
            mean_ratio_unstable: mean(&mut epochs.iter().filter(|e| !e.stable()).map(EpochRecord::ratio)),
            max_participants: epochs.iter().map(|e| e.participants.len()).max().unwrap_or(0),
            max_abs_budget_residual: epochs.iter().map(|e| e.budget_residual.abs()).fold(0.0, f64::max),
            min_departure_gap: sim
                .lane_departures
                .iter()
                .flat_map(|d| d.windows(2).map(|w| w[1] - w[0]))
                .reduce(f64::min),
        };
        let vehicles = sim
            .vehicles
            .iter()
            .map(|v| {
                let departure = v.departure.expect("every vehicle is queued at the end");
                VehicleRecord {
                    id: v.id,
                    theta: v.theta,
                    arrival: v.arrival,
                    lane_history: v
                        .lane_history
                        .iter()
                        .map(|l| (l + 1).to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                    departure,
                    total_delay: departure - v.free_flow,
                    accumulated_payment: v.accumulated_payment,
                }
            })
            .collect();
        SimulationReport {
            config: sim.config,
            epochs,
            vehicles,
            lane_departures: sim.lane_departures,
            summary,
        }
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimulationReport> {
    Simulation::new(config.clone())?.run()
}
