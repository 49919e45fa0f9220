//! Newell queue kinematics on one lane.
//!
//! A vehicle entering the link at `e` reaches the bottleneck at
//! `f = e + λ/v_a` if undelayed. Departures in a lane follow their
//! predecessor by at least the headway `h = s_q/v_q`, so the departure time
//! is `max(pred + h, f)` and the delay is measured against `f`.

/// Bottleneck departure time behind a predecessor departing at `pred`.
pub fn departure_time(free_flow: f64, pred: Option<f64>, headway: f64) -> f64 {
    match pred {
        Some(p) => (p + headway).max(free_flow),
        None => free_flow,
    }
}

/// Predicted delay `max(pred + h, f) − f`; zero in an empty lane.
pub fn predict_delay(free_flow: f64, pred: Option<f64>, headway: f64) -> f64 {
    departure_time(free_flow, pred, headway) - free_flow
}

/// Time at which a vehicle entering at `entry` and departing at `departure`
/// reaches the back of the queue: it drives at `free_speed` until it meets
/// the queue and crawls at `queue_speed` from there to the bottleneck. A
/// queue reaching past the link entry is joined on entry.
pub fn join_time(
    entry: f64,
    departure: f64,
    link_length: f64,
    free_speed: f64,
    queue_speed: f64,
) -> f64 {
    let t = (link_length + free_speed * entry - queue_speed * departure) / (free_speed - queue_speed);
    t.max(entry)
}
