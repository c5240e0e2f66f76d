//! Impulse schedules: counting, restriction, concatenation, simultaneous
//! action merging and the accumulated impulse payoff `Θ`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{ProblemError, ProblemSpec};

/// Time of an action that never happens. Strictly greater than any horizon.
pub const NEVER: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    /// The maximizer; pays `c` per impulse.
    I,
    /// The minimizer; pays `χ` per impulse and wins simultaneous actions.
    II,
}

#[derive(Debug, Error, PartialEq)]
pub enum ImpulseError {
    #[error("event times must be non-decreasing (event {index} at {time} follows {previous})")]
    Unsorted { index: usize, time: f64, previous: f64 },
    #[error("event {index} has a NaN time")]
    NanTime { index: usize },
    #[error("cannot concatenate schedules of players {0:?} and {1:?}")]
    PlayerMismatch(Player, Player),
    #[error("event at {time} lies on the wrong side of the split {split}")]
    Straddle { time: f64, split: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseEvent {
    pub time: f64,
    pub action: Vec<f64>,
}

/// One player's realized impulse control: non-decreasing action times with
/// the shift applied at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSchedule {
    player: Player,
    events: Vec<ImpulseEvent>,
}

impl ImpulseSchedule {
    pub fn new(player: Player, events: Vec<ImpulseEvent>) -> Result<Self, ImpulseError> {
        for (index, e) in events.iter().enumerate() {
            if e.time.is_nan() {
                return Err(ImpulseError::NanTime { index });
            }
            if index > 0 && e.time < events[index - 1].time {
                return Err(ImpulseError::Unsorted { index, time: e.time, previous: events[index - 1].time });
            }
        }
        Ok(Self { player, events })
    }

    pub fn empty(player: Player) -> Self {
        Self { player, events: Vec::new() }
    }

    /// Builds a schedule from `(time, action)` pairs.
    pub fn from_pairs(player: Player, pairs: &[(f64, Vec<f64>)]) -> Result<Self, ImpulseError> {
        Self::new(player, pairs.iter().map(|(time, action)| ImpulseEvent { time: *time, action: action.clone() }).collect())
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn events(&self) -> &[ImpulseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Appends an event; `time` must not precede the last one.
    pub fn push(&mut self, time: f64, action: Vec<f64>) -> Result<(), ImpulseError> {
        if let Some(last) = self.events.last() {
            if time < last.time {
                return Err(ImpulseError::Unsorted { index: self.events.len(), time, previous: last.time });
            }
        }
        self.events.push(ImpulseEvent { time, action });
        Ok(())
    }
}

/// Number of impulses of `s` in `[t0, tau]`.
pub fn impulse_count(s: &ImpulseSchedule, t0: f64, tau: f64) -> usize {
    s.events.iter().filter(|e| e.time >= t0 && e.time <= tau).count()
}

/// Sub-schedule of the events with time in `[tau, sigma]`.
pub fn restrict(s: &ImpulseSchedule, tau: f64, sigma: f64) -> ImpulseSchedule {
    // Sorted times: the window is a contiguous range.
    let start = s.events.partition_point(|e| e.time < tau);
    let end = s.events.partition_point(|e| e.time <= sigma);
    ImpulseSchedule { player: s.player, events: s.events[start..end.max(start)].to_vec() }
}

/// `u1 ⊕ u2`: `u1`'s events (all at or before `split`) followed by `u2`'s
/// (all after `split`).
pub fn concat(u1: &ImpulseSchedule, u2: &ImpulseSchedule, split: f64) -> Result<ImpulseSchedule, ImpulseError> {
    if u1.player != u2.player {
        return Err(ImpulseError::PlayerMismatch(u1.player, u2.player));
    }
    if let Some(e) = u1.events.iter().find(|e| e.time > split) {
        return Err(ImpulseError::Straddle { time: e.time, split });
    }
    if let Some(e) = u2.events.iter().find(|e| e.time <= split) {
        return Err(ImpulseError::Straddle { time: e.time, split });
    }
    let mut events = u1.events.clone();
    events.extend(u2.events.iter().cloned());
    Ok(ImpulseSchedule { player: u1.player, events })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time: f64,
    pub player: Player,
    pub action: Vec<f64>,
    /// Player I events that coincide with a player II event are suppressed.
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergedTimeline {
    pub events: Vec<TimelineEvent>,
}

impl MergedTimeline {
    pub fn effective(&self) -> impl Iterator<Item = &TimelineEvent> {
        self.events.iter().filter(|e| !e.discarded)
    }
}

/// Time-ordered merge of both players' schedules. At a time carrying events
/// of both players only player II's take effect; within one timestamp II's
/// events are listed first.
pub fn merge_with_priority(u: &ImpulseSchedule, v: &ImpulseSchedule) -> MergedTimeline {
    let mut events: Vec<TimelineEvent> = v
        .events
        .iter()
        .map(|e| TimelineEvent { time: e.time, player: Player::II, action: e.action.clone(), discarded: false })
        .chain(u.events.iter().map(|e| TimelineEvent {
            time: e.time,
            player: Player::I,
            action: e.action.clone(),
            discarded: v.events.iter().any(|w| w.time == e.time),
        }))
        .collect();
    // Stable sort keeps each player's own order within a timestamp.
    events.sort_by(|a, b| {
        a.time.partial_cmp(&b.time).unwrap_or(Ordering::Equal).then_with(|| match (a.player, b.player) {
            (Player::II, Player::I) => Ordering::Less,
            (Player::I, Player::II) => Ordering::Greater,
            _ => Ordering::Equal,
        })
    });
    MergedTimeline { events }
}

/// `Θ_s`: gains `χ` of effective player II impulses up to `s`, minus costs
/// `c` of non-discarded player I impulses up to `s`. Summed in timeline
/// order.
pub fn accumulate_theta(timeline: &MergedTimeline, spec: &ProblemSpec, s: f64) -> Result<f64, ImpulseError> {
    let mut theta = 0.0;
    for e in timeline.effective().filter(|e| e.time <= s) {
        match e.player {
            Player::II => theta += spec.gain_at(e.time, &e.action)?,
            Player::I => theta -= spec.cost_at(e.time, &e.action)?,
        }
    }
    Ok(theta)
}
