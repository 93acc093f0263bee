//! Scheduled lab dynamics: measurement events, resets, timelines, and the
//! lifetime of measurement records.
//!
//! A [`Schedule`] is an initial state plus time-ordered events. A
//! [`Timeline`] resolves each event to a concrete unitary and precomputes the
//! state in every inter-event epoch, so any instant can be queried. Event
//! times are exact rationals to keep epoch boundaries unambiguous.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use num_rational::Ratio;

use crate::hilbert::{PureState, Subsystem, SubsystemLayout, UnitaryMap};
use crate::{Error, Result};

/// Exact event time.
pub type Time = Ratio<i64>;

/// Convenience constructor for whole-number times.
pub fn time(n: i64) -> Time {
    Ratio::from_integer(n)
}

/// A premeasurement: copy the observed subsystem's basis index into a pointer
/// (and optional companion) subsystem, entangling them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementSpec {
    pub observed: String,
    pub pointer: String,
    pub companions: Vec<String>,
}

impl MeasurementSpec {
    pub fn new(observed: impl Into<String>, pointer: impl Into<String>) -> Self {
        MeasurementSpec {
            observed: observed.into(),
            pointer: pointer.into(),
            companions: Vec::new(),
        }
    }

    pub fn with_companions(
        mut self,
        companions: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        self.companions = companions.into_iter().map(Into::into).collect();
        self
    }
}

/// What happens at one scheduled instant.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Measure(MeasurementSpec),
    /// Undo a previous event by applying the adjoint of its unitary.
    /// `target` is the 0-based index of that event in the schedule.
    Reset { target: usize },
    /// An arbitrary named unitary.
    Custom { name: String, unitary: UnitaryMap },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: Time,
    pub kind: EventKind,
}

/// The swap unitary implementing a premeasurement: for observed index `o`,
/// exchange basis index 0 (ready) with index `o + 1` on the pointer and every
/// companion. An involution, and it never moves the observed subsystem.
pub fn measurement_unitary(
    layout: &Arc<SubsystemLayout>,
    spec: &MeasurementSpec,
) -> Result<UnitaryMap> {
    let observed = layout.require(&spec.observed)?;
    let pointer = layout.require(&spec.pointer)?;
    if pointer == observed {
        return Err(Error::InvalidMeasurement(format!(
            "pointer `{}` cannot be the observed subsystem",
            spec.pointer
        )));
    }
    let mut mirrors = vec![pointer];
    for name in &spec.companions {
        let idx = layout.require(name)?;
        if idx == observed {
            return Err(Error::InvalidMeasurement(format!(
                "companion `{name}` cannot be the observed subsystem"
            )));
        }
        if mirrors.contains(&idx) {
            return Err(Error::InvalidMeasurement(format!(
                "subsystem `{name}` listed twice in the measurement"
            )));
        }
        mirrors.push(idx);
    }
    let observed_dim = layout.subsystem(observed).dim;
    for &idx in &mirrors {
        let dim = layout.subsystem(idx).dim;
        if dim < observed_dim + 1 {
            return Err(Error::InvalidMeasurement(format!(
                "subsystem `{}` has dimension {dim}, needs at least {} \
                 (ready plus one per outcome)",
                layout.subsystem(idx).name,
                observed_dim + 1
            )));
        }
    }
    UnitaryMap::permutation_from_fn(layout, move |cfg| {
        let o = cfg[observed];
        for &m in &mirrors {
            if cfg[m] == 0 {
                cfg[m] = o + 1;
            } else if cfg[m] == o + 1 {
                cfg[m] = 0;
            }
        }
    })
}

/// Initial state plus strictly time-ordered events.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    layout: Arc<SubsystemLayout>,
    initial: PureState,
    events: Vec<Event>,
}

impl Schedule {
    pub fn new(initial: PureState, events: Vec<Event>) -> Result<Self> {
        let layout = Arc::clone(initial.layout());
        for (i, event) in events.iter().enumerate() {
            if i > 0 && events[i - 1].time >= event.time {
                return Err(Error::InvalidSchedule(format!(
                    "event times must strictly increase (event {} at {} follows {})",
                    i,
                    event.time,
                    events[i - 1].time
                )));
            }
            match &event.kind {
                EventKind::Measure(spec) => {
                    // surface bad specs at schedule construction
                    measurement_unitary(&layout, spec)?;
                }
                EventKind::Reset { target } => {
                    if *target >= events.len() {
                        return Err(Error::UnknownEvent(*target));
                    }
                    if *target >= i {
                        return Err(Error::InvalidSchedule(format!(
                            "reset at {} targets event {} which is not earlier",
                            event.time, target
                        )));
                    }
                    if !matches!(events[*target].kind, EventKind::Measure(_)) {
                        return Err(Error::NotAMeasurement(*target));
                    }
                }
                EventKind::Custom { unitary, .. } => {
                    if !Arc::ptr_eq(unitary.layout(), &layout) && **unitary.layout() != *layout {
                        return Err(Error::LayoutMismatch);
                    }
                }
            }
        }
        Ok(Schedule {
            layout,
            initial,
            events,
        })
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }

    pub fn initial_state(&self) -> &PureState {
        &self.initial
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }
}

/// A record's window of existence: born when its measurement fires, dead once
/// a later unitary disturbs the pointer subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordInterval {
    /// Index of the measurement event that wrote the record.
    pub event: usize,
    /// Subsystem index of the pointer holding the record.
    pub pointer: usize,
    pub birth: Time,
    /// `None` while nothing later touches the pointer.
    pub death: Option<Time>,
    /// Event index that killed the record, if any.
    pub erased_by: Option<usize>,
}

/// A schedule with every event resolved to a unitary and all epoch states
/// precomputed.
#[derive(Debug, Clone)]
pub struct Timeline {
    schedule: Schedule,
    unitaries: Vec<UnitaryMap>,
    /// `states[i]` is the state after the first `i` events; `len = events + 1`.
    states: Vec<PureState>,
}

impl Timeline {
    pub fn new(schedule: Schedule) -> Result<Self> {
        let mut unitaries: Vec<UnitaryMap> = Vec::with_capacity(schedule.events.len());
        for event in &schedule.events {
            let u = match &event.kind {
                EventKind::Measure(spec) => measurement_unitary(&schedule.layout, spec)?,
                EventKind::Reset { target } => unitaries[*target].adjoint(),
                EventKind::Custom { unitary, .. } => unitary.clone(),
            };
            unitaries.push(u);
        }
        let mut states = Vec::with_capacity(schedule.events.len() + 1);
        states.push(schedule.initial.clone());
        for u in &unitaries {
            let next = u.apply(states.last().unwrap())?;
            states.push(next);
        }
        Ok(Timeline {
            schedule,
            unitaries,
            states,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.schedule.layout
    }

    pub fn events(&self) -> &[Event] {
        &self.schedule.events
    }

    pub fn unitary(&self, event: usize) -> &UnitaryMap {
        &self.unitaries[event]
    }

    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    /// Number of events with time <= `t`; indexes the epoch state holding at
    /// instant `t`.
    pub fn epoch_at(&self, t: Time) -> usize {
        self.schedule
            .events
            .iter()
            .take_while(|e| e.time <= t)
            .count()
    }

    /// State holding at instant `t` (events at exactly `t` have fired).
    pub fn state_at(&self, t: Time) -> &PureState {
        &self.states[self.epoch_at(t)]
    }

    /// Half-open validity span of epoch `i`: `[time of event i-1, time of
    /// event i)`, unbounded at either end of the schedule.
    pub fn epoch_span(&self, epoch: usize) -> (Option<Time>, Option<Time>) {
        let start = epoch
            .checked_sub(1)
            .and_then(|i| self.schedule.events.get(i))
            .map(|e| e.time);
        let end = self.schedule.events.get(epoch).map(|e| e.time);
        (start, end)
    }

    pub fn n_epochs(&self) -> usize {
        self.states.len()
    }

    /// Liveness interval of every measurement record, in event order. A
    /// record dies at the first later event whose unitary can move the
    /// pointer subsystem.
    pub fn record_liveness(&self) -> Vec<RecordInterval> {
        let mut out = Vec::new();
        for (i, event) in self.schedule.events.iter().enumerate() {
            let EventKind::Measure(spec) = &event.kind else {
                continue;
            };
            let pointer = self
                .schedule
                .layout
                .find(&spec.pointer)
                .expect("validated at construction");
            let mut death = None;
            let mut erased_by = None;
            for (j, later) in self.schedule.events.iter().enumerate().skip(i + 1) {
                if self.unitaries[j].touched_subsystems().contains(&pointer) {
                    death = Some(later.time);
                    erased_by = Some(j);
                    break;
                }
            }
            out.push(RecordInterval {
                event: i,
                pointer,
                birth: event.time,
                death,
                erased_by,
            });
        }
        out
    }

    /// Liveness interval for one measurement event.
    pub fn record_interval(&self, event: usize) -> Result<RecordInterval> {
        if event >= self.schedule.events.len() {
            return Err(Error::UnknownEvent(event));
        }
        self.record_liveness()
            .into_iter()
            .find(|r| r.event == event)
            .ok_or(Error::NotAMeasurement(event))
    }

    /// Short human description of an event, for diagnostics.
    pub fn describe_event(&self, event: usize) -> String {
        match &self.schedule.events[event].kind {
            EventKind::Measure(spec) => {
                format!("measure {} -> {}", spec.observed, spec.pointer)
            }
            EventKind::Reset { target } => format!("reset of event {target}"),
            EventKind::Custom { name, .. } => format!("unitary {name}"),
        }
    }
}

/// The two bundled experiment versions: a pair of observers measuring the
/// same two-valued system, without and with an intervening reset of the
/// first observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Version1,
    Version2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Version1 => "version1",
            Scenario::Version2 => "version2",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "version1" => Ok(Scenario::Version1),
            "version2" => Ok(Scenario::Version2),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Layout of the bundled scenarios: a two-valued system S and three-valued
/// pointers A (Alice), B (Bob), E (environment tied to Alice's device).
pub fn builtin_layout() -> Arc<SubsystemLayout> {
    Arc::new(
        SubsystemLayout::new(vec![
            Subsystem::new("S", ["1", "2"]),
            Subsystem::new("A", ["Ar", "A1", "A2"]),
            Subsystem::new("B", ["Br", "B1", "B2"]),
            Subsystem::new("E", ["Er", "E1", "E2"]),
        ])
        .expect("static layout"),
    )
}

/// Build a bundled scenario's timeline: S starts in an equal superposition,
/// all pointers ready; Alice measures at t=1 (with environment companion),
/// Bob at t=3; version 2 adds a reset of Alice's measurement at t=2.
pub fn builtin_scenario(which: Scenario) -> Result<Timeline> {
    let layout = builtin_layout();
    // 1/sqrt(2) spelled the way the file evaluator computes it, so reports
    // driven by the bundled .edl files agree with this one bit for bit.
    let c = C64::new(1.0 / 2f64.sqrt(), 0.0);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let ready = vec![one, zero, zero];
    let initial = PureState::product(
        &layout,
        &[vec![c, c], ready.clone(), ready.clone(), ready],
    )?;
    let alice = Event {
        time: time(1),
        kind: EventKind::Measure(
            MeasurementSpec::new("S", "A").with_companions(["E"]),
        ),
    };
    let bob = Event {
        time: time(3),
        kind: EventKind::Measure(MeasurementSpec::new("S", "B")),
    };
    let events = match which {
        Scenario::Version1 => vec![alice, bob],
        Scenario::Version2 => vec![
            alice,
            Event {
                time: time(2),
                kind: EventKind::Reset { target: 0 },
            },
            bob,
        ],
    };
    Timeline::new(Schedule::new(initial, events)?)
}
