//! Classifying and evaluating multi-time outcome queries.
//!
//! A query asks for the joint probability that named measurement records show
//! given outcomes at given instants. Such a conjunction has a Born value only
//! if every queried record is still intact at the latest queried instant:
//! then each projector commutes with the evolution in between and the joint
//! collapses to a single-time question. A record erased before that instant
//! leaves the query with no Born value at all — the verdict reports exactly
//! which record died, when, and what killed it.
//!
//! [`chained_two_time`] implements the standard two-time workaround (project,
//! evolve, project) and reports how badly its history branches interfere.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::hilbert::Question;
use crate::lab::{EventKind, Time, Timeline};
use crate::{Error, Result};

/// One conjunct: the record written by `event` shows `outcome` at time `at`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeEvent {
    pub event: usize,
    pub outcome: String,
    pub at: Time,
}

/// Conjunction of outcome-at-time conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTimeQuery {
    pub outcomes: Vec<OutcomeEvent>,
}

impl MultiTimeQuery {
    pub fn new(outcomes: Vec<OutcomeEvent>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidQuery("query has no outcomes".into()));
        }
        Ok(MultiTimeQuery { outcomes })
    }

    pub fn single(event: usize, outcome: impl Into<String>, at: Time) -> Self {
        MultiTimeQuery {
            outcomes: vec![OutcomeEvent {
                event,
                outcome: outcome.into(),
                at,
            }],
        }
    }

    /// Canonical rendering: `P(A = A1 @ 3/2 & B = B1 @ 7/2)`.
    pub fn render(&self, timeline: &Timeline) -> String {
        let parts: Vec<String> = self
            .outcomes
            .iter()
            .map(|oe| {
                let pointer = match &timeline.events()[oe.event].kind {
                    EventKind::Measure(spec) => spec.pointer.as_str(),
                    _ => "?",
                };
                format!("{} = {} @ {}", pointer, oe.outcome, oe.at)
            })
            .collect();
        format!("P({})", parts.join(" & "))
    }
}

/// Why a query has no Born value: the record it needs was erased first.
#[derive(Debug, Clone, PartialEq)]
pub struct IndeterminateReason {
    /// Measurement event whose record was erased.
    pub event: usize,
    /// Name of the pointer subsystem that held the record.
    pub pointer: String,
    /// The outcome the query asked about.
    pub outcome: String,
    pub died_at: Time,
    /// Event index that erased the record.
    pub erased_by: usize,
    /// Human description of the erasing event.
    pub erased_by_desc: String,
    /// The instant the record would have to survive to: the latest time in
    /// the query.
    pub required_at: Time,
}

impl fmt::Display for IndeterminateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record of event {} (pointer {}, outcome {}) was erased at t={} by event {} ({}) \
             and no longer exists at t={}",
            self.event,
            self.pointer,
            self.outcome,
            self.died_at,
            self.erased_by,
            self.erased_by_desc,
            self.required_at
        )
    }
}

/// Outcome of classifying a query.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// The conjunction reduces to `question` on the state at `at`.
    Computable { at: Time, question: Question },
    Indeterminate(IndeterminateReason),
}

struct Resolved {
    event: usize,
    pointer: String,
    pointer_sub: usize,
    outcome: String,
    at: Time,
}

fn resolve(timeline: &Timeline, oe: &OutcomeEvent) -> Result<Resolved> {
    let events = timeline.events();
    if oe.event >= events.len() {
        return Err(Error::UnknownEvent(oe.event));
    }
    let EventKind::Measure(spec) = &events[oe.event].kind else {
        return Err(Error::NotAMeasurement(oe.event));
    };
    let layout = timeline.layout();
    let pointer_sub = layout.require(&spec.pointer)?;
    // reject unknown labels up front
    layout.label_index(pointer_sub, &oe.outcome)?;
    if oe.at < events[oe.event].time {
        return Err(Error::InvalidQuery(format!(
            "record of event {} is queried at t={} before it exists (born at t={})",
            oe.event, oe.at, events[oe.event].time
        )));
    }
    Ok(Resolved {
        event: oe.event,
        pointer: spec.pointer.clone(),
        pointer_sub,
        outcome: oe.outcome.clone(),
        at: oe.at,
    })
}

/// Decide whether the query has a Born value.
///
/// The conjunction is evaluated at the latest queried instant; it is
/// computable iff every queried record survives past that instant.
pub fn classify(timeline: &Timeline, query: &MultiTimeQuery) -> Result<Verdict> {
    if query.outcomes.is_empty() {
        return Err(Error::InvalidQuery("query has no outcomes".into()));
    }
    let mut resolved = Vec::with_capacity(query.outcomes.len());
    for oe in &query.outcomes {
        let r = resolve(timeline, oe)?;
        if resolved.iter().any(|p: &Resolved| p.event == r.event) {
            return Err(Error::ConflictingOutcomes(r.event));
        }
        resolved.push(r);
    }
    let required_at = resolved.iter().map(|r| r.at).max().expect("non-empty");
    for r in &resolved {
        let interval = timeline.record_interval(r.event)?;
        if let (Some(death), Some(erased_by)) = (interval.death, interval.erased_by) {
            if death <= required_at {
                return Ok(Verdict::Indeterminate(IndeterminateReason {
                    event: r.event,
                    pointer: r.pointer.clone(),
                    outcome: r.outcome.clone(),
                    died_at: death,
                    erased_by,
                    erased_by_desc: timeline.describe_event(erased_by),
                    required_at,
                }));
            }
        }
    }
    let layout = timeline.layout();
    let mut question = Question::always_true(layout);
    for r in &resolved {
        question = question.and(&Question::outcome(layout, &r.pointer, &r.outcome)?)?;
    }
    Ok(Verdict::Computable {
        at: required_at,
        question,
    })
}

/// A classified query together with its value when one exists.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Probability(f64),
    Indeterminate(IndeterminateReason),
}

/// Classify and, when computable, evaluate the query.
pub fn evaluate(timeline: &Timeline, query: &MultiTimeQuery) -> Result<QueryResult> {
    match classify(timeline, query)? {
        Verdict::Computable { at, question } => {
            let p = timeline.state_at(at).born_probability(&question)?;
            Ok(QueryResult::Probability(p))
        }
        Verdict::Indeterminate(reason) => Ok(QueryResult::Indeterminate(reason)),
    }
}

/// Like [`evaluate`] but an indeterminate query is an error; for callers that
/// need a number.
pub fn probability(timeline: &Timeline, query: &MultiTimeQuery) -> Result<f64> {
    match evaluate(timeline, query)? {
        QueryResult::Probability(p) => Ok(p),
        QueryResult::Indeterminate(reason) => Err(Error::BornIndeterminate(Box::new(reason))),
    }
}

/// Result of the chained two-time evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainedValue {
    /// Squared norm of the branch selected by the queried outcome pair.
    pub value: f64,
    /// Largest off-diagonal overlap magnitude between distinct history
    /// branches; a meaningful probability assignment needs this near zero.
    pub offdiag: f64,
    /// Number of history branches (product of the two outcome families).
    pub histories: usize,
}

/// Two-time chained value: project the earlier record outcome, evolve, project
/// the later one. The result equals the Born value when it exists, but is
/// defined even for erased records — at the price that the history branches
/// may interfere. `offdiag` measures that interference over the full family
/// of outcome histories.
pub fn chained_two_time(timeline: &Timeline, query: &MultiTimeQuery) -> Result<ChainedValue> {
    if query.outcomes.len() != 2 {
        return Err(Error::InvalidQuery(format!(
            "chained evaluation needs exactly 2 outcomes, got {}",
            query.outcomes.len()
        )));
    }
    let mut first = resolve(timeline, &query.outcomes[0])?;
    let mut second = resolve(timeline, &query.outcomes[1])?;
    if first.at == second.at {
        return Err(Error::InvalidQuery(
            "chained evaluation needs two distinct times".into(),
        ));
    }
    if first.at > second.at {
        std::mem::swap(&mut first, &mut second);
    }
    let layout = timeline.layout();

    // outcome family per slot: the labels a record can actually show, i.e.
    // ready-slot excluded, one label per observed outcome
    let family = |r: &Resolved| -> Result<Vec<usize>> {
        let EventKind::Measure(spec) = &timeline.events()[r.event].kind else {
            unreachable!("resolve checked this");
        };
        let observed_dim = layout.subsystem(layout.require(&spec.observed)?).dim;
        let idx = layout.label_index(r.pointer_sub, &r.outcome)?;
        if idx == 0 || idx > observed_dim {
            return Err(Error::InvalidQuery(format!(
                "`{}` is not a recordable outcome of event {}",
                r.outcome, r.event
            )));
        }
        Ok((1..=observed_dim).collect())
    };
    let family1 = family(&first)?;
    let family2 = family(&second)?;
    let queried1 = layout.label_index(first.pointer_sub, &first.outcome)?;
    let queried2 = layout.label_index(second.pointer_sub, &second.outcome)?;

    // events strictly after the first instant, up to and including the second
    let between: Vec<usize> = timeline
        .events()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.time > first.at && e.time <= second.at)
        .map(|(i, _)| i)
        .collect();

    let project = |amps: &[C64], sub: usize, label: usize| -> Vec<C64> {
        amps.iter()
            .enumerate()
            .map(|(f, &a)| {
                if layout.component(f, sub) == label {
                    a
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect()
    };

    let start = timeline.state_at(first.at).amplitudes().to_vec();
    let mut branches: Vec<(usize, usize, Vec<C64>)> = Vec::new();
    for &l1 in &family1 {
        let mut amps = project(&start, first.pointer_sub, l1);
        for &e in &between {
            amps = timeline.unitary(e).apply_amps(&amps)?;
        }
        for &l2 in &family2 {
            branches.push((l1, l2, project(&amps, second.pointer_sub, l2)));
        }
    }

    let mut value = 0.0;
    let mut offdiag = 0.0f64;
    for (i, (l1, l2, amps)) in branches.iter().enumerate() {
        if *l1 == queried1 && *l2 == queried2 {
            value = amps.iter().map(|a| a.norm_sqr()).sum();
        }
        for (_, _, other) in branches.iter().skip(i + 1) {
            let overlap: C64 = amps
                .iter()
                .zip(other)
                .map(|(a, b)| a.conj() * b)
                .sum();
            offdiag = offdiag.max(overlap.norm());
        }
    }
    Ok(ChainedValue {
        value,
        offdiag,
        histories: branches.len(),
    })
}

/// Indices of the measurement events whose pointers are named `pointer`;
/// helper for building queries against a timeline.
pub fn measurement_event(timeline: &Timeline, pointer: &str) -> Option<usize> {
    timeline.events().iter().position(|e| {
        matches!(&e.kind, EventKind::Measure(spec) if spec.pointer == pointer)
    })
}

/// The three standard questions asked of the bundled scenarios: Alice's
/// outcome mid-run, Bob's outcome at the end, and their conjunction.
pub fn builtin_queries(timeline: &Timeline) -> Result<Vec<MultiTimeQuery>> {
    let alice = measurement_event(timeline, "A")
        .ok_or_else(|| Error::InvalidQuery("timeline has no measurement on A".into()))?;
    let bob = measurement_event(timeline, "B")
        .ok_or_else(|| Error::InvalidQuery("timeline has no measurement on B".into()))?;
    let t_a = Time::new(3, 2);
    let t_b = Time::new(7, 2);
    Ok(vec![
        MultiTimeQuery::single(alice, "A1", t_a),
        MultiTimeQuery::single(bob, "B1", t_b),
        MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: alice,
                outcome: "A1".into(),
                at: t_a,
            },
            OutcomeEvent {
                event: bob,
                outcome: "B1".into(),
                at: t_b,
            },
        ])?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{PureState, UnitaryMap};
    use crate::lab::{
        builtin_layout, builtin_scenario, time, Event, MeasurementSpec, Scenario, Schedule,
    };
    use num_rational::Ratio;

    fn half(n: i64) -> Time {
        Ratio::new(n, 2)
    }

    fn joint(alice: usize, bob: usize) -> MultiTimeQuery {
        MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: alice,
                outcome: "A1".into(),
                at: half(3),
            },
            OutcomeEvent {
                event: bob,
                outcome: "B1".into(),
                at: half(7),
            },
        ])
        .unwrap()
    }

    #[test]
    fn version1_all_three_are_half() {
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        for (query, want) in [
            (MultiTimeQuery::single(0, "A1", half(3)), 0.5),
            (MultiTimeQuery::single(1, "B1", half(7)), 0.5),
            (joint(0, 1), 0.5),
        ] {
            match evaluate(&tl, &query).unwrap() {
                QueryResult::Probability(p) => assert!(
                    (p - want).abs() < 1e-12,
                    "{} = {p}, want {want}",
                    query.render(&tl)
                ),
                QueryResult::Indeterminate(r) => panic!("unexpected indeterminate: {r}"),
            }
        }
        // perfectly correlated: the crossed conjunction carries no weight
        let crossed = MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: 0,
                outcome: "A1".into(),
                at: half(3),
            },
            OutcomeEvent {
                event: 1,
                outcome: "B2".into(),
                at: half(7),
            },
        ])
        .unwrap();
        assert_eq!(
            evaluate(&tl, &crossed).unwrap(),
            QueryResult::Probability(0.0)
        );
    }

    #[test]
    fn version2_marginals_live_joint_does_not() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        match evaluate(&tl, &MultiTimeQuery::single(0, "A1", half(3))).unwrap() {
            QueryResult::Probability(p) => assert!((p - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        match evaluate(&tl, &MultiTimeQuery::single(2, "B1", half(7))).unwrap() {
            QueryResult::Probability(p) => assert!((p - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        match evaluate(&tl, &joint(0, 2)).unwrap() {
            QueryResult::Indeterminate(reason) => {
                assert_eq!(reason.event, 0);
                assert_eq!(reason.pointer, "A");
                assert_eq!(reason.outcome, "A1");
                assert_eq!(reason.died_at, time(2));
                assert_eq!(reason.erased_by, 1);
                assert_eq!(reason.required_at, half(7));
                assert!(reason.erased_by_desc.contains("reset"));
            }
            other => panic!("expected indeterminate, got {other:?}"),
        }
    }

    #[test]
    fn dead_record_is_indeterminate_even_alone() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        // Alice's record is gone at t=5/2; asking about it has no Born value
        match evaluate(&tl, &MultiTimeQuery::single(0, "A1", half(5))).unwrap() {
            QueryResult::Indeterminate(reason) => {
                assert_eq!(reason.died_at, time(2));
                assert_eq!(reason.required_at, half(5));
            }
            other => panic!("{other:?}"),
        }
        // strict evaluation surfaces it as an error
        assert!(matches!(
            probability(&tl, &MultiTimeQuery::single(0, "A1", half(5))),
            Err(Error::BornIndeterminate(_))
        ));
    }

    #[test]
    fn query_validation_errors() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        assert!(matches!(
            MultiTimeQuery::new(vec![]),
            Err(Error::InvalidQuery(_))
        ));
        // before birth
        assert!(matches!(
            classify(&tl, &MultiTimeQuery::single(0, "A1", half(1))),
            Err(Error::InvalidQuery(_))
        ));
        // unknown event / non-measurement / unknown label
        assert!(matches!(
            classify(&tl, &MultiTimeQuery::single(9, "A1", half(3))),
            Err(Error::UnknownEvent(9))
        ));
        assert!(matches!(
            classify(&tl, &MultiTimeQuery::single(1, "A1", half(5))),
            Err(Error::NotAMeasurement(1))
        ));
        assert!(matches!(
            classify(&tl, &MultiTimeQuery::single(0, "B1", half(3))),
            Err(Error::UnknownLabel { .. })
        ));
        // two outcomes for one event
        let dup = MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: 0,
                outcome: "A1".into(),
                at: half(3),
            },
            OutcomeEvent {
                event: 0,
                outcome: "A2".into(),
                at: half(3),
            },
        ])
        .unwrap();
        assert_eq!(
            classify(&tl, &dup),
            Err(Error::ConflictingOutcomes(0))
        );
    }

    #[test]
    fn render_forms() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        assert_eq!(
            MultiTimeQuery::single(0, "A1", half(3)).render(&tl),
            "P(A = A1 @ 3/2)"
        );
        assert_eq!(joint(0, 2).render(&tl), "P(A = A1 @ 3/2 & B = B1 @ 7/2)");
    }

    #[test]
    fn chained_recovers_born_value_when_it_exists() {
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        let c = chained_two_time(&tl, &joint(0, 1)).unwrap();
        assert!((c.value - 0.5).abs() < 1e-12);
        assert!(c.offdiag < 1e-15);
        assert_eq!(c.histories, 4);
    }

    #[test]
    fn chained_assigns_value_to_erased_record() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let c = chained_two_time(&tl, &joint(0, 2)).unwrap();
        // project/evolve/project carries Alice's branch through the reset
        assert!((c.value - 0.5).abs() < 1e-12, "value {}", c.value);
        assert!(c.offdiag < 1e-12, "offdiag {}", c.offdiag);
        assert_eq!(c.histories, 4);
    }

    #[test]
    fn chained_flags_interfering_histories() {
        // version 2 with an extra rotation on S between reset and Bob's
        // measurement: the history branches recombine and interfere
        let layout = builtin_layout();
        let c = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let ready = vec![one, zero, zero];
        let initial = PureState::product(
            &layout,
            &[vec![c, c], ready.clone(), ready.clone(), ready],
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rotate = UnitaryMap::dense(
            &layout,
            &["S"],
            vec![
                C64::new(s, 0.0),
                C64::new(-s, 0.0),
                C64::new(s, 0.0),
                C64::new(s, 0.0),
            ],
        )
        .unwrap();
        let tl = crate::lab::Timeline::new(
            Schedule::new(
                initial,
                vec![
                    Event {
                        time: time(1),
                        kind: EventKind::Measure(
                            MeasurementSpec::new("S", "A").with_companions(["E"]),
                        ),
                    },
                    Event {
                        time: time(2),
                        kind: EventKind::Reset { target: 0 },
                    },
                    Event {
                        time: half(5),
                        kind: EventKind::Custom {
                            name: "stir".into(),
                            unitary: rotate,
                        },
                    },
                    Event {
                        time: time(3),
                        kind: EventKind::Measure(MeasurementSpec::new("S", "B")),
                    },
                ],
            )
            .unwrap(),
        )
        .unwrap();
        let chained = chained_two_time(&tl, &joint(0, 3)).unwrap();
        // branch overlap cos(pi/4)sin(pi/4)/2 = 1/4
        assert!(
            (chained.offdiag - 0.25).abs() < 1e-12,
            "offdiag {}",
            chained.offdiag
        );
        assert!((chained.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn chained_rejects_bad_shapes() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        assert!(matches!(
            chained_two_time(&tl, &MultiTimeQuery::single(0, "A1", half(3))),
            Err(Error::InvalidQuery(_))
        ));
        let same_time = MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: 0,
                outcome: "A1".into(),
                at: half(3),
            },
            OutcomeEvent {
                event: 2,
                outcome: "B1".into(),
                at: half(3),
            },
        ])
        .unwrap();
        assert!(matches!(
            chained_two_time(&tl, &same_time),
            Err(Error::InvalidQuery(_))
        ));
        // ready label is not a recordable outcome
        let ready = MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: 0,
                outcome: "Ar".into(),
                at: half(3),
            },
            OutcomeEvent {
                event: 2,
                outcome: "B1".into(),
                at: half(7),
            },
        ])
        .unwrap();
        assert!(matches!(
            chained_two_time(&tl, &ready),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn builtin_queries_match_scenarios() {
        let v1 = builtin_scenario(Scenario::Version1).unwrap();
        let qs = builtin_queries(&v1).unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[2].render(&v1), "P(A = A1 @ 3/2 & B = B1 @ 7/2)");
        let v2 = builtin_scenario(Scenario::Version2).unwrap();
        let qs = builtin_queries(&v2).unwrap();
        assert_eq!(qs[1].outcomes[0].event, 2);
    }
}
