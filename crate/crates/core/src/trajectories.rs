//! Hidden-variable configuration dynamics over the discrete lab basis.
//!
//! A trajectory carries one definite configuration through the schedule,
//! updated at each event by a pluggable rule. Both shipped rules reproduce
//! every single-time Born probability (equivariance), yet disagree about the
//! joint distribution of an erased record with a later one — the quantity the
//! Born rule itself leaves open.
//!
//! Ensembles are embarrassingly parallel: every random draw is keyed by
//! (master seed, trajectory index, step index) through the counter-based
//! generator in [`crate::rng`], so results are bit-identical for any worker
//! count.

use std::sync::Arc;

use crate::born::MultiTimeQuery;
use crate::hilbert::{Configuration, PureState, Question, SubsystemLayout, UnitaryMap, UnitaryRepr};
use crate::lab::{EventKind, Timeline};
use crate::rng::CounterRng;
use crate::stats::{chi_square_gof, GofResult};
use crate::{Error, Result};

/// Probability below which a configuration is treated as Born-impossible in
/// equivariance tests.
const BORN_FLOOR: f64 = 1e-12;

/// How a trajectory's configuration responds to an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsRule {
    /// Follow the event's permutation: the configuration moves with its
    /// amplitude block, deterministically. Exact Bohm-type dynamics for
    /// permutation schedules.
    PermutationFollow,
    /// Forget the configuration and redraw from the post-event Born
    /// distribution. Born-consistent at every single time by construction,
    /// with no memory between epochs.
    IndependentResample,
}

impl std::fmt::Display for DynamicsRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DynamicsRule::PermutationFollow => "permutation",
            DynamicsRule::IndependentResample => "resample",
        })
    }
}

impl std::str::FromStr for DynamicsRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(DynamicsRule::PermutationFollow),
            "resample" => Ok(DynamicsRule::IndependentResample),
            other => Err(Error::InvalidParameter(format!(
                "unknown dynamics rule `{other}` (expected `permutation` or `resample`)"
            ))),
        }
    }
}

/// One trajectory: a configuration per epoch plus the pointer value read off
/// immediately after each measurement event.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Configuration at every inter-event epoch, `timeline.n_epochs()` long.
    pub epochs: Vec<Configuration>,
    /// `(event id, pointer label index)` for every measurement event, in
    /// schedule order. Logged at measurement time, so it survives later
    /// erasure of the record itself.
    pub readouts: Vec<(usize, usize)>,
}

/// Aggregated trajectories: per-epoch configuration counts and per-trajectory
/// readout logs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    rule: DynamicsRule,
    master_seed: u64,
    n: usize,
    layout: Arc<SubsystemLayout>,
    /// `epoch_counts[epoch][flat]` sums to `n` for every epoch.
    epoch_counts: Vec<Vec<u64>>,
    /// Readout log per trajectory, same encoding as [`TrajectoryRecord`].
    readouts: Vec<Vec<(usize, usize)>>,
    /// `(event id, pointer subsystem)` for every measurement event.
    measured: Vec<(usize, usize)>,
}

impl TrajectoryEnsemble {
    pub fn rule(&self) -> DynamicsRule {
        self.rule
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> &Arc<SubsystemLayout> {
        &self.layout
    }

    pub fn epoch_counts(&self) -> &[Vec<u64>] {
        &self.epoch_counts
    }

    pub fn readouts(&self) -> &[Vec<(usize, usize)>] {
        &self.readouts
    }
}

fn weight_table(state: &PureState) -> Vec<f64> {
    state.amplitudes().iter().map(|a| a.norm_sqr()).collect()
}

fn sample_from(weights: &[f64], rng: &mut CounterRng) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateState);
    }
    let mut u = rng.next_f64() * total;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = Some(i);
            u -= w;
            if u < 0.0 {
                return Ok(i);
            }
        }
    }
    // rounding pushed u past the last positive weight
    last_positive.ok_or(Error::DegenerateState)
}

/// Draw an initial configuration from the state's Born distribution.
pub fn sample_initial(state: &PureState, rng: &mut CounterRng) -> Result<Configuration> {
    let weights = weight_table(state);
    let flat = sample_from(&weights, rng)?;
    Ok(state.layout().config_of(flat))
}

/// Advance a configuration through one event under `rule`.
pub fn step(
    config: &Configuration,
    unitary: &UnitaryMap,
    post_state: &PureState,
    rule: DynamicsRule,
    rng: &mut CounterRng,
) -> Result<Configuration> {
    match rule {
        DynamicsRule::PermutationFollow => unitary.map_config(config).map_err(|_| {
            Error::RuleInapplicable(
                "permutation-follow dynamics need permutation events".into(),
            )
        }),
        DynamicsRule::IndependentResample => sample_initial(post_state, rng),
    }
}

/// Per-epoch flat configurations plus `(event, label)` readout pairs.
type FlatTrace = (Vec<usize>, Vec<(usize, usize)>);

/// Flat-index core of one trajectory; epoch states' weights are shared across
/// the ensemble.
fn trace(
    timeline: &Timeline,
    rule: DynamicsRule,
    weights: &[Vec<f64>],
    index: usize,
    master_seed: u64,
) -> Result<FlatTrace> {
    let layout = timeline.layout();
    let mut rng = CounterRng::at_step(master_seed, index as u64, 0);
    let mut flat = sample_from(&weights[0], &mut rng)?;
    let mut epochs = Vec::with_capacity(timeline.n_epochs());
    epochs.push(flat);
    let mut readouts = Vec::new();
    for (i, event) in timeline.events().iter().enumerate() {
        flat = match rule {
            DynamicsRule::PermutationFollow => match timeline.unitary(i).repr() {
                UnitaryRepr::Permutation(map) => map[flat],
                UnitaryRepr::Dense { .. } => {
                    return Err(Error::RuleInapplicable(format!(
                        "event {i} ({}) is not a permutation",
                        timeline.describe_event(i)
                    )))
                }
            },
            DynamicsRule::IndependentResample => {
                let mut rng = CounterRng::at_step(master_seed, index as u64, (i + 1) as u64);
                sample_from(&weights[i + 1], &mut rng)?
            }
        };
        epochs.push(flat);
        if let EventKind::Measure(spec) = &event.kind {
            let sub = layout.find(&spec.pointer).expect("validated");
            readouts.push((i, layout.component(flat, sub)));
        }
    }
    Ok((epochs, readouts))
}

/// Run one trajectory, deterministically seeded from (master seed, index).
pub fn run_trajectory(
    timeline: &Timeline,
    rule: DynamicsRule,
    index: usize,
    master_seed: u64,
) -> Result<TrajectoryRecord> {
    let weights: Vec<Vec<f64>> = timeline.states().iter().map(weight_table).collect();
    let (epochs, readouts) = trace(timeline, rule, &weights, index, master_seed)?;
    Ok(TrajectoryRecord {
        epochs: epochs
            .into_iter()
            .map(|f| timeline.layout().config_of(f))
            .collect(),
        readouts,
    })
}

fn check_applicable(timeline: &Timeline, rule: DynamicsRule) -> Result<()> {
    if rule == DynamicsRule::PermutationFollow {
        for i in 0..timeline.events().len() {
            if !timeline.unitary(i).is_permutation() {
                return Err(Error::RuleInapplicable(format!(
                    "event {i} ({}) is not a permutation",
                    timeline.describe_event(i)
                )));
            }
        }
    }
    Ok(())
}

/// Run `n` trajectories on as many workers as the machine offers.
pub fn run_ensemble(
    timeline: &Timeline,
    rule: DynamicsRule,
    n: usize,
    master_seed: u64,
) -> Result<TrajectoryEnsemble> {
    let workers = std::thread::available_parallelism()
        .map(|t| t.get())
        .unwrap_or(1);
    run_ensemble_threads(timeline, rule, n, master_seed, workers)
}

/// Run `n` trajectories on up to `workers` threads. The result is
/// bit-identical for any worker count: every trajectory's draws depend only
/// on (master seed, trajectory index, step index).
pub fn run_ensemble_threads(
    timeline: &Timeline,
    rule: DynamicsRule,
    n: usize,
    master_seed: u64,
    workers: usize,
) -> Result<TrajectoryEnsemble> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "ensemble needs at least one trajectory".into(),
        ));
    }
    check_applicable(timeline, rule)?;
    let weights: Vec<Vec<f64>> = timeline.states().iter().map(weight_table).collect();
    let layout = Arc::clone(timeline.layout());
    let n_epochs = timeline.n_epochs();
    let dim = layout.total_dim();

    let workers = workers.max(1).min(n);
    let chunk = n.div_ceil(workers);
    type WorkerOut = Result<(Vec<Vec<u64>>, Vec<Vec<(usize, usize)>>)>;
    let run_chunk = |start: usize, end: usize| -> WorkerOut {
        let mut counts = vec![vec![0u64; dim]; n_epochs];
        let mut readouts = Vec::with_capacity(end - start);
        for k in start..end {
            let (epochs, log) = trace(timeline, rule, &weights, k, master_seed)?;
            for (epoch, &flat) in epochs.iter().enumerate() {
                counts[epoch][flat] += 1;
            }
            readouts.push(log);
        }
        Ok((counts, readouts))
    };

    let mut merged_counts = vec![vec![0u64; dim]; n_epochs];
    let mut merged_readouts: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
    let chunks: Vec<WorkerOut> = if workers == 1 {
        vec![run_chunk(0, n)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let start = w * chunk;
                    let end = ((w + 1) * chunk).min(n);
                    let run_chunk = &run_chunk;
                    scope.spawn(move || run_chunk(start, end))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };
    for chunk_result in chunks {
        let (counts, readouts) = chunk_result?;
        for (merged, local) in merged_counts.iter_mut().zip(counts) {
            for (m, c) in merged.iter_mut().zip(local) {
                *m += c;
            }
        }
        merged_readouts.extend(readouts);
    }

    let measured = timeline
        .events()
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match &e.kind {
            EventKind::Measure(spec) => Some((i, layout.find(&spec.pointer).expect("validated"))),
            _ => None,
        })
        .collect();
    Ok(TrajectoryEnsemble {
        rule,
        master_seed,
        n,
        layout,
        epoch_counts: merged_counts,
        readouts: merged_readouts,
        measured,
    })
}

/// Fraction of trajectories whose readouts match every queried outcome, with
/// its binomial standard error. Query times are irrelevant here: readouts are
/// logged at measurement time and kept even after the record is erased.
pub fn multi_time_joint(
    ensemble: &TrajectoryEnsemble,
    query: &MultiTimeQuery,
) -> Result<(f64, f64)> {
    let mut wanted: Vec<(usize, usize)> = Vec::with_capacity(query.outcomes.len());
    for oe in &query.outcomes {
        let &(event, pointer_sub) = ensemble
            .measured
            .iter()
            .find(|(e, _)| *e == oe.event)
            .ok_or(Error::EventNotLogged(oe.event))?;
        let label = ensemble.layout.label_index(pointer_sub, &oe.outcome)?;
        wanted.push((event, label));
    }
    let hits = ensemble
        .readouts
        .iter()
        .filter(|log| {
            wanted
                .iter()
                .all(|w| log.iter().any(|entry| entry == w))
        })
        .count();
    let n = ensemble.n as f64;
    let p = hits as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// Empirical probability of `question` in the configuration distribution of
/// one epoch, with binomial standard error.
pub fn single_time_estimate(
    ensemble: &TrajectoryEnsemble,
    epoch: usize,
    question: &Question,
) -> Result<(f64, f64)> {
    if **question.layout() != *ensemble.layout {
        return Err(Error::LayoutMismatch);
    }
    let counts = ensemble
        .epoch_counts
        .get(epoch)
        .ok_or(Error::InvalidParameter(format!("no epoch {epoch}")))?;
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(f, _)| question.matches_index(*f))
        .map(|(_, &c)| c)
        .sum();
    let n = ensemble.n as f64;
    let p = hits as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

/// Exact joint under permutation-follow dynamics: enumerate every initial
/// configuration with positive Born weight and follow it deterministically.
pub fn exhaustive_permutation_joint(timeline: &Timeline, query: &MultiTimeQuery) -> Result<f64> {
    check_applicable(timeline, DynamicsRule::PermutationFollow)?;
    let layout = timeline.layout();
    let mut wanted: Vec<(usize, usize, usize)> = Vec::with_capacity(query.outcomes.len());
    for oe in &query.outcomes {
        let events = timeline.events();
        if oe.event >= events.len() {
            return Err(Error::UnknownEvent(oe.event));
        }
        let EventKind::Measure(spec) = &events[oe.event].kind else {
            return Err(Error::NotAMeasurement(oe.event));
        };
        let sub = layout.require(&spec.pointer)?;
        let label = layout.label_index(sub, &oe.outcome)?;
        wanted.push((oe.event, sub, label));
    }
    let weights = weight_table(&timeline.states()[0]);
    let mut joint = 0.0;
    for (start, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let mut flat = start;
        let mut matched = true;
        let mut checked = 0usize;
        for (i, _) in timeline.events().iter().enumerate() {
            let UnitaryRepr::Permutation(map) = timeline.unitary(i).repr() else {
                unreachable!("checked above");
            };
            flat = map[flat];
            for &(event, sub, label) in &wanted {
                if event == i {
                    checked += 1;
                    if layout.component(flat, sub) != label {
                        matched = false;
                    }
                }
            }
        }
        debug_assert_eq!(checked, wanted.len());
        if matched {
            joint += w;
        }
    }
    Ok(joint)
}

/// Per-epoch chi-square of empirical configuration counts against the Born
/// weights of the epoch state.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochGof {
    pub epoch: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Test every epoch's empirical configuration distribution against the Born
/// distribution. Configurations with Born probability <= 1e-12 contribute no
/// degrees of freedom; observing one at all forces p = 0.
pub fn equivariance_report(
    ensemble: &TrajectoryEnsemble,
    timeline: &Timeline,
) -> Result<Vec<EpochGof>> {
    if **timeline.layout() != *ensemble.layout {
        return Err(Error::LayoutMismatch);
    }
    if timeline.n_epochs() != ensemble.epoch_counts.len() {
        return Err(Error::InvalidParameter(
            "ensemble and timeline have different epoch structure".into(),
        ));
    }
    let n = ensemble.n as f64;
    let mut out = Vec::with_capacity(timeline.n_epochs());
    for (epoch, counts) in ensemble.epoch_counts.iter().enumerate() {
        let expected: Vec<f64> = weight_table(&timeline.states()[epoch])
            .into_iter()
            .map(|p| if p > BORN_FLOOR { p * n } else { 0.0 })
            .collect();
        let GofResult {
            statistic,
            dof,
            p_value,
        } = chi_square_gof(counts, &expected)?;
        out.push(EpochGof {
            epoch,
            statistic,
            dof,
            p_value,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::born::{builtin_queries, OutcomeEvent};
    use crate::hilbert::{PureState, Subsystem, UnitaryMap};
    use crate::lab::{builtin_scenario, time, Event, Scenario, Schedule};
    use num_complex::Complex64 as C64;
    use num_rational::Ratio;

    fn cfg(v: &[usize]) -> Configuration {
        Configuration(v.to_vec())
    }

    #[test]
    fn follow_step_tracks_permutation_blocks() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let mut rng = CounterRng::new(0, 0);
        // Alice's measurement carries (1,Ar,Br,Er) to (1,A1,Br,E1)
        let after = step(
            &cfg(&[0, 0, 0, 0]),
            tl.unitary(0),
            &tl.states()[1],
            DynamicsRule::PermutationFollow,
            &mut rng,
        )
        .unwrap();
        assert_eq!(after, cfg(&[0, 1, 0, 1]));
        // the reset carries it back
        let back = step(
            &after,
            tl.unitary(1),
            &tl.states()[2],
            DynamicsRule::PermutationFollow,
            &mut rng,
        )
        .unwrap();
        assert_eq!(back, cfg(&[0, 0, 0, 0]));
    }

    #[test]
    fn follow_step_rejects_dense_unitaries() {
        let layout = crate::lab::builtin_layout();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let u = UnitaryMap::dense(
            &layout,
            &["S"],
            vec![
                C64::new(c, 0.0),
                C64::new(c, 0.0),
                C64::new(c, 0.0),
                C64::new(-c, 0.0),
            ],
        )
        .unwrap();
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        let mut rng = CounterRng::new(0, 0);
        let r = step(
            &cfg(&[0, 0, 0, 0]),
            &u,
            &tl.states()[0],
            DynamicsRule::PermutationFollow,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::RuleInapplicable(_))));
    }

    #[test]
    fn resample_step_ignores_input_config() {
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        let post = &tl.states()[1]; // after Alice: two equal branches
        let draws = 100_000;
        let mut ones = 0u32;
        for k in 0..draws {
            let mut rng = CounterRng::at_step(11, k, 1);
            let out = step(
                &cfg(&[0, 0, 0, 0]),
                tl.unitary(0),
                post,
                DynamicsRule::IndependentResample,
                &mut rng,
            )
            .unwrap();
            // only the two entangled branch configs can appear
            assert!(out == cfg(&[0, 1, 0, 1]) || out == cfg(&[1, 2, 0, 2]));
            if out == cfg(&[0, 1, 0, 1]) {
                ones += 1;
            }
            // identical seed, different input config: identical output
            let mut rng2 = CounterRng::at_step(11, k, 1);
            let out2 = step(
                &cfg(&[1, 2, 0, 2]),
                tl.unitary(0),
                post,
                DynamicsRule::IndependentResample,
                &mut rng2,
            )
            .unwrap();
            assert_eq!(out, out2);
        }
        let freq = ones as f64 / draws as f64;
        let bound = 3.0 * (0.25 / draws as f64).sqrt();
        assert!((freq - 0.5).abs() < bound, "freq {freq}");
    }

    #[test]
    fn sample_initial_follows_born_weights() {
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        let n = 100_000;
        let mut s1 = 0u32;
        for k in 0..n {
            let mut rng = CounterRng::at_step(3, k, 0);
            let c = sample_initial(&tl.states()[0], &mut rng).unwrap();
            assert!(c == cfg(&[0, 0, 0, 0]) || c == cfg(&[1, 0, 0, 0]));
            if c.0[0] == 0 {
                s1 += 1;
            }
        }
        let freq = s1 as f64 / n as f64;
        let bound = 3.0 * (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < bound, "freq {freq}");

        // basis state: deterministic draw
        let layout = crate::lab::builtin_layout();
        let basis = PureState::basis(&layout, &cfg(&[1, 2, 0, 0]));
        let mut rng = CounterRng::new(5, 0);
        assert_eq!(sample_initial(&basis, &mut rng).unwrap(), cfg(&[1, 2, 0, 0]));
    }

    #[test]
    fn version2_follow_joint_is_exactly_the_marginals() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let ens =
            run_ensemble_threads(&tl, DynamicsRule::PermutationFollow, 4096, 42, 2).unwrap();
        let queries = builtin_queries(&tl).unwrap();
        let (a1, _) = multi_time_joint(&ens, &queries[0]).unwrap();
        let (b1, _) = multi_time_joint(&ens, &queries[1]).unwrap();
        let (joint, se) = multi_time_joint(&ens, &queries[2]).unwrap();
        // perfect correlation: the very same trajectories satisfy all three
        assert_eq!(joint, a1);
        assert_eq!(joint, b1);
        assert!((joint - 0.5).abs() < 3.0 * se.max(1e-3), "joint {joint}");
    }

    #[test]
    fn version2_exhaustive_follow_joint_is_half() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let queries = builtin_queries(&tl).unwrap();
        let joint = exhaustive_permutation_joint(&tl, &queries[2]).unwrap();
        assert!((joint - 0.5).abs() < 1e-12, "joint {joint}");
    }

    #[test]
    fn version2_resample_joint_is_quarter() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let ens =
            run_ensemble_threads(&tl, DynamicsRule::IndependentResample, 100_000, 7, 4).unwrap();
        let queries = builtin_queries(&tl).unwrap();
        let (joint, _) = multi_time_joint(&ens, &queries[2]).unwrap();
        let bound = 3.0 * (0.1875f64 / 100_000.0).sqrt();
        assert!((joint - 0.25).abs() < bound, "joint {joint}");
        // marginals still match the Born values
        let (a1, _) = multi_time_joint(&ens, &queries[0]).unwrap();
        let (b1, _) = multi_time_joint(&ens, &queries[1]).unwrap();
        let mbound = 3.0 * (0.25f64 / 100_000.0).sqrt();
        assert!((a1 - 0.5).abs() < mbound && (b1 - 0.5).abs() < mbound);
    }

    #[test]
    fn version1_both_rules_agree_on_single_time_joint() {
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        let question = Question::new(tl.layout(), &[("A", &["A1"]), ("B", &["B1"])]).unwrap();
        let epoch = tl.epoch_at(Ratio::new(7, 2));
        for rule in [
            DynamicsRule::PermutationFollow,
            DynamicsRule::IndependentResample,
        ] {
            let ens = run_ensemble_threads(&tl, rule, 20_000, 19, 3).unwrap();
            let (p, se) = single_time_estimate(&ens, epoch, &question).unwrap();
            assert!((p - 0.5).abs() < 3.0 * se.max(1e-3), "{rule}: {p}");
        }
    }

    #[test]
    fn impossible_conjunction_is_zero() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let ens = run_ensemble_threads(&tl, DynamicsRule::IndependentResample, 2000, 1, 2).unwrap();
        let q = MultiTimeQuery::new(vec![
            OutcomeEvent {
                event: 0,
                outcome: "A1".into(),
                at: Ratio::new(3, 2),
            },
            OutcomeEvent {
                event: 0,
                outcome: "A2".into(),
                at: Ratio::new(3, 2),
            },
        ])
        .unwrap();
        let (p, se) = multi_time_joint(&ens, &q).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn joint_needs_logged_events() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let ens = run_ensemble_threads(&tl, DynamicsRule::PermutationFollow, 100, 1, 1).unwrap();
        // event 1 is the reset: never logged
        let q = MultiTimeQuery::single(1, "A1", time(2));
        assert_eq!(multi_time_joint(&ens, &q), Err(Error::EventNotLogged(1)));
    }

    #[test]
    fn follow_keeps_system_component_constant() {
        for scenario in [Scenario::Version1, Scenario::Version2] {
            let tl = builtin_scenario(scenario).unwrap();
            for k in 0..200 {
                let rec =
                    run_trajectory(&tl, DynamicsRule::PermutationFollow, k, 1234).unwrap();
                let s0 = rec.epochs[0].0[0];
                assert!(rec.epochs.iter().all(|c| c.0[0] == s0));
                assert_eq!(rec.epochs.len(), tl.n_epochs());
            }
        }
    }

    #[test]
    fn ensembles_are_worker_count_invariant() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        for rule in [
            DynamicsRule::PermutationFollow,
            DynamicsRule::IndependentResample,
        ] {
            let a = run_ensemble_threads(&tl, rule, 5000, 99, 1).unwrap();
            let b = run_ensemble_threads(&tl, rule, 5000, 99, 8).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ensemble_counts_sum_to_n_each_epoch() {
        let tl = builtin_scenario(Scenario::Version2).unwrap();
        let ens = run_ensemble_threads(&tl, DynamicsRule::IndependentResample, 3000, 5, 3).unwrap();
        for counts in ens.epoch_counts() {
            assert_eq!(counts.iter().sum::<u64>(), 3000);
        }
    }

    #[test]
    fn follow_rule_rejects_dense_schedules() {
        let layout = crate::lab::builtin_layout();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let ready = vec![one, zero, zero];
        let initial = PureState::product(
            &layout,
            &[vec![one, zero], ready.clone(), ready.clone(), ready],
        )
        .unwrap();
        let rotate = UnitaryMap::dense(
            &layout,
            &["S"],
            vec![
                C64::new(c, 0.0),
                C64::new(-c, 0.0),
                C64::new(c, 0.0),
                C64::new(c, 0.0),
            ],
        )
        .unwrap();
        let tl = Timeline::new(
            Schedule::new(
                initial,
                vec![Event {
                    time: time(1),
                    kind: EventKind::Custom {
                        name: "stir".into(),
                        unitary: rotate,
                    },
                }],
            )
            .unwrap(),
        )
        .unwrap();
        assert!(matches!(
            run_ensemble_threads(&tl, DynamicsRule::PermutationFollow, 10, 0, 1),
            Err(Error::RuleInapplicable(_))
        ));
        // resampling handles it fine
        let ens = run_ensemble_threads(&tl, DynamicsRule::IndependentResample, 20_000, 0, 2).unwrap();
        let report = equivariance_report(&ens, &tl).unwrap();
        assert!(report.iter().all(|e| e.p_value >= 1e-3));
    }

    #[test]
    fn equivariance_holds_for_both_rules_on_both_scenarios() {
        for scenario in [Scenario::Version1, Scenario::Version2] {
            let tl = builtin_scenario(scenario).unwrap();
            for rule in [
                DynamicsRule::PermutationFollow,
                DynamicsRule::IndependentResample,
            ] {
                let ens = run_ensemble_threads(&tl, rule, 100_000, 2024, 4).unwrap();
                let report = equivariance_report(&ens, &tl).unwrap();
                assert_eq!(report.len(), tl.n_epochs());
                for e in &report {
                    assert!(
                        e.p_value >= 1e-3,
                        "{scenario:?} {rule} epoch {} p={}",
                        e.epoch,
                        e.p_value
                    );
                    assert_eq!(e.dof, 1); // two live configurations per epoch
                }
            }
        }
    }

    #[test]
    fn frozen_configurations_fail_equivariance_after_rotation() {
        // a rule that never moves the configuration is Born-consistent at
        // t=0 but not after a rotation redistributes the weights
        let layout = Arc::new(
            SubsystemLayout::new(vec![Subsystem::new("S", ["1", "2"])]).unwrap(),
        );
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let initial = PureState::product(&layout, &[vec![one, zero]]).unwrap();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rotate = UnitaryMap::dense(
            &layout,
            &["S"],
            vec![
                C64::new(c, 0.0),
                C64::new(-c, 0.0),
                C64::new(c, 0.0),
                C64::new(c, 0.0),
            ],
        )
        .unwrap();
        let tl = Timeline::new(
            Schedule::new(
                initial,
                vec![Event {
                    time: time(1),
                    kind: EventKind::Custom {
                        name: "stir".into(),
                        unitary: rotate,
                    },
                }],
            )
            .unwrap(),
        )
        .unwrap();
        let n = 10_000u64;
        // every trajectory starts at config 0 (Born-exact for the initial
        // basis state) and stays there
        let frozen = TrajectoryEnsemble {
            rule: DynamicsRule::PermutationFollow,
            master_seed: 0,
            n: n as usize,
            layout: Arc::clone(&layout),
            epoch_counts: vec![vec![n, 0], vec![n, 0]],
            readouts: vec![Vec::new(); n as usize],
            measured: Vec::new(),
        };
        let report = equivariance_report(&frozen, &tl).unwrap();
        assert!(report[0].p_value >= 1e-3, "initial epoch is exact");
        assert!(
            report[1].p_value < 1e-3,
            "rotated epoch must fail, p = {}",
            report[1].p_value
        );
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in [
            DynamicsRule::PermutationFollow,
            DynamicsRule::IndependentResample,
        ] {
            let s = rule.to_string();
            assert_eq!(s.parse::<DynamicsRule>().unwrap(), rule);
        }
        assert!("bohm".parse::<DynamicsRule>().is_err());
    }

    #[test]
    fn zero_trajectories_is_an_error() {
        let tl = builtin_scenario(Scenario::Version1).unwrap();
        assert!(matches!(
            run_ensemble_threads(&tl, DynamicsRule::PermutationFollow, 0, 0, 1),
            Err(Error::InvalidParameter(_))
        ));
    }
}
