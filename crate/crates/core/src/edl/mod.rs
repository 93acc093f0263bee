//! Experiment description language: a line-oriented text format that
//! compiles to a [`Schedule`](crate::lab::Schedule) plus outcome queries.
//!
//! ```text
//! system  S outcomes 1 2
//! pointer A for S with E
//! state   1/sqrt(2)|1 Ar Br Er> + 1/sqrt(2)|2 Ar Br Er>
//! at 1 measure S -> A
//! at 2 reset 1
//! query P(A = A1 @ 3/2)
//! ```
//!
//! Statements come in fixed section order: declarations, one `state`, events
//! with strictly increasing times, queries. A pointer for an n-outcome system
//! gets n+1 basis labels: `<name>r` (ready) plus `<name><outcome>` for each
//! outcome. Coefficients stay symbolic (`1/sqrt(2)`, never a decimal) until
//! the state is built. `#` comments are dropped by the parser, so formatting
//! is lossy for them.

mod lexer;
mod parser;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use num_rational::Ratio;

use crate::born::{MultiTimeQuery, OutcomeEvent};
use crate::hilbert::{Configuration, PureState, Subsystem, SubsystemLayout, UnitaryMap};
use crate::lab::{Event, EventKind, MeasurementSpec, Schedule, Time};
use crate::Error;

pub use parser::parse;

/// The bundled two-observer scenario, measurement only.
pub const VERSION1_EDL: &str = include_str!("../../scenarios/version1.edl");
/// The bundled two-observer scenario with the reset event.
pub const VERSION2_EDL: &str = include_str!("../../scenarios/version2.edl");

/// Syntax or lexical defect, located in the source text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// The offending lexeme (`end of line` when the line ended early).
    pub token: String,
}

/// Well-formed syntax that does not assemble into a valid schedule.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ValidateError {
    pub line: usize,
    pub message: String,
}

/// Exact coefficient: a rational, optionally divided by √n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coeff {
    pub rational: Ratio<i64>,
    /// 1 when no square-root divisor was written.
    pub sqrt_divisor: i64,
}

impl Coeff {
    pub fn rational(r: Ratio<i64>) -> Self {
        Coeff {
            rational: r,
            sqrt_divisor: 1,
        }
    }

    pub fn over_sqrt(r: Ratio<i64>, n: i64) -> Self {
        Coeff {
            rational: r,
            sqrt_divisor: n,
        }
    }

    pub fn value(&self) -> f64 {
        let r = *self.rational.numer() as f64 / *self.rational.denom() as f64;
        r / (self.sqrt_divisor as f64).sqrt()
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rational.numer())?;
        if *self.rational.denom() != 1 {
            write!(f, "/{}", self.rational.denom())?;
        }
        if self.sqrt_divisor != 1 {
            write!(f, "/sqrt({})", self.sqrt_divisor)?;
        }
        Ok(())
    }
}

/// One ket in the initial-state expression.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTerm {
    pub coeff: Coeff,
    /// One label per declared subsystem, in declaration order.
    pub labels: Vec<String>,
}

/// What an event line does.
#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    Measure { observed: String, pointer: String },
    /// 1-based index of an earlier event line.
    Reset { index: usize },
    /// Named unitary supplied out-of-band at validation.
    Unitary { name: String },
}

/// One conjunct of a query line.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAtom {
    pub pointer: String,
    pub outcome: String,
    pub at: Time,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatementKind {
    System {
        name: String,
        outcomes: Vec<String>,
    },
    Pointer {
        name: String,
        observed: String,
        companions: Vec<String>,
    },
    State {
        terms: Vec<StateTerm>,
    },
    Event {
        time: Time,
        action: EventAction,
    },
    Query {
        atoms: Vec<QueryAtom>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub line: usize,
    pub kind: StatementKind,
}

/// A parsed document: the raw text plus its statements in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdlDocument {
    pub(crate) source: String,
    pub(crate) statements: Vec<Statement>,
}

impl EdlDocument {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    /// Same statements in the same order, ignoring line numbers and source
    /// text (so comments and whitespace do not count).
    pub fn structurally_equal(&self, other: &EdlDocument) -> bool {
        self.statements.len() == other.statements.len()
            && self
                .statements
                .iter()
                .zip(&other.statements)
                .all(|(a, b)| a.kind == b.kind)
    }
}

fn render_time(t: Time) -> String {
    if *t.denom() == 1 {
        t.numer().to_string()
    } else {
        format!("{}/{}", t.numer(), t.denom())
    }
}

fn render_statement(kind: &StatementKind) -> String {
    match kind {
        StatementKind::System { name, outcomes } => {
            format!("system {name} outcomes {}", outcomes.join(" "))
        }
        StatementKind::Pointer {
            name,
            observed,
            companions,
        } => {
            if companions.is_empty() {
                format!("pointer {name} for {observed}")
            } else {
                format!("pointer {name} for {observed} with {}", companions.join(" "))
            }
        }
        StatementKind::State { terms } => {
            let rendered: Vec<String> = terms
                .iter()
                .map(|t| format!("{}|{}>", t.coeff, t.labels.join(" ")))
                .collect();
            format!("state {}", rendered.join(" + "))
        }
        StatementKind::Event { time, action } => {
            let tail = match action {
                EventAction::Measure { observed, pointer } => {
                    format!("measure {observed} -> {pointer}")
                }
                EventAction::Reset { index } => format!("reset {index}"),
                EventAction::Unitary { name } => format!("unitary {name}"),
            };
            format!("at {} {tail}", render_time(*time))
        }
        StatementKind::Query { atoms } => {
            let rendered: Vec<String> = atoms
                .iter()
                .map(|a| format!("{} = {} @ {}", a.pointer, a.outcome, render_time(a.at)))
                .collect();
            format!("query P({})", rendered.join(" & "))
        }
    }
}

/// Canonical rendering: one statement per line, single spaces, LF endings,
/// symbolic coefficients. Comments are not preserved.
pub fn format(doc: &EdlDocument) -> String {
    let mut out = String::new();
    for st in &doc.statements {
        out.push_str(&render_statement(&st.kind));
        out.push('\n');
    }
    out
}

/// Custom unitaries referenced by `at <t> unitary <name>` lines, keyed by
/// name; build them against [`document_layout`].
pub type UnitaryRegistry = HashMap<String, UnitaryMap>;

struct PointerInfo {
    observed: String,
    companions: Vec<String>,
    labels: Vec<String>,
}

/// System outcomes and pointer info, both keyed by subsystem name.
type Declarations = (HashMap<String, Vec<String>>, HashMap<String, PointerInfo>);

fn collect_declarations(doc: &EdlDocument) -> Result<Declarations, ValidateError> {
    let mut systems: HashMap<String, Vec<String>> = HashMap::new();
    let mut pointers: HashMap<String, PointerInfo> = HashMap::new();
    for st in &doc.statements {
        match &st.kind {
            StatementKind::System { name, outcomes } => {
                systems.entry(name.clone()).or_insert_with(|| outcomes.clone());
            }
            StatementKind::Pointer { name, .. } => {
                pointers.entry(name.clone()).or_insert_with(|| PointerInfo {
                    observed: String::new(),
                    companions: Vec::new(),
                    labels: Vec::new(),
                });
            }
            _ => {}
        }
    }
    // resolve pointer targets now that every name is known
    for st in &doc.statements {
        if let StatementKind::Pointer {
            name,
            observed,
            companions,
        } = &st.kind
        {
            let outcomes = systems.get(observed).ok_or_else(|| ValidateError {
                line: st.line,
                message: format!("unknown subsystem `{observed}`"),
            })?;
            for c in companions {
                if !pointers.contains_key(c) {
                    return Err(ValidateError {
                        line: st.line,
                        message: format!("unknown pointer `{c}`"),
                    });
                }
            }
            let mut labels = vec![format!("{name}r")];
            labels.extend(outcomes.iter().map(|o| format!("{name}{o}")));
            let info = pointers.get_mut(name).expect("collected above");
            info.observed = observed.clone();
            info.companions = companions.clone();
            info.labels = labels;
        }
    }
    Ok((systems, pointers))
}

fn declaration_line(doc: &EdlDocument, name: &str, occurrence: usize) -> usize {
    doc.statements
        .iter()
        .filter(|st| match &st.kind {
            StatementKind::System { name: n, .. } | StatementKind::Pointer { name: n, .. } => {
                n == name
            }
            _ => false,
        })
        .nth(occurrence)
        .map(|st| st.line)
        .unwrap_or(1)
}

/// Assemble the composite layout from the declarations, in declaration
/// order. Pointers get the ready label plus one label per outcome.
pub fn document_layout(doc: &EdlDocument) -> Result<Arc<SubsystemLayout>, ValidateError> {
    let (_, pointers) = collect_declarations(doc)?;
    let mut subsystems = Vec::new();
    for st in &doc.statements {
        match &st.kind {
            StatementKind::System { name, outcomes } => {
                subsystems.push(Subsystem::new(name.clone(), outcomes.clone()));
            }
            StatementKind::Pointer { name, .. } => {
                let info = &pointers[name];
                subsystems.push(Subsystem::new(name.clone(), info.labels.clone()));
            }
            _ => {}
        }
    }
    SubsystemLayout::new(subsystems)
        .map(Arc::new)
        .map_err(|e| {
            let line = match &e {
                Error::DuplicateSubsystem(name) => declaration_line(doc, name, 1),
                Error::DuplicateLabel { name, .. }
                | Error::DimensionTooSmall { name, .. }
                | Error::LabelCountMismatch { name, .. } => declaration_line(doc, name, 0),
                _ => 1,
            };
            ValidateError {
                line,
                message: e.to_string(),
            }
        })
}

/// Compile a document to a schedule and its queries, with no custom
/// unitaries available.
pub fn validate(doc: &EdlDocument) -> Result<(Schedule, Vec<MultiTimeQuery>), ValidateError> {
    validate_with(doc, &UnitaryRegistry::new())
}

/// Compile a document to a schedule and its queries. Query times pick the
/// most recent measurement of the named pointer at or before that time.
pub fn validate_with(
    doc: &EdlDocument,
    registry: &UnitaryRegistry,
) -> Result<(Schedule, Vec<MultiTimeQuery>), ValidateError> {
    let layout = document_layout(doc)?;
    let (systems, pointers) = collect_declarations(doc)?;

    let state_stmt = doc
        .statements
        .iter()
        .find(|st| matches!(st.kind, StatementKind::State { .. }))
        .ok_or(ValidateError {
            line: 1,
            message: "missing state declaration".into(),
        })?;
    let StatementKind::State { terms } = &state_stmt.kind else {
        unreachable!("matched above");
    };
    let state_err = |message: String| ValidateError {
        line: state_stmt.line,
        message,
    };
    let mut amps = vec![C64::new(0.0, 0.0); layout.total_dim()];
    for term in terms {
        if term.labels.len() != layout.n_subsystems() {
            return Err(state_err(format!(
                "term has {} labels but {} subsystems are declared",
                term.labels.len(),
                layout.n_subsystems()
            )));
        }
        let mut indices = Vec::with_capacity(term.labels.len());
        for (slot, label) in term.labels.iter().enumerate() {
            let idx = layout
                .label_index(slot, label)
                .map_err(|e| state_err(e.to_string()))?;
            indices.push(idx);
        }
        amps[layout.flat_index(&Configuration(indices))] += C64::new(term.coeff.value(), 0.0);
    }
    let initial =
        PureState::new(Arc::clone(&layout), amps).map_err(|e| state_err(e.to_string()))?;

    let mut events: Vec<Event> = Vec::new();
    for st in &doc.statements {
        let StatementKind::Event { time, action } = &st.kind else {
            continue;
        };
        let event_err = |message: String| ValidateError {
            line: st.line,
            message,
        };
        let kind = match action {
            EventAction::Measure { observed, pointer } => {
                if !systems.contains_key(observed) {
                    return Err(event_err(format!("unknown subsystem `{observed}`")));
                }
                let info = pointers
                    .get(pointer)
                    .ok_or_else(|| event_err(format!("unknown pointer `{pointer}`")))?;
                EventKind::Measure(
                    MeasurementSpec::new(observed.clone(), pointer.clone())
                        .with_companions(info.companions.clone()),
                )
            }
            EventAction::Reset { index } => {
                if *index == 0 {
                    return Err(event_err("reset indices are 1-based".into()));
                }
                if *index > events.len() {
                    return Err(event_err("reset precedes target".into()));
                }
                EventKind::Reset { target: index - 1 }
            }
            EventAction::Unitary { name } => {
                let unitary = registry
                    .get(name)
                    .cloned()
                    .ok_or_else(|| event_err(format!("custom unitary `{name}` not supplied")))?;
                EventKind::Custom {
                    name: name.clone(),
                    unitary,
                }
            }
        };
        events.push(Event { time: *time, kind });
        // re-run schedule validation so defects surface on this line
        Schedule::new(initial.clone(), events.clone())
            .map_err(|e| event_err(e.to_string()))?;
    }
    let schedule = Schedule::new(initial, events).map_err(|e| ValidateError {
        line: 1,
        message: e.to_string(),
    })?;

    let mut queries = Vec::new();
    for st in &doc.statements {
        let StatementKind::Query { atoms } = &st.kind else {
            continue;
        };
        let query_err = |message: String| ValidateError {
            line: st.line,
            message,
        };
        let mut outcomes = Vec::with_capacity(atoms.len());
        for atom in atoms {
            let info = pointers
                .get(&atom.pointer)
                .ok_or_else(|| query_err(format!("unknown pointer `{}`", atom.pointer)))?;
            if !info.labels.contains(&atom.outcome) {
                return Err(query_err(format!("unknown outcome label `{}`", atom.outcome)));
            }
            let event = schedule
                .events()
                .iter()
                .enumerate()
                .rev()
                .find(|(_, e)| {
                    e.time <= atom.at
                        && matches!(&e.kind, EventKind::Measure(spec) if spec.pointer == atom.pointer)
                })
                .map(|(i, _)| i)
                .ok_or_else(|| {
                    query_err(format!(
                        "no measurement of pointer `{}` at or before t={}",
                        atom.pointer,
                        render_time(atom.at)
                    ))
                })?;
            outcomes.push(OutcomeEvent {
                event,
                outcome: atom.outcome.clone(),
                at: atom.at,
            });
        }
        queries.push(MultiTimeQuery::new(outcomes).map_err(|e| query_err(e.to_string()))?);
    }
    Ok((schedule, queries))
}
