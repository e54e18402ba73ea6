//! Utilities, deviation strategies, expected-utility estimation and the
//! equilibrium checker.

mod cheater;
pub mod equilibrium;
pub mod estimate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    classify_output, run_execution, EdgeDir, EngineError, ExecutionTrace, HonestProcess, Output,
    OutputVector, ProblemKind, ProblemSpec, Process, Randomness, RandomnessSource, RunOptions,
    SlotMode, TraceLevel, Verdict,
};
use crate::protocols::{ProtocolError, ProtocolName, ProtocolSpec};
use crate::topology::{apply_duplication, AgentId, DuplicationScheme, Topology, TopologyError};

pub use cheater::CheaterProcess;
pub use equilibrium::{
    catalog, check_equilibrium, sybil_emulation_strategy, CatalogSpec, DeviationEntry,
    EquilibriumReport, EquilibriumVerdict, EstimationMode, Family, HonestEntry,
};
pub use estimate::{
    expected_utility_exact, expected_utility_mc, group_expected_utility, knowledge_rounds,
    view_key, McEstimate,
};

#[derive(Debug, Error)]
pub enum RationalityError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("{0}")]
    Invalid(String),
}

/// The single output an agent wants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preference {
    pub agent: AgentId,
    pub value: Output,
}

/// Preference of `a` on the original graph `t`.
///
/// Sharing, coloring and partition agents prefer the value in `spec.prefs`;
/// a leader-election agent prefers itself; for orientation the value is a
/// bit mask over `a`'s neighbors in id order, a set bit meaning "points
/// away from me".
pub fn preference(spec: &ProtocolSpec, t: &Topology, a: AgentId) -> Preference {
    let p = spec.pref(a);
    let value = match spec.name.problem() {
        ProblemKind::LeaderElection => Output::Agent(a),
        ProblemKind::Orientation => Output::Edges(
            t.neighbors(a)
                .iter()
                .enumerate()
                .map(|(i, &nb)| {
                    let d = if (p >> i) & 1 == 1 {
                        EdgeDir::Out
                    } else {
                        EdgeDir::In
                    };
                    (nb, d)
                })
                .collect(),
        ),
        _ => Output::Value(p),
    };
    Preference { agent: a, value }
}

/// 1 iff the vector is legal and the agent got its preferred output.
pub fn utility(t: &Topology, o: &OutputVector, pref: &Preference, p: &ProblemSpec) -> u8 {
    let legal = classify_output(t, o, p) == Verdict::Legal;
    (legal && o.get(&pref.agent) == Some(&pref.value)) as u8
}

/// Message-level override applied on top of the honest program of every
/// virtual agent the cheater runs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Override {
    None,
    /// Replaces the private input by `input + 1` at the start of `round`.
    LieAboutInput {
        round: u32,
    },
    /// Messages to real agents emitted at `round` go out one round late.
    DelayByOne {
        round: u32,
    },
    /// Messages to real agents emitted at `round` are dropped.
    Withhold {
        round: u32,
    },
    /// Outputs the preferred value whatever the protocol says.
    OutputOverride,
    /// Every draw of the cheater's slots returns `value` (the own input, when
    /// conditioned on, stays as given).
    BiasedDraw {
        value: u64,
    },
    /// Publishes `value` through the protocol's deviation hook: a renaming
    /// name or rank, a lot, a partition mark, or an edge bit.
    Forced {
        value: u64,
    },
    /// Corrupts relayed prompt answers.
    TamperRelay,
    /// Duplicates, learns the other inputs early through its virtual agents,
    /// and re-targets the input of one unchecked virtual agent so the shared
    /// value becomes the preferred one.
    SybilSwing,
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Override::None => write!(f, "honest"),
            Override::LieAboutInput { round } => write!(f, "lie-about-input@{round}"),
            Override::DelayByOne { round } => write!(f, "delay-by-one@{round}"),
            Override::Withhold { round } => write!(f, "withhold@{round}"),
            Override::OutputOverride => write!(f, "output-override"),
            Override::BiasedDraw { value } => write!(f, "biased-draw={value}"),
            Override::Forced { value } => write!(f, "forced={value}"),
            Override::TamperRelay => write!(f, "tamper-relay"),
            Override::SybilSwing => write!(f, "sybil-swing"),
        }
    }
}

impl std::str::FromStr for Override {
    type Err = RationalityError;

    /// Parses the display form, e.g. `withhold@5` or `biased-draw=1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RationalityError::Invalid(format!("unknown program {s:?}"));
        let num = |v: &str| v.parse::<u64>().map_err(|_| bad());
        let s = s.trim();
        if let Some((name, r)) = s.split_once('@') {
            let round = num(r)? as u32;
            return match name {
                "lie-about-input" => Ok(Override::LieAboutInput { round }),
                "delay-by-one" => Ok(Override::DelayByOne { round }),
                "withhold" => Ok(Override::Withhold { round }),
                _ => Err(bad()),
            };
        }
        if let Some((name, v)) = s.split_once('=') {
            let value = num(v)?;
            return match name {
                "biased-draw" => Ok(Override::BiasedDraw { value }),
                "forced" => Ok(Override::Forced { value }),
                _ => Err(bad()),
            };
        }
        match s {
            "honest" | "none" | "duplication" => Ok(Override::None),
            "output-override" => Ok(Override::OutputOverride),
            "tamper-relay" => Ok(Override::TamperRelay),
            "sybil-swing" => Ok(Override::SybilSwing),
            _ => Err(bad()),
        }
    }
}

/// A cheater's duplication count and program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationStrategy {
    pub cheater: AgentId,
    pub d: usize,
    pub program: Override,
    /// Explicit segment; derived from `d` and `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<DuplicationScheme>,
    /// Seeds the fresh virtual ids and the randomness of the extra slots.
    #[serde(default)]
    pub seed: u64,
}

impl DeviationStrategy {
    pub fn honest(cheater: AgentId) -> Self {
        Self::new(cheater, 1, Override::None)
    }

    pub fn new(cheater: AgentId, d: usize, program: Override) -> Self {
        DeviationStrategy {
            cheater,
            d,
            program,
            scheme: None,
            seed: 0,
        }
    }

    pub fn is_honest(&self) -> bool {
        self.d == 1 && self.program == Override::None
    }
}

impl fmt::Display for DeviationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "agent {} as {} with {}",
            self.cheater, self.d, self.program
        )
    }
}

/// A protocol on an original graph.
#[derive(Clone, Debug)]
pub struct Game {
    pub topology: Arc<Topology>,
    pub spec: ProtocolSpec,
    /// Enumeration cap per expected-utility computation.
    pub cap: u64,
}

/// A strategy resolved against a game.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub strategy: DeviationStrategy,
    pub scheme: DuplicationScheme,
    /// The graph the processes run on.
    pub exec: Arc<Topology>,
    pub pref: Preference,
}

/// One run seen from the original graph.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub trace: ExecutionTrace,
    /// Outputs of the original agents, virtual ids mapped to the cheater.
    pub outputs: OutputVector,
    pub verdict: Verdict,
    /// The cheater's utility.
    pub utility: u8,
}

impl Game {
    pub fn new(topology: Arc<Topology>, spec: ProtocolSpec) -> Self {
        Game {
            topology,
            spec,
            cap: crate::engine::random::DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn prepare(&self, s: &DeviationStrategy) -> Result<Prepared, RationalityError> {
        if s.d == 0 {
            return Err(RationalityError::Invalid(
                "a duplication count of 0 is not allowed".into(),
            ));
        }
        let scheme = match &s.scheme {
            Some(sc) => sc.clone(),
            None => DuplicationScheme::segment_fresh(&self.topology, s.cheater, s.d, s.seed)?,
        };
        if scheme.cheater != s.cheater || scheme.virtual_ids.len() != s.d {
            return Err(RationalityError::Invalid(
                "scheme does not match the strategy".into(),
            ));
        }
        if scheme.virtual_ids[0] != s.cheater {
            return Err(RationalityError::Invalid(
                "the first virtual agent must keep the cheater's id".into(),
            ));
        }
        let exec = Arc::new(apply_duplication(&self.topology, &scheme)?);
        self.spec.validate(&exec)?;
        Ok(Prepared {
            strategy: s.clone(),
            scheme,
            exec,
            pref: preference(&self.spec, &self.topology, s.cheater),
        })
    }

    /// Fresh processes for one run.
    pub fn processes(&self, p: &Prepared) -> Vec<Box<dyn Process>> {
        let cheater = p.strategy.cheater;
        let mut procs: Vec<Box<dyn Process>> = p
            .exec
            .nodes()
            .filter(|id| !p.scheme.virtual_ids.contains(id))
            .map(|id| Box::new(HonestProcess::new(self.spec.node(&p.exec, id))) as Box<dyn Process>)
            .collect();
        if p.strategy.is_honest() {
            procs.push(Box::new(HonestProcess::new(
                self.spec.node(&p.exec, cheater),
            )));
        } else {
            procs.push(Box::new(CheaterProcess::new(self, p)));
        }
        procs
    }

    /// Randomness for the cheater's slots layered over `base`. With `class`
    /// the cheater's first draw (its input) is fixed to that value.
    pub fn randomness(
        &self,
        p: &Prepared,
        base: &RandomnessSource,
        class: Option<u64>,
    ) -> RandomnessSource {
        let mut src = base.clone();
        let biased = match p.strategy.program {
            Override::BiasedDraw { value } => Some(value),
            _ => None,
        };
        for (i, &slot) in p.scheme.virtual_ids.iter().enumerate() {
            let prefix: Vec<u64> = if i == 0 {
                class.into_iter().collect()
            } else {
                Vec::new()
            };
            let mode = match (biased, i) {
                (Some(value), _) => SlotMode::Biased { prefix, value },
                (None, 0) => match class {
                    Some(x) => SlotMode::Script(vec![x]),
                    None => continue,
                },
                (None, _) => SlotMode::Seeded,
            };
            src.slots.insert(slot, mode);
        }
        src
    }

    pub fn run(
        &self,
        p: &Prepared,
        rand: &mut Randomness<'_>,
        level: TraceLevel,
    ) -> Result<Outcome, RationalityError> {
        let opts = RunOptions {
            round_limit: self.spec.round_limit(&p.exec),
            level,
        };
        let trace = run_execution(&p.exec, self.processes(p), rand, opts)?;
        let outputs = map_outputs(&trace.outputs, &p.scheme);
        let problem = self.spec.problem();
        let verdict = classify_output(&self.topology, &outputs, &problem);
        let utility = utility(&self.topology, &outputs, &p.pref, &problem);
        debug_assert!(utility == 0 || verdict == Verdict::Legal);
        Ok(Outcome {
            trace,
            outputs,
            verdict,
            utility,
        })
    }

    /// Own-input classes the cheater conditions on: its input value for the
    /// sharing protocols, nothing otherwise.
    pub fn classes(&self) -> Vec<Option<u64>> {
        match self.spec.name {
            ProtocolName::Ks | ProtocolName::Ks2 => {
                (0..self.spec.ks_params().field).map(Some).collect()
            }
            _ => vec![None],
        }
    }
}

/// Renames virtual ids to the cheater inside one output.
pub fn map_output(o: &Output, scheme: &DuplicationScheme) -> Output {
    let m = |a: AgentId| {
        if scheme.virtual_ids.contains(&a) {
            scheme.cheater
        } else {
            a
        }
    };
    match o {
        Output::Agent(a) => Output::Agent(m(*a)),
        Output::Edges(es) => {
            let mut es: Vec<(AgentId, EdgeDir)> = es.iter().map(|&(nb, d)| (m(nb), d)).collect();
            es.sort();
            Output::Edges(es)
        }
        other => other.clone(),
    }
}

/// Outputs of the original agents. The cheater's own entry is already
/// merged by its process.
pub fn map_outputs(o: &OutputVector, scheme: &DuplicationScheme) -> OutputVector {
    let mut out: OutputVector = BTreeMap::new();
    for (&a, v) in o {
        if a == scheme.cheater || !scheme.virtual_ids.contains(&a) {
            out.insert(a, map_output(v, scheme));
        }
    }
    out
}
