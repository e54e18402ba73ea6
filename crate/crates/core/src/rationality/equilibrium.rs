//! Deviation catalogs and the equilibrium check.

use std::fmt::Write as _;
use std::str::FromStr;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use super::estimate::{expected_utility_exact, expected_utility_mc, utility_gain_mc};
use super::{DeviationStrategy, Game, Override, RationalityError};
use crate::protocols::{ProtocolName, ProtocolSpec};
use crate::topology::{apply_duplication, AgentId, DuplicationScheme, Topology};

/// A family of deviations in the catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Plain duplication running honest virtual agents.
    Duplication,
    LieAboutInput,
    DelayByOne,
    Withhold,
    OutputOverride,
    BiasedDraw,
    Forced,
    TamperRelay,
    SybilSwing,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Duplication,
        Family::LieAboutInput,
        Family::DelayByOne,
        Family::Withhold,
        Family::OutputOverride,
        Family::BiasedDraw,
        Family::Forced,
        Family::TamperRelay,
        Family::SybilSwing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Duplication => "duplication",
            Family::LieAboutInput => "lie-about-input",
            Family::DelayByOne => "delay-by-one",
            Family::Withhold => "withhold",
            Family::OutputOverride => "output-override",
            Family::BiasedDraw => "biased-draw",
            Family::Forced => "forced",
            Family::TamperRelay => "tamper-relay",
            Family::SybilSwing => "sybil-swing",
        }
    }

    /// Whether the family means anything for `p`.
    pub fn applies(self, p: ProtocolName) -> bool {
        use ProtocolName as P;
        match self {
            Family::LieAboutInput | Family::SybilSwing => matches!(p, P::Ks | P::Ks2),
            Family::TamperRelay => p == P::ColorOrient,
            Family::Forced => matches!(
                p,
                P::ColorRenaming | P::ColorOrient | P::Leader | P::Partition | P::Orientation
            ),
            _ => true,
        }
    }
}

impl FromStr for Family {
    type Err = RationalityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| RationalityError::Invalid(format!("unknown deviation family {s:?}")))
    }
}

/// Which deviations to try.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogSpec {
    #[serde(default = "one")]
    pub min_d: usize,
    pub max_d: usize,
    /// Empty means every family that applies to the protocol.
    #[serde(default)]
    pub families: Vec<Family>,
    /// Cheater positions; empty means every agent.
    #[serde(default)]
    pub positions: Vec<AgentId>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl CatalogSpec {
    pub fn up_to(max_d: usize) -> Self {
        CatalogSpec {
            min_d: 1,
            max_d,
            families: Vec::new(),
            positions: Vec::new(),
            seed: 0,
        }
    }

    pub fn with_families(mut self, families: &[Family]) -> Self {
        self.families = families.to_vec();
        self
    }

    fn families_for(&self, p: ProtocolName) -> Vec<Family> {
        let all: &[Family] = if self.families.is_empty() {
            &Family::ALL
        } else {
            &self.families
        };
        all.iter().copied().filter(|f| f.applies(p)).collect()
    }
}

/// The catalog for one cheater position.
pub fn catalog(game: &Game, cheater: AgentId, spec: &CatalogSpec) -> Vec<DeviationStrategy> {
    let name = game.spec.name;
    let families = spec.families_for(name);
    let sharing = matches!(name, ProtocolName::Ks | ProtocolName::Ks2);
    let mut out = Vec::new();
    for d in spec.min_d.max(1)..=spec.max_d {
        let Ok(shape) = game.prepare(&DeviationStrategy {
            seed: spec.seed,
            ..DeviationStrategy::new(cheater, d, Override::None)
        }) else {
            continue;
        };
        let n = shape.exec.node_count() as u32;
        let wake = shape.exec.diameter().unwrap_or(0) as u32 + 2;
        let rounds: Vec<u32> = if sharing {
            vec![1, wake + 1, wake + n - 1, wake + n + 1]
        } else {
            vec![1, wake + 1, wake + 2]
        };
        let mut programs = Vec::new();
        for &f in &families {
            match f {
                Family::Duplication if d > 1 => programs.push(Override::None),
                Family::LieAboutInput => programs.extend(
                    rounds
                        .iter()
                        .map(|&round| Override::LieAboutInput { round }),
                ),
                Family::DelayByOne => {
                    programs.extend(rounds.iter().map(|&round| Override::DelayByOne { round }))
                }
                Family::Withhold => {
                    programs.extend(rounds.iter().map(|&round| Override::Withhold { round }))
                }
                Family::OutputOverride => programs.push(Override::OutputOverride),
                Family::BiasedDraw => {
                    programs.extend((0..2).map(|value| Override::BiasedDraw { value }))
                }
                Family::Forced => programs.extend((0..3).map(|value| Override::Forced { value })),
                Family::TamperRelay => programs.push(Override::TamperRelay),
                Family::SybilSwing if d > 1 => programs.push(Override::SybilSwing),
                _ => {}
            }
        }
        out.extend(programs.into_iter().map(|program| DeviationStrategy {
            seed: spec.seed,
            ..DeviationStrategy::new(cheater, d, program)
        }));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EstimationMode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HonestEntry {
    pub cheater: AgentId,
    pub class: Option<u64>,
    pub utility: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub strategy: DeviationStrategy,
    pub label: String,
    pub class: Option<u64>,
    pub utility: String,
    pub margin: String,
    /// Interval of the margin in Monte Carlo mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
    pub profitable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EquilibriumVerdict {
    NoProfitableDeviation,
    DeviationFound {
        witness: DeviationStrategy,
        class: Option<u64>,
        margin: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub scenario: String,
    pub protocol: ProtocolName,
    pub mode: EstimationMode,
    pub honest: Vec<HonestEntry>,
    pub deviations: Vec<DeviationEntry>,
    pub verdict: EquilibriumVerdict,
}

impl EquilibriumReport {
    pub fn deviation_found(&self) -> bool {
        matches!(self.verdict, EquilibriumVerdict::DeviationFound { .. })
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} ({})", self.scenario, self.protocol);
        let _ = writeln!(
            s,
            "{:<44} {:>6} {:>14} {:>14}",
            "strategy", "class", "utility", "margin"
        );
        for h in &self.honest {
            let _ = writeln!(
                s,
                "{:<44} {:>6} {:>14} {:>14}",
                format!("agent {} honest", h.cheater),
                class_str(h.class),
                h.utility,
                "-"
            );
        }
        for d in &self.deviations {
            let mark = if d.profitable { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:<44} {:>6} {:>14} {:>14}{mark}",
                d.label,
                class_str(d.class),
                d.utility,
                d.margin
            );
        }
        match &self.verdict {
            EquilibriumVerdict::NoProfitableDeviation => {
                let _ = writeln!(s, "verdict: no profitable deviation");
            }
            EquilibriumVerdict::DeviationFound {
                witness, margin, ..
            } => {
                let _ = writeln!(s, "verdict: deviation found ({witness}, margin {margin})");
            }
        }
        s
    }
}

fn class_str(c: Option<u64>) -> String {
    c.map_or_else(|| "-".into(), |x| x.to_string())
}

/// Compares every catalog strategy against honest play for every cheater
/// position and own-input class, stopping at the first profitable one.
pub fn check_equilibrium(
    game: &Game,
    spec: &CatalogSpec,
    mode: EstimationMode,
    scenario: &str,
) -> Result<EquilibriumReport, RationalityError> {
    let positions: Vec<AgentId> = if spec.positions.is_empty() {
        game.topology.nodes().collect()
    } else {
        spec.positions.clone()
    };
    let mut report = EquilibriumReport {
        scenario: scenario.to_string(),
        protocol: game.spec.name,
        mode,
        honest: Vec::new(),
        deviations: Vec::new(),
        verdict: EquilibriumVerdict::NoProfitableDeviation,
    };
    for cheater in positions {
        let honest = DeviationStrategy::honest(cheater);
        let strategies = catalog(game, cheater, spec);
        for class in game.classes() {
            match mode {
                EstimationMode::Exact => {
                    let base = expected_utility_exact(game, &honest, class)?;
                    report.honest.push(HonestEntry {
                        cheater,
                        class,
                        utility: base.to_string(),
                        ci: None,
                    });
                    for s in &strategies {
                        let u = expected_utility_exact(game, s, class)?;
                        let margin = &u - &base;
                        let profitable = margin.is_positive();
                        report.deviations.push(DeviationEntry {
                            strategy: s.clone(),
                            label: s.to_string(),
                            class,
                            utility: u.to_string(),
                            margin: margin.to_string(),
                            ci: None,
                            profitable,
                        });
                        if profitable {
                            report.verdict = EquilibriumVerdict::DeviationFound {
                                witness: s.clone(),
                                class,
                                margin: margin.to_string(),
                            };
                            return Ok(report);
                        }
                    }
                }
                EstimationMode::MonteCarlo { samples, seed } => {
                    let base = expected_utility_mc(game, &honest, samples, seed, class)?;
                    report.honest.push(HonestEntry {
                        cheater,
                        class,
                        utility: format!("{:.4}", base.mean),
                        ci: Some([base.lo(), base.hi()]),
                    });
                    for s in &strategies {
                        let gain = utility_gain_mc(game, &honest, s, samples, seed, class)?;
                        let profitable = gain.lo() > 0.0;
                        report.deviations.push(DeviationEntry {
                            strategy: s.clone(),
                            label: s.to_string(),
                            class,
                            utility: format!("{:.4}", base.mean + gain.mean),
                            margin: format!("{:.4}", gain.mean),
                            ci: Some([gain.lo(), gain.hi()]),
                            profitable,
                        });
                        if profitable {
                            report.verdict = EquilibriumVerdict::DeviationFound {
                                witness: s.clone(),
                                class,
                                margin: format!("{:.4}", gain.mean),
                            };
                            return Ok(report);
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// The emulation attack: the cheater runs the segment `scheme` honestly and
/// re-targets one unchecked virtual input once it has learned the rest.
pub fn sybil_emulation_strategy(
    spec: &ProtocolSpec,
    t: &Topology,
    scheme: DuplicationScheme,
) -> Result<DeviationStrategy, RationalityError> {
    if !matches!(spec.name, ProtocolName::Ks | ProtocolName::Ks2) {
        return Err(RationalityError::NotApplicable(format!(
            "{} has no late-binding shared value to steer",
            spec.name
        )));
    }
    if t.degree(scheme.cheater) < 2 {
        return Err(RationalityError::NotApplicable(
            "the cheater needs at least two edges".into(),
        ));
    }
    apply_duplication(t, &scheme)?;
    Ok(DeviationStrategy {
        cheater: scheme.cheater,
        d: scheme.virtual_ids.len(),
        program: Override::SybilSwing,
        scheme: Some(scheme),
        seed: 0,
    })
}
