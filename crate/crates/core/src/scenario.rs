//! Scenario files: one reproducible experiment per TOML document.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::SizeBound;
use crate::protocols::{ProtocolName, ProtocolSpec};
use crate::rationality::{CatalogSpec, DeviationStrategy, EstimationMode, Family, Game, Override};
use crate::topology::{build_ring, AgentId, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyConfig {
    /// Ring in clockwise order; ids default to `1..=n`.
    Ring {
        n: usize,
        #[serde(default)]
        ids: Vec<u64>,
    },
    Graph {
        nodes: Vec<u64>,
        edges: Vec<[u64; 2]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ProtocolName,
    #[serde(default)]
    pub k: Option<u64>,
    #[serde(default)]
    pub field: Option<u64>,
    /// Agent id (as a string key) to preferred value.
    #[serde(default)]
    pub prefs: BTreeMap<String, u64>,
    #[serde(default)]
    pub inputs: BTreeMap<String, u64>,
    #[serde(default)]
    pub alpha: Option<usize>,
    #[serde(default)]
    pub beta: Option<usize>,
    #[serde(default)]
    pub elect: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheaterConfig {
    /// Id of the cheating agent.
    pub position: u64,
    #[serde(default = "one")]
    pub d: usize,
    /// Program in display form: `honest`, `sybil-swing`, `withhold@5`, ...
    #[serde(default = "honest")]
    pub strategy: String,
    #[serde(default)]
    pub seed: u64,
    /// Fixes the cheater's own input.
    #[serde(default)]
    pub class: Option<u64>,
}

fn one() -> usize {
    1
}

fn honest() -> String {
    "honest".into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomMode {
    #[default]
    Seed,
    Enumerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomnessConfig {
    #[serde(default)]
    pub mode: RandomMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_u64")]
    pub trials: u64,
    /// Enumeration cap per expected utility.
    #[serde(default)]
    pub cap: Option<u64>,
}

fn one_u64() -> u64 {
    1
}

impl Default for RandomnessConfig {
    fn default() -> Self {
        RandomnessConfig {
            mode: RandomMode::Seed,
            seed: 0,
            trials: 1,
            cap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationKind {
    #[default]
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    #[serde(default = "one")]
    pub min_d: usize,
    /// Defaults to the ring size.
    #[serde(default)]
    pub max_d: Option<usize>,
    #[serde(default)]
    pub families: Vec<Family>,
    #[serde(default)]
    pub positions: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimation: EstimationKind,
    #[serde(default = "default_samples")]
    pub samples: u64,
}

fn default_samples() -> u64 {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub topology: TopologyConfig,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub cheater: Option<CheaterConfig>,
    #[serde(default)]
    pub randomness: RandomnessConfig,
    #[serde(default)]
    pub catalog: Option<CatalogConfig>,
}

fn agent_map(
    m: &BTreeMap<String, u64>,
    what: &str,
) -> Result<BTreeMap<AgentId, u64>, ScenarioError> {
    m.iter()
        .map(|(k, &v)| match k.trim().parse::<u64>() {
            Ok(id) => Ok((AgentId(id), v)),
            Err(_) => invalid(format!("{what} key {k:?} is not an agent id")),
        })
        .collect()
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let scn: Scenario = toml::from_str(s)?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return invalid("name is empty");
        }
        let t = self.topology()?;
        let spec = self.protocol_spec()?;
        spec.validate(&t)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if let Some(c) = &self.cheater {
            if !t.contains(AgentId(c.position)) {
                return invalid(format!("cheater {} is not in the topology", c.position));
            }
            if c.d == 0 {
                return invalid("cheater d must be at least 1");
            }
            c.strategy
                .parse::<Override>()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        if self.randomness.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if let Some(c) = &self.catalog {
            for &p in &c.positions {
                if !t.contains(AgentId(p)) {
                    return invalid(format!("catalog position {p} is not in the topology"));
                }
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Arc<Topology>, ScenarioError> {
        let t = match &self.topology {
            TopologyConfig::Ring { n, ids } => {
                let ids: Vec<AgentId> = if ids.is_empty() {
                    (1..=*n as u64).map(AgentId).collect()
                } else {
                    ids.iter().copied().map(AgentId).collect()
                };
                build_ring(*n, &ids)
            }
            TopologyConfig::Graph { nodes, edges } => Topology::new(
                nodes.iter().copied().map(AgentId),
                edges.iter().map(|[a, b]| (AgentId(*a), AgentId(*b))),
            ),
        };
        let t = t.map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if !t.is_connected() {
            return invalid("the topology is not connected");
        }
        Ok(Arc::new(t))
    }

    pub fn protocol_spec(&self) -> Result<ProtocolSpec, ScenarioError> {
        let p = &self.protocol;
        let mut spec = ProtocolSpec::new(p.name);
        if let Some(k) = p.k {
            spec.k = k;
        }
        if let Some(f) = p.field {
            spec.field = f;
        }
        spec.prefs = agent_map(&p.prefs, "prefs")?;
        spec.inputs = agent_map(&p.inputs, "inputs")?;
        spec.elect = p.elect;
        match (p.alpha, p.beta) {
            (Some(alpha), Some(beta)) => spec.bound = Some(SizeBound { alpha, beta }),
            (None, None) => {}
            _ => return invalid("alpha and beta go together"),
        }
        Ok(spec)
    }

    pub fn game(&self) -> Result<Game, ScenarioError> {
        let mut game = Game::new(self.topology()?, self.protocol_spec()?);
        if let Some(cap) = self.randomness.cap {
            game.cap = cap;
        }
        Ok(game)
    }

    /// The configured cheater's strategy, if any.
    pub fn strategy(&self) -> Result<Option<DeviationStrategy>, ScenarioError> {
        let Some(c) = &self.cheater else {
            return Ok(None);
        };
        let program = c
            .strategy
            .parse::<Override>()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(Some(DeviationStrategy {
            seed: c.seed,
            ..DeviationStrategy::new(AgentId(c.position), c.d, program)
        }))
    }

    pub fn cheater_class(&self) -> Option<u64> {
        self.cheater.as_ref().and_then(|c| c.class)
    }

    pub fn catalog_spec(&self) -> Result<CatalogSpec, ScenarioError> {
        let n = self.topology()?.node_count();
        Ok(match &self.catalog {
            None => CatalogSpec::up_to(n),
            Some(c) => CatalogSpec {
                min_d: c.min_d,
                max_d: c.max_d.unwrap_or(n),
                families: c.families.clone(),
                positions: c.positions.iter().copied().map(AgentId).collect(),
                seed: c.seed,
            },
        })
    }

    pub fn estimation_mode(&self) -> EstimationMode {
        match &self.catalog {
            Some(c) if c.estimation == EstimationKind::MonteCarlo => EstimationMode::MonteCarlo {
                samples: c.samples,
                seed: self.randomness.seed,
            },
            _ => EstimationMode::Exact,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KS: &str = r#"
name = "ks"
[topology]
kind = "ring"
n = 4
[protocol]
name = "ks"
k = 2
field = 2
prefs = { "1" = 1 }
[cheater]
position = 1
d = 5
strategy = "sybil-swing"
[randomness]
mode = "enumerate"
"#;

    #[test]
    fn parses_and_builds() {
        let s = Scenario::from_toml_str(KS).unwrap();
        assert_eq!(s.topology().unwrap().node_count(), 4);
        let spec = s.protocol_spec().unwrap();
        assert_eq!((spec.k, spec.field, spec.pref(AgentId(1))), (2, 2, 1));
        let st = s.strategy().unwrap().unwrap();
        assert_eq!((st.d, st.program), (5, Override::SybilSwing));
        assert_eq!(s.randomness.mode, RandomMode::Enumerate);
        assert_eq!(s.catalog_spec().unwrap().max_d, 4);
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = Scenario::from_toml_str("name = \"x\"\n[topology\nkind = 1").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn rejects_bad_content() {
        let bad = KS.replace("position = 1", "position = 9");
        assert!(matches!(
            Scenario::from_toml_str(&bad),
            Err(ScenarioError::Invalid(_))
        ));
        let bad = KS.replace("sybil-swing", "teleport");
        assert!(Scenario::from_toml_str(&bad).is_err());
        let bad = KS.replace("n = 4", "n = 4\ncolour = 2");
        assert!(Scenario::from_toml_str(&bad).is_err());
        let bad = KS.replace("field = 2", "field = 3");
        assert!(Scenario::from_toml_str(&bad).is_err());
    }

    #[test]
    fn explicit_graph() {
        let s = Scenario::from_toml_str(
            r#"
name = "tri"
[topology]
kind = "graph"
nodes = [1, 2, 3]
edges = [[1, 2], [2, 3], [3, 1]]
[protocol]
name = "orientation"
"#,
        )
        .unwrap();
        assert_eq!(s.topology().unwrap().edge_count(), 3);
        assert!(s.cheater.is_none());
    }
}
