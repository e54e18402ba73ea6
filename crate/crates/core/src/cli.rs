//! The commands behind the `ratdup` binary. Each returns the text it
//! prints and the process exit code.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::bounds::{self, KnowledgeBound};
use crate::engine::export::write_jsonl;
use crate::engine::random::{sample_seed, ProbSum};
use crate::engine::{EngineError, ProblemKind, Randomness, RandomnessSource, TraceLevel, Verdict};
use crate::rationality::estimate::enumerate_outcomes;
use crate::rationality::{
    check_equilibrium, expected_utility_exact, expected_utility_mc, DeviationStrategy, Game,
    Outcome, Override, RationalityError,
};
use crate::scenario::{RandomMode, Scenario};
use crate::topology::AgentId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ERRONEOUS: i32 = 2;
pub const EXIT_DEVIATION: i32 = 3;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RATDUP_OUT_DIR";

/// Overrides shared by the scenario commands.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub enumerate: bool,
    pub out: Option<PathBuf>,
}

impl Flags {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("ratdup-out"))
    }

    fn apply(&self, scn: &mut Scenario) {
        if let Some(s) = self.seed {
            scn.randomness.seed = s;
        }
        if let Some(t) = self.trials {
            scn.randomness.trials = t.max(1);
            scn.randomness.mode = RandomMode::Seed;
            if let Some(c) = scn.catalog.as_mut() {
                c.samples = t.max(1);
                c.estimation = crate::scenario::EstimationKind::MonteCarlo;
            }
        }
        if self.enumerate {
            scn.randomness.mode = RandomMode::Enumerate;
            if let Some(c) = scn.catalog.as_mut() {
                c.estimation = crate::scenario::EstimationKind::Exact;
            }
        }
    }
}

#[derive(Debug)]
pub struct CommandOutput {
    pub text: String,
    pub code: i32,
    pub files: Vec<PathBuf>,
}

fn hint(e: RationalityError) -> anyhow::Error {
    match e {
        RationalityError::Engine(EngineError::ExplosionCap { cap }) => anyhow::anyhow!(
            "more than {cap} executions to enumerate; use a smaller ring, a smaller field or d, \
             or sample with --trials N"
        ),
        other => other.into(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn strategy_of(scn: &Scenario, game: &Game) -> Result<(DeviationStrategy, bool)> {
    Ok(match scn.strategy()? {
        Some(s) => (s, true),
        None => {
            let first = game.topology.nodes().next().context("empty topology")?;
            (DeviationStrategy::honest(first), false)
        }
    })
}

fn outputs_line(o: &Outcome) -> String {
    o.outputs
        .iter()
        .map(|(a, v)| format!("{a}={}", serde_json::to_string(v).unwrap_or_default()))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Serialize)]
struct EnumerationSummary {
    scenario: String,
    strategy: String,
    class: Option<u64>,
    branches: u64,
    legal_probability: String,
    erroneous_branches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cheater_utility: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cheater_wins: Option<u64>,
}

/// Executes a scenario: seeded trials with a JSON-lines trace, or every
/// branch of the randomness with a summary.
pub fn cmd_run(scenario: &Scenario, flags: &Flags) -> Result<CommandOutput> {
    let mut scn = scenario.clone();
    flags.apply(&mut scn);
    let game = scn.game()?;
    let (strategy, has_cheater) = strategy_of(&scn, &game)?;
    let class = scn.cheater_class();
    let p = game.prepare(&strategy)?;
    let dir = flags.out_dir();
    ensure_dir(&dir)?;
    let mut text = String::new();
    let mut files = Vec::new();
    let mut all_legal = true;

    match scn.randomness.mode {
        RandomMode::Enumerate => {
            let (mut legal, mut util) = (ProbSum::new(), ProbSum::new());
            let (mut bad, mut wins) = (0u64, 0u64);
            let branches = enumerate_outcomes(&game, &p, class, TraceLevel::Outputs, |den, o| {
                if o.verdict == Verdict::Legal {
                    legal.add(den, 1);
                } else {
                    bad += 1;
                }
                util.add(den, o.utility as u128);
                wins += o.utility as u64;
            })
            .map_err(hint)?;
            all_legal = bad == 0;
            let summary = EnumerationSummary {
                scenario: scn.name.clone(),
                strategy: strategy.to_string(),
                class,
                branches,
                legal_probability: legal.value().to_string(),
                erroneous_branches: bad,
                cheater_utility: has_cheater.then(|| util.value().to_string()),
                cheater_wins: has_cheater.then_some(wins),
            };
            let _ = writeln!(
                text,
                "scenario {}: {} branches enumerated",
                scn.name, branches
            );
            let _ = writeln!(text, "legal with probability {}", summary.legal_probability);
            if let Some(u) = &summary.cheater_utility {
                let _ = writeln!(
                    text,
                    "cheater {} ({}): expected utility {u}, utility 1 in {wins} of {branches} branches",
                    strategy.cheater, strategy.program
                );
            }
            let path = dir.join(format!("{}.summary.json", scn.name));
            fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
            files.push(path);
        }
        RandomMode::Seed => {
            let path = dir.join(format!("{}.trace.jsonl", scn.name));
            let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
            for i in 0..scn.randomness.trials {
                let seed = sample_seed(scn.randomness.seed, i);
                let base = RandomnessSource::seeded(seed);
                let src = game.randomness(&p, &base, class);
                let o = game
                    .run(&p, &mut Randomness::new(&src), TraceLevel::Messages)
                    .map_err(hint)?;
                write_jsonl(&o.trace, &mut w)?;
                all_legal &= o.verdict == Verdict::Legal;
                let _ = write!(text, "trial {i} seed {seed}: {:?}", o.verdict);
                if let Some(a) = &o.trace.aborted {
                    let _ = write!(
                        text,
                        " (abort by {} at round {}: {})",
                        a.detector, a.round, a.reason
                    );
                }
                if has_cheater {
                    let _ = write!(text, " cheater utility {}", o.utility);
                }
                let _ = writeln!(text, "\n  outputs {}", outputs_line(&o));
            }
            std::io::Write::flush(&mut w)?;
            files.push(path);
        }
    }
    Ok(CommandOutput {
        text,
        code: if all_legal { EXIT_OK } else { EXIT_ERRONEOUS },
        files,
    })
}

/// Runs the equilibrium checker and writes the report as JSON and as a
/// table.
pub fn cmd_check_equilibrium(scenario: &Scenario, flags: &Flags) -> Result<CommandOutput> {
    let mut scn = scenario.clone();
    flags.apply(&mut scn);
    let game = scn.game()?;
    let catalog = scn.catalog_spec()?;
    let report =
        check_equilibrium(&game, &catalog, scn.estimation_mode(), &scn.name).map_err(hint)?;
    let dir = flags.out_dir();
    ensure_dir(&dir)?;
    let json = dir.join(format!("{}.report.json", scn.name));
    fs::write(&json, serde_json::to_string_pretty(&report)? + "\n")?;
    let table = report.table();
    let txt = dir.join(format!("{}.report.txt", scn.name));
    fs::write(&txt, &table)?;
    Ok(CommandOutput {
        text: table,
        code: if report.deviation_found() {
            EXIT_DEVIATION
        } else {
            EXIT_OK
        },
        files: vec![json, txt],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

/// Grid for the sharing incentive sweep.
#[derive(Clone, Debug)]
pub struct BoundsGrid {
    pub alpha_min: usize,
    pub alpha_max: usize,
    pub beta_max: usize,
    pub ks: Vec<u64>,
    pub xs: Vec<BigRational>,
}

impl Default for BoundsGrid {
    fn default() -> Self {
        BoundsGrid {
            alpha_min: 3,
            alpha_max: 8,
            beta_max: 16,
            ks: vec![2, 3, 4, 10],
            xs: vec![BigRational::new(1.into(), 2.into()), BigRational::one()],
        }
    }
}

fn table(format: TableFormat, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    match format {
        TableFormat::Csv => {
            let _ = writeln!(s, "{}", header.join(","));
            for r in rows {
                let _ = writeln!(s, "{}", r.join(","));
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(s, "| {} |", header.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
            for r in rows {
                let _ = writeln!(s, "| {} |", r.join(" | "));
            }
        }
    }
    s
}

/// The per-problem bound classification followed by the sharing incentive
/// grid over `(α, β, k, X)`.
pub fn cmd_bounds_table(grid: &BoundsGrid, format: TableFormat) -> Result<CommandOutput> {
    if grid.alpha_min < 3 || grid.alpha_max < grid.alpha_min || grid.beta_max < grid.alpha_min {
        anyhow::bail!(
            "grid bounds must satisfy 3 ≤ alpha_min ≤ alpha_max and beta_max ≥ alpha_min"
        );
    }
    let class_rows: Vec<Vec<String>> = ProblemKind::ALL
        .into_iter()
        .map(|p| {
            vec![
                p.display_name().to_string(),
                bounds::classify_bound(p).to_string(),
            ]
        })
        .collect();
    let mut text = table(format, &["problem", "bound"], &class_rows);
    text.push('\n');

    let ks_class = bounds::classify_bound(ProblemKind::KnowledgeSharing);
    let mut rows = Vec::new();
    for alpha in grid.alpha_min..=grid.alpha_max {
        for beta in alpha..=grid.beta_max {
            let b = KnowledgeBound { alpha, beta };
            for &k in &grid.ks {
                for x in &grid.xs {
                    let Ok(opt) = bounds::ks_optimal_duplication(b, k, x) else {
                        continue;
                    };
                    let incentive = bounds::ks_incentive(b, k, x)?;
                    rows.push(vec![
                        alpha.to_string(),
                        beta.to_string(),
                        k.to_string(),
                        x.to_string(),
                        opt.d_star.to_string(),
                        opt.feasible.to_string(),
                        opt.payoff.to_string(),
                        incentive.to_string(),
                        bounds::ks_raw_incentive(b).to_string(),
                        (!ks_class.admits(b)).to_string(),
                    ]);
                }
            }
        }
    }
    text.push_str(&table(
        format,
        &[
            "alpha",
            "beta",
            "k",
            "X",
            "d_star",
            "feasible",
            "payoff",
            "incentive",
            "raw_incentive",
            "beyond_2a-2",
        ],
        &rows,
    ));
    let gap: Vec<String> = (grid.alpha_min..=grid.alpha_max)
        .filter(|&a| 2 * a - 1 <= grid.beta_max)
        .filter(|&a| {
            let b = KnowledgeBound {
                alpha: a,
                beta: 2 * a - 1,
            };
            !ks_class.admits(b) && !bounds::ks_raw_incentive(b)
        })
        .map(|a| format!("({a},{})", 2 * a - 1))
        .collect();
    if !gap.is_empty() {
        let _ = writeln!(
            text,
            "\nnote: at beta = 2*alpha-1 the classification 2α-2 excludes an equilibrium \
             while the raw incentive floor(beta/2)+1 > alpha is still false: {}",
            gap.join(" ")
        );
    }
    Ok(CommandOutput {
        text,
        code: EXIT_OK,
        files: Vec::new(),
    })
}

/// Ring of four sharing agents with one-bit inputs; agent 1 plays five.
pub const DEFAULT_ATTACK: &str = r#"
name = "attack-demo"
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
"#;

#[derive(Serialize)]
struct AttackRow {
    class: Option<u64>,
    honest: String,
    attack: String,
    margin: String,
}

/// Honest against attack expected utility of the scenario's cheater, per
/// own-input class. Exits with 3 when the attack pays in some class.
pub fn cmd_attack_demo(scenario: &Scenario, flags: &Flags) -> Result<CommandOutput> {
    let mut scn = scenario.clone();
    flags.apply(&mut scn);
    let game = scn.game()?;
    let attack = scn.strategy()?.unwrap_or_else(|| {
        let first = game.topology.nodes().next().unwrap_or(AgentId(1));
        DeviationStrategy::new(first, game.topology.node_count() + 1, Override::SybilSwing)
    });
    let honest = DeviationStrategy::honest(attack.cheater);
    let classes = match scn.cheater_class() {
        Some(c) => vec![Some(c)],
        None => game.classes(),
    };
    let sampled = flags.trials.is_some() && !flags.enumerate;
    let mut text = String::new();
    let _ = writeln!(text, "{} against honest play ({})", attack, scn.name);
    let mut rows = Vec::new();
    let mut profitable = false;
    for class in classes {
        let (h, a, margin, pays) = if sampled {
            let n = flags.trials.unwrap_or(1);
            let seed = scn.randomness.seed;
            let h = expected_utility_mc(&game, &honest, n, seed, class).map_err(hint)?;
            let a = expected_utility_mc(&game, &attack, n, seed, class).map_err(hint)?;
            let gain = crate::rationality::estimate::utility_gain_mc(
                &game, &honest, &attack, n, seed, class,
            )
            .map_err(hint)?;
            (
                format!("{:.4}±{:.4}", h.mean, h.half_width),
                format!("{:.4}±{:.4}", a.mean, a.half_width),
                format!("{:.4}±{:.4}", gain.mean, gain.half_width),
                gain.lo() > 0.0,
            )
        } else {
            let h = expected_utility_exact(&game, &honest, class).map_err(hint)?;
            let a = expected_utility_exact(&game, &attack, class).map_err(hint)?;
            let m = &a - &h;
            let pays = m > BigRational::zero();
            (h.to_string(), a.to_string(), m.to_string(), pays)
        };
        profitable |= pays;
        let _ = writeln!(
            text,
            "class {:>3}: honest {h}, attack {a}, margin {margin}{}",
            class.map_or("-".into(), |c| c.to_string()),
            if pays { " (profitable)" } else { "" }
        );
        rows.push(AttackRow {
            class,
            honest: h,
            attack: a,
            margin,
        });
    }
    let dir = flags.out_dir();
    ensure_dir(&dir)?;
    let path = dir.join(format!("{}.attack.json", scn.name));
    let doc: BTreeMap<&str, serde_json::Value> = BTreeMap::from([
        ("scenario", serde_json::json!(scn.name)),
        ("strategy", serde_json::to_value(&attack)?),
        ("classes", serde_json::to_value(&rows)?),
        ("profitable", serde_json::json!(profitable)),
    ]);
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(CommandOutput {
        text,
        code: if profitable { EXIT_DEVIATION } else { EXIT_OK },
        files: vec![path],
    })
}
