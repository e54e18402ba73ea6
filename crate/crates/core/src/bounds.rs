//! Payoffs of oversized duplication under a known size range, and the
//! per-problem classification of how wide that range may be.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::blocks::SizeBound as KnowledgeBound;
use crate::engine::ProblemKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn frac(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn check_bound(b: KnowledgeBound) -> Result<(i64, i64), BoundsError> {
    if b.alpha < 3 || b.beta < b.alpha {
        return Err(BoundsError::Domain(format!(
            "bad bound [{}, {}]",
            b.alpha, b.beta
        )));
    }
    Ok((b.alpha as i64, b.beta as i64))
}

fn check_payoff(k: u64, x: &BigRational) -> Result<(), BoundsError> {
    if k < 2 {
        return Err(BoundsError::Domain(format!("k = {k} is below 2")));
    }
    if *x <= frac(1, k as i64) || *x > BigRational::one() {
        return Err(BoundsError::Domain(format!(
            "X = {x} is outside (1/{k}, 1]"
        )));
    }
    Ok(())
}

/// Largest duplication count worth considering: `⌈β/2⌉ + 1`.
pub fn ks_max_duplication(b: KnowledgeBound) -> usize {
    b.beta.div_ceil(2) + 1
}

/// Cheater's expected utility at round 0 when it plays `d` agents in a
/// sharing ring of unknown size, with `X` the payoff of a successful
/// oversized duplication:
/// `X·(d−α)/(β−α+1) + (1/k)·(⌈β/2⌉−d+1)/(β−α+1)`.
pub fn ks_dup_expected_utility(
    b: KnowledgeBound,
    d: usize,
    k: u64,
    x: &BigRational,
) -> Result<BigRational, BoundsError> {
    let (alpha, beta) = check_bound(b)?;
    check_payoff(k, x)?;
    if d < b.alpha || d > ks_max_duplication(b) {
        return Err(BoundsError::Domain(format!(
            "d = {d} is outside [{}, {}]",
            b.alpha,
            ks_max_duplication(b)
        )));
    }
    let d = d as i64;
    let width = beta - alpha + 1;
    let ceil_half = (beta + 1) / 2;
    Ok(x * frac(d - alpha, width) + frac(1, k as i64) * frac(ceil_half - d + 1, width))
}

/// Expected utility of playing `d` agents, summed directly over the
/// uniformly likely sizes `n ∈ [α, β]`: the run fails when `d+n−1 > β`,
/// pays `X` when `d > n` and `1/k` otherwise.
pub fn ks_dup_expected_utility_sweep(
    b: KnowledgeBound,
    d: usize,
    k: u64,
    x: &BigRational,
) -> BigRational {
    let width = (b.beta - b.alpha + 1) as i64;
    let honest = frac(1, k as i64);
    let mut total = BigRational::zero();
    for n in b.alpha..=b.beta {
        if d + n - 1 > b.beta {
            continue;
        }
        total += if d > n { x.clone() } else { honest.clone() };
    }
    total / q(width)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalDuplication {
    /// `⌊β/2⌋ + 1`.
    pub d_star: usize,
    /// Whether `d_star` lies in `[α, ⌈β/2⌉+1]`.
    pub feasible: bool,
    /// Utility at `d_star` when feasible, otherwise the honest `1/k`.
    pub payoff: BigRational,
}

pub fn ks_optimal_duplication(
    b: KnowledgeBound,
    k: u64,
    x: &BigRational,
) -> Result<OptimalDuplication, BoundsError> {
    check_bound(b)?;
    check_payoff(k, x)?;
    let d_star = b.beta / 2 + 1;
    let feasible = d_star >= b.alpha;
    let payoff = if feasible {
        ks_dup_expected_utility(b, d_star, k, x)?
    } else {
        frac(1, k as i64)
    };
    Ok(OptimalDuplication {
        d_star,
        feasible,
        payoff,
    })
}

/// Whether the best duplication beats the honest `1/k`.
pub fn ks_incentive(b: KnowledgeBound, k: u64, x: &BigRational) -> Result<bool, BoundsError> {
    let opt = ks_optimal_duplication(b, k, x)?;
    Ok(opt.feasible && opt.payoff > frac(1, k as i64))
}

/// The incentive condition in the limit of large `k` with `X = 1`:
/// `⌊β/2⌋ + 1 > α`. It first holds at `β = 2α`.
pub fn ks_raw_incentive(b: KnowledgeBound) -> bool {
    b.beta / 2 + 1 > b.alpha
}

/// Probability that a cheater playing `d` agents stays within the bound,
/// `P[d+n−1 ≤ β]` for `n` uniform on `[α, β]`.
pub fn duplication_success_probability(
    b: KnowledgeBound,
    d: usize,
) -> Result<BigRational, BoundsError> {
    let (alpha, beta) = check_bound(b)?;
    if d == 0 {
        return Err(BoundsError::Domain("d must be at least 1".into()));
    }
    let good = (beta - d as i64 + 2 - alpha).clamp(0, beta - alpha + 1);
    Ok(frac(good, beta - alpha + 1))
}

/// Leader election with one extra duplicate: `P_D · 2/(n+1)`. `P_D` is 1/2
/// for `β = α+1` and 2/3 for `β = α+2`.
pub fn leader_dup_expected_utility(
    b: KnowledgeBound,
    n: usize,
    d: usize,
) -> Result<BigRational, BoundsError> {
    check_bound(b)?;
    if d != 2 {
        return Err(BoundsError::Domain(format!(
            "only d = 2 is analysed, got {d}"
        )));
    }
    if n < b.alpha || n > b.beta {
        return Err(BoundsError::Domain(format!(
            "n = {n} is outside [{}, {}]",
            b.alpha, b.beta
        )));
    }
    Ok(duplication_success_probability(b, d)? * frac(2, n as i64 + 1))
}

/// Whether duplicating once beats the honest `1/n` for leader election.
pub fn leader_incentive(b: KnowledgeBound, n: usize) -> Result<bool, BoundsError> {
    Ok(leader_dup_expected_utility(b, n, 2)? > frac(1, n as i64))
}

/// `dup_eu · P_D > honest_eu`, strictly.
pub fn duplication_decision(
    honest_eu: &BigRational,
    dup_eu: &BigRational,
    p_d: &BigRational,
) -> Result<bool, BoundsError> {
    let unit = |v: &BigRational| *v >= BigRational::zero() && *v <= BigRational::one();
    if !(unit(honest_eu) && unit(dup_eu) && unit(p_d)) {
        return Err(BoundsError::Domain("arguments must lie in [0, 1]".into()));
    }
    Ok(dup_eu * p_d > *honest_eu)
}

/// `f(α) = scale·α + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineBound {
    pub scale: i64,
    pub offset: i64,
}

impl AffineBound {
    pub fn apply(&self, alpha: usize) -> i64 {
        self.scale * alpha as i64 + self.offset
    }
}

impl fmt::Display for AffineBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale != 1 {
            write!(f, "{}", self.scale)?;
        }
        write!(f, "α")?;
        match self.offset {
            0 => Ok(()),
            o if o > 0 => write!(f, "+{o}"),
            o => write!(f, "-{}", -o),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum BoundClass {
    /// Equilibrium iff `β ≤ f(α)`.
    ExactFunction { f: AffineBound },
    /// Equilibrium under any finite bound, none without one.
    InfinityBound,
    /// Equilibrium even with no bound at all.
    Unbounded,
}

impl BoundClass {
    /// Whether an equilibrium exists under `b`.
    pub fn admits(&self, b: KnowledgeBound) -> bool {
        match self {
            BoundClass::ExactFunction { f } => b.beta as i64 <= f.apply(b.alpha),
            BoundClass::InfinityBound | BoundClass::Unbounded => true,
        }
    }
}

impl fmt::Display for BoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundClass::ExactFunction { f: g } => write!(f, "{g}"),
            BoundClass::InfinityBound => f.write_str("∞"),
            BoundClass::Unbounded => f.write_str("unbounded"),
        }
    }
}

pub fn classify_bound(problem: ProblemKind) -> BoundClass {
    match problem {
        ProblemKind::LeaderElection => BoundClass::ExactFunction {
            f: AffineBound {
                scale: 1,
                offset: 1,
            },
        },
        ProblemKind::KnowledgeSharing => BoundClass::ExactFunction {
            f: AffineBound {
                scale: 2,
                offset: -2,
            },
        },
        ProblemKind::Coloring | ProblemKind::TwoKnowledgeSharing => BoundClass::InfinityBound,
        ProblemKind::RingPartition | ProblemKind::Orientation => BoundClass::Unbounded,
    }
}

/// Looks a problem up by its display or snake-case name.
pub fn classify_bound_by_name(name: &str) -> Result<BoundClass, BoundsError> {
    let key = name.trim().to_lowercase().replace(['-', ' '], "_");
    ProblemKind::ALL
        .into_iter()
        .find(|p| {
            p.display_name().to_lowercase().replace(['-', ' '], "_") == key || snake(*p) == key
        })
        .map(classify_bound)
        .ok_or_else(|| BoundsError::UnknownProblem(name.to_string()))
}

fn snake(p: ProblemKind) -> String {
    serde_json::to_value(p)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Rows of the summary table: one per bound class, problems in registry
/// order.
pub fn summary_rows() -> Vec<(String, Vec<&'static str>)> {
    let mut rows: Vec<(BoundClass, Vec<&'static str>)> = Vec::new();
    for p in ProblemKind::ALL {
        let class = classify_bound(p);
        match rows.iter_mut().find(|(c, _)| *c == class) {
            Some((_, names)) => names.push(p.display_name()),
            None => rows.push((class, vec![p.display_name()])),
        }
    }
    rows.into_iter()
        .map(|(c, names)| (c.to_string(), names))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb(alpha: usize, beta: usize) -> KnowledgeBound {
        KnowledgeBound { alpha, beta }
    }

    #[test]
    fn eu_examples() {
        let one = BigRational::one();
        assert_eq!(
            ks_dup_expected_utility(kb(4, 8), 5, 4, &one).unwrap(),
            frac(1, 5)
        );
        assert_eq!(
            ks_dup_expected_utility(kb(4, 8), 4, 4, &one).unwrap(),
            frac(1, 20)
        );
        assert_eq!(
            ks_dup_expected_utility(kb(4, 5), 4, 4, &one).unwrap(),
            frac(0, 1)
        );
        assert!(ks_dup_expected_utility(kb(4, 9), 6, 4, &one).is_ok());
        assert!(ks_dup_expected_utility(kb(4, 8), 6, 4, &one).is_err());
        assert!(ks_dup_expected_utility(kb(4, 8), 3, 4, &one).is_err());
        assert!(ks_dup_expected_utility(kb(4, 8), 5, 2, &frac(1, 2)).is_err());
    }

    #[test]
    fn optimal_examples() {
        let one = BigRational::one();
        let o = ks_optimal_duplication(kb(4, 8), 100, &one).unwrap();
        assert_eq!((o.d_star, o.feasible), (5, true));
        assert_eq!(o.payoff, frac(1, 5));
        let o = ks_optimal_duplication(kb(4, 4), 100, &one).unwrap();
        assert_eq!((o.d_star, o.feasible), (3, false));
        assert!(!ks_incentive(kb(4, 4), 100, &one).unwrap());
    }

    #[test]
    fn incentive_examples() {
        let one = BigRational::one();
        assert!(ks_incentive(kb(4, 8), 1_000_000, &one).unwrap());
        assert!(!ks_incentive(kb(4, 6), 1_000_000, &one).unwrap());
        assert_eq!(
            ks_optimal_duplication(kb(4, 6), 1_000_000, &one)
                .unwrap()
                .d_star,
            4
        );
        for beta in 4..40 {
            assert!(!ks_incentive(kb(4, beta), 2, &one).unwrap());
        }
        assert!(!ks_raw_incentive(kb(4, 7)));
        assert!(ks_raw_incentive(kb(4, 8)));
    }

    #[test]
    fn leader_examples() {
        assert_eq!(
            leader_dup_expected_utility(kb(4, 5), 4, 2).unwrap(),
            frac(1, 5)
        );
        assert_eq!(
            leader_dup_expected_utility(kb(4, 6), 4, 2).unwrap(),
            frac(4, 15)
        );
        assert!(leader_incentive(kb(4, 6), 4).unwrap());
        assert!(!leader_incentive(kb(4, 5), 4).unwrap());
        assert!(!leader_incentive(kb(3, 5), 3).unwrap());
        assert!(leader_dup_expected_utility(kb(4, 6), 7, 2).is_err());
        assert!(leader_dup_expected_utility(kb(4, 6), 4, 3).is_err());
    }

    #[test]
    fn success_probability_clamps() {
        assert_eq!(
            duplication_success_probability(kb(4, 5), 2).unwrap(),
            frac(1, 2)
        );
        assert_eq!(
            duplication_success_probability(kb(4, 6), 2).unwrap(),
            frac(2, 3)
        );
        assert_eq!(
            duplication_success_probability(kb(4, 6), 1).unwrap(),
            frac(1, 1)
        );
        assert_eq!(
            duplication_success_probability(kb(4, 6), 9).unwrap(),
            frac(0, 1)
        );
    }

    #[test]
    fn decision_is_strict() {
        assert!(duplication_decision(&frac(1, 4), &q(1), &frac(1, 2)).unwrap());
        assert!(!duplication_decision(&frac(1, 2), &q(1), &frac(1, 2)).unwrap());
        assert!(!duplication_decision(&frac(0, 1), &q(1), &frac(0, 1)).unwrap());
        assert!(duplication_decision(&frac(1, 2), &q(2), &frac(1, 2)).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(
            classify_bound(ProblemKind::LeaderElection).to_string(),
            "α+1"
        );
        assert_eq!(
            classify_bound(ProblemKind::KnowledgeSharing).to_string(),
            "2α-2"
        );
        assert_eq!(
            classify_bound(ProblemKind::RingPartition),
            BoundClass::Unbounded
        );
        assert_eq!(
            classify_bound_by_name("Leader Election").unwrap(),
            classify_bound(ProblemKind::LeaderElection)
        );
        assert_eq!(
            classify_bound_by_name("ring_partition").unwrap(),
            BoundClass::Unbounded
        );
        assert!(classify_bound_by_name("sorting").is_err());
        let ks = classify_bound(ProblemKind::KnowledgeSharing);
        assert!(ks.admits(kb(4, 6)));
        assert!(!ks.admits(kb(4, 7)));
    }
}
