//! Index-sampling rules: the law of the update set `S` given the current
//! assignment.
//!
//! Units are 0-based. Cycle rules treat unit `m - 1` as adjacent to unit 0.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{Design, TreatmentVector};
use crate::error::{Error, Result};
use crate::util::binomial;

/// Default cap on the size of an enumerated rule support.
pub const DEFAULT_RULE_CAP: usize = 1 << 20;

/// A sorted set of unit indices without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct IndexSet {
    members: Vec<usize>,
}

impl IndexSet {
    /// Sorts and deduplicates.
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Like [`IndexSet::new`] but rejects duplicates and out-of-range entries.
    pub fn try_new(members: Vec<usize>, m: usize) -> Result<Self> {
        let len = members.len();
        let set = Self::new(members);
        if set.len() != len {
            return Err(Error::InvalidArgument("index set has duplicates".into()));
        }
        set.check_range(m)?;
        Ok(set)
    }

    pub fn from_mask(mask: u64) -> Self {
        Self {
            members: (0..64).filter(|j| mask >> j & 1 == 1).collect(),
        }
    }

    /// Panics if a member is 64 or larger.
    pub fn to_mask(&self) -> u64 {
        self.members.iter().fold(0u64, |acc, &j| {
            assert!(j < 64, "mask representation needs indices < 64");
            acc | 1 << j
        })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.members.iter()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    pub fn check_range(&self, m: usize) -> Result<()> {
        match self.members.last() {
            Some(&j) if j >= m => Err(Error::IndexOutOfRange { index: j, len: m }),
            _ => Ok(()),
        }
    }

    pub fn intersects(&self, other: &[usize]) -> bool {
        other.iter().any(|&j| self.contains(j))
    }
}

/// The law `μ_w` of the update set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IndexRule {
    /// One unit, uniformly.
    SingleUniform,
    /// A uniform subset of fixed size.
    UniformSubset { size: usize },
    /// `len` consecutive units on the cycle, with a uniform start.
    CycleBlock { len: usize },
    /// One block of the fixed partition `{0..len}, {len..2len}, ...`, uniformly.
    PartitionBlock { len: usize },
    /// One treated and one control unit, uniformly. Depends on `w`.
    TreatedControlPair,
    /// A fixed list of `(set, probability)` pairs, independent of `w`.
    /// Repeated sets are allowed; their masses add.
    Explicit(Vec<(IndexSet, f64)>),
}

impl IndexRule {
    /// Checks the rule against a unit count and a design.
    pub fn validate(&self, m: usize, design: &Design) -> Result<()> {
        if design.m() != m {
            return Err(Error::LengthMismatch {
                expected: design.m(),
                got: m,
            });
        }
        match self {
            IndexRule::SingleUniform => Ok(()),
            IndexRule::UniformSubset { size } | IndexRule::CycleBlock { len: size } => {
                if *size == 0 || *size > m {
                    Err(Error::InvalidRule(format!("size {size} outside 1..={m}")))
                } else {
                    Ok(())
                }
            }
            IndexRule::PartitionBlock { len } => {
                if *len == 0 || !m.is_multiple_of(*len) {
                    Err(Error::InvalidRule(format!(
                        "block length {len} does not divide {m}"
                    )))
                } else {
                    Ok(())
                }
            }
            IndexRule::TreatedControlPair => {
                if design.is_bernoulli() {
                    Err(Error::InvalidRule(
                        "treated/control pairs need a completely randomized design".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            IndexRule::Explicit(sets) => {
                let mut total = 0.0;
                for (s, p) in sets {
                    s.check_range(m)?;
                    if p.is_nan() || *p < 0.0 {
                        return Err(Error::InvalidRule(format!("negative mass {p}")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidRule(format!("masses sum to {total}")));
                }
                Ok(())
            }
        }
    }

    /// True when `μ_w` does not depend on `w`.
    pub fn is_w_independent(&self) -> bool {
        !matches!(self, IndexRule::TreatedControlPair)
    }

    pub fn sample<R: Rng + ?Sized>(&self, w: &TreatmentVector, rng: &mut R) -> Result<IndexSet> {
        let m = w.len();
        Ok(match self {
            IndexRule::SingleUniform => IndexSet {
                members: vec![rng.random_range(0..m)],
            },
            IndexRule::UniformSubset { size } => {
                IndexSet::new(sample_indices(rng, m, *size).into_vec())
            }
            IndexRule::CycleBlock { len } => cycle_block(rng.random_range(0..m), *len, m),
            IndexRule::PartitionBlock { len } => {
                let b = rng.random_range(0..m / len);
                IndexSet {
                    members: (b * len..(b + 1) * len).collect(),
                }
            }
            IndexRule::TreatedControlPair => {
                let (treated, control) = arms(w);
                if treated.is_empty() || control.is_empty() {
                    return Err(Error::NoTreatedControlPair);
                }
                let t = treated[rng.random_range(0..treated.len())];
                let c = control[rng.random_range(0..control.len())];
                IndexSet::new(vec![t, c])
            }
            IndexRule::Explicit(sets) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (s, p) in sets {
                    acc += p;
                    if u < acc {
                        return Ok(s.clone());
                    }
                }
                sets.iter()
                    .rev()
                    .find(|(_, p)| *p > 0.0)
                    .map(|(s, _)| s.clone())
                    .ok_or_else(|| Error::InvalidRule("rule has no mass".into()))?
            }
        })
    }

    /// `P(S = A | W = w)`.
    pub fn pmf(&self, w: &TreatmentVector, a: &IndexSet) -> f64 {
        let m = w.len();
        if a.check_range(m).is_err() {
            return 0.0;
        }
        match self {
            IndexRule::SingleUniform => {
                if a.len() == 1 {
                    1.0 / m as f64
                } else {
                    0.0
                }
            }
            IndexRule::UniformSubset { size } => {
                if a.len() == *size {
                    1.0 / binomial(m, *size)
                } else {
                    0.0
                }
            }
            IndexRule::CycleBlock { len } => {
                if a.len() != *len {
                    return 0.0;
                }
                // Count starts whose block equals A (all m when len == m).
                let hits = (0..m).filter(|&s| cycle_block(s, *len, m) == *a).count();
                hits as f64 / m as f64
            }
            IndexRule::PartitionBlock { len } => {
                let first = match a.members().first() {
                    Some(&f) => f,
                    None => return 0.0,
                };
                let is_block = a.len() == *len
                    && first % len == 0
                    && a.members().windows(2).all(|p| p[1] == p[0] + 1);
                if is_block {
                    *len as f64 / m as f64
                } else {
                    0.0
                }
            }
            IndexRule::TreatedControlPair => {
                let (treated, control) = arms(w);
                if a.len() == 2 {
                    let t = a.iter().filter(|&&j| w.get(j)).count();
                    if t == 1 {
                        return 1.0 / (treated.len() * control.len()) as f64;
                    }
                }
                0.0
            }
            IndexRule::Explicit(sets) => sets.iter().filter(|(s, _)| s == a).map(|(_, p)| p).sum(),
        }
    }

    /// Number of entries [`IndexRule::enumerate`] would return.
    pub fn support_size(&self, w: &TreatmentVector) -> u128 {
        let m = w.len();
        match self {
            IndexRule::SingleUniform => m as u128,
            IndexRule::UniformSubset { size } => binomial(m, *size).round() as u128,
            IndexRule::CycleBlock { .. } => m as u128,
            IndexRule::PartitionBlock { len } => (m / len) as u128,
            IndexRule::TreatedControlPair => {
                let ones = w.count_ones() as u128;
                ones * (m as u128 - ones)
            }
            IndexRule::Explicit(sets) => sets.len() as u128,
        }
    }

    pub fn enumerate(&self, w: &TreatmentVector) -> Result<Vec<(IndexSet, f64)>> {
        self.enumerate_capped(w, DEFAULT_RULE_CAP)
    }

    /// Every set in the support of `μ_w` with its probability. Cycle blocks
    /// are listed once per start, so `CycleBlock` always yields `m` entries.
    pub fn enumerate_capped(&self, w: &TreatmentVector, cap: usize) -> Result<Vec<(IndexSet, f64)>> {
        let size = self.support_size(w);
        if size > cap as u128 {
            return Err(Error::CapExceeded {
                size,
                cap: cap as u128,
            });
        }
        let m = w.len();
        Ok(match self {
            IndexRule::SingleUniform => (0..m)
                .map(|j| (IndexSet { members: vec![j] }, 1.0 / m as f64))
                .collect(),
            IndexRule::UniformSubset { size } => {
                let p = 1.0 / binomial(m, *size);
                let mut out = Vec::with_capacity(size_hint(m, *size));
                let mut combo: Vec<usize> = (0..*size).collect();
                loop {
                    out.push((IndexSet { members: combo.clone() }, p));
                    if !next_combination(&mut combo, m) {
                        break;
                    }
                }
                out
            }
            IndexRule::CycleBlock { len } => (0..m)
                .map(|s| (cycle_block(s, *len, m), 1.0 / m as f64))
                .collect(),
            IndexRule::PartitionBlock { len } => {
                let k = m / len;
                (0..k)
                    .map(|b| {
                        (
                            IndexSet {
                                members: (b * len..(b + 1) * len).collect(),
                            },
                            1.0 / k as f64,
                        )
                    })
                    .collect()
            }
            IndexRule::TreatedControlPair => {
                let (treated, control) = arms(w);
                if treated.is_empty() || control.is_empty() {
                    return Err(Error::NoTreatedControlPair);
                }
                let p = 1.0 / (treated.len() * control.len()) as f64;
                let mut out = Vec::with_capacity(treated.len() * control.len());
                for &t in &treated {
                    for &c in &control {
                        out.push((IndexSet::new(vec![t, c]), p));
                    }
                }
                out
            }
            IndexRule::Explicit(sets) => sets.iter().filter(|(_, p)| *p > 0.0).cloned().collect(),
        })
    }

    /// `P(j ∈ S)` for a rule independent of `w`.
    pub fn inclusion_prob(&self, j: usize, m: usize) -> Result<f64> {
        self.hit_prob(&[j], m)
    }

    /// `P(S ∩ A ≠ ∅)` for a rule independent of `w`.
    pub fn hit_prob(&self, a: &[usize], m: usize) -> Result<f64> {
        if !self.is_w_independent() {
            return Err(Error::Unsupported(
                "hit probabilities need a rule independent of W".into(),
            ));
        }
        let w = TreatmentVector::zeros(m);
        Ok(self
            .enumerate(&w)?
            .iter()
            .filter(|(s, _)| s.intersects(a))
            .map(|(_, p)| p)
            .sum())
    }

    /// If `P(S = A)` depends on `A` only through `|A|`, returns the total
    /// mass on each size `0..=m`. `None` otherwise, or when the rule depends
    /// on `w`.
    pub fn size_profile(&self, m: usize) -> Option<Vec<f64>> {
        if !self.is_w_independent() || m > 63 {
            return None;
        }
        let w = TreatmentVector::zeros(m);
        let support = self.enumerate(&w).ok()?;
        let mut by_set: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (s, p) in support {
            *by_set.entry(s.members).or_insert(0.0) += p;
        }
        let mut per_size: Vec<Vec<f64>> = vec![Vec::new(); m + 1];
        for (s, p) in by_set {
            per_size[s.len()].push(p);
        }
        let mut profile = vec![0.0; m + 1];
        for (k, probs) in per_size.iter().enumerate() {
            if probs.is_empty() {
                continue;
            }
            let full = binomial(m, k).round() as usize;
            let first = probs[0];
            let tol = 1e-12 * first.abs().max(1e-300);
            if probs.len() != full || probs.iter().any(|p| (p - first).abs() > tol) {
                return None;
            }
            profile[k] = probs.iter().sum();
        }
        Some(profile)
    }
}

fn cycle_block(start: usize, len: usize, m: usize) -> IndexSet {
    IndexSet::new((0..len).map(|k| (start + k) % m).collect())
}

fn arms(w: &TreatmentVector) -> (Vec<usize>, Vec<usize>) {
    (0..w.len()).partition(|&j| w.get(j))
}

fn size_hint(m: usize, k: usize) -> usize {
    binomial(m, k).min(DEFAULT_RULE_CAP as f64) as usize
}

/// Advances `combo` to the next k-subset of `0..m` in lexicographic order.
fn next_combination(combo: &mut [usize], m: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < m - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::new(v.to_vec())
    }

    #[test]
    fn index_set_basics() {
        let s = set(&[3, 1, 3]);
        assert_eq!(s.members(), &[1, 3]);
        assert!(IndexSet::try_new(vec![1, 1], 4).is_err());
        assert!(IndexSet::try_new(vec![4], 4).is_err());
        assert_eq!(IndexSet::from_mask(0b1010), set(&[1, 3]));
        assert_eq!(set(&[0, 2]).to_mask(), 0b101);
    }

    #[test]
    fn pmf_examples() {
        let w10 = TreatmentVector::zeros(10);
        // A wrap-around block of three on the 10-cycle.
        assert!((IndexRule::CycleBlock { len: 3 }.pmf(&w10, &set(&[9, 0, 1])) - 0.1).abs() < 1e-15);
        assert_eq!(IndexRule::CycleBlock { len: 3 }.pmf(&w10, &set(&[0, 2, 4])), 0.0);
        let w4 = TreatmentVector::zeros(4);
        assert!((IndexRule::UniformSubset { size: 2 }.pmf(&w4, &set(&[0, 2])) - 1.0 / 6.0).abs() < 1e-15);
        let w = TreatmentVector::from_bits(&[1, 1, 1, 0, 0]).unwrap();
        assert!((IndexRule::TreatedControlPair.pmf(&w, &set(&[1, 4])) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(IndexRule::TreatedControlPair.pmf(&w, &set(&[0, 1])), 0.0);
        let w6 = TreatmentVector::zeros(6);
        let pb = IndexRule::PartitionBlock { len: 2 };
        assert!((pb.pmf(&w6, &set(&[2, 3])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(pb.pmf(&w6, &set(&[1, 2])), 0.0);
    }

    #[test]
    fn enumeration_examples() {
        let w6 = TreatmentVector::zeros(6);
        let blocks = IndexRule::PartitionBlock { len: 2 }.enumerate(&w6).unwrap();
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|(_, p)| (p - 1.0 / 3.0).abs() < 1e-15));
        for len in 1..=6 {
            assert_eq!(IndexRule::CycleBlock { len }.enumerate(&w6).unwrap().len(), 6);
        }
        let w = TreatmentVector::from_bits(&[1, 1, 0, 0]).unwrap();
        let pairs = IndexRule::TreatedControlPair.enumerate(&w).unwrap();
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|(_, p)| *p == 0.25));
        let subsets = IndexRule::UniformSubset { size: 3 }.enumerate(&w6).unwrap();
        assert_eq!(subsets.len(), 20);
        assert_eq!(subsets[0].0, set(&[0, 1, 2]));
        assert_eq!(subsets[19].0, set(&[3, 4, 5]));
    }

    #[test]
    fn enumeration_respects_cap() {
        let w = TreatmentVector::zeros(30);
        assert!(matches!(
            IndexRule::UniformSubset { size: 15 }.enumerate(&w),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn validation() {
        let b = Design::bernoulli_uniform(6, 0.5).unwrap();
        let c = Design::completely_randomized(6, 3).unwrap();
        assert!(IndexRule::PartitionBlock { len: 4 }.validate(6, &b).is_err());
        assert!(IndexRule::PartitionBlock { len: 3 }.validate(6, &b).is_ok());
        assert!(IndexRule::CycleBlock { len: 7 }.validate(6, &b).is_err());
        assert!(IndexRule::UniformSubset { size: 0 }.validate(6, &b).is_err());
        assert!(IndexRule::TreatedControlPair.validate(6, &b).is_err());
        assert!(IndexRule::TreatedControlPair.validate(6, &c).is_ok());
        let bad = IndexRule::Explicit(vec![(set(&[0]), 0.5)]);
        assert!(bad.validate(6, &b).is_err());
    }

    #[test]
    fn size_profiles() {
        assert!(IndexRule::UniformSubset { size: 3 }.size_profile(6).is_some());
        assert!(IndexRule::SingleUniform.size_profile(6).is_some());
        assert!(IndexRule::CycleBlock { len: 2 }.size_profile(6).is_none());
        // Blocks of m - 1 on the cycle hit every (m-1)-subset once.
        assert!(IndexRule::CycleBlock { len: 5 }.size_profile(6).is_some());
        assert!(IndexRule::TreatedControlPair.size_profile(6).is_none());
        let with_empty = IndexRule::Explicit(vec![(IndexSet::empty(), 0.5), (set(&[0, 1]), 0.5)]);
        assert!(with_empty.size_profile(2).is_some());
    }

    #[test]
    fn sampling_matches_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = TreatmentVector::from_bits(&[1, 0, 1, 1, 0]).unwrap();
        let rules = [
            IndexRule::SingleUniform,
            IndexRule::UniformSubset { size: 2 },
            IndexRule::CycleBlock { len: 2 },
            IndexRule::PartitionBlock { len: 5 },
            IndexRule::TreatedControlPair,
            IndexRule::Explicit(vec![(IndexSet::empty(), 0.3), (set(&[1, 4]), 0.7)]),
        ];
        let draws = 100_000;
        for rule in rules {
            let support = rule.enumerate(&w).unwrap();
            let total: f64 = support.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mut counts: HashMap<IndexSet, usize> = HashMap::new();
            for _ in 0..draws {
                *counts.entry(rule.sample(&w, &mut rng).unwrap()).or_default() += 1;
            }
            for (s, _) in &support {
                let p = rule.pmf(&w, s);
                let freq = counts.get(s).copied().unwrap_or(0) as f64 / draws as f64;
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((freq - p).abs() <= 4.0 * se + 1e-12, "{rule:?} {s:?}");
            }
            let seen: f64 = counts.keys().map(|s| rule.pmf(&w, s)).sum();
            assert!((seen - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn w_independent_rules_ignore_w() {
        let rules = [
            IndexRule::SingleUniform,
            IndexRule::UniformSubset { size: 2 },
            IndexRule::CycleBlock { len: 3 },
            IndexRule::PartitionBlock { len: 2 },
        ];
        for rule in rules {
            let a = TreatmentVector::zeros(4);
            let b = TreatmentVector::from_bits(&[1, 0, 1, 1]).unwrap();
            assert_eq!(rule.enumerate(&a).unwrap(), rule.enumerate(&b).unwrap());
        }
    }

    #[test]
    fn treated_control_pair_single_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = TreatmentVector::from_bits(&[1, 0]).unwrap();
        for _ in 0..10 {
            assert_eq!(IndexRule::TreatedControlPair.sample(&w, &mut rng).unwrap(), set(&[0, 1]));
        }
        let all = TreatmentVector::ones(3);
        assert!(matches!(
            IndexRule::TreatedControlPair.sample(&all, &mut rng),
            Err(Error::NoTreatedControlPair)
        ));
    }
}
