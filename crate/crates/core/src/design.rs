//! Randomization designs on `{0,1}^m`.
//!
//! A [`Design`] is the known law of the treatment vector. Two families are
//! supported: independent Bernoulli assignment with unit-level probabilities,
//! and the completely randomized design with a fixed number of treated units.
//! Besides sampling and evaluating the mass function, the design knows how to
//! redraw a subset of coordinates from their conditional law given the rest,
//! which is the rerandomization step the variance estimator is built on.

use std::fmt;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indexrules::IndexSet;
use crate::util::binomial;

/// Default cap on the number of support states an exact enumeration may visit.
pub const DEFAULT_SUPPORT_CAP: usize = 1 << 20;

/// A binary assignment vector stored as packed bits.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreatmentVector {
    len: usize,
    words: Vec<u64>,
}

impl TreatmentVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut w = Self::zeros(len);
        for j in 0..len {
            w.set(j, true);
        }
        w
    }

    /// Builds a vector from 0/1 entries; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut w = Self::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => w.set(j, true),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "treatment entry {j} is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        Ok(w)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut w = Self::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            if b {
                w.set(j, true);
            }
        }
        w
    }

    /// Unit `j` is bit `j` of `mask`.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        assert!(len <= 64, "mask representation needs len <= 64");
        let mut w = Self::zeros(len);
        if len > 0 {
            let keep = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            w.words[0] = mask & keep;
        }
        w
    }

    pub fn to_mask(&self) -> Option<u64> {
        match self.words.len() {
            0 => Some(0),
            1 => Some(self.words[0]),
            _ => None,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, j: usize) -> bool {
        debug_assert!(j < self.len);
        (self.words[j >> 6] >> (j & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, j: usize, value: bool) {
        debug_assert!(j < self.len);
        let bit = 1u64 << (j & 63);
        if value {
            self.words[j >> 6] |= bit;
        } else {
            self.words[j >> 6] &= !bit;
        }
    }

    pub fn flip(&mut self, j: usize) {
        let v = self.get(j);
        self.set(j, !v);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |j| self.get(j))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.iter().map(u8::from).collect()
    }

    /// Number of treated units among `units`.
    pub fn count_ones_in(&self, units: &[usize]) -> usize {
        units.iter().filter(|&&j| self.get(j)).count()
    }

    /// True when `self` and `other` agree on every unit outside `set`.
    pub fn agrees_outside(&self, other: &TreatmentVector, set: &IndexSet) -> bool {
        if self.len != other.len {
            return false;
        }
        (0..self.len).all(|j| set.contains(j) || self.get(j) == other.get(j))
    }
}

impl fmt::Debug for TreatmentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TreatmentVector(")?;
        for b in self.iter() {
            write!(f, "{}", u8::from(b))?;
        }
        write!(f, ")")
    }
}

/// The two supported design families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignKind {
    Bernoulli { probs: Vec<f64> },
    CompletelyRandomized { m: usize, n1: usize },
}

/// A validated randomization design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    kind: DesignKind,
}

impl Design {
    /// Independent `Ber(probs[j])` assignment; every probability must lie in (0, 1).
    pub fn bernoulli(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDesign("Bernoulli design with no units".into()));
        }
        if let Some((j, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p < 1.0))
        {
            return Err(Error::InvalidDesign(format!(
                "unit {j} has probability {p}, must be in (0, 1)"
            )));
        }
        Ok(Self {
            kind: DesignKind::Bernoulli { probs },
        })
    }

    pub fn bernoulli_uniform(m: usize, p: f64) -> Result<Self> {
        Self::bernoulli(vec![p; m])
    }

    /// Uniform over assignments with exactly `n1` treated units, `1 <= n1 <= m - 1`.
    pub fn completely_randomized(m: usize, n1: usize) -> Result<Self> {
        if m < 2 || n1 == 0 || n1 >= m {
            return Err(Error::InvalidDesign(format!(
                "completely randomized design needs 1 <= n1 <= m - 1 (m = {m}, n1 = {n1})"
            )));
        }
        Ok(Self {
            kind: DesignKind::CompletelyRandomized { m, n1 },
        })
    }

    pub fn kind(&self) -> &DesignKind {
        &self.kind
    }

    pub fn m(&self) -> usize {
        match &self.kind {
            DesignKind::Bernoulli { probs } => probs.len(),
            DesignKind::CompletelyRandomized { m, .. } => *m,
        }
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self.kind, DesignKind::Bernoulli { .. })
    }

    /// Marginal treatment probability of unit `j`.
    pub fn marginal(&self, j: usize) -> f64 {
        match &self.kind {
            DesignKind::Bernoulli { probs } => probs[j],
            DesignKind::CompletelyRandomized { m, n1 } => *n1 as f64 / *m as f64,
        }
    }

    fn check_len(&self, w: &TreatmentVector) -> Result<()> {
        if w.len() != self.m() {
            return Err(Error::LengthMismatch {
                expected: self.m(),
                got: w.len(),
            });
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TreatmentVector {
        match &self.kind {
            DesignKind::Bernoulli { probs } => {
                let mut w = TreatmentVector::zeros(probs.len());
                for (j, &p) in probs.iter().enumerate() {
                    if rng.random::<f64>() < p {
                        w.set(j, true);
                    }
                }
                w
            }
            DesignKind::CompletelyRandomized { m, n1 } => {
                let mut w = TreatmentVector::zeros(*m);
                for j in sample_indices(rng, *m, *n1) {
                    w.set(j, true);
                }
                w
            }
        }
    }

    /// Probability mass `π(w)`.
    pub fn pmf(&self, w: &TreatmentVector) -> Result<f64> {
        self.check_len(w)?;
        Ok(match &self.kind {
            DesignKind::Bernoulli { probs } => probs
                .iter()
                .enumerate()
                .map(|(j, &p)| if w.get(j) { p } else { 1.0 - p })
                .product(),
            DesignKind::CompletelyRandomized { m, n1 } => {
                if w.count_ones() == *n1 {
                    1.0 / binomial(*m, *n1)
                } else {
                    0.0
                }
            }
        })
    }

    /// Number of states with positive mass.
    pub fn support_size(&self) -> u128 {
        match &self.kind {
            DesignKind::Bernoulli { probs } => {
                if probs.len() >= 127 {
                    u128::MAX
                } else {
                    1u128 << probs.len()
                }
            }
            DesignKind::CompletelyRandomized { m, n1 } => binomial(*m, *n1).round() as u128,
        }
    }

    /// All support states in lexicographic order, using the default cap.
    pub fn enumerate_support(&self) -> Result<Vec<TreatmentVector>> {
        self.enumerate_support_capped(DEFAULT_SUPPORT_CAP)
    }

    /// All `w` with `π(w) > 0`, each once, in lexicographic order of the bit
    /// string `(w_1, ..., w_m)`.
    pub fn enumerate_support_capped(&self, cap: usize) -> Result<Vec<TreatmentVector>> {
        let size = self.support_size();
        if size > cap as u128 || self.m() > 64 {
            return Err(Error::CapExceeded {
                size,
                cap: cap as u128,
            });
        }
        let m = self.m();
        Ok(self
            .support_masks()
            .into_iter()
            .map(|mask| TreatmentVector::from_mask(m, mask))
            .collect())
    }

    /// Support as bit masks (unit `j` is bit `j`), lexicographic in `(w_1, ..., w_m)`.
    /// Callers must have checked the cap.
    pub(crate) fn support_masks(&self) -> Vec<u64> {
        let m = self.m();
        // Lexicographic order with w_1 most significant: walk the reversed
        // integer and map it back.
        let rev = |x: u64| -> u64 {
            if m == 0 {
                0
            } else {
                x.reverse_bits() >> (64 - m)
            }
        };
        match &self.kind {
            DesignKind::Bernoulli { .. } => (0..(1u64 << m)).map(rev).collect(),
            DesignKind::CompletelyRandomized { n1, .. } => {
                let mut out = Vec::with_capacity(binomial(m, *n1) as usize);
                for_each_popcount_mask(m, *n1, |x| out.push(rev(x)));
                out
            }
        }
    }

    /// Draws `W'` with `W'_{-S} = W_{-S}` and `W'_S` from the conditional law of
    /// `W_S` given `W_{-S}`.
    pub fn gibbs_rerandomize<R: Rng + ?Sized>(
        &self,
        w: &TreatmentVector,
        set: &IndexSet,
        rng: &mut R,
    ) -> Result<TreatmentVector> {
        self.check_len(w)?;
        set.check_range(self.m())?;
        let mut out = w.clone();
        match &self.kind {
            DesignKind::Bernoulli { probs } => {
                for &j in set.iter() {
                    out.set(j, rng.random::<f64>() < probs[j]);
                }
            }
            DesignKind::CompletelyRandomized { n1, .. } => {
                let inside = set.len();
                let k = self.treated_to_place(w, set, *n1)?;
                for &j in set.iter() {
                    out.set(j, false);
                }
                for pos in sample_indices(rng, inside, k) {
                    out.set(set.members()[pos], true);
                }
            }
        }
        Ok(out)
    }

    fn treated_to_place(&self, w: &TreatmentVector, set: &IndexSet, n1: usize) -> Result<usize> {
        let outside = w.count_ones() - w.count_ones_in(set.members());
        if outside > n1 || n1 - outside > set.len() {
            return Err(Error::EmptyConditional(format!(
                "{outside} treated outside a set of size {} with n1 = {n1}",
                set.len()
            )));
        }
        Ok(n1 - outside)
    }

    /// Probability that rerandomizing `set` maps `w` to `w_prime`.
    pub fn conditional_pmf(
        &self,
        set: &IndexSet,
        w: &TreatmentVector,
        w_prime: &TreatmentVector,
    ) -> Result<f64> {
        self.check_len(w)?;
        self.check_len(w_prime)?;
        set.check_range(self.m())?;
        if !w.agrees_outside(w_prime, set) {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            DesignKind::Bernoulli { probs } => set
                .iter()
                .map(|&j| {
                    if w_prime.get(j) {
                        probs[j]
                    } else {
                        1.0 - probs[j]
                    }
                })
                .product(),
            DesignKind::CompletelyRandomized { n1, .. } => {
                let k = self.treated_to_place(w, set, *n1)?;
                if w_prime.count_ones_in(set.members()) == k {
                    1.0 / binomial(set.len(), k)
                } else {
                    0.0
                }
            }
        })
    }

    /// The full conditional law of `W_S` given `W_{-S} = w_{-S}`, as
    /// `(completion mask, probability)` pairs. Requires `m <= 64`.
    pub(crate) fn conditional_law_masks(&self, set_mask: u64, w_mask: u64) -> Result<Vec<(u64, f64)>> {
        let base = w_mask & !set_mask;
        let members: Vec<usize> = (0..64).filter(|j| set_mask >> j & 1 == 1).collect();
        match &self.kind {
            DesignKind::Bernoulli { probs } => {
                if members.len() > 30 {
                    return Err(Error::CapExceeded {
                        size: 1u128 << members.len(),
                        cap: 1 << 30,
                    });
                }
                let mut out = Vec::with_capacity(1 << members.len());
                for bits in 0u64..(1u64 << members.len()) {
                    let mut mask = base;
                    let mut p = 1.0;
                    for (b, &j) in members.iter().enumerate() {
                        if bits >> b & 1 == 1 {
                            mask |= 1 << j;
                            p *= probs[j];
                        } else {
                            p *= 1.0 - probs[j];
                        }
                    }
                    out.push((mask, p));
                }
                Ok(out)
            }
            DesignKind::CompletelyRandomized { n1, .. } => {
                let outside = base.count_ones() as usize;
                if outside > *n1 || n1 - outside > members.len() {
                    return Err(Error::EmptyConditional(format!(
                        "{outside} treated outside a set of size {} with n1 = {n1}",
                        members.len()
                    )));
                }
                let k = n1 - outside;
                let p = 1.0 / binomial(members.len(), k);
                let mut out = Vec::new();
                for_each_popcount_mask(members.len(), k, |bits| {
                    let mut mask = base;
                    for (b, &j) in members.iter().enumerate() {
                        if bits >> b & 1 == 1 {
                            mask |= 1 << j;
                        }
                    }
                    out.push((mask, p));
                });
                Ok(out)
            }
        }
    }

    /// Conditional law of `W_S` given `w_{-S}` as full vectors.
    pub fn conditional_law(
        &self,
        set: &IndexSet,
        w: &TreatmentVector,
    ) -> Result<Vec<(TreatmentVector, f64)>> {
        self.check_len(w)?;
        set.check_range(self.m())?;
        let w_mask = w.to_mask().ok_or(Error::CapExceeded {
            size: 1u128 << 64.min(w.len()),
            cap: 1 << 64,
        })?;
        let m = self.m();
        Ok(self
            .conditional_law_masks(set.to_mask(), w_mask)?
            .into_iter()
            .map(|(mask, p)| (TreatmentVector::from_mask(m, mask), p))
            .collect())
    }
}

/// Calls `f` on every `n`-bit integer with exactly `k` ones, in increasing order.
pub(crate) fn for_each_popcount_mask(n: usize, k: usize, mut f: impl FnMut(u64)) {
    if k > n {
        return;
    }
    if k == 0 {
        f(0);
        return;
    }
    let limit: u128 = 1u128 << n;
    let mut x: u128 = (1u128 << k) - 1;
    // Gosper's hack, in u128 so a full 64-bit width cannot overflow.
    while x < limit {
        f(x as u64);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tv(bits: &[u8]) -> TreatmentVector {
        TreatmentVector::from_bits(bits).unwrap()
    }

    #[test]
    fn rejects_degenerate_designs() {
        assert!(Design::bernoulli(vec![0.5, 1.0]).is_err());
        assert!(Design::bernoulli(vec![0.0]).is_err());
        assert!(Design::completely_randomized(4, 4).is_err());
        assert!(Design::completely_randomized(4, 0).is_err());
        assert!(Design::completely_randomized(4, 3).is_ok());
    }

    #[test]
    fn treatment_vector_rejects_non_binary() {
        assert!(TreatmentVector::from_bits(&[0, 2]).is_err());
        let w = tv(&[1, 0, 1]);
        assert_eq!(w.count_ones(), 2);
        assert_eq!(w.to_bits(), vec![1, 0, 1]);
    }

    #[test]
    fn wide_vectors_pack_across_words() {
        let mut w = TreatmentVector::zeros(130);
        w.set(0, true);
        w.set(64, true);
        w.set(129, true);
        assert_eq!(w.count_ones(), 3);
        assert!(w.get(129) && !w.get(128));
        assert_eq!(w.to_mask(), None);
    }

    #[test]
    fn pmf_examples() {
        let d = Design::bernoulli(vec![0.5, 0.5]).unwrap();
        assert_eq!(d.pmf(&tv(&[1, 0])).unwrap(), 0.25);
        let crd = Design::completely_randomized(4, 2).unwrap();
        assert!((crd.pmf(&tv(&[1, 1, 0, 0])).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(crd.pmf(&tv(&[1, 1, 1, 0])).unwrap(), 0.0);
        assert!(matches!(
            crd.pmf(&tv(&[1, 0])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn enumeration_sizes_and_order() {
        let d = Design::bernoulli_uniform(3, 0.3).unwrap();
        let s = d.enumerate_support().unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].to_bits(), vec![0, 0, 0]);
        assert_eq!(s[1].to_bits(), vec![0, 0, 1]);
        assert_eq!(s[7].to_bits(), vec![1, 1, 1]);
        let crd = Design::completely_randomized(4, 2).unwrap();
        let s = crd.enumerate_support().unwrap();
        let bits: Vec<Vec<u8>> = s.iter().map(|w| w.to_bits()).collect();
        assert_eq!(
            bits,
            vec![
                vec![0, 0, 1, 1],
                vec![0, 1, 0, 1],
                vec![0, 1, 1, 0],
                vec![1, 0, 0, 1],
                vec![1, 0, 1, 0],
                vec![1, 1, 0, 0]
            ]
        );
        let total: f64 = s.iter().map(|w| crd.pmf(w).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_respects_cap() {
        let d = Design::bernoulli_uniform(12, 0.5).unwrap();
        assert!(matches!(
            d.enumerate_support_capped(1000),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn popcount_masks_cover_full_width() {
        let mut seen = Vec::new();
        for_each_popcount_mask(5, 5, |x| seen.push(x));
        assert_eq!(seen, vec![0b11111]);
        let mut count = 0;
        for_each_popcount_mask(10, 4, |x| {
            assert_eq!(x.count_ones(), 4);
            assert!(x < 1024);
            count += 1;
        });
        assert_eq!(count, 210);
    }

    #[test]
    fn crd_sampling_conserves_count() {
        let d = Design::completely_randomized(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert_eq!(d.sample(&mut rng).count_ones(), 2);
        }
    }

    #[test]
    fn bernoulli_sampling_frequencies() {
        let d = Design::bernoulli(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let w = d.sample(&mut rng);
            counts[w.to_mask().unwrap() as usize] += 1;
        }
        let se = (0.25f64 * 0.75 / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 4.0 * se);
        }
        let skew = Design::bernoulli(vec![0.999, 0.2]).unwrap();
        let mut ones = [0usize; 2];
        for _ in 0..draws {
            let w = skew.sample(&mut rng);
            for (j, slot) in ones.iter_mut().enumerate() {
                *slot += usize::from(w.get(j));
            }
        }
        for (j, p) in [0.999, 0.2].into_iter().enumerate() {
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((ones[j] as f64 / draws as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn gibbs_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let crd = Design::completely_randomized(4, 2).unwrap();
        let w = tv(&[1, 1, 0, 0]);
        let empty = IndexSet::empty();
        assert_eq!(crd.gibbs_rerandomize(&w, &empty, &mut rng).unwrap(), w);
        let s = IndexSet::new(vec![0, 1]);
        for _ in 0..50 {
            assert_eq!(crd.gibbs_rerandomize(&w, &s, &mut rng).unwrap(), w);
        }
        // Step 2 draws are independent of the current value.
        let b = Design::bernoulli(vec![0.5]).unwrap();
        let s = IndexSet::new(vec![0]);
        let draws = 100_000;
        let mut same = 0;
        for i in 0..draws {
            let w = TreatmentVector::from_mask(1, (i % 2) as u64);
            let w2 = b.gibbs_rerandomize(&w, &s, &mut rng).unwrap();
            same += usize::from(w2 == w);
        }
        let se = (0.25f64 / draws as f64).sqrt();
        assert!((same as f64 / draws as f64 - 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn conditional_pmf_examples() {
        let crd = Design::completely_randomized(4, 2).unwrap();
        let w = tv(&[1, 0, 1, 0]);
        let s = IndexSet::new(vec![0, 1]);
        // One treated slot among two positions.
        assert_eq!(crd.conditional_pmf(&s, &w, &tv(&[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(crd.conditional_pmf(&s, &w, &tv(&[0, 1, 1, 0])).unwrap(), 0.5);
        assert_eq!(crd.conditional_pmf(&s, &w, &tv(&[1, 1, 0, 0])).unwrap(), 0.0);
        let b = Design::bernoulli(vec![0.3, 0.6, 0.8]).unwrap();
        let w = tv(&[0, 0, 0]);
        let s = IndexSet::new(vec![1]);
        assert!((b.conditional_pmf(&s, &w, &tv(&[0, 1, 0])).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(b.conditional_pmf(&s, &w, &tv(&[1, 1, 0])).unwrap(), 0.0);
    }

    #[test]
    fn conditional_rows_sum_to_one() {
        for design in [
            Design::bernoulli(vec![0.2, 0.7, 0.5, 0.9]).unwrap(),
            Design::completely_randomized(5, 2).unwrap(),
        ] {
            for w in design.enumerate_support().unwrap() {
                for mask in 0u64..(1 << design.m()) {
                    let s = IndexSet::from_mask(mask);
                    let total: f64 = design
                        .conditional_law(&s, &w)
                        .unwrap()
                        .iter()
                        .map(|(_, p)| p)
                        .sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gibbs_frequencies_match_conditional_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cases = [
            (
                Design::bernoulli(vec![0.2, 0.7, 0.4]).unwrap(),
                tv(&[1, 0, 1]),
                IndexSet::new(vec![0, 2]),
            ),
            (
                Design::completely_randomized(5, 2).unwrap(),
                tv(&[1, 0, 0, 1, 0]),
                IndexSet::new(vec![0, 1, 2]),
            ),
        ];
        let draws = 100_000;
        for (design, w, s) in cases {
            let law = design.conditional_law(&s, &w).unwrap();
            let mut counts = vec![0usize; law.len()];
            for _ in 0..draws {
                let w2 = design.gibbs_rerandomize(&w, &s, &mut rng).unwrap();
                if !design.is_bernoulli() {
                    assert_eq!(w2.count_ones(), w.count_ones());
                }
                let idx = law.iter().position(|(v, _)| *v == w2).unwrap();
                counts[idx] += 1;
            }
            for ((_, p), c) in law.iter().zip(counts) {
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((c as f64 / draws as f64 - p).abs() <= 4.0 * se + 1e-12);
            }
        }
    }
}
