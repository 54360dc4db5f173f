//! Binary feature masks and the gradient-guided local search over them.
//!
//! A [`Mask`] marks `s` of `d` features. Search is driven by a
//! [`SubsetScorer`], a differentiable predictor of operator loss for a mask.
//! Importance is the *negated* input gradient of that prediction: a feature
//! whose inclusion lowers predicted loss gets a positive score.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FirError, Result};

/// Restarts of the validation loop before the search gives up on certifying.
pub const MAX_VALIDATION_RESTARTS: usize = 5;

/// Fixed-width bit set of `d` features.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    words: Vec<u64>,
    len: usize,
}

impl Mask {
    pub fn zeros(len: usize) -> Self {
        Mask {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut m = Mask::zeros(len);
        for &i in indices {
            if i >= len {
                return Err(FirError::Argument(format!(
                    "index {i} out of range for a mask of length {len}"
                )));
            }
            m.set(i, true);
        }
        Ok(m)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut m = Mask::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            m.set(i, b);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        let bit = 1u64 << (i % 64);
        if on {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }

    pub fn zeros_indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| !self.get(i)).collect()
    }

    pub fn complement(&self) -> Mask {
        let mut m = Mask::zeros(self.len);
        for i in 0..self.len {
            m.set(i, !self.get(i));
        }
        m
    }

    pub fn hamming(&self, other: &Mask) -> usize {
        assert_eq!(self.len, other.len, "mask lengths differ");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// 0/1 as reals.
    pub fn to_reals(&self) -> Vec<f64> {
        (0..self.len).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_bitstring(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({})", self.to_bitstring())
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

impl FromStr for Mask {
    type Err = FirError;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(FirError::Argument(format!("invalid mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mask::from_bools(&bits))
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bitstring())
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-feature importance; larger means more important.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImportanceScores(pub Vec<f64>);

impl ImportanceScores {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Indices ordered by descending score, lower index first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]));
        idx
    }

    /// Ranking restricted to the given indices.
    pub fn rank_subset(&self, indices: &[usize]) -> Vec<usize> {
        let mut idx = indices.to_vec();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }
}

/// A differentiable predictor of operator loss over (relaxed) masks.
pub trait SubsetScorer {
    fn input_dim(&self) -> usize;

    /// Predicted loss at a point of `[0, 1]^d`.
    fn predict_point(&self, m: &[f64]) -> Result<f64>;

    /// `∂f/∂m` at a point of `[0, 1]^d`.
    fn gradient_at(&self, m: &[f64]) -> Result<Vec<f64>>;

    fn predict_mask(&self, m: &Mask) -> Result<f64> {
        self.predict_point(&m.to_reals())
    }

    /// Negated input gradient.
    fn importance(&self, m: &[f64]) -> Result<ImportanceScores> {
        Ok(ImportanceScores(
            self.gradient_at(m)?.into_iter().map(|g| -g).collect(),
        ))
    }
}

fn check_subset_size(d: usize, s: usize) -> Result<()> {
    if s == 0 || s >= d {
        return Err(FirError::Argument(format!(
            "subset size must satisfy 0 < s < d, got s={s}, d={d}"
        )));
    }
    Ok(())
}

/// Uniformly random mask with exactly `s` of `d` bits set.
pub fn random_mask<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Result<Mask> {
    check_subset_size(d, s)?;
    let mut m = Mask::zeros(d);
    for i in sample(rng, d, s).into_iter() {
        m.set(i, true);
    }
    Ok(m)
}

/// Swaps `s_p` random selected features with `s_p` random unselected ones.
pub fn perturb<R: Rng + ?Sized>(m: &Mask, s_p: usize, rng: &mut R) -> Result<Mask> {
    let ones = m.ones();
    let zeros = m.zeros_indices();
    if s_p >= ones.len() && s_p > 0 {
        return Err(FirError::Argument(format!(
            "perturbation size {s_p} must be below the subset size {}",
            ones.len()
        )));
    }
    if s_p > zeros.len() {
        return Err(FirError::Argument(format!(
            "perturbation size {s_p} exceeds the {} unselected features",
            zeros.len()
        )));
    }
    let mut out = m.clone();
    for k in sample(rng, ones.len(), s_p).into_iter() {
        out.set(ones[k], false);
    }
    for k in sample(rng, zeros.len(), s_p).into_iter() {
        out.set(zeros[k], true);
    }
    Ok(out)
}

/// The `s` highest-scoring features and the complement.
pub fn top_s_from_scores(scores: &ImportanceScores, s: usize) -> Result<(Mask, Mask)> {
    let d = scores.len();
    check_subset_size(d, s)?;
    let ranking = scores.ranking();
    let top = Mask::from_indices(d, &ranking[..s])?;
    let rest = top.complement();
    Ok((top, rest))
}

/// The selected feature ranked last and the unselected feature ranked first.
fn swap_pair(selected: &Mask, scores: &ImportanceScores) -> Option<(usize, usize)> {
    let ranking = scores.ranking();
    let least = ranking.iter().rev().copied().find(|&i| selected.get(i))?;
    let best = ranking.iter().copied().find(|&i| !selected.get(i))?;
    Some((least, best))
}

/// Exchanges the least important selected feature for the most important
/// unselected one.
pub fn swap_extremes(m_opt: &Mask, m_bar: &Mask, scores: &ImportanceScores) -> Result<Mask> {
    if m_opt.len() != m_bar.len() || m_opt.len() != scores.len() {
        return Err(FirError::Argument(format!(
            "length mismatch: masks {} / {}, scores {}",
            m_opt.len(),
            m_bar.len(),
            scores.len()
        )));
    }
    if m_opt.hamming(m_bar) != m_opt.len() {
        return Err(FirError::Argument("masks are not complementary".into()));
    }
    let (least, best) = swap_pair(m_opt, scores)
        .ok_or_else(|| FirError::Argument("nothing to swap in a full or empty mask".into()))?;
    let mut out = m_opt.clone();
    out.set(least, false);
    out.set(best, true);
    Ok(out)
}

/// Which exchanges the final swap test of the validation loop tries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapScope {
    /// Only the weakest selected feature against the strongest unselected one.
    Extreme,
    /// The extreme pair first, then every other one-swap exchange, so an
    /// accepted mask has no better neighbour. Costs up to `s·(d − s)`
    /// predictions per pass.
    #[default]
    Neighbourhood,
}

/// Result of [`generate_optimal_mask`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalMask {
    pub mask: Mask,
    /// Importance evaluated at `mask`.
    pub scores: ImportanceScores,
    pub restarts: usize,
    /// The swap test accepted `mask` (as opposed to hitting the restart cap).
    pub converged: bool,
}

/// Gradient-guided search for a mask of `s` features that the scorer
/// predicts to be locally optimal.
///
/// Starts from the top `s` features by importance at `(½, …, ½)`, then runs
/// the validation loop: re-score at the current mask, try replacing selected
/// features that have negative importance, and finally test swaps, starting
/// with the weakest selected feature against the strongest unselected one
/// (see [`SwapScope`]). Any accepted change restarts the loop, at most
/// [`MAX_VALIDATION_RESTARTS`] times.
pub fn generate_optimal_mask<S: SubsetScorer + ?Sized>(
    scorer: &S,
    d: usize,
    s: usize,
) -> Result<OptimalMask> {
    generate_optimal_mask_with(scorer, d, s, SwapScope::default())
}

/// [`generate_optimal_mask`] with an explicit swap-test scope.
pub fn generate_optimal_mask_with<S: SubsetScorer + ?Sized>(
    scorer: &S,
    d: usize,
    s: usize,
    scope: SwapScope,
) -> Result<OptimalMask> {
    check_subset_size(d, s)?;
    if scorer.input_dim() != d {
        return Err(FirError::Config(format!(
            "scorer takes {} inputs, expected {d}",
            scorer.input_dim()
        )));
    }

    let start = scorer.importance(&vec![0.5; d])?;
    let (mut current, _) = top_s_from_scores(&start, s)?;
    let mut restarts = 0;

    loop {
        // (i) re-evaluate contributions at the current mask
        let scores = scorer.importance(&current.to_reals())?;
        let current_loss = scorer.predict_mask(&current)?;
        let ranking = scores.ranking();
        let unselected: Vec<usize> = ranking.iter().copied().filter(|&i| !current.get(i)).collect();

        // (ii) replace selected features with negative importance, most negative first
        let mut negatives: Vec<usize> = current
            .ones()
            .into_iter()
            .filter(|&i| scores.0[i] < 0.0)
            .collect();
        negatives.sort_by(|&a, &b| scores.0[a].total_cmp(&scores.0[b]).then(a.cmp(&b)));

        let mut candidate = current.clone();
        let mut candidate_loss = current_loss;
        let mut next_in = 0;
        for &out in &negatives {
            let Some(&inc) = unselected.get(next_in) else {
                break;
            };
            let mut trial = candidate.clone();
            trial.set(out, false);
            trial.set(inc, true);
            let trial_loss = scorer.predict_mask(&trial)?;
            if trial_loss < candidate_loss {
                candidate = trial;
                candidate_loss = trial_loss;
                next_in += 1;
            }
        }
        if next_in > 0 {
            current = candidate;
            if restarts == MAX_VALIDATION_RESTARTS {
                return finish(scorer, current, restarts, false);
            }
            restarts += 1;
            continue;
        }

        // (iii) swap test: the extreme pair first, then (for the full
        // scope) the remaining pairs in gradient order
        let rest = current.complement();
        let mut improved = None;
        let swapped = swap_extremes(&current, &rest, &scores)?;
        if scorer.predict_mask(&swapped)? < current_loss {
            improved = Some(swapped);
        } else if scope == SwapScope::Neighbourhood {
            let selected_asc: Vec<usize> = ranking.iter().rev().copied().filter(|&i| current.get(i)).collect();
            'search: for &out in &selected_asc {
                for &inc in &unselected {
                    let mut trial = current.clone();
                    trial.set(out, false);
                    trial.set(inc, true);
                    if scorer.predict_mask(&trial)? < current_loss {
                        improved = Some(trial);
                        break 'search;
                    }
                }
            }
        }
        let Some(next) = improved else {
            return Ok(OptimalMask {
                mask: current,
                scores,
                restarts,
                converged: true,
            });
        };
        current = next;
        if restarts == MAX_VALIDATION_RESTARTS {
            return finish(scorer, current, restarts, false);
        }
        restarts += 1;
    }
}

fn finish<S: SubsetScorer + ?Sized>(
    scorer: &S,
    mask: Mask,
    restarts: usize,
    converged: bool,
) -> Result<OptimalMask> {
    let scores = scorer.importance(&mask.to_reals())?;
    Ok(OptimalMask {
        mask,
        scores,
        restarts,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// f(m) = Σ c_i m_i + k
    struct Linear {
        c: Vec<f64>,
        k: f64,
    }

    impl SubsetScorer for Linear {
        fn input_dim(&self) -> usize {
            self.c.len()
        }
        fn predict_point(&self, m: &[f64]) -> Result<f64> {
            Ok(self.k + self.c.iter().zip(m).map(|(a, b)| a * b).sum::<f64>())
        }
        fn gradient_at(&self, _m: &[f64]) -> Result<Vec<f64>> {
            Ok(self.c.clone())
        }
    }

    fn scores(v: &[f64]) -> ImportanceScores {
        ImportanceScores(v.to_vec())
    }

    #[test]
    fn bitstring_round_trip() {
        let m: Mask = "0101100".parse().unwrap();
        assert_eq!(m.ones(), vec![1, 3, 4]);
        assert_eq!(m.to_string(), "0101100");
        assert!("01x".parse::<Mask>().is_err());
        let wide = Mask::from_indices(130, &[0, 64, 129]).unwrap();
        assert_eq!(wide.to_string().parse::<Mask>().unwrap(), wide);
        assert_eq!(wide.count_ones(), 3);
    }

    #[test]
    fn random_mask_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_mask(3, 3, &mut rng).is_err());
        assert!(random_mask(3, 0, &mut rng).is_err());
        for _ in 0..50 {
            assert_eq!(random_mask(10, 5, &mut rng).unwrap().count_ones(), 5);
        }
    }

    #[test]
    fn random_mask_is_uniform_over_positions() {
        // Binomial(10000, 1/5): σ = 40, so ±200 is a 5σ band.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            let m = random_mask(5, 1, &mut rng).unwrap();
            counts[m.ones()[0]] += 1;
        }
        for c in counts {
            assert!((1800..=2200).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn perturb_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m: Mask = "11100".parse().unwrap();
        assert_eq!(perturb(&m, 0, &mut rng).unwrap(), m);
        let p = perturb(&m, 1, &mut rng).unwrap();
        assert_eq!(p.count_ones(), 3);
        assert_eq!(p.hamming(&m), 2);
        assert!(perturb(&m, 3, &mut rng).is_err());

        let m = random_mask(10, 5, &mut rng).unwrap();
        for _ in 0..1000 {
            let p = perturb(&m, 2, &mut rng).unwrap();
            assert_eq!(p.hamming(&m), 4);
            assert_eq!(p.count_ones(), 5);
        }
        // s_p must not exceed the unselected count
        let m: Mask = "11110".parse().unwrap();
        assert!(perturb(&m, 2, &mut rng).is_err());
    }

    #[test]
    fn top_s_examples() {
        let (top, rest) = top_s_from_scores(&scores(&[0.3, -0.1, 0.9, 0.2]), 2).unwrap();
        assert_eq!(top.ones(), vec![0, 2]);
        assert_eq!(rest.ones(), vec![1, 3]);
        let (top, _) = top_s_from_scores(&scores(&[1.0, 1.0, 0.0]), 1).unwrap();
        assert_eq!(top.ones(), vec![0]);
        let (top, _) = top_s_from_scores(&scores(&[0.5; 4]), 2).unwrap();
        assert_eq!(top.ones(), vec![0, 1]);
    }

    #[test]
    fn swap_examples() {
        let sc = scores(&[0.3, -0.1, 0.9, 0.2]);
        let m = Mask::from_indices(4, &[2, 0]).unwrap();
        let swapped = swap_extremes(&m, &m.complement(), &sc).unwrap();
        assert_eq!(swapped.ones(), vec![2, 3]);
        let back = swap_extremes(&swapped, &swapped.complement(), &sc).unwrap();
        assert_eq!(back, m);

        let m = Mask::from_indices(2, &[0]).unwrap();
        let swapped = swap_extremes(&m, &m.complement(), &scores(&[1.0, 0.0])).unwrap();
        assert_eq!(swapped.ones(), vec![1]);

        assert!(swap_extremes(&m, &m, &scores(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn optimal_mask_for_linear_scorer() {
        let scorer = Linear {
            c: vec![5.0, 1.0, 4.0, 2.0, 3.0],
            k: 0.0,
        };
        let out = generate_optimal_mask(&scorer, 5, 2).unwrap();
        assert_eq!(out.mask.ones(), vec![1, 3]);
        assert_eq!(out.scores.0, vec![-5.0, -1.0, -4.0, -2.0, -3.0]);
        assert!(out.converged);
        assert_eq!(out.restarts, 0);
    }

    #[test]
    fn optimal_mask_for_constant_scorer() {
        let scorer = Linear {
            c: vec![0.0; 6],
            k: 0.7,
        };
        let out = generate_optimal_mask(&scorer, 6, 3).unwrap();
        assert_eq!(out.mask.ones(), vec![0, 1, 2]);
        assert!(out.scores.0.iter().all(|&v| v == 0.0));
        assert_eq!(out.restarts, 0);
        assert!(out.converged);
    }

    #[test]
    fn optimal_mask_rejects_wrong_scorer_width() {
        let scorer = Linear {
            c: vec![1.0; 4],
            k: 0.0,
        };
        assert!(matches!(
            generate_optimal_mask(&scorer, 5, 2),
            Err(FirError::Config(_))
        ));
    }

    /// Gradient points the wrong way at the start; the validation loop has to
    /// repair the initial pick through predicted losses.
    struct Misleading;

    impl SubsetScorer for Misleading {
        fn input_dim(&self) -> usize {
            4
        }
        fn predict_point(&self, m: &[f64]) -> Result<f64> {
            // true optimum at {2, 3}
            Ok(m[0] + m[1] - m[2] - m[3])
        }
        fn gradient_at(&self, m: &[f64]) -> Result<Vec<f64>> {
            if m.iter().all(|&v| v == 0.5) {
                Ok(vec![-1.0, -1.0, 1.0, 1.0])
            } else {
                Ok(vec![1.0, 1.0, -1.0, -1.0])
            }
        }
    }

    #[test]
    fn validation_repairs_bad_start() {
        let out = generate_optimal_mask(&Misleading, 4, 2).unwrap();
        assert_eq!(out.mask.ones(), vec![2, 3]);
        assert!(out.converged);
        assert!(out.restarts >= 1);
    }
}
