//! Optimal ex-post allocation: candidate sets of top-ranked buyers, the
//! sequential comparison loop, the provision test and an exhaustive oracle.

use crate::economy::Economy;
use crate::error::{Error, Result};

/// Largest population accepted by [`brute_force_allocation`].
pub const BRUTE_FORCE_MAX_BUYERS: usize = 20;

/// A type profile sorted in descending order, ties broken by ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedProfile {
    original_indices: Vec<usize>,
    sorted_thetas: Vec<f64>,
}

impl RankedProfile {
    pub fn new(profile: &[f64]) -> Self {
        let mut original_indices: Vec<usize> = (0..profile.len()).collect();
        original_indices.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]).then(a.cmp(&b)));
        let sorted_thetas = original_indices.iter().map(|&i| profile[i]).collect();
        Self { original_indices, sorted_thetas }
    }

    pub fn original_indices(&self) -> &[usize] {
        &self.original_indices
    }

    pub fn sorted_thetas(&self) -> &[f64] {
        &self.sorted_thetas
    }

    pub fn len(&self) -> usize {
        self.sorted_thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_thetas.is_empty()
    }

    /// Original indices of the top-`k` candidate set.
    pub fn members(&self, set: CandidateSet) -> &[usize] {
        &self.original_indices[..set.size]
    }
}

/// The `size` highest-ranked buyers of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandidateSet {
    pub size: usize,
}

impl CandidateSet {
    pub const EMPTY: CandidateSet = CandidateSet { size: 0 };

    pub fn top(size: usize) -> Self {
        Self { size }
    }
}

/// Ex-post outcome of the optimal mechanism for one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub consume: Vec<bool>,
    pub set_size: usize,
    pub provided: bool,
    /// Virtual-surplus objective `Σ ψ q + φ(k) − c·1{k > 0}`.
    pub profit: f64,
}

impl Allocation {
    pub fn consumers(&self) -> Vec<usize> {
        self.consume.iter().enumerate().filter(|(_, &q)| q).map(|(i, _)| i).collect()
    }
}

/// Aggregate virtual value `Ψ(θ | J_k)` of the top-`k` set.
pub fn candidate_value(economy: &Economy, ranked: &RankedProfile, set: CandidateSet) -> f64 {
    ranked.sorted_thetas[..set.size].iter().map(|&t| economy.psi(t, set.size)).sum()
}

/// Weak preference `a ⪰ b`: `Ψ(a) − Ψ(b) ≥ φ(|b|) − φ(|a|)`, exact comparison.
pub fn prefer(economy: &Economy, ranked: &RankedProfile, a: CandidateSet, b: CandidateSet) -> bool {
    let lhs = candidate_value(economy, ranked, a) - candidate_value(economy, ranked, b);
    lhs >= economy.phi(b.size) - economy.phi(a.size)
}

fn validate_profile(economy: &Economy, profile: &[f64]) -> Result<()> {
    if profile.len() != economy.n() {
        return Err(Error::InvalidArgument(format!(
            "profile has {} entries, economy has {} buyers",
            profile.len(),
            economy.n()
        )));
    }
    let upper = economy.upper();
    for (buyer, &value) in profile.iter().enumerate() {
        if !(value >= 0.0 && value <= upper) {
            return Err(Error::OutOfSupport { buyer, value, upper });
        }
    }
    Ok(())
}

/// Runs the comparison loop on a ranked profile and returns the chosen size
/// (zero when the good is not provided) with its objective value.
pub(crate) fn solve_ranked(economy: &Economy, sorted: &[f64]) -> (usize, f64) {
    let n = sorted.len();
    let mut best_size = 0;
    // Ψ(K) + φ(|K|) for the incumbent K.
    let mut best_score = economy.phi(0);
    let mut best_psi = 0.0;
    for k in 1..=n {
        let psi_sum: f64 = sorted[..k].iter().map(|&t| economy.psi(t, k)).sum();
        // J_k ⪰ K_k  ⟺  Ψ(J_k) − Ψ(K_k) ≥ φ(|K_k|) − φ(k).
        if psi_sum - best_psi >= economy.phi(best_size) - economy.phi(k) {
            best_size = k;
            best_psi = psi_sum;
            best_score = psi_sum + economy.phi(k);
        }
    }
    if best_size > 0 && best_psi >= economy.adjusted_cost_unchecked(best_size) {
        (best_size, best_score - economy.cost())
    } else {
        (0, economy.phi(0))
    }
}

/// Consumption indicator and set size for one buyer, without allocating.
/// Only valid for two buyers, the hot path of the interim computations.
#[inline]
pub(crate) fn outcome_pair(economy: &Economy, own: f64, other: f64, own_index: usize) -> (bool, usize) {
    let own_first = own > other || (own == other && own_index == 0);
    let (high, low) = if own_first { (own, other) } else { (other, own) };
    let (size, _) = solve_ranked(economy, &[high, low]);
    let consumes = match size {
        0 => false,
        1 => own_first,
        _ => true,
    };
    (consumes, if consumes { size } else { 0 })
}

/// Consumption indicator and set size for buyer `buyer` of an arbitrary profile.
pub(crate) fn outcome_for(economy: &Economy, profile: &[f64], buyer: usize) -> (bool, usize) {
    if profile.len() == 2 {
        return outcome_pair(economy, profile[buyer], profile[1 - buyer], buyer);
    }
    let ranked = RankedProfile::new(profile);
    let (size, _) = solve_ranked(economy, &ranked.sorted_thetas);
    let consumes = ranked.original_indices[..size].contains(&buyer);
    (consumes, if consumes { size } else { 0 })
}

/// Optimal allocation for a profile.
pub fn solve_allocation(economy: &Economy, profile: &[f64]) -> Result<Allocation> {
    validate_profile(economy, profile)?;
    let ranked = RankedProfile::new(profile);
    let (size, profit) = solve_ranked(economy, &ranked.sorted_thetas);
    let mut consume = vec![false; profile.len()];
    for &i in &ranked.original_indices[..size] {
        consume[i] = true;
    }
    Ok(Allocation { consume, set_size: size, provided: size > 0, profit })
}

/// True iff some candidate set covers its adjusted cost.
pub fn provision_possible(economy: &Economy, profile: &[f64]) -> Result<bool> {
    validate_profile(economy, profile)?;
    let ranked = RankedProfile::new(profile);
    Ok((1..=economy.n()).any(|k| {
        candidate_value(economy, &ranked, CandidateSet::top(k)) >= economy.adjusted_cost_unchecked(k)
    }))
}

/// Exhaustive optimum with the gap to the best other subset.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub allocation: Allocation,
    pub runner_up_margin: f64,
}

/// Enumerates every subset and maximises `Σ_{i∈J} ψ(θ_i, |J|) + φ(|J|) − c·1{J ≠ ∅}`.
/// Exact ties prefer larger sets, then the top-ranked set, then the
/// lexicographically smallest member list.
pub fn brute_force_allocation(economy: &Economy, profile: &[f64]) -> Result<BruteForceResult> {
    let n = profile.len();
    if n > BRUTE_FORCE_MAX_BUYERS {
        return Err(Error::TooManyBuyers { n, max: BRUTE_FORCE_MAX_BUYERS });
    }
    validate_profile(economy, profile)?;
    let ranked = RankedProfile::new(profile);
    let psi: Vec<Vec<f64>> = profile.iter().map(|&t| (0..=n).map(|k| if k == 0 { 0.0 } else { economy.psi(t, k) }).collect()).collect();
    let mut top_masks = vec![0u32; n + 1];
    for k in 1..=n {
        top_masks[k] = top_masks[k - 1] | (1 << ranked.original_indices[k - 1]);
    }

    let objective = |mask: u32| -> f64 {
        let size = mask.count_ones() as usize;
        if size == 0 {
            return economy.phi(0);
        }
        let sum: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| psi[i][size]).sum();
        sum + economy.phi(size) - economy.cost()
    };
    // Lexicographic order on member lists equals reversed bit order on masks.
    let lex_key = |mask: u32| -> Vec<usize> { (0..n).filter(|i| mask & (1 << i) != 0).collect() };
    let better_tie = |candidate: u32, incumbent: u32| -> bool {
        let (sc, si) = (candidate.count_ones(), incumbent.count_ones());
        if sc != si {
            return sc > si;
        }
        let top = top_masks[sc as usize];
        if (candidate == top) != (incumbent == top) {
            return candidate == top;
        }
        lex_key(candidate) < lex_key(incumbent)
    };

    let mut best_mask = 0u32;
    let mut best_value = objective(0);
    let mut values = Vec::with_capacity(1 << n);
    for mask in 0u32..(1u32 << n) {
        let value = objective(mask);
        values.push(value);
        if mask == 0 {
            continue;
        }
        if value > best_value || (value == best_value && better_tie(mask, best_mask)) {
            best_mask = mask;
            best_value = value;
        }
    }
    let runner_up = values
        .iter()
        .enumerate()
        .filter(|(m, _)| *m as u32 != best_mask)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let consume: Vec<bool> = (0..n).map(|i| best_mask & (1 << i) != 0).collect();
    let set_size = best_mask.count_ones() as usize;
    Ok(BruteForceResult {
        allocation: Allocation { consume, set_size, provided: set_size > 0, profit: best_value },
        runner_up_margin: best_value - runner_up,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::presets;

    #[test]
    fn ranking_breaks_ties_by_index() {
        let ranked = RankedProfile::new(&[0.5, 0.7, 0.5]);
        assert_eq!(ranked.original_indices(), &[1, 0, 2]);
        assert_eq!(ranked.sorted_thetas(), &[0.7, 0.5, 0.5]);
    }

    #[test]
    fn pair_fast_path_matches_general_solver() {
        let economy = presets::pi_family(5.0 / 8.0, 0.25).unwrap();
        for &(a, b) in &[(0.72, 0.68), (0.9, 0.1), (0.3, 0.95), (0.5, 0.5), (0.8, 0.8)] {
            let alloc = solve_allocation(&economy, &[a, b]).unwrap();
            for buyer in 0..2 {
                let (q, k) = outcome_pair(&economy, [a, b][buyer], [a, b][1 - buyer], buyer);
                assert_eq!(q, alloc.consume[buyer]);
                assert_eq!(k, if q { alloc.set_size } else { 0 });
            }
        }
    }
}
