use std::collections::HashMap;

use crate::error::{input, Error, Result};
use crate::StateHistogram;

pub const DEFAULT_STATE_CAP: usize = 100_000;

/// `C(N + K - 1, K - 1)`, saturating at `u128::MAX`.
pub fn state_count(population: u32, bins: usize) -> u128 {
    let n = population as u128;
    let k = bins as u128 - 1;
    let mut c: u128 = 1;
    for i in 1..=k {
        c = match c.checked_mul(n + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    c
}

/// Every histogram with `bins` cells over `population`, in ascending
/// lexicographic order of the count vectors.
pub fn enumerate_states(population: u32, bins: usize, cap: usize) -> Result<Vec<StateHistogram>> {
    if population == 0 || bins == 0 {
        return Err(input("enumeration needs N >= 1 and K >= 1"));
    }
    let size = state_count(population, bins);
    if size > cap as u128 {
        return Err(Error::StateCap { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut counts = vec![0u32; bins];
    fill(&mut counts, 0, population, &mut out);
    Ok(out)
}

fn fill(counts: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<StateHistogram>) {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        out.push(StateHistogram::from_counts(counts.to_vec()).expect("nonempty"));
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill(counts, pos + 1, remaining - c, out);
    }
}

pub fn index_of(states: &[StateHistogram]) -> HashMap<StateHistogram, usize> {
    states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect()
}
