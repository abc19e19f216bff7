//! Exact maximum compatible measurement set.
//!
//! Every violated pair or quadruple must lose at least one member, so the
//! largest compatible set is the complement of a minimum hitting set of the
//! violation sets. That is solved by depth-first branch and bound with unit
//! propagation and a disjoint-packing lower bound.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::compat::ViolationSets;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibleSet {
    /// Row-major `(t, i)`; `true` keeps the measurement.
    pub mask: Vec<bool>,
    pub removed: usize,
    /// Search nodes over the optimization and tie-breaking phases.
    pub nodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Free,
    Kept,
    Excluded,
}

struct HittingSet {
    sets: Vec<Vec<usize>>,
    nodes: u64,
}

impl HittingSet {
    fn new(mut sets: Vec<Vec<usize>>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        sets.dedup();
        // A set containing another one is hit whenever the smaller one is.
        let pairs: HashSet<(usize, usize)> = sets.iter().filter(|s| s.len() == 2).map(|s| (s[0], s[1])).collect();
        sets.retain(|s| {
            s.len() <= 2 || !(0..s.len()).any(|a| (a + 1..s.len()).any(|b| pairs.contains(&(s[a], s[b]))))
        });
        HittingSet { sets, nodes: 0 }
    }

    fn unhit<'a>(&'a self, state: &'a [Var]) -> impl Iterator<Item = &'a Vec<usize>> + 'a {
        self.sets.iter().filter(move |s| s.iter().all(|&v| state[v] != Var::Excluded))
    }

    /// Greedy: exclude the variable hitting most open sets (ties: highest
    /// index), then re-keep any exclusion that turned out unnecessary.
    fn greedy(&self, num_vars: usize) -> Vec<Var> {
        let mut state = vec![Var::Free; num_vars];
        loop {
            let mut count = vec![0usize; num_vars];
            let mut any = false;
            for s in self.unhit(&state) {
                any = true;
                for &v in s {
                    count[v] += 1;
                }
            }
            if !any {
                break;
            }
            let best = (0..num_vars).rev().max_by_key(|&v| count[v]).unwrap_or(0);
            state[best] = Var::Excluded;
        }
        for v in 0..num_vars {
            if state[v] == Var::Excluded {
                state[v] = Var::Free;
                if self.unhit(&state).next().is_some() {
                    state[v] = Var::Excluded;
                }
            }
        }
        state
    }

    /// Finds an assignment with at most `limit` exclusions extending
    /// `state`, or proves none exists.
    fn search(&mut self, state: &mut Vec<Var>, excluded: usize, limit: usize) -> Option<Vec<Var>> {
        self.nodes += 1;
        let mut forced = vec![];
        let mut excluded = excluded;
        // Unit propagation: an open set with a single free member forces it out.
        loop {
            let mut changed = false;
            for s in &self.sets {
                if s.iter().any(|&v| state[v] == Var::Excluded) {
                    continue;
                }
                let mut free = s.iter().filter(|&&v| state[v] == Var::Free);
                match (free.next(), free.next()) {
                    (None, _) => {
                        undo(state, &forced);
                        return None;
                    }
                    (Some(&v), None) => {
                        state[v] = Var::Excluded;
                        forced.push(v);
                        excluded += 1;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        if excluded > limit {
            undo(state, &forced);
            return None;
        }

        // Disjoint open sets each need their own exclusion.
        let mut used = vec![false; state.len()];
        let mut packing = 0;
        let mut count = vec![0usize; state.len()];
        let mut open = false;
        for s in self.unhit(state) {
            open = true;
            let free: Vec<usize> = s.iter().copied().filter(|&v| state[v] == Var::Free).collect();
            for &v in &free {
                count[v] += 1;
            }
            if free.iter().all(|&v| !used[v]) {
                packing += 1;
                for &v in &free {
                    used[v] = true;
                }
            }
        }
        if !open {
            let mut solution = state.clone();
            for v in solution.iter_mut() {
                if *v == Var::Free {
                    *v = Var::Kept;
                }
            }
            undo(state, &forced);
            return Some(solution);
        }
        if excluded + packing > limit {
            undo(state, &forced);
            return None;
        }

        let branch = (0..state.len()).max_by_key(|&v| (count[v], std::cmp::Reverse(v))).unwrap_or(0);
        let mut found = None;
        for choice in [Var::Excluded, Var::Kept] {
            state[branch] = choice;
            let add = usize::from(choice == Var::Excluded);
            found = self.search(state, excluded + add, limit);
            state[branch] = Var::Free;
            if found.is_some() {
                break;
            }
        }
        undo(state, &forced);
        found
    }
}

fn undo(state: &mut [Var], forced: &[usize]) {
    for &v in forced {
        state[v] = Var::Free;
    }
}

fn count_excluded(state: &[Var]) -> usize {
    state.iter().filter(|&&v| v == Var::Excluded).count()
}

/// Largest set of measurements containing no violated pair or quadruple.
///
/// Among optimal sets the one keeping the earliest measurements in
/// row-major `(t, i)` order is returned (lexicographically largest mask).
pub fn max_compatible_set(violations: &ViolationSets, horizon: usize, num_keypoints: usize) -> Result<CompatibleSet> {
    let n = num_keypoints;
    let num_vars = horizon * n;
    let cell = |t: usize, i: usize| t * n + i;
    let mut sets = Vec::with_capacity(violations.shape.len() + violations.time.len());
    for &(t, i, j) in &violations.shape {
        if t >= horizon || i >= n || j >= n || i == j {
            return Err(Error::InvalidInput(format!("shape violation ({t}, {i}, {j}) out of range")));
        }
        sets.push(vec![cell(t, i), cell(t, j)]);
    }
    for &(l, m, i, j) in &violations.time {
        if l >= horizon || m >= horizon || i >= n || j >= n || i == j || l == m {
            return Err(Error::InvalidInput(format!("time violation ({l}, {m}, {i}, {j}) out of range")));
        }
        sets.push(vec![cell(l, i), cell(l, j), cell(m, i), cell(m, j)]);
    }
    let mut solver = HittingSet::new(sets);

    let mut best = solver.greedy(num_vars);
    let mut k = count_excluded(&best);
    while k > 0 {
        let mut state = vec![Var::Free; num_vars];
        match solver.search(&mut state, 0, k - 1) {
            Some(better) => {
                k = count_excluded(&better);
                best = better;
            }
            None => break,
        }
    }

    // Tie-break: fix variables in order, keeping each one whenever an
    // optimal set still exists with it kept.
    let mut fixed = vec![Var::Free; num_vars];
    for v in 0..num_vars {
        if best[v] == Var::Kept && fixed.iter().zip(&best).all(|(f, b)| *f == Var::Free || f == b) {
            // The incumbent already witnesses this choice.
            fixed[v] = Var::Kept;
            continue;
        }
        fixed[v] = Var::Kept;
        let excluded = count_excluded(&fixed);
        let mut state = fixed.clone();
        match solver.search(&mut state, excluded, k) {
            Some(witness) => best = witness,
            None => fixed[v] = Var::Excluded,
        }
    }
    let mask: Vec<bool> = fixed.iter().map(|&v| v == Var::Kept).collect();
    debug_assert_eq!(mask.iter().filter(|&&m| !m).count(), k);
    Ok(CompatibleSet { removed: k, mask, nodes: solver.nodes })
}
