//! Exact-match METEOR.
//!
//! Only the exact-word stage is implemented: no stemming, synonym or
//! paraphrase matching. The alignment is one-to-one, has the maximum number of
//! matches, and among those the minimum number of chunks (found by an exact
//! branch-and-bound search).

use std::collections::HashMap;

use super::{check_corpus, mean, EvalInstance, MetricError};
use crate::exec::Execution;

const ALPHA_WEIGHT: f64 = 9.0;
const PENALTY_GAMMA: f64 = 0.5;
const PENALTY_BETA: i32 = 3;

/// A word alignment between a candidate and one reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
    /// `(candidate position, reference position)`, sorted by candidate position.
    pub pairs: Vec<(usize, usize)>,
}

struct Search {
    cand: Vec<usize>,
    refs: Vec<usize>,
    /// `suffix[i][t]`: occurrences of type `t` in `cand[i..]`.
    suffix: Vec<Vec<usize>>,
    need: Vec<usize>,
    used: Vec<bool>,
    assign: Vec<Option<usize>>,
    best_adjacent: Option<usize>,
    best_assign: Vec<Option<usize>>,
    max_adjacent: usize,
}

impl Search {
    fn run(&mut self, i: usize, adjacent: usize, remaining: usize) {
        if let Some(best) = self.best_adjacent {
            if best == self.max_adjacent || adjacent + remaining <= best {
                return;
            }
        }
        if i == self.cand.len() {
            self.best_adjacent = Some(adjacent);
            self.best_assign.clone_from(&self.assign);
            return;
        }
        let ty = self.cand[i];
        let prev = if i > 0 { self.assign[i - 1] } else { None };
        if self.need[ty] > 0 {
            let mut order: Vec<usize> = Vec::new();
            if let Some(pj) = prev {
                let j = pj + 1;
                if j < self.refs.len() && self.refs[j] == ty && !self.used[j] {
                    order.push(j);
                }
            }
            for j in 0..self.refs.len() {
                if self.refs[j] == ty && !self.used[j] && !order.contains(&j) {
                    order.push(j);
                }
            }
            for j in order {
                let bonus = usize::from(prev.is_some_and(|pj| pj + 1 == j));
                self.used[j] = true;
                self.need[ty] -= 1;
                self.assign[i] = Some(j);
                self.run(i + 1, adjacent + bonus, remaining - 1);
                self.assign[i] = None;
                self.need[ty] += 1;
                self.used[j] = false;
            }
        }
        // leave position i unmatched if the type's quota can still be met later
        if self.need[ty] <= self.suffix[i + 1][ty] {
            self.run(i + 1, adjacent, remaining);
        }
    }
}

fn type_ids<'a>(words: &'a [String], types: &mut HashMap<&'a str, usize>) -> Vec<usize> {
    words
        .iter()
        .map(|w| {
            let next = types.len();
            *types.entry(w.as_str()).or_insert(next)
        })
        .collect()
}

/// Maximum-match, minimum-chunk exact alignment of `candidate` to `reference`.
pub fn meteor_alignment(candidate: &[String], reference: &[String]) -> Alignment {
    let mut types: HashMap<&str, usize> = HashMap::new();
    let cand = type_ids(candidate, &mut types);
    let refs = type_ids(reference, &mut types);
    let n_types = types.len();

    let mut cand_count = vec![0usize; n_types];
    let mut ref_count = vec![0usize; n_types];
    cand.iter().for_each(|&t| cand_count[t] += 1);
    refs.iter().for_each(|&t| ref_count[t] += 1);
    let need: Vec<usize> = (0..n_types)
        .map(|t| cand_count[t].min(ref_count[t]))
        .collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return Alignment {
            matches: 0,
            chunks: 0,
            pairs: Vec::new(),
        };
    }

    let mut suffix = vec![vec![0usize; n_types]; cand.len() + 1];
    for i in (0..cand.len()).rev() {
        suffix[i] = suffix[i + 1].clone();
        suffix[i][cand[i]] += 1;
    }
    let mut search = Search {
        used: vec![false; refs.len()],
        assign: vec![None; cand.len()],
        best_adjacent: None,
        best_assign: Vec::new(),
        max_adjacent: matches - 1,
        cand,
        refs,
        suffix,
        need,
    };
    search.run(0, 0, matches);
    let adjacent = search
        .best_adjacent
        .expect("a maximum matching always exists");
    let pairs = search
        .best_assign
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|j| (i, j)))
        .collect();
    Alignment {
        matches,
        chunks: matches - adjacent,
        pairs,
    }
}

/// Exact-match METEOR of one candidate against one reference.
pub fn meteor_sentence(candidate: &[String], reference: &[String]) -> f64 {
    let a = meteor_alignment(candidate, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = (1.0 + ALPHA_WEIGHT) * p * r / (r + ALPHA_WEIGHT * p);
    let penalty = PENALTY_GAMMA * (a.chunks as f64 / m).powi(PENALTY_BETA);
    f_mean * (1.0 - penalty)
}

/// Corpus exact-match METEOR: best reference per instance, mean over instances.
pub fn meteor_lite(instances: &[EvalInstance]) -> Result<f64, MetricError> {
    meteor_lite_with(instances, Execution::default())
}

pub fn meteor_lite_with(instances: &[EvalInstance], exec: Execution) -> Result<f64, MetricError> {
    check_corpus(instances)?;
    let scores = exec.map(instances, |inst| {
        inst.references
            .iter()
            .map(|r| meteor_sentence(&inst.candidate, r))
            .fold(0.0, f64::max)
    });
    Ok(mean(&scores))
}
