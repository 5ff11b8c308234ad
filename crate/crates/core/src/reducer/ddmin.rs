use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use crate::hash::Fingerprint;

use super::{accept_candidate, ChunkedInput, ReductionResult, ReductionStatus, UnitKind};

#[derive(Debug, Clone, PartialEq)]
pub struct DdminOptions {
    pub budget: Duration,
    pub unit_kind: UnitKind,
    /// On budget exhaustion, return the smallest interesting input found so
    /// far instead of the original.
    pub keep_best_on_timeout: bool,
    /// Cap on predicate evaluations; reaching it counts as budget exhaustion.
    pub max_candidates: Option<usize>,
}

impl Default for DdminOptions {
    fn default() -> Self {
        DdminOptions {
            budget: Duration::from_secs(60),
            unit_kind: UnitKind::Line,
            keep_best_on_timeout: false,
            max_candidates: None,
        }
    }
}

enum Stop {
    Budget,
    Failed(String),
}

struct Search<P> {
    input: ChunkedInput,
    predicate: P,
    cache: HashMap<Fingerprint, bool>,
    tried: usize,
    deadline: Instant,
    max_candidates: Option<usize>,
}

impl<P, E> Search<P>
where
    P: FnMut(&[u8]) -> Result<bool, E>,
    E: fmt::Display,
{
    fn test(&mut self, selection: &[usize]) -> Result<bool, Stop> {
        let bytes = self.input.render(selection);
        let key = Fingerprint::of(&bytes);
        if let Some(&hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        if Instant::now() >= self.deadline || self.max_candidates.is_some_and(|m| self.tried >= m) {
            return Err(Stop::Budget);
        }
        self.tried += 1;
        let verdict = (self.predicate)(&bytes).map_err(|e| Stop::Failed(e.to_string()))?;
        self.cache.insert(key, verdict);
        Ok(verdict)
    }

    /// Classic ddmin over `current`, which must be interesting on entry and
    /// remains interesting after every update.
    fn minimize(&mut self, current: &mut Vec<usize>) -> Result<(), Stop> {
        let mut n = 2usize;
        loop {
            match current.len() {
                0 => return Ok(()),
                1 => {
                    if self.test(&[])? {
                        current.clear();
                    }
                    return Ok(());
                }
                _ => {}
            }
            let size = current.len().div_ceil(n);
            let chunks: Vec<Vec<usize>> = current.chunks(size).map(<[usize]>::to_vec).collect();

            if let Some(subset) = self.first_interesting(chunks.iter().cloned())? {
                *current = subset;
                n = 2;
                continue;
            }
            // With two chunks every complement is the other subset.
            if chunks.len() > 2 {
                let complements = (0..chunks.len()).map(|skip| {
                    chunks
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != skip)
                        .flat_map(|(_, c)| c.iter().copied())
                        .collect::<Vec<usize>>()
                });
                if let Some(complement) = self.first_interesting(complements)? {
                    *current = complement;
                    n = (n - 1).max(2);
                    continue;
                }
            }
            if n >= current.len() {
                return Ok(());
            }
            n = (2 * n).min(current.len());
        }
    }

    fn first_interesting(
        &mut self,
        candidates: impl Iterator<Item = Vec<usize>>,
    ) -> Result<Option<Vec<usize>>, Stop> {
        for c in candidates {
            if self.test(&c)? {
                return Ok(Some(c));
            }
        }
        Ok(None)
    }
}

/// Minimize `i0` with respect to `predicate` by delta debugging over units of
/// `opts.unit_kind`.
///
/// The predicate is evaluated at most once per distinct rendered candidate.
/// When the search terminates on its own the result is 1-minimal: dropping
/// any single unit makes it uninteresting. A predicate error, or a predicate
/// that rejects `i0` itself, yields `ReducerError`.
///
/// ```
/// use shrinkfix_core::reducer::{ddmin, DdminOptions, ReductionStatus};
///
/// let input = b"1\n2\n3\n4\n5\n6\n7\n8\n";
/// let keeps_ends = |c: &[u8]| -> Result<bool, String> {
///     let lines: Vec<&[u8]> = c.split(|&b| b == b'\n').collect();
///     Ok(lines.contains(&&b"1"[..]) && lines.contains(&&b"8"[..]))
/// };
/// let r = ddmin(input, keeps_ends, &DdminOptions::default());
/// assert_eq!(r.status, ReductionStatus::Success);
/// assert_eq!(r.reduced_input, b"1\n8\n");
/// ```
pub fn ddmin<P, E>(i0: &[u8], predicate: P, opts: &DdminOptions) -> ReductionResult
where
    P: FnMut(&[u8]) -> Result<bool, E>,
    E: fmt::Display,
{
    let start = Instant::now();
    let input = ChunkedInput::split(i0, opts.unit_kind);
    let mut search = Search {
        input,
        predicate,
        cache: HashMap::new(),
        tried: 0,
        deadline: start + opts.budget,
        max_candidates: opts.max_candidates,
    };
    let mut current: Vec<usize> = (0..search.input.len()).collect();
    let elapsed = || start.elapsed().as_secs_f64();

    match search.test(&current) {
        Ok(true) => {}
        Ok(false) => {
            return ReductionResult::fallback(
                i0,
                ReductionStatus::ReducerError,
                elapsed(),
                search.tried,
                Some("original input is not interesting".into()),
            )
        }
        Err(Stop::Budget) => {
            return ReductionResult::fallback(i0, ReductionStatus::TimedOut, elapsed(), search.tried, None)
        }
        Err(Stop::Failed(e)) => {
            return ReductionResult::fallback(
                i0,
                ReductionStatus::ReducerError,
                elapsed(),
                search.tried,
                Some(e),
            )
        }
    }

    match search.minimize(&mut current) {
        Ok(()) => {
            let reduced = search.input.render(&current);
            accept_candidate(i0, reduced, elapsed(), search.tried)
        }
        Err(Stop::Budget) if opts.keep_best_on_timeout => ReductionResult {
            reduced_input: search.input.render(&current),
            original_bytes: i0.len() as u64,
            status: ReductionStatus::TimedOut,
            wall_time_secs: elapsed(),
            candidates_tried: search.tried,
            detail: Some("budget exhausted; keeping best intermediate".into()),
        },
        Err(Stop::Budget) => ReductionResult::fallback(
            i0,
            ReductionStatus::TimedOut,
            elapsed(),
            search.tried,
            Some("budget exhausted".into()),
        ),
        Err(Stop::Failed(e)) => ReductionResult::fallback(
            i0,
            ReductionStatus::ReducerError,
            elapsed(),
            search.tried,
            Some(e),
        ),
    }
}
