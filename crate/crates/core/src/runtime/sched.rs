// SPDX-License-Identifier: Apache-2.0

//! Schedulers, bounded runs and exhaustive exploration of interleavings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::machine::{Fault, Machine, Redex, RedexKind};
use super::trace::{Rule, TraceEvent};
use super::Config;
use crate::effects::Label;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scheduler {
    /// Always the first enabled redex.
    Fifo,
    /// Uniform choice from a seeded ChaCha8 stream.
    Random(u64),
    /// Indices into the enabled list, consumed in order; `Fifo` afterwards.
    Script(Vec<usize>),
}

enum Picker {
    Fifo,
    Random(Box<ChaCha8Rng>),
    Script(std::vec::IntoIter<usize>),
}

impl Picker {
    fn new(s: &Scheduler) -> Self {
        match s {
            Scheduler::Fifo => Picker::Fifo,
            Scheduler::Random(seed) => Picker::Random(Box::new(ChaCha8Rng::seed_from_u64(*seed))),
            Scheduler::Script(v) => Picker::Script(v.clone().into_iter()),
        }
    }

    fn pick(&mut self, n: usize) -> usize {
        match self {
            Picker::Fifo => 0,
            Picker::Random(rng) => rng.gen_range(0..n),
            Picker::Script(it) => it.next().map(|i| i % n).unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Nothing is enabled.
    Quiescent,
    Fault(Fault),
    /// `max_steps` steps were taken and more are enabled.
    StepLimit,
    /// The observer asked to stop.
    Stopped,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: Config,
    pub trace: Vec<TraceEvent>,
    pub outcome: Outcome,
}

fn fault_event(step: usize, f: &Fault) -> TraceEvent {
    TraceEvent {
        step,
        rule: Rule::Fault,
        label: Label::Eps,
        node: f.node,
        thread: f.thread,
        fault: Some(f.message.clone()),
    }
}

pub fn run(machine: &Machine, cfg: Config, scheduler: &Scheduler, max_steps: usize) -> RunResult {
    run_observed(machine, cfg, scheduler, max_steps, |_, _, _| true)
}

/// Like [`run`], calling `observer(before, event, after)` after every step.
pub fn run_observed(
    machine: &Machine,
    mut cfg: Config,
    scheduler: &Scheduler,
    max_steps: usize,
    mut observer: impl FnMut(&Config, &TraceEvent, &Config) -> bool,
) -> RunResult {
    let mut picker = Picker::new(scheduler);
    let mut trace = Vec::new();
    loop {
        let enabled = machine.enabled(&cfg);
        if enabled.is_empty() {
            return RunResult {
                config: cfg,
                trace,
                outcome: Outcome::Quiescent,
            };
        }
        if trace.len() >= max_steps {
            return RunResult {
                config: cfg,
                trace,
                outcome: Outcome::StepLimit,
            };
        }
        let r = enabled[picker.pick(enabled.len())];
        let index = trace.len() + 1;
        match machine.step(&cfg, &r, index) {
            Ok((next, ev)) => {
                let keep_going = observer(&cfg, &ev, &next);
                trace.push(ev);
                cfg = next;
                if !keep_going {
                    return RunResult {
                        config: cfg,
                        trace,
                        outcome: Outcome::Stopped,
                    };
                }
            }
            Err(f) => {
                trace.push(fault_event(index, &f));
                return RunResult {
                    config: cfg,
                    trace,
                    outcome: Outcome::Fault(f),
                };
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Longest trace allowed.
    pub depth_limit: usize,
    /// Take local steps (pure steps and dispatches) eagerly instead of
    /// interleaving them; they commute with every other step and stay enabled.
    pub reduce: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            depth_limit: 1000,
            reduce: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExploreResult {
    /// Maximal traces; a faulted trace ends with a `Fault` event.
    pub traces: Vec<Vec<TraceEvent>>,
    /// Edges visited across the whole search.
    pub steps: usize,
    pub faults: Vec<Fault>,
    /// The visitor stopped the search early.
    pub stopped: bool,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ExploreError {
    #[error("depth limit {0} exceeded")]
    DepthExceeded(usize),
}

/// Depth-first enumeration of interleavings from `cfg`, calling
/// `visitor(before, event, after)` on every edge.
pub fn explore(
    machine: &Machine,
    cfg: &Config,
    opts: ExploreOptions,
    mut visitor: impl FnMut(&Config, &TraceEvent, &Config) -> bool,
) -> Result<ExploreResult, ExploreError> {
    let mut result = ExploreResult::default();
    let mut path = Vec::new();
    dfs(machine, cfg, opts, &mut visitor, &mut path, &mut result)?;
    Ok(result)
}

type Successor = (Redex, Result<(Config, TraceEvent), Fault>);

fn candidates(machine: &Machine, cfg: &Config, reduce: bool) -> Vec<Successor> {
    let enabled = machine.enabled(cfg);
    let mut out = Vec::with_capacity(enabled.len());
    for r in enabled {
        let outcome = machine.step(cfg, &r, 0);
        let local = r.kind == RedexKind::Dispatch || matches!(&outcome, Ok((_, ev)) if ev.rule == Rule::Pure);
        if reduce && local {
            return vec![(r, outcome)];
        }
        out.push((r, outcome));
    }
    out
}

fn dfs(
    machine: &Machine,
    cfg: &Config,
    opts: ExploreOptions,
    visitor: &mut impl FnMut(&Config, &TraceEvent, &Config) -> bool,
    path: &mut Vec<TraceEvent>,
    result: &mut ExploreResult,
) -> Result<(), ExploreError> {
    let next = candidates(machine, cfg, opts.reduce);
    if next.is_empty() {
        result.traces.push(path.clone());
        return Ok(());
    }
    if path.len() >= opts.depth_limit {
        return Err(ExploreError::DepthExceeded(opts.depth_limit));
    }
    for (_, outcome) in next {
        if result.stopped {
            return Ok(());
        }
        let index = path.len() + 1;
        match outcome {
            Err(f) => {
                path.push(fault_event(index, &f));
                result.traces.push(path.clone());
                path.pop();
                result.faults.push(f);
            }
            Ok((after, mut ev)) => {
                ev.step = index;
                result.steps += 1;
                if !visitor(cfg, &ev, &after) {
                    result.stopped = true;
                    path.push(ev);
                    result.traces.push(path.clone());
                    path.pop();
                    return Ok(());
                }
                path.push(ev);
                dfs(machine, &after, opts, visitor, path, result)?;
                path.pop();
            }
        }
    }
    Ok(())
}
