// SPDX-License-Identifier: Apache-2.0

//! Dynamic soundness checking. Every configuration has a global behaviour Σ,
//! one filtered behaviour per thread obtained by typing the thread's
//! expression and its actor's pending messages; each machine step labelled
//! π must be matched by Σ reducing under π.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::effects::{concat, concat_all, equiv, filter_with, steps, Clause, FilterMode, Label};
use crate::runtime::{
    self, Config, ExploreError, ExploreOptions, ExploreResult, Frame, Machine, Outcome, Redex, RedexKind,
    RunResult, Scheduler, Thread, TraceEvent, Value,
};
use crate::syntax::*;
use crate::typer::{AddressTypes, TypeError, Typed, Typer, TypingContext, TypingFrame};

impl AddressTypes for Config {
    fn type_of_address(&self, addr: Address) -> Option<Type> {
        self.object(addr).map(|o| o.ty())
    }
}

fn type_errors(errs: Vec<TypeError>) -> String {
    errs.iter()
        .map(|e| format!("[{}] {}", e.rule, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Value to type, as seen through the heap. `null` has type nil.
pub fn type_of_value(cfg: &Config, v: Value) -> Option<Type> {
    Some(match v {
        Value::True | Value::False => Type::Bool,
        Value::Null => Type::Nil,
        Value::Int(_) => Type::Int,
        Value::Addr(a) => cfg.object(a)?.ty(),
    })
}

/// Declared parameter type of the method a frame runs, with owners replaced
/// by the receiver's nodes.
fn param_type(program: &Program, cfg: &Config, frame: &Frame) -> Option<Type> {
    let this = cfg.object(frame.this)?;
    let typer = Typer::new(program);
    let sig = typer.method_sig(&this.class, &frame.method, &this.owner_locations()).ok()?;
    sig.param.map(|p| p.ty)
}

/// Γ for one stack frame.
pub fn frame_context(program: &Program, cfg: &Config, frame: &Frame) -> Result<TypingFrame, String> {
    let this = cfg
        .object(frame.this)
        .ok_or_else(|| format!("frame receiver {} is dangling", frame.this))?;
    let mut gamma = TypingFrame::with_this(this.ty());
    if let Some((x, v)) = &frame.arg {
        // A null argument keeps its declared type; otherwise the value's own.
        let ty = match v {
            Value::Null => param_type(program, cfg, frame).unwrap_or(Type::Nil),
            v => type_of_value(cfg, *v).ok_or_else(|| format!("argument {} is dangling", v))?,
        };
        gamma.bind(x.clone(), ty);
    }
    Ok(gamma)
}

/// Γ̄ for a stack: the innermost frame first and an empty frame last, so that
/// each `return` met on the way in pops one frame.
pub fn stack_context(program: &Program, cfg: &Config, frames: &[Frame]) -> Result<TypingContext, String> {
    let mut gammas = frames
        .iter()
        .rev()
        .map(|f| frame_context(program, cfg, f))
        .collect::<Result<Vec<_>, _>>()?;
    gammas.push(TypingFrame::new());
    Ok(TypingContext::new(gammas))
}

/// Type and behaviour of a thread's expression under its stack.
pub fn type_at_runtime(program: &Program, cfg: &Config, frames: &[Frame], e: &Expr) -> Result<Typed, String> {
    let mut ctx = stack_context(program, cfg, frames)?;
    Typer::runtime(program, cfg)
        .type_expr(&mut ctx, e)
        .map_err(type_errors)
}

/// Behaviour of a pending message `m(v)` at actor `actor`.
pub fn message_behaviour(program: &Program, cfg: &Config, actor: Address, msg: &runtime::Message) -> Result<Behaviour, String> {
    let object = cfg.object(actor).ok_or_else(|| format!("dangling actor {}", actor))?;
    let class = program
        .class(&object.class)
        .ok_or_else(|| format!("unknown class `{}`", object.class))?;
    let m = class
        .method(&msg.method)
        .ok_or_else(|| format!("class `{}` has no method `{}`", class.name, msg.method))?;
    let frame = Frame {
        this: actor,
        method: msg.method.clone(),
        arg: match (&m.param, msg.arg) {
            (Some(p), Some(v)) => Some((p.name.clone(), v)),
            (None, None) => None,
            _ => return Err(format!("pending message `{}` has the wrong arity", msg.method)),
        },
    };
    let body = m.body.subst_locations(&class.owner_subst(&object.owner_locations()));
    let mut ctx = TypingContext::single(frame_context(program, cfg, &frame)?);
    Typer::runtime(program, cfg)
        .type_expr(&mut ctx, &body)
        .map(|t| t.behaviour)
        .map_err(|e| format!("pending message `{}`: {}", msg.method, type_errors(e)))
}

/// One Σ entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SigmaEntry {
    /// The thread's actor; stable across steps.
    #[serde(serialize_with = "display")]
    pub actor: Address,
    #[serde(serialize_with = "display")]
    pub behaviour: Behaviour,
}

fn display<T: fmt::Display, S: serde::Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

/// Σ, in node-then-thread order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GlobalBehaviour(pub Vec<SigmaEntry>);

impl GlobalBehaviour {
    pub fn position(&self, actor: Address) -> Option<usize> {
        self.0.iter().position(|e| e.actor == actor)
    }

    pub fn get(&self, actor: Address) -> Option<&Behaviour> {
        self.0.iter().find(|e| e.actor == actor).map(|e| &e.behaviour)
    }

    pub fn is_all_eps(&self) -> bool {
        self.0.iter().all(|e| e.behaviour.is_eps())
    }
}

impl fmt::Display for GlobalBehaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| format!("{}:{}", e.actor, e.behaviour)).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// A violated well-formedness clause (1 to 5).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WfViolation {
    pub clause: u8,
    pub message: String,
}

impl fmt::Display for WfViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "clause ({}): {}", self.clause, self.message)
    }
}

/// Outcome of matching one machine step against Σ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Matched; the reduction clauses used, in order, and the entry that
    /// received a detached parallel branch, if any.
    Pass {
        clauses: Vec<&'static str>,
        #[serde(serialize_with = "display_opt")]
        target: Option<Address>,
    },
    Fail {
        reason: String,
    },
    /// Σ′ does not exist because the thread is about to fault on a null
    /// receiver; the fault itself is reported by the run.
    Skipped {
        reason: String,
    },
}

fn display_opt<S: serde::Serializer>(x: &Option<Address>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(a) => s.collect_str(a),
        None => s.serialize_none(),
    }
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    fn clause_text(&self) -> String {
        match self {
            Verdict::Pass { clauses, .. } if clauses.is_empty() => "stutter".into(),
            Verdict::Pass { clauses, .. } => clauses.join(","),
            Verdict::Fail { .. } => "none".into(),
            Verdict::Skipped { .. } => "skipped".into(),
        }
    }
}

/// Search state: current behaviour, detached branches, whether the label
/// has been consumed, clauses used.
type SearchState = (Behaviour, Vec<Behaviour>, bool, Vec<Clause>);

/// Checks `Σ →π Σ′` for a step taken by `actor`'s thread. The acting entry
/// may take any number of ε-steps around the π-step; every parallel branch
/// it detaches must be appended to exactly one entry (possibly its own),
/// every other entry must be unchanged and entries new in Σ′ must be ε.
pub fn check_step(sigma: &GlobalBehaviour, actor: Address, label: &Label, sigma2: &GlobalBehaviour) -> Verdict {
    let label = label.normalized();
    let fail = |reason: String| Verdict::Fail { reason };
    let Some(t) = sigma.position(actor) else {
        return fail(format!("acting thread {} has no entry in Σ", actor));
    };
    for e in &sigma.0 {
        if sigma2.position(e.actor).is_none() {
            return fail(format!("entry {} disappeared", e.actor));
        }
    }
    for e in &sigma2.0 {
        if sigma.position(e.actor).is_none() && !e.behaviour.is_eps() {
            return fail(format!("new entry {} is `{}`, expected eps", e.actor, e.behaviour));
        }
    }

    let mut seen: BTreeSet<(Behaviour, Vec<Behaviour>, bool)> = BTreeSet::new();
    let start: SearchState = (sigma.0[t].behaviour.clone(), Vec::new(), label == Label::Eps, Vec::new());
    let mut queue = VecDeque::from([start]);
    let mut closest: Option<(usize, String)> = None;
    while let Some((b, payloads, consumed, clauses)) = queue.pop_front() {
        if !seen.insert((b.clone(), payloads.clone(), consumed)) {
            continue;
        }
        if consumed {
            match assign(sigma, t, &b, &payloads, sigma2) {
                Ok(target) => {
                    return Verdict::Pass {
                        clauses: clauses.iter().map(|c| c.name()).collect(),
                        target,
                    }
                }
                Err((mismatches, why)) => {
                    if closest.as_ref().is_none_or(|(m, _)| mismatches < *m) {
                        closest = Some((mismatches, why));
                    }
                }
            }
        }
        for s in steps(&b) {
            let fires = match (&s.label, consumed) {
                (Label::Eps, _) => true,
                (l, false) => *l == label,
                (_, true) => false,
            };
            if !fires {
                continue;
            }
            let mut p = payloads.clone();
            p.extend(s.detached.clone());
            let mut c = clauses.clone();
            c.push(s.clause);
            queue.push_back((s.result, p, consumed || s.label != Label::Eps, c));
        }
    }
    let why = closest
        .map(|(_, w)| w)
        .unwrap_or_else(|| format!("`{}` cannot perform {}", sigma.0[t].behaviour, label));
    fail(why)
}

/// Tries every placement of the detached branches. On failure returns the
/// fewest mismatching entries seen and a description.
fn assign(
    sigma: &GlobalBehaviour,
    t: usize,
    result: &Behaviour,
    payloads: &[Behaviour],
    sigma2: &GlobalBehaviour,
) -> Result<Option<Address>, (usize, String)> {
    let n = sigma.0.len();
    let combos = n.checked_pow(payloads.len() as u32).unwrap_or(usize::MAX).min(4096);
    let mut best: Option<(usize, String)> = None;
    for code in 0..combos.max(1) {
        let mut targets = Vec::with_capacity(payloads.len());
        let mut c = code;
        for _ in payloads {
            targets.push(c % n);
            c /= n;
        }
        let mut mismatches = 0;
        let mut first = None;
        for (j, entry) in sigma.0.iter().enumerate() {
            let mut expected = if j == t { result.clone() } else { entry.behaviour.clone() };
            for (p, &target) in payloads.iter().zip(&targets) {
                if target == j {
                    expected = concat(&expected, p);
                }
            }
            let actual = sigma2.get(entry.actor).expect("checked");
            if !equiv(&expected, actual) {
                mismatches += 1;
                first.get_or_insert_with(|| {
                    format!("entry {}: expected `{}`, found `{}`", entry.actor, expected, actual)
                });
            }
        }
        match first {
            None => return Ok(targets.first().map(|&j| sigma.0[j].actor)),
            Some(why) => {
                if best.as_ref().is_none_or(|(m, _)| mismatches < *m) {
                    best = Some((mismatches, why));
                }
            }
        }
    }
    Err(best.expect("at least one placement"))
}

/// One checked step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    #[serde(serialize_with = "display")]
    pub event: TraceEvent,
    pub sigma_before: String,
    pub sigma_after: String,
    pub verdict: Verdict,
}

impl StepRecord {
    /// `<trace line> verdict=<pass|fail|skip> clause=<clauses>`.
    pub fn log_line(&self) -> String {
        let v = match self.verdict {
            Verdict::Pass { .. } => "pass",
            Verdict::Fail { .. } => "fail",
            Verdict::Skipped { .. } => "skip",
        };
        format!("{} verdict={} clause={}", self.event, v, self.verdict.clause_text())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SoundnessReport {
    pub steps: Vec<StepRecord>,
    pub wf_violations: Vec<WfViolation>,
    /// Set when Σ could not be computed for some configuration.
    pub sigma_error: Option<String>,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        self.wf_violations.is_empty()
            && self.sigma_error.is_none()
            && !self.steps.iter().any(|s| s.verdict.is_fail())
    }

    pub fn first_failure(&self) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.verdict.is_fail())
    }

    /// Line-delimited log.
    pub fn log(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&s.log_line());
            out.push('\n');
        }
        for v in &self.wf_violations {
            out.push_str(&format!("wf {}\n", v));
        }
        if let Some(e) = &self.sigma_error {
            out.push_str(&format!("sigma error: {}\n", e));
        }
        if let Some(f) = self.first_failure() {
            out.push_str(&format!("counterexample at step {}: {}\n", f.event.step, match &f.verdict {
                Verdict::Fail { reason } => reason.as_str(),
                _ => "",
            }));
            out.push_str(&format!("  sigma  = {}\n  sigma' = {}\n", f.sigma_before, f.sigma_after));
        }
        out.push_str(if self.passed() { "verdict=pass\n" } else { "verdict=fail\n" });
        out
    }
}

/// Σ extraction, well-formedness and step checks for one program.
pub struct Monitor<'p> {
    program: &'p Program,
    mode: FilterMode,
}

impl<'p> Monitor<'p> {
    pub fn new(program: &'p Program) -> Self {
        Monitor {
            program,
            mode: FilterMode::Full,
        }
    }

    /// Uses the filter of `machine`, so that an injected filter fault reaches the monitor.
    pub fn for_machine(machine: &Machine<'p>) -> Self {
        Monitor {
            program: machine.program(),
            mode: machine.filter_mode(),
        }
    }

    fn thread_behaviour(&self, cfg: &Config, t: &Thread) -> Result<Behaviour, String> {
        let own = type_at_runtime(self.program, cfg, &t.frames, &t.expr)?.behaviour;
        let mut parts = vec![own];
        if let Some(q) = cfg.object(t.actor).and_then(|o| o.queue.as_ref()) {
            for msg in q {
                parts.push(message_behaviour(self.program, cfg, t.actor, msg)?);
            }
        }
        Ok(filter_with(&concat_all(parts.iter()), self.mode))
    }

    /// Σ of a configuration.
    pub fn global_behaviour(&self, cfg: &Config) -> Result<GlobalBehaviour, String> {
        cfg.threads()
            .map(|(node, i, t)| {
                self.thread_behaviour(cfg, t)
                    .map(|behaviour| SigmaEntry {
                        actor: t.actor,
                        behaviour,
                    })
                    .map_err(|e| format!("node {} thread {}: {}", node, i, e))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(GlobalBehaviour)
    }

    /// All five well-formedness clauses.
    pub fn wf_config(&self, cfg: &Config) -> Vec<WfViolation> {
        let mut out = Vec::new();
        let mut v = |clause: u8, message: String| out.push(WfViolation { clause, message });

        let mut ids = BTreeSet::new();
        for n in &cfg.nodes {
            if !ids.insert(n.id) {
                v(1, format!("node id {} occurs twice", n.id));
            }
        }

        for n in &cfg.nodes {
            for (a, o) in &n.heap {
                if a.node != n.id {
                    v(2, format!("node {} stores foreign address {}", n.id, a));
                }
                if o.owners.first() != Some(&n.id) {
                    v(2, format!("object {} on node {} is owned by {:?}", a, n.id, o.owners));
                }
                if a.index >= n.next_index {
                    v(2, format!("address {} is beyond the allocation counter of node {}", a, n.id));
                }
            }
            for (i, t) in n.threads.iter().enumerate() {
                if t.actor.node != n.id {
                    v(2, format!("thread {} of node {} belongs to actor {} elsewhere", i, n.id, t.actor));
                }
                if let Err(e) = type_at_runtime(self.program, cfg, &t.frames, &t.expr) {
                    v(2, format!("thread {} of node {} is untypable: {}", i, n.id, e));
                }
                for f in &t.frames {
                    if f.this.node != n.id {
                        v(4, format!("thread {} of node {} runs a frame on remote object {}", i, n.id, f.this));
                    }
                    if cfg.object(f.this).is_none() {
                        v(4, format!("thread {} of node {} has a frame on dangling {}", i, n.id, f.this));
                    }
                    if let Some((x, Value::Addr(a))) = &f.arg {
                        if cfg.object(*a).is_none() {
                            v(5, format!("frame variable `{}` holds dangling {}", x, a));
                        }
                    }
                    if let Some((x, Value::Int(_))) = &f.arg {
                        v(5, format!("frame variable `{}` holds an integer", x));
                    }
                }
                let mut dangling = Vec::new();
                t.expr.visit(&mut |e| {
                    if let Expr::Addr(a) = e {
                        if cfg.object(*a).is_none() {
                            dangling.push(*a);
                        }
                    }
                });
                for a in dangling {
                    v(5, format!("thread {} of node {} mentions dangling {}", i, n.id, a));
                }
            }
        }

        for (a, o) in cfg.objects() {
            for msg in self.object_agreement(cfg, a, o) {
                v(3, msg);
            }
        }
        for (node, i, t) in cfg.threads() {
            match cfg.object(t.actor) {
                None => v(3, format!("thread {} of node {} belongs to dangling actor {}", i, node, t.actor)),
                Some(o) if o.queue.is_none() && o.class != MAIN_CLASS => v(
                    3,
                    format!("thread {} of node {} belongs to passive object {}", i, node, t.actor),
                ),
                Some(_) => {}
            }
        }
        out
    }

    /// Value agreement of one object against its ownership type.
    fn object_agreement(&self, cfg: &Config, a: Address, o: &runtime::ObjectRecord) -> Vec<String> {
        let mut out = Vec::new();
        let Some(class) = self.program.class(&o.class) else {
            return vec![format!("object {} has unknown class `{}`", a, o.class)];
        };
        if class.owners.len() != o.owners.len() {
            out.push(format!("object {} has {} owners, class `{}` takes {}", a, o.owners.len(), class.name, class.owners.len()));
            return out;
        }
        if class.active != o.queue.is_some() {
            out.push(format!(
                "object {} of {} class `{}` {} a queue",
                a,
                if class.active { "active" } else { "passive" },
                class.name,
                if class.active { "lacks" } else { "has" }
            ));
        }
        let subst = class.owner_subst(&o.owner_locations());
        let declared: BTreeSet<&str> = class.fields.iter().map(|f| f.name.as_str()).collect();
        let present: BTreeSet<&str> = o.fields.keys().map(|f| f.as_str()).collect();
        if declared != present {
            out.push(format!("object {} has fields {:?}, class `{}` declares {:?}", a, present, class.name, declared));
        }
        for f in &class.fields {
            if let Some(v) = o.fields.get(&f.name) {
                let ty = f.ty.subst_locations(&subst);
                if !value_agrees(cfg, *v, &ty) {
                    out.push(format!("field {}.{} holds {} which does not agree with {}", a, f.name, v, ty));
                }
            }
        }
        if let Some(q) = &o.queue {
            for msg in q {
                if let Err(e) = message_behaviour(self.program, cfg, a, msg) {
                    out.push(format!("queue of {}: {}", a, e));
                }
            }
        }
        out
    }

    /// Checks one step `before → after` taken as `ev`.
    pub fn check_transition(&self, machine: &Machine, before: &Config, ev: &TraceEvent, after: &Config) -> Result<StepRecord, String> {
        let sigma = self.global_behaviour(before)?;
        let actor = before
            .thread(ev.node, ev.thread)
            .map(|t| t.actor)
            .ok_or_else(|| format!("no thread {} on node {}", ev.thread, ev.node))?;
        let (verdict, after_text) = match self.global_behaviour(after) {
            Ok(sigma2) => (check_step(&sigma, actor, &ev.label, &sigma2), sigma2.to_string()),
            Err(e) => {
                let faults_next = after.thread(ev.node, ev.thread).is_some_and(|_| {
                    let r = Redex {
                        node: ev.node,
                        thread: ev.thread,
                        kind: RedexKind::Eval,
                    };
                    machine.step(after, &r, 0).is_err()
                });
                if faults_next {
                    (Verdict::Skipped { reason: e.clone() }, format!("<{}>", e))
                } else {
                    return Err(e);
                }
            }
        };
        Ok(StepRecord {
            event: ev.clone(),
            sigma_before: sigma.to_string(),
            sigma_after: after_text,
            verdict,
        })
    }
}

/// `v` agrees with `ty` in the heap of `cfg`.
pub fn value_agrees(cfg: &Config, v: Value, ty: &Type) -> bool {
    match (v, ty) {
        (Value::True | Value::False, Type::Bool) => true,
        (Value::Null, Type::Nil | Type::Owned(..)) => true,
        (Value::Int(_), Type::Int) => true,
        (Value::Addr(a), Type::Owned(c, ls)) => cfg
            .object(a)
            .is_some_and(|o| &o.class == c && o.owner_locations() == *ls),
        _ => false,
    }
}

/// Runs under `scheduler`, checking well-formedness and every step.
/// Stops at the first failure.
pub fn verify_run(machine: &Machine, cfg: Config, scheduler: &Scheduler, max_steps: usize) -> (RunResult, SoundnessReport) {
    let monitor = Monitor::for_machine(machine);
    let mut report = SoundnessReport {
        wf_violations: monitor.wf_config(&cfg),
        ..Default::default()
    };
    if !report.wf_violations.is_empty() {
        let result = RunResult {
            config: cfg,
            trace: Vec::new(),
            outcome: Outcome::Stopped,
        };
        return (result, report);
    }
    let result = runtime::run_observed(machine, cfg, scheduler, max_steps, |before, ev, after| {
        observe(&monitor, machine, before, ev, after, &mut report)
    });
    (result, report)
}

fn observe(monitor: &Monitor, machine: &Machine, before: &Config, ev: &TraceEvent, after: &Config, report: &mut SoundnessReport) -> bool {
    match monitor.check_transition(machine, before, ev, after) {
        Ok(rec) => {
            let failed = rec.verdict.is_fail();
            // The thread faults next; its typing is not expected to survive.
            let skipped = matches!(rec.verdict, Verdict::Skipped { .. });
            report.steps.push(rec);
            if failed {
                return false;
            }
            if skipped {
                return true;
            }
        }
        Err(e) => {
            report.sigma_error = Some(format!("after step {}: {}", ev.step, e));
            return false;
        }
    }
    let wf = monitor.wf_config(after);
    if !wf.is_empty() {
        report.wf_violations = wf;
        return false;
    }
    true
}

/// Summary of an exhaustive verification.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExploreReport {
    pub traces: usize,
    pub steps: usize,
    pub configs_checked: usize,
    pub faults: Vec<String>,
    /// Empty unless some step failed; then the failing step and the trace leading to it.
    pub soundness: SoundnessReport,
    #[serde(skip)]
    pub counterexample: Vec<TraceEvent>,
}

impl ExploreReport {
    pub fn passed(&self) -> bool {
        self.soundness.passed()
    }
}

/// Explores every interleaving, checking every edge and every reachable
/// configuration. Stops at the first failure.
pub fn verify_explore(machine: &Machine, cfg: &Config, opts: ExploreOptions) -> Result<(ExploreResult, ExploreReport), ExploreError> {
    let monitor = Monitor::for_machine(machine);
    let mut report = ExploreReport::default();
    report.soundness.wf_violations = monitor.wf_config(cfg);
    report.configs_checked = 1;
    if !report.soundness.wf_violations.is_empty() {
        return Ok((ExploreResult::default(), report));
    }
    let mut failed_step: Option<StepRecord> = None;
    let mut checked = 0usize;
    let result = runtime::explore(machine, cfg, opts, |before, ev, after| {
        checked += 1;
        let mut local = SoundnessReport::default();
        let ok = observe(&monitor, machine, before, ev, after, &mut local);
        if !ok {
            failed_step = local.steps.last().cloned();
            report.soundness.wf_violations = local.wf_violations;
            report.soundness.sigma_error = local.sigma_error;
        }
        ok
    })?;
    if let Some(rec) = failed_step.filter(|r| r.verdict.is_fail()) {
        report.soundness.steps.push(rec);
    }
    if result.stopped {
        report.counterexample = result.traces.last().cloned().unwrap_or_default();
    }
    report.configs_checked += checked;
    report.traces = result.traces.len();
    report.steps = result.steps;
    report.faults = result.faults.iter().map(|f| f.to_string()).collect();
    Ok((result, report))
}

/// Σ grouped by actor, for display.
pub fn sigma_map(sigma: &GlobalBehaviour) -> BTreeMap<String, String> {
    sigma
        .0
        .iter()
        .map(|e| (e.actor.to_string(), e.behaviour.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::filter;
    use crate::runtime::{init_config, LocationMap, Mutation};

    const PLACEMENT: &str = "active class C<p1, p2, p3>\n d1: D<p1>\n d2: D<p2>\n d3: D<p3>\nclass D<p>\nclass Main<L1, L2, L3>\n def main(): nil as write(L1,L2).write(L1,L3) {\n  let x = new C<L1, L2, L3> in\n  let y = (x.d1 = new D<L1>) in\n  let z = (x.d2 = new D<L2>) in\n  x.d3 = new D<L3>\n }";

    fn b(s: &str) -> Behaviour {
        parse_behaviour(s).unwrap()
    }

    fn sigma(entries: &[(Address, &str)]) -> GlobalBehaviour {
        GlobalBehaviour(
            entries
                .iter()
                .map(|(a, s)| SigmaEntry {
                    actor: *a,
                    behaviour: b(s),
                })
                .collect(),
        )
    }

    fn write01() -> Label {
        Label::Access(RemAccess::Write(Location::Node(0), Location::Node(1)))
    }

    #[test]
    fn initial_sigma_of_placement() {
        let p = parse_program(PLACEMENT).unwrap();
        let cfg = init_config(&p, &"L1=0,L2=1,L3=1".parse::<LocationMap>().unwrap()).unwrap();
        let s = Monitor::new(&p).global_behaviour(&cfg).unwrap();
        assert_eq!(s.0.len(), 1);
        assert_eq!(s.0[0].behaviour, b("write(0,1).write(0,1)"));
        assert!(Monitor::new(&p).wf_config(&cfg).is_empty());
    }

    #[test]
    fn address_types_through_heap() {
        let p = parse_program(PLACEMENT).unwrap();
        let cfg = init_config(&p, &"L1=0,L2=1,L3=1".parse::<LocationMap>().unwrap()).unwrap();
        let frames = cfg.thread(0, 0).unwrap().frames.clone();
        let t = type_at_runtime(&p, &cfg, &frames, &Expr::Return(Box::new(Expr::Addr(Address::new(0, 0))))).unwrap();
        assert_eq!(t.ty, Type::owned("Main", vec![Location::Node(0), Location::Node(1), Location::Node(1)]));
        assert_eq!(t.behaviour, Behaviour::Eps);
        let t = type_at_runtime(&p, &cfg, &frames, &Expr::True).unwrap();
        assert_eq!(t.ty, Type::Bool);
    }

    #[test]
    fn prefix_step() {
        let a = Address::new(0, 0);
        let v = check_step(&sigma(&[(a, "write(0,1).read(0,2)")]), a, &write01(), &sigma(&[(a, "read(0,2)")]));
        assert!(matches!(v, Verdict::Pass { .. }), "{:?}", v);
    }

    #[test]
    fn wrong_label_fails() {
        let a = Address::new(0, 0);
        let v = check_step(&sigma(&[(a, "read(0,1)")]), a, &write01(), &sigma(&[(a, "eps")]));
        assert!(v.is_fail());
    }

    #[test]
    fn message_migrates_to_receiver() {
        let (a, r) = (Address::new(0, 0), Address::new(1, 0));
        let before = sigma(&[(a, "msg(0,1,m).(eps || write(1,0))"), (r, "eps")]);
        let after = sigma(&[(a, "eps"), (r, "write(1,0)")]);
        let label = Label::Access(RemAccess::Msg(Location::Node(0), Location::Node(1), "m".into()));
        match check_step(&before, a, &label, &after) {
            Verdict::Pass { clauses, target } => {
                assert_eq!(clauses, ["prefix", "par-left"]);
                assert_eq!(target, Some(r));
            }
            v => panic!("{:?}", v),
        }
        // Leaving the branch behind, or dropping it, is not a reduction.
        let dropped = sigma(&[(a, "eps"), (r, "eps")]);
        assert!(check_step(&before, a, &label, &dropped).is_fail());
    }

    #[test]
    fn new_entries_must_be_eps() {
        let (a, r) = (Address::new(0, 0), Address::new(1, 0));
        let before = sigma(&[(a, "write(0,1)")]);
        assert!(matches!(
            check_step(&before, a, &write01(), &sigma(&[(a, "eps"), (r, "eps")])),
            Verdict::Pass { .. }
        ));
        assert!(check_step(&before, a, &write01(), &sigma(&[(a, "eps"), (r, "read(1,0)")])).is_fail());
    }

    #[test]
    fn quiescent_sigma_is_eps() {
        let p = parse_program(PLACEMENT).unwrap();
        let m = Machine::new(&p);
        let cfg = init_config(&p, &"L1=0,L2=1,L3=2".parse::<LocationMap>().unwrap()).unwrap();
        let done = runtime::run(&m, cfg, &Scheduler::Fifo, 1000).config;
        assert!(Monitor::new(&p).global_behaviour(&done).unwrap().is_all_eps());
    }

    #[test]
    fn placement_verifies() {
        let p = parse_program(PLACEMENT).unwrap();
        let m = Machine::new(&p);
        for map in ["L1=0,L2=1,L3=1", "L1=0,L2=1,L3=2", "L1=0,L2=0,L3=0"] {
            let cfg = init_config(&p, &map.parse::<LocationMap>().unwrap()).unwrap();
            let (run, report) = verify_run(&m, cfg, &Scheduler::Random(3), 1000);
            assert_eq!(run.outcome, Outcome::Quiescent);
            assert!(report.passed(), "{}", report.log());
        }
    }

    #[test]
    fn remote_new_mutation_is_caught() {
        let p = parse_program(PLACEMENT).unwrap();
        let m = Machine::with_mutation(&p, Some(Mutation::NewRemoteAsRead));
        let cfg = init_config(&p, &"L1=0,L2=1,L3=1".parse::<LocationMap>().unwrap()).unwrap();
        let (_, report) = verify_run(&m, cfg, &Scheduler::Fifo, 1000);
        assert!(!report.passed());
        assert_eq!(report.first_failure().unwrap().event.rule, runtime::Rule::NewR);
    }

    #[test]
    fn wf_detects_duplicate_nodes_and_foreign_addresses() {
        let p = parse_program(PLACEMENT).unwrap();
        let mut cfg = init_config(&p, &"L1=0,L2=1,L3=1".parse::<LocationMap>().unwrap()).unwrap();
        let mut dup = cfg.nodes[1].clone();
        dup.threads.clear();
        cfg.nodes.push(dup);
        let clauses: Vec<u8> = Monitor::new(&p).wf_config(&cfg).iter().map(|v| v.clause).collect();
        assert!(clauses.contains(&1));

        let mut cfg = init_config(&p, &"L1=0,L2=1,L3=1".parse::<LocationMap>().unwrap()).unwrap();
        let main = cfg.nodes[0].heap.remove(&Address::new(0, 0)).unwrap();
        cfg.nodes[0].heap.insert(Address::new(1, 0), main);
        let clauses: Vec<u8> = Monitor::new(&p).wf_config(&cfg).iter().map(|v| v.clause).collect();
        assert!(clauses.contains(&2));
    }

    #[test]
    fn filter_is_applied_to_entries() {
        let p = parse_program(PLACEMENT).unwrap();
        let cfg = init_config(&p, &"L1=0,L2=0,L3=0".parse::<LocationMap>().unwrap()).unwrap();
        let s = Monitor::new(&p).global_behaviour(&cfg).unwrap();
        assert_eq!(s.0[0].behaviour, filter(&b("write(0,0).write(0,0)")));
    }
}
