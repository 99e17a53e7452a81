// SPDX-License-Identifier: Apache-2.0

//! Trace events and their line format:
//! `step=<n> rule=<name> label=<label> node=<k> thread=<i>`.

use std::fmt;

use serde::Serialize;

use crate::effects::Label;
use crate::syntax::{parse_behaviour, BOp, Behaviour, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    MsgL,
    MsgR,
    FReadL,
    FReadR,
    FWriteL,
    FWriteR,
    NewL,
    NewR,
    Dispatch,
    Pure,
    Fault,
}

impl Rule {
    pub const ALL: [Rule; 11] = [
        Rule::MsgL,
        Rule::MsgR,
        Rule::FReadL,
        Rule::FReadR,
        Rule::FWriteL,
        Rule::FWriteR,
        Rule::NewL,
        Rule::NewR,
        Rule::Dispatch,
        Rule::Pure,
        Rule::Fault,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::MsgL => "MsgL",
            Rule::MsgR => "MsgR",
            Rule::FReadL => "FReadL",
            Rule::FReadR => "FReadR",
            Rule::FWriteL => "FWriteL",
            Rule::FWriteR => "FWriteR",
            Rule::NewL => "NewL",
            Rule::NewR => "NewR",
            Rule::Dispatch => "Dispatch",
            Rule::Pure => "Pure",
            Rule::Fault => "Fault",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub step: usize,
    pub rule: Rule,
    pub label: Label,
    pub node: NodeId,
    pub thread: usize,
    /// Set on the final event of a faulted run.
    pub fault: Option<String>,
}

impl TraceEvent {
    pub fn is_remote(&self) -> bool {
        self.label != Label::Eps
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} rule={} label={} node={} thread={}",
            self.step, self.rule, self.label, self.node, self.thread
        )?;
        if let Some(msg) = &self.fault {
            write!(f, " fault={:?}", msg)?;
        }
        Ok(())
    }
}

/// One line per event, each terminated by a newline.
pub fn format_trace(events: &[TraceEvent]) -> String {
    events.iter().map(|e| format!("{}\n", e)).collect()
}

/// Parses a line written by [`TraceEvent`]'s `Display`; fault text is kept verbatim.
pub fn parse_trace_line(line: &str) -> Option<TraceEvent> {
    let (head, fault) = match line.split_once(" fault=") {
        Some((h, f)) => (h, Some(f.trim_matches('"').to_string())),
        None => (line, None),
    };
    let mut fields = head.split_whitespace().map(|kv| kv.split_once('='));
    let mut next = |key: &str| -> Option<&str> {
        match fields.next()? {
            Some((k, v)) if k == key => Some(v),
            _ => None,
        }
    };
    let step = next("step")?.parse().ok()?;
    let rule_name = next("rule")?;
    let rule = Rule::ALL.into_iter().find(|r| r.name() == rule_name)?;
    let label = match next("label")? {
        "eps" => Label::Eps,
        text => match parse_behaviour(text).ok()? {
            Behaviour::Seq(op, rest) if rest.is_eps() => match *op {
                BOp::Access(pi) => Label::Access(pi),
                _ => return None,
            },
            _ => return None,
        },
    };
    let node = next("node")?.parse().ok()?;
    let thread = next("thread")?.parse().ok()?;
    Some(TraceEvent {
        step,
        rule,
        label,
        node,
        thread,
        fault,
    })
}
