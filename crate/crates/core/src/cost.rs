// SPDX-License-Identifier: Apache-2.0

//! Pricing remote traffic with a node-distance matrix, either statically
//! from a behaviour or dynamically from a trace.

use std::collections::BTreeMap;
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::effects::{subst_locations, Label};
use crate::runtime::{LocationMap, TraceEvent};
use crate::syntax::*;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("cost matrix: {0}")]
    Parse(String),
    #[error("cost matrix covers {size} node(s) but node {node} is used")]
    TooSmall { size: usize, node: NodeId },
    #[error("location `{0}` is not mapped to a node")]
    Unmapped(Location),
}

/// Per-kind multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Weights {
    pub read: u64,
    pub write: u64,
    pub msg: u64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            read: 1,
            write: 1,
            msg: 1,
        }
    }
}

impl Weights {
    pub fn of(&self, kind: AccessKind) -> u64 {
        match kind {
            AccessKind::Read => self.read,
            AccessKind::Write => self.write,
            AccessKind::Msg => self.msg,
        }
    }
}

/// Square matrix of per-access costs between nodes, zero on the diagonal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostMatrix {
    rows: Vec<Vec<u64>>,
    pub weights: Weights,
}

impl CostMatrix {
    pub fn new(rows: Vec<Vec<u64>>, weights: Weights) -> Result<Self, CostError> {
        let k = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(CostError::Parse(format!("row {} has {} entries, expected {}", i, row.len(), k)));
            }
            if row[i] != 0 {
                return Err(CostError::Parse(format!("diagonal entry ({},{}) must be 0", i, i)));
            }
        }
        Ok(CostMatrix { rows, weights })
    }

    /// Every off-diagonal entry equal to `c`.
    pub fn uniform(k: usize, c: u64) -> Self {
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 0 } else { c }).collect())
            .collect();
        CostMatrix {
            rows,
            weights: Weights::default(),
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Result<u64, CostError> {
        let size = self.size();
        let idx = |n: NodeId| {
            let i = n as usize;
            if i < size {
                Ok(i)
            } else {
                Err(CostError::TooSmall { size, node: n })
            }
        };
        Ok(self.rows[idx(from)?][idx(to)?])
    }

    /// Price of one access.
    pub fn price(&self, kind: AccessKind, from: NodeId, to: NodeId) -> Result<u64, CostError> {
        Ok(self.weights.of(kind) * self.get(from, to)?)
    }
}

impl FromStr for CostMatrix {
    type Err = CostError;

    /// `k`, then `k` rows of `k` integers, then optionally `weights r w m`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |m: String| CostError::Parse(m);
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let k: usize = lines
            .next()
            .ok_or_else(|| err("empty file".into()))?
            .parse()
            .map_err(|_| err("first line must be the node count".into()))?;
        let mut rows = Vec::with_capacity(k);
        for i in 0..k {
            let line = lines.next().ok_or_else(|| err(format!("missing row {}", i)))?;
            let row = line
                .split_whitespace()
                .map(|x| x.parse::<u64>().map_err(|_| err(format!("row {}: `{}` is not a nonnegative integer", i, x))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let mut weights = Weights::default();
        if let Some(line) = lines.next() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["weights", r, w, m] => {
                    let p = |x: &str| x.parse::<u64>().map_err(|_| err(format!("bad weight `{}`", x)));
                    weights = Weights {
                        read: p(r)?,
                        write: p(w)?,
                        msg: p(m)?,
                    };
                }
                _ => return Err(err(format!("unexpected line `{}`", line))),
            }
        }
        if let Some(extra) = lines.next() {
            return Err(err(format!("unexpected line `{}`", extra)));
        }
        CostMatrix::new(rows, weights)
    }
}

impl fmt::Display for CostMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.size())?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        writeln!(f, "weights {} {} {}", self.weights.read, self.weights.write, self.weights.msg)
    }
}

/// Cost per `(from, to)` node pair and per access kind.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    #[serde(serialize_with = "pair_keys")]
    pub by_pair: BTreeMap<(NodeId, NodeId), u64>,
    #[serde(serialize_with = "kind_keys")]
    pub by_kind: BTreeMap<AccessKind, u64>,
}

fn pair_keys<S: serde::Serializer>(m: &BTreeMap<(NodeId, NodeId), u64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|((a, b), c)| (format!("{}->{}", a, b), c)))
}

fn kind_keys<S: serde::Serializer>(m: &BTreeMap<AccessKind, u64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, c)| (k.as_str(), c)))
}

impl Breakdown {
    fn add(&mut self, kind: AccessKind, from: NodeId, to: NodeId, cost: u64) {
        if cost > 0 {
            *self.by_pair.entry((from, to)).or_default() += cost;
            *self.by_kind.entry(kind).or_default() += cost;
        }
    }

    fn merge(&mut self, other: &Breakdown, times: u64) {
        for (k, v) in &other.by_pair {
            *self.by_pair.entry(*k).or_default() += v * times;
        }
        for (k, v) in &other.by_kind {
            *self.by_kind.entry(*k).or_default() += v * times;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    /// Worst case; parallel branches are summed.
    pub total: u64,
    pub min: u64,
    pub max: u64,
    /// Each choice branch taken with probability ½.
    pub expected: f64,
    /// Parallel branches priced by the costlier one only.
    pub makespan_bound: u64,
    /// Breakdown of the worst case.
    pub breakdown: Breakdown,
}

impl CostReport {
    fn zero() -> Self {
        CostReport {
            total: 0,
            min: 0,
            max: 0,
            expected: 0.0,
            makespan_bound: 0,
            breakdown: Breakdown::default(),
        }
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "total     {}", self.total);
        let _ = writeln!(out, "min       {}", self.min);
        let _ = writeln!(out, "max       {}", self.max);
        let _ = writeln!(out, "expected  {}", self.expected);
        let _ = writeln!(out, "makespan  {}", self.makespan_bound);
        for (kind, c) in &self.breakdown.by_kind {
            let _ = writeln!(out, "kind {:<5} {}", kind.as_str(), c);
        }
        for ((a, b), c) in &self.breakdown.by_pair {
            let _ = writeln!(out, "pair {}->{} {}", a, b, c);
        }
        out
    }
}

fn node_of(l: &Location) -> Result<NodeId, CostError> {
    l.node().ok_or_else(|| CostError::Unmapped(l.clone()))
}

/// Prices a behaviour. Abstract locations go through `map`; node locations
/// are used as they are.
pub fn static_cost(b: &Behaviour, map: &LocationMap, matrix: &CostMatrix) -> Result<CostReport, CostError> {
    let concrete = subst_locations(b, &map.subst()).map_err(|e| CostError::Unmapped(e.0))?;
    price(&concrete, matrix)
}

fn price(b: &Behaviour, m: &CostMatrix) -> Result<CostReport, CostError> {
    match b {
        Behaviour::Eps => Ok(CostReport::zero()),
        Behaviour::Par(l, r) => {
            let (l, r) = (price(l, m)?, price(r, m)?);
            let mut breakdown = l.breakdown.clone();
            breakdown.merge(&r.breakdown, 1);
            Ok(CostReport {
                total: l.total + r.total,
                min: l.min + r.min,
                max: l.max + r.max,
                expected: l.expected + r.expected,
                makespan_bound: l.makespan_bound.max(r.makespan_bound),
                breakdown,
            })
        }
        Behaviour::Seq(op, rest) => {
            let head = price_op(op, m)?;
            let rest = price(rest, m)?;
            let mut breakdown = head.breakdown.clone();
            breakdown.merge(&rest.breakdown, 1);
            Ok(CostReport {
                total: head.total + rest.total,
                min: head.min + rest.min,
                max: head.max + rest.max,
                expected: head.expected + rest.expected,
                makespan_bound: head.makespan_bound + rest.makespan_bound,
                breakdown,
            })
        }
    }
}

fn price_op(op: &BOp, m: &CostMatrix) -> Result<CostReport, CostError> {
    match op {
        BOp::Access(pi) => {
            let (from, to) = (node_of(pi.src())?, node_of(pi.dst())?);
            let c = m.price(pi.kind(), from, to)?;
            let mut breakdown = Breakdown::default();
            breakdown.add(pi.kind(), from, to, c);
            Ok(CostReport {
                total: c,
                min: c,
                max: c,
                expected: c as f64,
                makespan_bound: c,
                breakdown,
            })
        }
        BOp::Choice(l, r) => {
            let (l, r) = (price(l, m)?, price(r, m)?);
            let worst = if r.total > l.total { &r } else { &l };
            Ok(CostReport {
                total: worst.total,
                min: l.min.min(r.min),
                max: l.max.max(r.max),
                expected: (l.expected + r.expected) / 2.0,
                makespan_bound: l.makespan_bound.max(r.makespan_bound),
                breakdown: worst.breakdown.clone(),
            })
        }
        BOp::Loop(n, body) => {
            let body = price(body, m)?;
            let n64 = u64::from(*n);
            let mut breakdown = Breakdown::default();
            breakdown.merge(&body.breakdown, n64);
            Ok(CostReport {
                total: body.total * n64,
                min: body.min * n64,
                max: body.max * n64,
                expected: body.expected * f64::from(*n),
                makespan_bound: body.makespan_bound * n64,
                breakdown,
            })
        }
    }
}

/// Prices the remote events of a trace.
pub fn trace_cost(trace: &[TraceEvent], matrix: &CostMatrix) -> Result<CostReport, CostError> {
    let mut breakdown = Breakdown::default();
    let mut total = 0;
    for ev in trace {
        if let Label::Access(pi) = &ev.label {
            let (from, to) = (node_of(pi.src())?, node_of(pi.dst())?);
            let c = matrix.price(pi.kind(), from, to)?;
            breakdown.add(pi.kind(), from, to, c);
            total += c;
        }
    }
    Ok(CostReport {
        total,
        min: total,
        max: total,
        expected: total as f64,
        makespan_bound: total,
        breakdown,
    })
}
