// SPDX-License-Identifier: Apache-2.0

//! Behaviour algebra: concatenation, filtering of same-location accesses,
//! location substitution and one-step behaviour reduction.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::syntax::{BOp, Behaviour, Location, LocationSubst, RemAccess};

/// Label of a machine step or of a behaviour step: a remote access or ε.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Eps,
    Access(RemAccess),
}

impl Label {
    /// Accesses whose endpoints coincide are silent.
    pub fn normalized(&self) -> Label {
        match self {
            Label::Access(pi) if pi.is_self_access() => Label::Eps,
            other => other.clone(),
        }
    }

    pub fn access(&self) -> Option<&RemAccess> {
        match self {
            Label::Access(pi) => Some(pi),
            Label::Eps => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Eps => f.write_str("eps"),
            Label::Access(pi) => write!(f, "{}", pi),
        }
    }
}

/// `b1 ∘ b2`. A trailing parallel composition absorbs the continuation into
/// its left branch.
pub fn concat(b1: &Behaviour, b2: &Behaviour) -> Behaviour {
    match b1 {
        Behaviour::Eps => b2.clone(),
        Behaviour::Seq(op, rest) => Behaviour::Seq(op.clone(), Box::new(concat(rest, b2))),
        Behaviour::Par(l, r) => Behaviour::Par(Box::new(concat(l, b2)), r.clone()),
    }
}

/// Concatenates a sequence of behaviours left to right.
pub fn concat_all<'a>(parts: impl IntoIterator<Item = &'a Behaviour>) -> Behaviour {
    let parts: Vec<&Behaviour> = parts.into_iter().collect();
    parts
        .into_iter()
        .rev()
        .fold(Behaviour::Eps, |acc, b| concat(b, &acc))
}

/// Which clauses of the filter are applied. `SkipLoops` exists only to
/// inject a known fault when testing the soundness monitor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FilterMode {
    #[default]
    Full,
    SkipLoops,
}

/// Removes accesses whose source and destination coincide; choices and
/// loops left empty disappear.
pub fn filter(b: &Behaviour) -> Behaviour {
    filter_with(b, FilterMode::Full)
}

pub fn filter_with(b: &Behaviour, mode: FilterMode) -> Behaviour {
    match b {
        Behaviour::Eps => Behaviour::Eps,
        Behaviour::Par(l, r) => Behaviour::par(filter_with(l, mode), filter_with(r, mode)),
        Behaviour::Seq(op, rest) => {
            let rest = filter_with(rest, mode);
            match op.as_ref() {
                BOp::Access(pi) if pi.is_self_access() => rest,
                BOp::Access(pi) => Behaviour::seq(BOp::Access(pi.clone()), rest),
                BOp::Choice(l, r) => {
                    let (l, r) = (filter_with(l, mode), filter_with(r, mode));
                    if l.is_eps() && r.is_eps() {
                        rest
                    } else {
                        Behaviour::seq(BOp::Choice(l, r), rest)
                    }
                }
                BOp::Loop(n, body) => match mode {
                    FilterMode::SkipLoops => {
                        Behaviour::seq(BOp::Loop(*n, body.clone()), rest)
                    }
                    FilterMode::Full => {
                        let body = filter_with(body, mode);
                        if body.is_eps() || *n == 0 {
                            rest
                        } else {
                            Behaviour::seq(BOp::Loop(*n, body), rest)
                        }
                    }
                },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("location `{0}` is not mapped")]
pub struct UnmappedLocation(pub Location);

/// Replaces every location pointwise. Locations already denoting nodes are
/// left alone when the map does not mention them.
pub fn subst_locations(b: &Behaviour, map: &LocationSubst) -> Result<Behaviour, UnmappedLocation> {
    let loc = |l: &Location| -> Result<Location, UnmappedLocation> {
        match map.get(l) {
            Some(x) => Ok(x.clone()),
            None if !l.is_symbolic() => Ok(l.clone()),
            None => Err(UnmappedLocation(l.clone())),
        }
    };
    Ok(match b {
        Behaviour::Eps => Behaviour::Eps,
        Behaviour::Par(l, r) => Behaviour::par(subst_locations(l, map)?, subst_locations(r, map)?),
        Behaviour::Seq(op, rest) => {
            let op = match op.as_ref() {
                BOp::Access(pi) => BOp::Access(match pi {
                    RemAccess::Read(s, d) => RemAccess::Read(loc(s)?, loc(d)?),
                    RemAccess::Write(s, d) => RemAccess::Write(loc(s)?, loc(d)?),
                    RemAccess::Msg(s, d, m) => RemAccess::Msg(loc(s)?, loc(d)?, m.clone()),
                }),
                BOp::Choice(l, r) => BOp::Choice(subst_locations(l, map)?, subst_locations(r, map)?),
                BOp::Loop(n, body) => BOp::Loop(*n, subst_locations(body, map)?),
            };
            Behaviour::seq(op, subst_locations(rest, map)?)
        }
    })
}

/// Canonical form used for comparisons: empty loops are dropped.
pub fn canonical(b: &Behaviour) -> Behaviour {
    match b {
        Behaviour::Eps => Behaviour::Eps,
        Behaviour::Par(l, r) => Behaviour::par(canonical(l), canonical(r)),
        Behaviour::Seq(op, rest) => {
            let rest = canonical(rest);
            match op.as_ref() {
                BOp::Loop(0, _) => rest,
                BOp::Loop(n, body) => Behaviour::seq(BOp::Loop(*n, canonical(body)), rest),
                BOp::Choice(l, r) => Behaviour::seq(BOp::Choice(canonical(l), canonical(r)), rest),
                BOp::Access(pi) => Behaviour::seq(BOp::Access(pi.clone()), rest),
            }
        }
    }
}

/// Syntactic equality up to canonicalisation. No commutativity is assumed.
pub fn equiv(b1: &Behaviour, b2: &Behaviour) -> bool {
    canonical(b1) == canonical(b2)
}

/// The clause of behaviour reduction that justified a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Clause {
    /// `π.b →π b`
    Prefix,
    /// `b →ε b`
    Stutter,
    /// `(b ⊕ _).c →ε b ∘ c`
    ChoiceLeft,
    /// `(_ ⊕ b).c →ε b ∘ c`
    ChoiceRight,
    /// `n·{b}.c →ε b ∘ (n−1)·{b}.c`
    Unroll,
    /// `b ∥ _ →ε b`
    ParLeft,
}

impl Clause {
    pub fn name(self) -> &'static str {
        match self {
            Clause::Prefix => "prefix",
            Clause::Stutter => "stutter",
            Clause::ChoiceLeft => "choice-left",
            Clause::ChoiceRight => "choice-right",
            Clause::Unroll => "unroll",
            Clause::ParLeft => "par-left",
        }
    }
}

/// One behaviour reduction step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BehaviourStep {
    pub label: Label,
    pub result: Behaviour,
    pub clause: Clause,
    /// Right branch dropped by a parallel projection.
    pub detached: Option<Behaviour>,
}

/// Every non-stuttering single step of `b`, under any label.
pub fn steps(b: &Behaviour) -> Vec<BehaviourStep> {
    let mut out = Vec::new();
    match b {
        Behaviour::Eps => {}
        Behaviour::Par(l, r) => out.push(BehaviourStep {
            label: Label::Eps,
            result: (**l).clone(),
            clause: Clause::ParLeft,
            detached: Some((**r).clone()),
        }),
        Behaviour::Seq(op, rest) => match op.as_ref() {
            BOp::Access(pi) => out.push(BehaviourStep {
                label: Label::Access(pi.clone()),
                result: (**rest).clone(),
                clause: Clause::Prefix,
                detached: None,
            }),
            BOp::Choice(l, r) => {
                for (branch, clause) in [(l, Clause::ChoiceLeft), (r, Clause::ChoiceRight)] {
                    out.push(BehaviourStep {
                        label: Label::Eps,
                        result: concat(branch, rest),
                        clause,
                        detached: None,
                    });
                }
            }
            BOp::Loop(n, body) => {
                let result = match n {
                    0 => (**rest).clone(),
                    1 => concat(body, rest),
                    n => concat(body, &Behaviour::seq(BOp::Loop(n - 1, body.clone()), (**rest).clone())),
                };
                out.push(BehaviourStep {
                    label: Label::Eps,
                    result,
                    clause: Clause::Unroll,
                    detached: None,
                });
            }
        },
    }
    out
}

/// All successors of `b` under `label`, including the stuttering step for ε.
pub fn reduce(b: &Behaviour, label: &Label) -> BTreeSet<Behaviour> {
    let mut out: BTreeSet<Behaviour> = steps(b)
        .into_iter()
        .filter(|s| &s.label == label)
        .map(|s| s.result)
        .collect();
    if *label == Label::Eps {
        out.insert(b.clone());
    }
    out
}

/// Behaviours reachable by finitely many ε-steps followed by one `label`
/// step (just the ε-steps when `label` is ε).
pub fn reduce_closure(b: &Behaviour, label: &Label) -> BTreeSet<Behaviour> {
    let eps = eps_closure(b);
    match label {
        Label::Eps => eps,
        Label::Access(_) => eps.iter().flat_map(|x| reduce(x, label)).collect(),
    }
}

/// Reflexive-transitive ε-closure. Finite: every ε-step consumes a choice,
/// a loop iteration or a parallel branch.
pub fn eps_closure(b: &Behaviour) -> BTreeSet<Behaviour> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([b.clone()]);
    while let Some(x) = queue.pop_front() {
        if !seen.insert(x.clone()) {
            continue;
        }
        for s in steps(&x) {
            if s.label == Label::Eps && !seen.contains(&s.result) {
                queue.push_back(s.result);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_behaviour;

    fn b(s: &str) -> Behaviour {
        parse_behaviour(s).unwrap()
    }

    #[test]
    fn concat_clauses() {
        let x = b("write(c,d)");
        assert_eq!(concat(&Behaviour::Eps, &x), x);
        assert_eq!(concat(&b("read(a,b)"), &x), b("read(a,b).write(c,d)"));
        let par = b("(read(a,b) || write(a,c))");
        assert_eq!(concat(&par, &x), b("(read(a,b).write(c,d) || write(a,c))"));
    }

    #[test]
    fn filter_examples() {
        assert_eq!(filter(&b("write(L1,L1).write(L1,L2)")), b("write(L1,L2)"));
        let tail = b("read(0,1)");
        let with_choice = b("(write(2,2) + read(2,2)).read(0,1)");
        assert_eq!(filter(&with_choice), filter(&tail));
        assert_eq!(filter(&b("3*{read(2,2)}")), Behaviour::Eps);
        assert_eq!(filter(&b("(read(0,0) || read(0,1))")), b("(eps || read(0,1))"));
        assert_eq!(filter(&b("(read(0,0) + read(0,1))")), b("(eps + read(0,1))"));
    }

    #[test]
    fn filter_skip_loops_keeps_self_accesses() {
        let x = b("3*{read(2,2)}.write(0,0)");
        assert_eq!(filter_with(&x, FilterMode::SkipLoops), b("3*{read(2,2)}"));
    }

    #[test]
    fn subst_examples() {
        let map: LocationSubst = [
            (Location::Abstract("L1".into()), Location::Node(1)),
            (Location::Abstract("L2".into()), Location::Node(2)),
            (Location::Abstract("L3".into()), Location::Node(2)),
        ]
        .into_iter()
        .collect();
        assert_eq!(subst_locations(&b("write(L1,L2)"), &map).unwrap(), b("write(1,2)"));
        assert_eq!(
            subst_locations(&b("write(L1,L2).write(L1,L3)"), &map).unwrap(),
            b("write(1,2).write(1,2)")
        );
        assert_eq!(subst_locations(&Behaviour::Eps, &LocationSubst::new()).unwrap(), Behaviour::Eps);
        assert_eq!(
            subst_locations(&b("read(L1,L9)"), &map),
            Err(UnmappedLocation(Location::Abstract("L9".into())))
        );
    }

    #[test]
    fn reduce_prefix() {
        let rest = b("read(1,2)");
        let x = concat(&b("write(1,2)"), &rest);
        let pi = Label::Access(RemAccess::Write(Location::Node(1), Location::Node(2)));
        assert!(reduce(&x, &pi).contains(&rest));
        let wrong = Label::Access(RemAccess::Read(Location::Node(1), Location::Node(2)));
        assert!(reduce(&x, &wrong).is_empty());
    }

    #[test]
    fn reduce_loop_unrolls() {
        let body = b("read(0,1)");
        let cont = b("write(0,2)");
        let x = Behaviour::seq(BOp::Loop(2, body.clone()), cont.clone());
        let expected = concat(&body, &Behaviour::seq(BOp::Loop(1, body.clone()), cont.clone()));
        assert!(reduce(&x, &Label::Eps).contains(&expected));
        let last = Behaviour::seq(BOp::Loop(1, body.clone()), cont.clone());
        assert!(reduce(&last, &Label::Eps).contains(&concat(&body, &cont)));
    }

    #[test]
    fn reduce_par_and_choice() {
        let (l, r) = (b("read(0,1)"), b("write(0,1)"));
        let par = Behaviour::par(l.clone(), r.clone());
        assert!(reduce(&par, &Label::Eps).contains(&l));
        assert!(!reduce(&par, &Label::Eps).contains(&r));
        let ch = concat(&Behaviour::choice(l.clone(), r.clone()), &b("msg(0,1,m)"));
        let succ = reduce(&ch, &Label::Eps);
        assert!(succ.contains(&b("read(0,1).msg(0,1,m)")));
        assert!(succ.contains(&b("write(0,1).msg(0,1,m)")));
        assert!(succ.contains(&ch));
    }

    #[test]
    fn closure_reaches_inside_loops() {
        let x = b("2*{(eps + read(0,1))}.write(0,1)");
        let w = Label::Access(RemAccess::Write(Location::Node(0), Location::Node(1)));
        assert!(reduce_closure(&x, &w).contains(&Behaviour::Eps));
    }

    #[test]
    fn equiv_cases() {
        let x = b("write(L1,L2)");
        assert!(equiv(&x, &x));
        assert!(equiv(&x, &concat(&x, &Behaviour::Eps)));
        let (p, q) = (b("read(a,b)"), b("write(a,b)"));
        assert!(!equiv(&Behaviour::par(p.clone(), q.clone()), &Behaviour::par(q, p)));
    }
}
