// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::path::PathBuf;

use numalang::runtime::LocationMap;
use numalang::syntax::{parse_program, BOp, Behaviour, Location, Program, RemAccess};
use proptest::prelude::*;

pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub program: Program,
    /// From the `// map:` header line.
    pub map: LocationMap,
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus() -> Vec<CorpusEntry> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "nm"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let source = std::fs::read_to_string(&path).unwrap();
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            let program = parse_program(&source).unwrap_or_else(|d| panic!("{}: {:?}", name, d));
            let header = source
                .lines()
                .find_map(|l| l.trim().strip_prefix("// map:"))
                .unwrap_or_else(|| panic!("{} has no map header", name));
            let map = header.trim().parse().unwrap();
            CorpusEntry {
                name,
                path,
                source,
                program,
                map,
            }
        })
        .collect()
}

pub fn entry(name: &str) -> CorpusEntry {
    corpus().into_iter().find(|e| e.name == name).expect("corpus entry")
}

pub fn arb_location(nodes: u32) -> impl Strategy<Value = Location> {
    prop_oneof![
        (0..nodes).prop_map(Location::Node),
        (1..=nodes).prop_map(|i| Location::Abstract(format!("L{}", i))),
    ]
}

pub fn arb_node(nodes: u32) -> impl Strategy<Value = Location> {
    (0..nodes).prop_map(Location::Node)
}

pub fn arb_access(loc: BoxedStrategy<Location>) -> impl Strategy<Value = RemAccess> {
    let pair = (loc.clone(), loc);
    prop_oneof![
        pair.clone().prop_map(|(a, b)| RemAccess::Read(a, b)),
        pair.clone().prop_map(|(a, b)| RemAccess::Write(a, b)),
        (pair, prop::sample::select(vec!["m", "ping", "go"]))
            .prop_map(|((a, b), m)| RemAccess::Msg(a, b, m.to_string())),
    ]
}

/// Behaviours over `loc` with loop counts in `min_loop..=3`.
pub fn arb_behaviour_with(loc: BoxedStrategy<Location>, min_loop: u32) -> BoxedStrategy<Behaviour> {
    let access = arb_access(loc).boxed();
    let leaf = prop_oneof![
        1 => Just(Behaviour::Eps),
        3 => access.clone().prop_map(Behaviour::access),
    ];
    leaf.prop_recursive(4, 24, 3, move |inner| {
        let op = prop_oneof![
            3 => access.clone().prop_map(BOp::Access),
            1 => (inner.clone(), inner.clone()).prop_map(|(l, r)| BOp::Choice(l, r)),
            1 => (min_loop..=3, inner.clone()).prop_map(|(n, b)| BOp::Loop(n, b)),
        ];
        prop_oneof![
            4 => (op, inner.clone()).prop_map(|(o, rest)| Behaviour::seq(o, rest)),
            1 => (inner.clone(), inner).prop_map(|(l, r)| Behaviour::par(l, r)),
        ]
    })
    .boxed()
}

/// Parsable behaviours: loop counts start at 1.
pub fn arb_behaviour() -> BoxedStrategy<Behaviour> {
    arb_behaviour_with(arb_location(3).boxed(), 1)
}

/// Behaviours over concrete nodes, including empty loops.
pub fn arb_node_behaviour() -> BoxedStrategy<Behaviour> {
    arb_behaviour_with(arb_node(3).boxed(), 0)
}

/// Behaviours over abstract locations only, including empty loops.
pub fn arb_abstract_behaviour() -> BoxedStrategy<Behaviour> {
    let loc = (1u32..=3).prop_map(|i| Location::Abstract(format!("L{}", i)));
    arb_behaviour_with(loc.boxed(), 0)
}
