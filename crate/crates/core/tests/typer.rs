// SPDX-License-Identifier: Apache-2.0

mod common;

use numalang::effects::filter;
use numalang::syntax::{parse_behaviour, parse_expr, parse_program, Location, Type};
use numalang::typer::{check_program, check_program_report, Typer, TypingContext, TypingFrame};

fn rules(src: &str) -> Vec<String> {
    let p = parse_program(src).unwrap();
    check_program(&p).into_iter().filter_map(|d| d.rule).collect()
}

fn main_ctx(locs: &[&str]) -> TypingContext {
    let locs = locs.iter().map(|l| Location::Abstract(l.to_string())).collect();
    TypingContext::single(TypingFrame::with_this(Type::owned("Main", locs)))
}

#[test]
fn whole_corpus_is_well_typed() {
    for e in common::corpus() {
        let report = check_program_report(&e.program);
        assert!(report.is_ok(), "{}: {:?}", e.name, report.diagnostics);
        assert!(report.methods.iter().all(|m| m.ok), "{}", e.name);
    }
}

#[test]
fn placement_main_infers_two_remote_writes() {
    let e = common::entry("placement");
    let report = check_program_report(&e.program);
    let main = report.methods.iter().find(|m| m.class == "Main").unwrap();
    assert_eq!(main.filtered.as_deref(), Some("write(L1,L2).write(L1,L3)"));
}

#[test]
fn unfiltered_inference_keeps_local_accesses() {
    let e = common::entry("placement");
    let body = &e.program.main_class().unwrap().methods[0].body;
    let t = Typer::new(&e.program).type_expr(&mut main_ctx(&["L1", "L2", "L3"]), body).unwrap();
    assert_ne!(t.behaviour, filter(&t.behaviour));
    assert_eq!(filter(&t.behaviour), parse_behaviour("write(L1,L2).write(L1,L3)").unwrap());
}

#[test]
fn wrong_annotation_gets_a_suggestion() {
    let src = "class D<p> f: bool\nclass Main<L1, L2>\n def main(): nil as eps { let d = new D<L2> in d.f = true }";
    let p = parse_program(src).unwrap();
    let d = check_program(&p);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].span.line, 3);
    assert!(d[0].message.contains("suggested annotation: `as write(L1,L2).write(L1,L2)`"), "{}", d[0].message);
}

#[test]
fn rejects_remote_sync_calls() {
    let src = "class D<p> def m(): nil as eps { null }\nclass Main<L1, L2> def main(): nil as write(L1,L2) { let d = new D<L2> in d.m() }";
    assert!(rules(src).contains(&"T-Call".to_string()));
}

#[test]
fn rejects_active_creation_outside_main() {
    let src = "active class A<p> def go(): nil as eps { null }\nclass D<p> def mk(): nil as eps { let a = new A<p> in null }\nclass Main<L1> def main(): nil as eps { null }";
    assert!(rules(src).contains(&"T-NewO".to_string()));
}

#[test]
fn rejects_repeated_owner_locations() {
    let src = "active class A<p, q>\nclass Main<L1, L2> def main(): nil as eps { let a = new A<L2, L2> in null }";
    assert!(rules(src).contains(&"T-NewO".to_string()));
}

#[test]
fn rejects_messages_to_non_nil_methods() {
    let src = "active class A<p> def get(): bool as eps { true }\nclass Main<L1> def main(): nil as eps { let a = new A<L1> in a!get() }";
    assert!(rules(src).contains(&"T-Message".to_string()));
}

#[test]
fn rejects_recursion_with_the_cycle() {
    let src = "class D<p> def m(): nil as eps { this.n() } def n(): nil as eps { this.m() }\nclass Main<L1> def main(): nil as eps { null }";
    let p = parse_program(src).unwrap();
    let d = check_program(&p);
    assert!(d.iter().any(|d| d.message.contains("D.m -> D.n -> D.m")), "{:?}", d);
}

#[test]
fn rejects_empty_or_reversed_loops() {
    let src = "class Main<L1> def main(): nil as eps { for i in 3..3 { null } }";
    assert!(rules(src).contains(&"T-For".to_string()));
}

#[test]
fn rejects_unknown_variables_and_fields() {
    assert!(rules("class Main<L1> def main(): nil as eps { x }").contains(&"T-Var".to_string()));
    assert!(rules("class Main<L1> def main(): bool as eps { this.nope }").contains(&"T-FRead".to_string()));
}

#[test]
fn missing_main_is_reported() {
    assert!(rules("class D<p>").contains(&"WF-Program".to_string()));
}

#[test]
fn loop_effect_counts_inclusive_bounds() {
    let src = "class D<p> f: bool\nclass Main<L1, L2> d: D<L2> def main(): nil as eps { null }";
    let p = parse_program(src).unwrap();
    let e = parse_expr("for i in 1..4 { this.d.f }", "Main").unwrap();
    let t = Typer::new(&p).type_expr(&mut main_ctx(&["L1", "L2"]), &e).unwrap();
    assert_eq!(filter(&t.behaviour).to_string(), "4*{read(L1,L2)}");
}

#[test]
fn conditional_effect_is_a_choice() {
    let src = "class D<p> f: bool\nclass Main<L1, L2> d: D<L2> def main(): nil as eps { null }";
    let p = parse_program(src).unwrap();
    let e = parse_expr("if this.d.f then this.d.f = true else false", "Main").unwrap();
    let t = Typer::new(&p).type_expr(&mut main_ctx(&["L1", "L2"]), &e).unwrap();
    assert_eq!(t.ty, Type::Bool);
    assert_eq!(filter(&t.behaviour).to_string(), "read(L1,L2).(write(L1,L2) + eps)");
}
