//! The hard instances decided by the bounded chase instead of the engine,
//! which checks the encodings independently of materialization and the
//! filter.

use elcq_core::chase::{oracle_answers, ChaseLimits};
use elcq_core::hardgen::{
    all_three_cnf, brute_sat, gen_acyclic_hard, gen_filter_hard, Cnf, HardInstance,
};
use elcq_core::translate::build_rule_base;

fn small_formulas() -> Vec<Cnf> {
    let mut out = Vec::new();
    for n in 1..=2 {
        for m in 1..=2 {
            out.extend(all_three_cnf(n, m));
        }
    }
    out
}

/// Whether the chase up to `depth` entails the query, and whether it
/// saturated.
fn chase_entails(inst: &HardInstance, depth: u32) -> (bool, bool) {
    let base = build_rule_base(&inst.kb).unwrap();
    let res = oracle_answers(
        &base,
        &inst.query,
        ChaseLimits {
            depth,
            facts: 1_000_000,
        },
    );
    (res.unsatisfiable || !res.tuples.is_empty(), res.complete)
}

#[test]
fn acyclic_encoding_agrees_with_the_chase() {
    for phi in small_formulas() {
        let (entailed, complete) = chase_entails(&gen_acyclic_hard(&phi), 8);
        assert!(complete);
        assert_eq!(entailed, brute_sat(&phi), "{}", phi.to_dimacs());
    }
}

#[test]
fn filter_encoding_agrees_with_the_chase() {
    // The chase of these KBs is infinite; a truncated one is sound. A
    // satisfying assignment shows up as a chain through one literal of every
    // clause, at depth 2m + 1.
    for phi in small_formulas() {
        let depth = 2 * phi.clauses.len() as u32 + 1;
        let (entailed, _) = chase_entails(&gen_filter_hard(&phi).unwrap(), depth);
        assert_eq!(entailed, brute_sat(&phi), "{}", phi.to_dimacs());
    }
}
