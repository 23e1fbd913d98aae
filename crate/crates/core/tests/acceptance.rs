//! End-to-end acceptance checks. Runs as a plain binary so that the
//! per-criterion verdict lines are always printed; exits non-zero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elcq_core::answer::{
    answer_over_store, canonicalize, certain_answers, for_each_candidate, resolve, AnswerOptions,
    Answers, Substitution,
};
use elcq_core::arborescent::entails_arborescent;
use elcq_core::bench::{bench_queries, gen_bench, BenchSpec, TRANSITIVE_QUERY};
use elcq_core::chase::{oracle_answers, ChaseLimits};
use elcq_core::corpus::{
    random_arborescent_query, random_kb, random_query, random_saturating_kb, KbShape, QueryParams,
};
use elcq_core::filter::{classify_atom, is_sound, AtomKind, FilterConfig, Verdict};
use elcq_core::hardgen::{
    all_three_cnf, brute_sat, gen_acyclic_hard, gen_filter_hard, gen_refl_hard, gen_trans_hard,
    Cnf, HardInstance,
};
use elcq_core::kb::Kb;
use elcq_core::materialize::{aux_individual, materialize, named_individual, FactStore};
use elcq_core::text::{parse_kb, parse_query, print_query, serialize_kb};
use elcq_core::translate::{build_datalog, build_rule_base};

const EX1: &str = include_str!("data/ex1.kb");
const FORK_QUERY: &str = include_str!("data/ex3.q");
const SELF_LOOP_QUERY: &str =
    "q(?x) :- S(?x,?y1), S(?y1,?y1), R(?x,?y3), D(?y3), R(?y2,?y3), F(?y2), T(?y2,?x).";

type Check = Result<String, String>;
type Generator = fn(&Cnf) -> HardInstance;
type Criterion = (&'static str, fn() -> Check);

fn store_of(kb: &Kb) -> FactStore {
    materialize(&build_datalog(kb).expect("valid KB"))
        .expect("within limits")
        .0
}

fn ex1_store() -> FactStore {
    store_of(&parse_kb(EX1).unwrap())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!(
            "took {:.2}s, limit {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        )
    })
}

fn nominal_merge() -> Check {
    let t = Instant::now();
    let store = ex1_store();
    let a = named_individual(&store, "a").unwrap();
    let tg = aux_individual(&store, "T", "G").ok_or("aux individual for T, G missing")?;
    ensure(store.representative(tg) == a, || {
        format!(
            "representative is {}",
            store.individual_name(store.representative(tg))
        )
    })?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "aux:T:G merged into a in {:.1} ms",
        t.elapsed().as_secs_f64() * 1e3
    ))
}

fn fork_query_answer() -> Check {
    let t = Instant::now();
    let kb = parse_kb(EX1).unwrap();
    let cq = parse_query(FORK_QUERY).unwrap();
    let set = certain_answers(&kb, &cq, &AnswerOptions::default()).map_err(|e| e.to_string())?;
    let want: BTreeSet<Vec<String>> = [vec!["a".to_string(), "b".to_string()]].into();
    ensure(set.tuples() == Some(&want), || {
        format!("answers {:?}", set.answers)
    })?;

    let store = store_of(&kb);
    let q = resolve(&cq, &store).unwrap();
    let y = q.var_names.iter().position(|v| v == "y").unwrap() as u32;
    let mut tau = Substitution::new(q.var_count());
    tau.set(0, named_individual(&store, "a").unwrap());
    tau.set(1, named_individual(&store, "b").unwrap());
    tau.set(y, aux_individual(&store, "T", "D").unwrap());
    let out = is_sound(&q, &store, &tau, &FilterConfig::default());
    ensure(out.is_sound(), || {
        format!("y -> aux:T:D judged {:?}", out.verdict)
    })?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok("{(a, b)}, y -> aux:T:D accepted".into())
}

fn self_loop_query_soundness() -> Check {
    let t = Instant::now();
    let store = ex1_store();
    let q = resolve(&parse_query(SELF_LOOP_QUERY).unwrap(), &store).unwrap();
    let a = named_individual(&store, "a").unwrap();
    let b = named_individual(&store, "b").unwrap();
    let ind = |r, c| aux_individual(&store, r, c).unwrap();
    // Variables in order x, y1, y3, y2.
    let mut tau = Substitution::new(4);
    for (v, u) in [a, ind("S", "C"), ind("T", "D"), ind("T", "F")]
        .into_iter()
        .enumerate()
    {
        tau.set(v as u32, u);
    }
    let out = is_sound(&q, &store, &tau, &FilterConfig::default());
    ensure(out.verdict == Verdict::Sound, || {
        format!("verdict {:?}", out.verdict)
    })?;
    let w = out.witness.ok_or("no witness")?;
    ensure(w.renaming.is_identity(), || {
        "renaming is not the identity".into()
    })?;
    let roots: BTreeSet<_> = w.parent.values().copied().collect();
    ensure(
        roots == [a, b].map(elcq_core::answer::QTerm::Const).into(),
        || format!("skeleton parents {:?}", w.parent),
    )?;
    let t_role = store.signature().find_role("T").unwrap();
    ensure(w.guesses.iter().all(|g| g.role == t_role), || {
        "a guessed role other than T".into()
    })?;
    ensure(w.guesses.iter().any(|g| g.split_root == Some(a)), || {
        "no path split at a".into()
    })?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "sound after {} choices, T guesses split at a",
        out.choices
    ))
}

fn oracle_equivalence() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let shape = KbShape::default();
    let (mut queries, mut nonempty, mut unsat) = (0, 0, 0);
    for k in 0..200 {
        let kb = random_saturating_kb(&mut rng, &shape, ChaseLimits::default());
        let base = build_rule_base(&kb).unwrap();
        for _ in 0..5 {
            let q = random_query(&mut rng, &shape, &QueryParams::default());
            let ours =
                certain_answers(&kb, &q, &AnswerOptions::default()).map_err(|e| e.to_string())?;
            let oracle = oracle_answers(&base, &q, ChaseLimits::default());
            ensure(oracle.complete, || {
                format!("kb #{k}: chase did not saturate")
            })?;
            ensure(ours.undecided.is_empty(), || {
                format!("kb #{k}: undecided tuples")
            })?;
            let same = match &ours.answers {
                Answers::Unsatisfiable => {
                    unsat += 1;
                    oracle.unsatisfiable
                }
                Answers::Tuples(ts) => {
                    nonempty += usize::from(!ts.is_empty());
                    !oracle.unsatisfiable && *ts == oracle.tuples
                }
            };
            ensure(same, || {
                format!(
                    "kb #{k}\n{}\n{}\nengine {:?}\noracle {:?}",
                    serialize_kb(&kb),
                    print_query(&q),
                    ours.answers,
                    oracle.tuples
                )
            })?;
            queries += 1;
        }
    }
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "200 KBs, {queries} queries agree ({nonempty} non-empty, {unsat} unsatisfiable) in {:.1}s",
        t.elapsed().as_secs_f64()
    ))
}

/// The exhaustive formulas with n, m <= 3 followed by 100 random ones with
/// n, m <= 4.
fn hardness_formulas() -> Vec<Cnf> {
    let mut out = Vec::new();
    for n in 1..=3 {
        for m in 1..=3 {
            out.extend(all_three_cnf(n, m));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..100 {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        out.push(Cnf::random_three_cnf(&mut rng, n, m));
    }
    out
}

fn hardness_equivalence() -> Check {
    let t = Instant::now();
    let formulas = hardness_formulas();
    let generators: [(&str, Generator); 4] = [
        ("filter", |phi| gen_filter_hard(phi).expect("3CNF input")),
        ("acyclic", gen_acyclic_hard),
        ("trans", gen_trans_hard),
        ("refl", gen_refl_hard),
    ];
    let opts = AnswerOptions::default();
    let mut times = Vec::new();
    for (name, generate) in generators {
        let start = Instant::now();
        for phi in &formulas {
            let inst = generate(phi);
            let set = certain_answers(&inst.kb, &inst.query, &opts).map_err(|e| e.to_string())?;
            ensure(set.undecided.is_empty(), || {
                format!("{name}: undecided on {}", phi.to_dimacs())
            })?;
            ensure(set.entailed() == brute_sat(phi), || {
                format!(
                    "{name}: entailed {} but satisfiable {} for\n{}",
                    set.entailed(),
                    brute_sat(phi),
                    phi.to_dimacs()
                )
            })?;
        }
        times.push(format!("{name} {:.1}s", start.elapsed().as_secs_f64()));
    }
    within(t.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} formulas x 4 generators agree ({})",
        formulas.len(),
        times.join(", ")
    ))
}

fn filter_uniqueness() -> Check {
    let formulas = hardness_formulas();
    for phi in &formulas {
        let inst = gen_filter_hard(phi).map_err(|e| e.to_string())?;
        let store = store_of(&inst.kb);
        let q = resolve(&inst.query, &store).ok_or("query symbols missing from the KB")?;
        let expected = inst
            .expected_tau
            .as_ref()
            .ok_or("no expected substitution")?;
        let mut want = Substitution::new(q.var_count());
        for (v, name) in q.var_names.iter().enumerate() {
            let (role, concept) = &expected[name];
            let u = aux_individual(&store, role, concept)
                .ok_or_else(|| format!("no aux for {role}, {concept}"))?;
            want.set(v as u32, store.representative(u));
        }
        let mut found = Vec::new();
        for_each_candidate(&q, &store, |tau| {
            found.push(tau.clone());
            ControlFlow::Continue(())
        });
        ensure(found.len() == 1, || {
            format!("{} candidates for\n{}", found.len(), phi.to_dimacs())
        })?;
        ensure(found[0] == want, || {
            format!("unexpected candidate for\n{}", phi.to_dimacs())
        })?;
    }
    Ok(format!(
        "{} instances, one candidate each, equal to the expected one",
        formulas.len()
    ))
}

fn pay_as_you_go() -> Check {
    let bench = gen_bench(&BenchSpec::default());
    let mut suite: Vec<(Kb, String)> = [
        "q(?x) :- A(?x), S(?x, ?y), C(?y).",
        "q(?x) :- A(?x), S(?x, ?y).",
        "q(?x) :- S(?x, ?x).",
        "q(?x, ?y) :- T(?x, ?y), G(?y).",
        "q(?x) :- T(?x, a).",
        "q() :- A(?x), S(?x, ?y), S(?y, ?y).",
    ]
    .iter()
    .map(|q| (parse_kb(EX1).unwrap(), q.to_string()))
    .collect();
    for (i, q) in bench_queries().iter().enumerate() {
        if i != TRANSITIVE_QUERY {
            suite.push((bench.clone(), print_query(q)));
        }
    }
    let (mut candidates, mut outside) = (0, Vec::new());
    for (kb, text) in &suite {
        let store = store_of(kb);
        let q = resolve(&parse_query(text).unwrap(), &store).ok_or("unknown symbol")?;
        let mut failure = None;
        for_each_candidate(&q, &store, |tau| {
            let (cq, ctau) = canonicalize(&q, tau, &store);
            let all_cheap = cq
                .binary_atoms()
                .all(|(r, s, t)| classify_atom(r, s, t, &ctau, &store) != AtomKind::Other);
            if !all_cheap {
                outside.push(text.clone());
                return ControlFlow::Continue(());
            }
            candidates += 1;
            let out = is_sound(&q, &store, tau, &FilterConfig::default());
            if !out.fast_path || out.choices != 0 {
                failure = Some(format!(
                    "{text}: fast_path {} choices {}",
                    out.fast_path, out.choices
                ));
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        if let Some(f) = failure {
            return Err(f);
        }
    }
    ensure(outside.is_empty(), || {
        format!("candidates with an atom outside the class: {outside:?}")
    })?;
    ensure(candidates > 0, || "the suite produced no candidates".into())?;
    Ok(format!(
        "{} queries, {candidates} candidates, all on the fast path with 0 choices",
        suite.len()
    ))
}

/// Pairs of KBs differing in one axiom or assertion: the first of each pair
/// is satisfiable, the second is not.
const SAT_PAIRS: [(&str, &str); 10] = [
    ("A SubClassOf B\nA(a)\n", "A SubClassOf Bot\nA(a)\n"),
    ("A and B SubClassOf Bot\nA(a)\nB(b)\n", "A and B SubClassOf Bot\nA(a)\nB(a)\n"),
    ("some R A SubClassOf Bot\nR(a, b)\nA(a)\n", "some R A SubClassOf Bot\nR(a, b)\nA(b)\n"),
    (
        "A SubClassOf some R B\nB SubClassOf some R C\nC SubClassOf D\nA(a)\n",
        "A SubClassOf some R B\nB SubClassOf some R C\nC SubClassOf Bot\nA(a)\n",
    ),
    ("range R B\nB SubClassOf Bot\nS(a, b)\n", "range R B\nB SubClassOf Bot\nR(a, b)\n"),
    (
        "R SubRoleOf S\nrange S B\nB and C SubClassOf Bot\nR(a, b)\nC(a)\n",
        "R SubRoleOf S\nrange S B\nB and C SubClassOf Bot\nR(a, b)\nC(b)\n",
    ),
    (
        "A SubClassOf { a }\nA and B SubClassOf Bot\nA(b)\nC(b)\n",
        "A SubClassOf { a }\nA and B SubClassOf Bot\nA(b)\nB(a)\n",
    ),
    (
        "transitive R\nsome R C SubClassOf D\nD and E SubClassOf Bot\nR(a, b)\nR(b, c)\nC(c)\nE(c)\n",
        "transitive R\nsome R C SubClassOf D\nD and E SubClassOf Bot\nR(a, b)\nR(b, c)\nC(c)\nE(a)\n",
    ),
    ("reflexive R\nsome R A SubClassOf B\nA(a)\n", "reflexive R\nsome R A SubClassOf Bot\nA(a)\n"),
    (
        "A SubClassOf self S\nself S SubClassOf B\nB and C SubClassOf Bot\nA(a)\nC(b)\n",
        "A SubClassOf self S\nself S SubClassOf B\nB and C SubClassOf Bot\nA(a)\nC(a)\n",
    ),
];

fn satisfiability() -> Check {
    let mut checked = 0;
    for (i, (sat, unsat)) in SAT_PAIRS.iter().enumerate() {
        for (text, want_unsat) in [(sat, false), (unsat, true)] {
            let kb = parse_kb(text).map_err(|e| format!("pair {i}: {e}"))?;
            let store = store_of(&kb);
            ensure(store.is_unsatisfiable() == want_unsat, || {
                format!("pair {i}: expected unsatisfiable = {want_unsat}\n{text}")
            })?;
            // The chase agrees wherever it terminates.
            let oracle = oracle_answers(
                &build_rule_base(&kb).unwrap(),
                &parse_query("q(?x) :- Top(?x).").unwrap(),
                ChaseLimits::default(),
            );
            ensure(
                !oracle.complete || oracle.unsatisfiable == want_unsat,
                || format!("pair {i}: chase disagrees"),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} KBs ({} satisfiable, {} not) decided correctly",
        checked / 2,
        checked / 2
    ))
}

fn arborescent_agreement() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let shape = KbShape {
        elho: true,
        bot: false,
        axioms: 12,
        ..KbShape::default()
    };
    let mut entailed = 0;
    for k in 0..100 {
        let kb = random_kb(&mut rng, &shape);
        let q = random_arborescent_query(&mut rng, &shape, 4);
        let full =
            certain_answers(&kb, &q, &AnswerOptions::default()).map_err(|e| e.to_string())?;
        let fast = entails_arborescent(&kb, &q).map_err(|e| format!("case {k}: {e}"))?;
        ensure(full.undecided.is_empty(), || format!("case {k}: undecided"))?;
        ensure(fast == full.entailed(), || {
            format!(
                "case {k}\n{}\n{}\nprocedure {fast}, pipeline {}",
                serialize_kb(&kb),
                print_query(&q),
                full.entailed()
            )
        })?;
        entailed += usize::from(fast);
    }
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "100 cases agree ({entailed} entailed) in {:.2}s",
        t.elapsed().as_secs_f64()
    ))
}

/// Least-squares slope of log y against log x.
fn fitted_exponent(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    cov / var
}

fn bench_scaling() -> Check {
    let t = Instant::now();
    let q = &bench_queries()[TRANSITIVE_QUERY];
    let mut ratios = Vec::new();
    let mut choices = Vec::new();
    for scale in [1, 2, 4] {
        let kb = gen_bench(&BenchSpec {
            scale,
            ..BenchSpec::default()
        });
        let (store, stats) =
            materialize(&build_datalog(&kb).unwrap()).map_err(|e| e.to_string())?;
        ratios.push(stats.ratio());
        let set = answer_over_store(&store, q, &AnswerOptions::default());
        ensure(set.undecided.is_empty(), || {
            format!("scale {scale}: undecided tuples")
        })?;
        choices.push((kb.abox_len() as f64, set.stats.choices_avg()));
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    ensure(hi <= lo * 1.1, || {
        format!("ratios {ratios:?} vary by more than 10%")
    })?;
    let exponent = if choices.iter().all(|&(_, c)| c > 0.0) {
        fitted_exponent(&choices)
    } else {
        ensure(choices.iter().all(|&(_, c)| c == 0.0), || {
            format!("choices {choices:?}")
        })?;
        0.0
    };
    ensure(exponent <= 3.0, || {
        format!("choices_avg exponent {exponent:.2}")
    })?;
    within(t.elapsed(), Duration::from_secs(300))?;
    let ratio_text: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    let choice_text: Vec<String> = choices.iter().map(|(_, c)| format!("{c:.2}")).collect();
    Ok(format!(
        "ratios [{}], choices_avg [{}], exponent {exponent:.2}",
        ratio_text.join(", "),
        choice_text.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("nominal merge in the running example", nominal_merge),
        ("running example answer", fork_query_answer),
        ("self-loop query soundness", self_loop_query_soundness),
        ("oracle equivalence", oracle_equivalence),
        ("hardness equivalence", hardness_equivalence),
        ("filter-hard uniqueness", filter_uniqueness),
        ("pay-as-you-go fast path", pay_as_you_go),
        ("satisfiability suite", satisfiability),
        ("arborescent agreement", arborescent_agreement),
        ("benchmark scaling", bench_scaling),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
