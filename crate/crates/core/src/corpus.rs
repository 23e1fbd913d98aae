//! Seeded random KBs and queries for cross-checking the engine against the
//! chase oracle and the arborescent procedure.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::answer::{Cq, CqAtom, CqTerm};
use crate::chase::{chase, ChaseLimits};
use crate::kb::{Axiom, ConceptId, Kb, RoleId};
use crate::translate::build_rule_base;

#[derive(Clone, Debug)]
pub struct KbShape {
    pub concepts: usize,
    /// Role 0 is transitive and role 1 reflexive when `elho` is false.
    pub roles: usize,
    pub individuals: usize,
    pub axioms: usize,
    pub assertions: usize,
    /// Restrict to axiom forms 1 to 7.
    pub elho: bool,
    /// Allow `Bot` on right-hand sides.
    pub bot: bool,
}

impl Default for KbShape {
    fn default() -> Self {
        KbShape {
            concepts: 6,
            roles: 3,
            individuals: 8,
            axioms: 10,
            assertions: 10,
            elho: false,
            bot: true,
        }
    }
}

fn concept_name(i: usize) -> String {
    format!("A{i}")
}

fn role_name(i: usize) -> String {
    format!("R{i}")
}

fn individual_name(i: usize) -> String {
    format!("i{i}")
}

/// A random KB of the given shape. Existential fillers always come later in
/// the concept order than the concept that triggers them, which keeps most
/// chases finite; use [`random_saturating_kb`] when finiteness matters.
pub fn random_kb(rng: &mut impl Rng, shape: &KbShape) -> Kb {
    let mut kb = Kb::new();
    let concepts: Vec<ConceptId> = (0..shape.concepts)
        .map(|i| kb.sig.concept(&concept_name(i)))
        .collect();
    let roles: Vec<RoleId> = (0..shape.roles)
        .map(|i| kb.sig.role(&role_name(i)))
        .collect();
    let individuals: Vec<_> = (0..shape.individuals)
        .map(|i| kb.sig.individual(&individual_name(i)))
        .collect();

    if !shape.elho {
        if let Some(&r) = roles.first() {
            kb.add_axiom(Axiom::Transitive(r));
        }
        if let Some(&r) = roles.get(1) {
            kb.add_axiom(Axiom::Reflexive(r));
        }
    }
    // Role inclusions go from higher to lower index, so the transitive role
    // only ever sits above others.
    for _ in 0..rng.gen_range(0..=roles.len()) {
        let (a, b) = (rng.gen_range(0..roles.len()), rng.gen_range(0..roles.len()));
        if a > b {
            kb.add_axiom(Axiom::SubRole {
                sub: roles[a],
                sup: roles[b],
            });
        }
    }
    let hierarchy = kb.hierarchy();
    let simple: Vec<RoleId> = roles
        .iter()
        .copied()
        .filter(|&r| hierarchy.is_simple(r))
        .collect();

    let n = concepts.len();
    let pick = |rng: &mut dyn rand::RngCore| concepts[rng.gen_range(0..n)];
    let max_form = if shape.elho { 7 } else { 11 };
    let mut added = 0;
    let mut attempts = 0;
    while added < shape.axioms && attempts < shape.axioms * 20 {
        attempts += 1;
        let role = roles[rng.gen_range(0..roles.len())];
        let ax = match rng.gen_range(1..=max_form) {
            1 => {
                let sup = if shape.bot && rng.gen_bool(0.1) {
                    ConceptId::BOT
                } else {
                    pick(rng)
                };
                Axiom::SubClass {
                    sub: pick(rng),
                    sup,
                }
            }
            2 => Axiom::Nominal {
                sub: pick(rng),
                individual: individuals[rng.gen_range(0..individuals.len())],
            },
            3 => Axiom::Conjunction {
                left: pick(rng),
                right: pick(rng),
                sup: pick(rng),
            },
            4 => Axiom::ExistsSub {
                role,
                filler: pick(rng),
                sup: pick(rng),
            },
            5 => continue,
            6 => Axiom::Range {
                role,
                concept: pick(rng),
            },
            7 => {
                let a = rng.gen_range(0..n - 1);
                let b = rng.gen_range(a + 1..n);
                let sub = if rng.gen_bool(0.1) {
                    ConceptId::TOP
                } else {
                    concepts[a]
                };
                if sub == ConceptId::TOP && b == 0 {
                    continue;
                }
                Axiom::ExistsSup {
                    sub,
                    role,
                    filler: concepts[b],
                }
            }
            8 | 9 => continue,
            10 => match simple.choose(rng) {
                Some(&r) => Axiom::SelfSup {
                    sub: pick(rng),
                    role: r,
                },
                None => continue,
            },
            _ => match simple.choose(rng) {
                Some(&r) => Axiom::SelfSub {
                    role: r,
                    sup: pick(rng),
                },
                None => continue,
            },
        };
        if kb.add_axiom(ax) {
            added += 1;
        }
    }
    for _ in 0..shape.assertions {
        let a = individual_name(rng.gen_range(0..shape.individuals));
        if rng.gen_bool(0.5) {
            kb.assert_concept(&concept_name(rng.gen_range(0..n)), &a);
        } else {
            let b = individual_name(rng.gen_range(0..shape.individuals));
            kb.assert_role(&role_name(rng.gen_range(0..shape.roles)), &a, &b);
        }
    }
    kb
}

/// A random KB whose chase saturates within `limits`, by rejection.
pub fn random_saturating_kb(rng: &mut impl Rng, shape: &KbShape, limits: ChaseLimits) -> Kb {
    loop {
        let kb = random_kb(rng, shape);
        let Ok(base) = build_rule_base(&kb) else {
            continue;
        };
        if chase(&base, limits).saturated {
            return kb;
        }
    }
}

#[derive(Clone, Debug)]
pub struct QueryParams {
    pub max_atoms: usize,
    pub max_vars: usize,
    pub max_answer_vars: usize,
    /// Probability that a term is an individual rather than a variable.
    pub constants: f64,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams {
            max_atoms: 4,
            max_vars: 3,
            max_answer_vars: 2,
            constants: 0.1,
        }
    }
}

/// A random query over the first concepts, roles and individuals of `shape`.
pub fn random_query(rng: &mut impl Rng, kb_shape: &KbShape, shape: &QueryParams) -> Cq {
    let vars: Vec<String> = (0..rng.gen_range(1..=shape.max_vars))
        .map(|i| format!("x{i}"))
        .collect();
    let term = |rng: &mut dyn rand::RngCore| {
        if rng.gen_bool(shape.constants) {
            CqTerm::Const(individual_name(rng.gen_range(0..kb_shape.individuals)))
        } else {
            CqTerm::Var(vars[rng.gen_range(0..vars.len())].clone())
        }
    };
    let mut atoms = Vec::new();
    for _ in 0..rng.gen_range(1..=shape.max_atoms) {
        if rng.gen_bool(0.4) {
            atoms.push(CqAtom::Concept(
                concept_name(rng.gen_range(0..kb_shape.concepts)),
                term(rng),
            ));
        } else {
            atoms.push(CqAtom::Role(
                role_name(rng.gen_range(0..kb_shape.roles)),
                term(rng),
                term(rng),
            ));
        }
    }
    let mut q = Cq {
        name: "q".into(),
        answer_vars: Vec::new(),
        atoms,
    };
    let mut body: Vec<String> = q.body_vars().into_iter().collect();
    body.shuffle(rng);
    body.truncate(rng.gen_range(0..=shape.max_answer_vars));
    q.answer_vars = body;
    q
}

/// A random Boolean query whose variables form a tree with every role atom
/// pointing from a child to its parent.
pub fn random_arborescent_query(rng: &mut impl Rng, kb_shape: &KbShape, max_vars: usize) -> Cq {
    let n = rng.gen_range(1..=max_vars);
    let var = |i: usize| CqTerm::Var(format!("x{i}"));
    let mut atoms = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        atoms.push(CqAtom::Role(
            role_name(rng.gen_range(0..kb_shape.roles)),
            var(i),
            var(parent),
        ));
    }
    for _ in 0..rng.gen_range(1..=n) {
        atoms.push(CqAtom::Concept(
            concept_name(rng.gen_range(0..kb_shape.concepts)),
            var(rng.gen_range(0..n)),
        ));
    }
    atoms.shuffle(rng);
    Cq {
        name: "q".into(),
        answer_vars: Vec::new(),
        atoms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arborescent::{classify_query, QueryShape};
    use crate::kb::validate_kb;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_kbs_validate_and_respect_the_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = KbShape::default();
        for _ in 0..50 {
            let kb = random_kb(&mut rng, &shape);
            assert!(validate_kb(&kb).is_ok());
            assert!(kb.sig.concept_count() <= shape.concepts + 2);
            assert!(kb.sig.role_count() <= shape.roles);
            assert!(kb.sig.individual_count() <= shape.individuals);
        }
    }

    #[test]
    fn elho_shape_stays_elho() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = KbShape {
            elho: true,
            ..KbShape::default()
        };
        for _ in 0..50 {
            assert!(random_kb(&mut rng, &shape).is_elho());
        }
    }

    #[test]
    fn saturating_kbs_saturate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kb = random_saturating_kb(&mut rng, &KbShape::default(), ChaseLimits::default());
        assert!(chase(&build_rule_base(&kb).unwrap(), ChaseLimits::default()).saturated);
    }

    #[test]
    fn queries_respect_the_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = QueryParams::default();
        for _ in 0..100 {
            let q = random_query(&mut rng, &KbShape::default(), &shape);
            assert!(q.atoms.len() <= shape.max_atoms);
            assert!(q.body_vars().len() <= shape.max_vars);
            assert!(q.answer_vars.iter().all(|v| q.body_vars().contains(v)));
        }
    }

    #[test]
    fn arborescent_queries_are_arborescent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let q = random_arborescent_query(&mut rng, &KbShape::default(), 4);
            assert!(
                matches!(classify_query(&q), QueryShape::Arborescent { .. }),
                "{q:?}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = random_kb(&mut ChaCha8Rng::seed_from_u64(9), &KbShape::default());
        let b = random_kb(&mut ChaCha8Rng::seed_from_u64(9), &KbShape::default());
        assert_eq!(crate::text::serialize_kb(&a), crate::text::serialize_kb(&b));
    }
}
