//! Compilation of a KB into rules: the existential rule base used by the
//! chase, and the datalog program in which every existential restriction
//! `A1 ⊑ ∃R.A` is witnessed by one auxiliary individual `o_{R,A}`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::kb::{
    validate_kb, Assertion, Axiom, ConceptId, IndividualId, Kb, RoleHierarchy, RoleId, Signature,
    ValidationReport,
};

/// Index of an individual of the compiled program. Ids are dense and
/// follow the term order: named individuals by name, then auxiliary
/// individuals by (role name, concept name).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum IndKind {
    Named(IndividualId),
    Aux { role: RoleId, concept: ConceptId },
}

#[derive(Clone, Debug, Default)]
pub struct Individuals {
    kinds: Vec<IndKind>,
    named: HashMap<IndividualId, IndId>,
    aux: HashMap<(RoleId, ConceptId), IndId>,
    named_count: usize,
}

impl Individuals {
    fn build(
        sig: &Signature,
        named: &BTreeSet<IndividualId>,
        aux: &BTreeSet<(RoleId, ConceptId)>,
    ) -> Self {
        let mut named: Vec<IndividualId> = named.iter().copied().collect();
        named.sort_by(|a, b| sig.individual_name(*a).cmp(sig.individual_name(*b)));
        let mut aux: Vec<(RoleId, ConceptId)> = aux.iter().copied().collect();
        aux.sort_by(|x, y| {
            (sig.role_name(x.0), sig.concept_name(x.1))
                .cmp(&(sig.role_name(y.0), sig.concept_name(y.1)))
        });
        let mut out = Individuals {
            named_count: named.len(),
            ..Default::default()
        };
        for a in named {
            out.named.insert(a, IndId(out.kinds.len() as u32));
            out.kinds.push(IndKind::Named(a));
        }
        for (role, concept) in aux {
            out.aux
                .insert((role, concept), IndId(out.kinds.len() as u32));
            out.kinds.push(IndKind::Aux { role, concept });
        }
        out
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn named_count(&self) -> usize {
        self.named_count
    }

    pub fn kind(&self, id: IndId) -> IndKind {
        self.kinds[id.0 as usize]
    }

    pub fn is_named(&self, id: IndId) -> bool {
        (id.0 as usize) < self.named_count
    }

    pub fn named(&self, a: IndividualId) -> Option<IndId> {
        self.named.get(&a).copied()
    }

    pub fn aux(&self, role: RoleId, concept: ConceptId) -> Option<IndId> {
        self.aux.get(&(role, concept)).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = IndId> {
        (0..self.kinds.len() as u32).map(IndId)
    }

    pub fn aux_ids(&self) -> impl Iterator<Item = IndId> {
        (self.named_count as u32..self.kinds.len() as u32).map(IndId)
    }

    /// `a` for named individuals, `aux:R:A` for auxiliary ones.
    pub fn name(&self, sig: &Signature, id: IndId) -> String {
        match self.kind(id) {
            IndKind::Named(a) => sig.individual_name(a).to_string(),
            IndKind::Aux { role, concept } => {
                format!("aux:{}:{}", sig.role_name(role), sig.concept_name(concept))
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pred {
    Concept(ConceptId),
    Ind,
    SelfOf(RoleId),
    Role(RoleId),
    Direct(RoleId),
}

impl Pred {
    pub fn arity(self) -> usize {
        match self {
            Pred::Concept(_) | Pred::Ind | Pred::SelfOf(_) => 1,
            Pred::Role(_) | Pred::Direct(_) => 2,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(u32),
    Const(IndId),
}

/// An atom of a rule. Unary atoms repeat their argument in both slots.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: Pred,
    pub args: [Term; 2],
}

impl Atom {
    pub fn unary(pred: Pred, t: Term) -> Self {
        Atom { pred, args: [t, t] }
    }

    pub fn binary(pred: Pred, s: Term, t: Term) -> Self {
        Atom { pred, args: [s, t] }
    }

    pub fn terms(&self) -> &[Term] {
        &self.args[..self.pred.arity()]
    }
}

/// The function symbol `f_{R,A}^{A1}` of a skolemized `A1 ⊑ ∃R.A`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Skolem {
    pub role: RoleId,
    pub filler: ConceptId,
    pub trigger: ConceptId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Head {
    Atoms(Vec<Atom>),
    /// `∃var. atoms`; the variable is witnessed by `skolem(x)` in the chase.
    Exists {
        var: u32,
        skolem: Skolem,
        atoms: Vec<Atom>,
    },
    Equal(Term, Term),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub body: Vec<Atom>,
    pub head: Head,
}

impl Rule {
    pub fn is_datalog(&self) -> bool {
        !matches!(self.head, Head::Exists { .. })
    }
}

/// A rule set together with ground facts.
#[derive(Clone, Debug)]
pub struct RuleBase {
    pub sig: Signature,
    pub hierarchy: RoleHierarchy,
    pub individuals: Individuals,
    pub rules: Vec<Rule>,
    pub facts: Vec<Atom>,
}

pub type DatalogProgram = RuleBase;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid knowledge base:\n{0}")]
pub struct ValidationFailed(pub ValidationReport);

const X: Term = Term::Var(0);
const Y: Term = Term::Var(1);
const Z: Term = Term::Var(2);

fn concept(c: ConceptId, t: Term) -> Atom {
    Atom::unary(Pred::Concept(c), t)
}

fn role(r: RoleId, s: Term, t: Term) -> Atom {
    Atom::binary(Pred::Role(r), s, t)
}

fn rule(body: Vec<Atom>, head: Vec<Atom>) -> Rule {
    Rule {
        body,
        head: Head::Atoms(head),
    }
}

/// Rules for one axiom. With `datalog` set, existential restrictions are
/// witnessed by auxiliary individuals and role inclusions also cover the
/// direct-edge predicates.
fn axiom_rules(ax: &Axiom, individuals: &Individuals, datalog: bool, out: &mut Vec<Rule>) {
    match *ax {
        Axiom::SubClass { sub, sup } => {
            out.push(rule(vec![concept(sub, X)], vec![concept(sup, X)]))
        }
        Axiom::Nominal { sub, individual } => {
            let a = individuals
                .named(individual)
                .expect("nominal individual is in use");
            out.push(Rule {
                body: vec![concept(sub, X)],
                head: Head::Equal(X, Term::Const(a)),
            });
        }
        Axiom::Conjunction { left, right, sup } => out.push(rule(
            vec![concept(left, X), concept(right, X)],
            vec![concept(sup, X)],
        )),
        Axiom::ExistsSub {
            role: r,
            filler,
            sup,
        } => out.push(rule(
            vec![role(r, X, Y), concept(filler, Y)],
            vec![concept(sup, X)],
        )),
        Axiom::SubRole { sub, sup } => {
            out.push(rule(vec![role(sub, X, Y)], vec![role(sup, X, Y)]));
            out.push(rule(
                vec![Atom::unary(Pred::SelfOf(sub), X)],
                vec![Atom::unary(Pred::SelfOf(sup), X)],
            ));
            if datalog {
                out.push(rule(
                    vec![Atom::binary(Pred::Direct(sub), X, Y)],
                    vec![Atom::binary(Pred::Direct(sup), X, Y)],
                ));
            }
        }
        Axiom::Range {
            role: r,
            concept: c,
        } => out.push(rule(vec![role(r, X, Y)], vec![concept(c, Y)])),
        Axiom::ExistsSup {
            sub,
            role: r,
            filler,
        } => {
            if datalog {
                let o = Term::Const(individuals.aux(r, filler).expect("aux individual exists"));
                out.push(rule(
                    vec![concept(sub, X)],
                    vec![
                        role(r, X, o),
                        Atom::binary(Pred::Direct(r), X, o),
                        concept(filler, o),
                    ],
                ));
            } else {
                out.push(Rule {
                    body: vec![concept(sub, X)],
                    head: Head::Exists {
                        var: 2,
                        skolem: Skolem {
                            role: r,
                            filler,
                            trigger: sub,
                        },
                        atoms: vec![role(r, X, Z), concept(filler, Z)],
                    },
                });
            }
        }
        Axiom::Transitive(r) => out.push(rule(
            vec![role(r, X, Y), role(r, Y, Z)],
            vec![role(r, X, Z)],
        )),
        Axiom::Reflexive(r) => out.push(rule(
            vec![concept(ConceptId::TOP, X)],
            vec![role(r, X, X), Atom::unary(Pred::SelfOf(r), X)],
        )),
        Axiom::SelfSup { sub, role: r } => out.push(rule(
            vec![concept(sub, X)],
            vec![role(r, X, X), Atom::unary(Pred::SelfOf(r), X)],
        )),
        Axiom::SelfSub { role: r, sup } => out.push(rule(
            vec![Atom::unary(Pred::SelfOf(r), X)],
            vec![concept(sup, X)],
        )),
    }
}

fn build(kb: &Kb, datalog: bool) -> Result<RuleBase, ValidationFailed> {
    let report = validate_kb(kb);
    if !report.is_ok() {
        return Err(ValidationFailed(report));
    }
    let aux: BTreeSet<(RoleId, ConceptId)> = if datalog {
        kb.tbox()
            .filter_map(|ax| match *ax {
                Axiom::ExistsSup { role, filler, .. } => Some((role, filler)),
                _ => None,
            })
            .collect()
    } else {
        BTreeSet::new()
    };
    let individuals = Individuals::build(&kb.sig, &kb.individuals_in_use(), &aux);
    let mut rules = Vec::new();
    for ax in kb.tbox() {
        axiom_rules(ax, &individuals, datalog, &mut rules);
    }
    for c in kb.concepts_in_use() {
        rules.push(rule(vec![concept(c, X)], vec![concept(ConceptId::TOP, X)]));
    }
    for r in kb.roles_in_use() {
        rules.push(rule(
            vec![Atom::unary(Pred::Ind, X), role(r, X, X)],
            vec![Atom::unary(Pred::SelfOf(r), X)],
        ));
        rules.push(rule(
            vec![role(r, X, Y)],
            vec![concept(ConceptId::TOP, X), concept(ConceptId::TOP, Y)],
        ));
    }
    let mut facts = Vec::new();
    for a in kb.individuals_in_use() {
        let id = individuals.named(a).expect("individual in use");
        facts.push(Atom::unary(Pred::Ind, Term::Const(id)));
    }
    for a in kb.abox() {
        facts.push(match *a {
            Assertion::Concept(c, i) => concept(c, Term::Const(individuals.named(i).unwrap())),
            Assertion::Role(r, i, j) => role(
                r,
                Term::Const(individuals.named(i).unwrap()),
                Term::Const(individuals.named(j).unwrap()),
            ),
        });
    }
    Ok(RuleBase {
        sig: kb.sig.clone(),
        hierarchy: kb.hierarchy(),
        individuals,
        rules,
        facts,
    })
}

/// The existential rule base: translated TBox, closure rules and ABox.
pub fn build_rule_base(kb: &Kb) -> Result<RuleBase, ValidationFailed> {
    build(kb, false)
}

/// The datalog program with auxiliary individuals and direct-edge predicates.
pub fn build_datalog(kb: &Kb) -> Result<DatalogProgram, ValidationFailed> {
    build(kb, true)
}

impl RuleBase {
    pub fn aux_individuals(&self) -> impl Iterator<Item = IndId> + '_ {
        self.individuals.aux_ids()
    }

    pub fn pred_name(&self, p: Pred) -> String {
        match p {
            Pred::Concept(c) => self.sig.concept_name(c).to_string(),
            Pred::Ind => "ind".to_string(),
            Pred::SelfOf(r) => format!("Self_{}", self.sig.role_name(r)),
            Pred::Role(r) => self.sig.role_name(r).to_string(),
            Pred::Direct(r) => format!("dir{}", self.sig.role_name(r)),
        }
    }

    fn term_text(&self, t: Term) -> String {
        match t {
            Term::Var(v) => ["x", "y", "z"]
                .get(v as usize)
                .map_or(format!("v{v}"), |s| s.to_string()),
            Term::Const(c) => self.individuals.name(&self.sig, c),
        }
    }

    pub fn atom_text(&self, a: &Atom) -> String {
        let args: Vec<String> = a.terms().iter().map(|t| self.term_text(*t)).collect();
        format!("{}({})", self.pred_name(a.pred), args.join(", "))
    }

    pub fn rule_text(&self, r: &Rule) -> String {
        let body: Vec<String> = r.body.iter().map(|a| self.atom_text(a)).collect();
        let head = match &r.head {
            Head::Atoms(atoms) => atoms
                .iter()
                .map(|a| self.atom_text(a))
                .collect::<Vec<_>>()
                .join(" ∧ "),
            Head::Exists { var, atoms, .. } => format!(
                "∃{}. {}",
                self.term_text(Term::Var(*var)),
                atoms
                    .iter()
                    .map(|a| self.atom_text(a))
                    .collect::<Vec<_>>()
                    .join(" ∧ ")
            ),
            Head::Equal(s, t) => format!("{} ≈ {}", self.term_text(*s), self.term_text(*t)),
        };
        format!("{} → {}", body.join(" ∧ "), head)
    }
}

impl fmt::Display for RuleBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{}", self.rule_text(r))?;
        }
        for a in &self.facts {
            writeln!(f, "{}", self.atom_text(a))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_kb;

    fn ex1() -> Kb {
        parse_kb(include_str!("../tests/data/ex1.kb")).unwrap()
    }

    fn rule_texts(rb: &RuleBase) -> Vec<String> {
        rb.rules.iter().map(|r| rb.rule_text(r)).collect()
    }

    #[test]
    fn self_and_nominal_rows() {
        let base = build_rule_base(&ex1()).unwrap();
        let rules = rule_texts(&base);
        assert!(rules.contains(&"C(x) → S(x, x) ∧ Self_S(x)".to_string()));
        assert!(rules.contains(&"G(x) → x ≈ a".to_string()));
        assert!(rules.contains(&"B(x) → ∃z. T(x, z) ∧ F(z)".to_string()));
        assert!(base.aux_individuals().next().is_none());
    }

    #[test]
    fn datalog_uses_aux_individuals_and_direct_edges() {
        let dat = build_datalog(&ex1()).unwrap();
        let rules = rule_texts(&dat);
        assert!(rules.contains(&"B(x) → T(x, aux:T:F) ∧ dirT(x, aux:T:F) ∧ F(aux:T:F)".to_string()));
        assert!(rules.contains(&"T(x, y) → R(x, y)".to_string()));
        assert!(rules.contains(&"Self_T(x) → Self_R(x)".to_string()));
        assert!(rules.contains(&"dirT(x, y) → dirR(x, y)".to_string()));
        assert!(dat.rules.iter().all(Rule::is_datalog));
        // o_{S,C}, o_{T,D}, o_{T,E}, o_{T,F}, o_{T,G}
        assert_eq!(dat.aux_individuals().count(), 5);
    }

    #[test]
    fn term_order_puts_named_first() {
        let dat = build_datalog(&ex1()).unwrap();
        let names: Vec<String> = dat
            .individuals
            .ids()
            .map(|i| dat.individuals.name(&dat.sig, i))
            .collect();
        assert_eq!(
            names,
            vec!["a", "b", "aux:S:C", "aux:T:D", "aux:T:E", "aux:T:F", "aux:T:G"]
        );
    }

    #[test]
    fn closure_rules_for_a_lone_role() {
        let mut kb = Kb::new();
        kb.assert_role("R", "a", "b");
        let base = build_rule_base(&kb).unwrap();
        let rules = rule_texts(&base);
        assert!(rules.contains(&"R(x, y) → Top(x) ∧ Top(y)".to_string()));
        assert!(rules.contains(&"ind(x) ∧ R(x, x) → Self_R(x)".to_string()));
        assert_eq!(base.facts.len(), 3);
    }

    #[test]
    fn empty_tbox_has_only_closure() {
        let mut kb = Kb::new();
        kb.assert_concept("A", "a");
        let dat = build_datalog(&kb).unwrap();
        assert_eq!(rule_texts(&dat), vec!["A(x) → Top(x)".to_string()]);
        assert_eq!(dat.aux_individuals().count(), 0);
    }

    #[test]
    fn xi_and_datalog_differ_only_on_existentials_and_direct_rules() {
        let kb = ex1();
        let base: BTreeSet<String> = rule_texts(&build_rule_base(&kb).unwrap())
            .into_iter()
            .collect();
        let dat: BTreeSet<String> = rule_texts(&build_datalog(&kb).unwrap())
            .into_iter()
            .collect();
        for r in base.difference(&dat) {
            assert!(r.contains('∃'), "{r}");
        }
        for r in dat.difference(&base) {
            assert!(r.contains("aux:") || r.starts_with("dir"), "{r}");
        }
    }

    #[test]
    fn invalid_kb_is_rejected() {
        let kb = parse_kb("transitive P\nA SubClassOf self P\n").unwrap();
        assert!(build_datalog(&kb).is_err());
    }
}
