//! Bounded Skolem chase with merging and pruning, used as a reference for
//! certain answers on small KBs.
//!
//! Existential rules create functional terms `f[R,A,A1](w)`. Equality rules
//! merge the larger term into the smaller one (named individuals are below
//! every functional term) and drop every fact mentioning a term built on
//! top of the merged one. When the chase saturates within its limits the
//! instance is a universal model and query answers over it are exact.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::answer::{Cq, CqAtom, CqTerm};
use crate::kb::ConceptId;
use crate::translate::{Atom, Head, IndId, Pred, RuleBase, Skolem, Term};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ChaseTerm {
    Named(IndId),
    Func(Skolem, TermId),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ChaseLimits {
    /// Deepest functional term the chase may create.
    pub depth: u32,
    pub facts: usize,
}

impl Default for ChaseLimits {
    fn default() -> Self {
        ChaseLimits {
            depth: 6,
            facts: 1_000_000,
        }
    }
}

type Fact = (Pred, TermId, TermId);

#[derive(Clone, Debug)]
pub struct ChaseInstance {
    base: RuleBase,
    terms: Vec<ChaseTerm>,
    depth: Vec<u32>,
    interned: HashMap<ChaseTerm, TermId>,
    merged: HashMap<TermId, TermId>,
    facts: BTreeSet<Fact>,
    pub saturated: bool,
    pub truncated: bool,
    pub depth_reached: u32,
    pub merges: usize,
}

impl ChaseInstance {
    fn intern(&mut self, t: ChaseTerm) -> TermId {
        if let Some(&id) = self.interned.get(&t) {
            return id;
        }
        let id = TermId(self.terms.len() as u32);
        let d = match t {
            ChaseTerm::Named(_) => 0,
            ChaseTerm::Func(_, w) => self.depth[w.0 as usize] + 1,
        };
        self.terms.push(t);
        self.depth.push(d);
        self.interned.insert(t, id);
        id
    }

    pub fn term(&self, t: TermId) -> ChaseTerm {
        self.terms[t.0 as usize]
    }

    pub fn depth_of(&self, t: TermId) -> u32 {
        self.depth[t.0 as usize]
    }

    /// The term `t` was merged into, following merges to the end.
    pub fn normalize(&self, mut t: TermId) -> TermId {
        while let Some(&n) = self.merged.get(&t) {
            t = n;
        }
        t
    }

    /// Normal form of a named individual, if it occurs in the rule base.
    pub fn named(&self, u: IndId) -> Option<TermId> {
        self.interned
            .get(&ChaseTerm::Named(u))
            .map(|&t| self.normalize(t))
    }

    fn cmp_terms(&self, a: TermId, b: TermId) -> Ordering {
        match (self.term(a), self.term(b)) {
            (ChaseTerm::Named(x), ChaseTerm::Named(y)) => x.cmp(&y),
            (ChaseTerm::Named(_), ChaseTerm::Func(..)) => Ordering::Less,
            (ChaseTerm::Func(..), ChaseTerm::Named(_)) => Ordering::Greater,
            (ChaseTerm::Func(f, w), ChaseTerm::Func(g, v)) => self
                .depth_of(a)
                .cmp(&self.depth_of(b))
                .then(f.cmp(&g))
                .then_with(|| self.cmp_terms(w, v)),
        }
    }

    fn has_proper_subterm(&self, t: TermId, sub: TermId) -> bool {
        let mut cur = t;
        while let ChaseTerm::Func(_, w) = self.term(cur) {
            if w == sub {
                return true;
            }
            cur = w;
        }
        false
    }

    fn merge(&mut self, a: TermId, b: TermId) {
        let (big, small) = if self.cmp_terms(a, b) == Ordering::Greater {
            (a, b)
        } else {
            (b, a)
        };
        self.merged.insert(big, small);
        self.merges += 1;
        let old = std::mem::take(&mut self.facts);
        for (p, x, y) in old {
            if self.has_proper_subterm(x, big) || self.has_proper_subterm(y, big) {
                continue;
            }
            let sw = |t: TermId| if t == big { small } else { t };
            self.facts.insert((p, sw(x), sw(y)));
        }
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.facts.iter().copied()
    }

    pub fn holds(&self, pred: Pred, a: TermId, b: TermId) -> bool {
        self.facts.contains(&(pred, a, b))
    }

    pub fn is_unsatisfiable(&self) -> bool {
        self.facts
            .iter()
            .any(|&(p, _, _)| p == Pred::Concept(ConceptId::BOT))
    }

    pub fn term_name(&self, t: TermId) -> String {
        match self.term(t) {
            ChaseTerm::Named(u) => self.base.individuals.name(&self.base.sig, u),
            ChaseTerm::Func(f, w) => format!(
                "f[{},{},{}]({})",
                self.base.sig.role_name(f.role),
                self.base.sig.concept_name(f.filler),
                self.base.sig.concept_name(f.trigger),
                self.term_name(w)
            ),
        }
    }

    /// One fact per line, sorted, then `eq` lines for merged named individuals.
    pub fn dump(&self) -> String {
        let mut lines: Vec<String> = self
            .facts
            .iter()
            .map(|&(p, a, b)| {
                let name = self.base.pred_name(p);
                if p.arity() == 1 {
                    format!("{name}({})", self.term_name(a))
                } else {
                    format!("{name}({}, {})", self.term_name(a), self.term_name(b))
                }
            })
            .collect();
        lines.sort();
        let mut out = String::new();
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        let mut eqs: Vec<String> = self
            .merged
            .keys()
            .filter(|&&t| matches!(self.term(t), ChaseTerm::Named(_)))
            .map(|&t| {
                format!(
                    "eq {} {}",
                    self.term_name(t),
                    self.term_name(self.normalize(t))
                )
            })
            .collect();
        eqs.sort();
        for l in eqs {
            let _ = writeln!(out, "{l}");
        }
        out
    }

    /// Named individuals whose normal form is `t`.
    fn named_members(&self, t: TermId) -> Vec<String> {
        let mut out: Vec<String> = self
            .terms
            .iter()
            .enumerate()
            .filter_map(|(i, term)| match *term {
                ChaseTerm::Named(u) if self.normalize(TermId(i as u32)) == t => {
                    Some(self.base.individuals.name(&self.base.sig, u))
                }
                _ => None,
            })
            .collect();
        out.sort();
        out
    }

    /// Tuples of named individuals for the answer variables whose query image lies in the
    /// instance.
    pub fn answers(&self, cq: &Cq) -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        let sig = &self.base.sig;
        let mut vars: Vec<String> = cq.answer_vars.clone();
        vars.extend(cq.existential_vars());
        let index = FactIndex::new(&self.facts);
        enum Q {
            Var(usize),
            Fixed(TermId),
        }
        let term = |t: &CqTerm| -> Option<Q> {
            match t {
                CqTerm::Var(v) => Some(Q::Var(vars.iter().position(|n| n == v).unwrap())),
                CqTerm::Const(c) => {
                    let u = self.base.individuals.named(sig.find_individual(c)?)?;
                    self.named(u).map(Q::Fixed)
                }
            }
        };
        let mut atoms = Vec::new();
        for a in &cq.atoms {
            let resolved = match a {
                CqAtom::Concept(p, t) => sig
                    .find_concept(p)
                    .and_then(|c| Some((Pred::Concept(c), term(t)?, None))),
                CqAtom::Role(p, s, t) => sig
                    .find_role(p)
                    .and_then(|r| Some((Pred::Role(r), term(s)?, Some(term(t)?)))),
            };
            match resolved {
                Some(x) => atoms.push(x),
                None => return out,
            }
        }
        let mut binding: Vec<Option<TermId>> = vec![None; vars.len()];
        let mut found: BTreeSet<Vec<TermId>> = BTreeSet::new();
        fn rec(
            k: usize,
            atoms: &[(Pred, Q, Option<Q>)],
            index: &FactIndex,
            binding: &mut Vec<Option<TermId>>,
            answer_len: usize,
            found: &mut BTreeSet<Vec<TermId>>,
        ) {
            if k == atoms.len() {
                found.insert(binding[..answer_len].iter().map(|b| b.unwrap()).collect());
                return;
            }
            let (p, s, t) = &atoms[k];
            let value = |q: &Q, b: &Vec<Option<TermId>>| match *q {
                Q::Fixed(x) => Some(x),
                Q::Var(v) => b[v],
            };
            let second = t.as_ref().unwrap_or(s);
            for (a, b) in index.matching(*p, value(s, binding), value(second, binding)) {
                let mut set = Vec::new();
                let mut ok = true;
                for (q, x) in [(s, a), (second, b)] {
                    match *q {
                        Q::Fixed(y) => ok &= y == x,
                        Q::Var(v) => match binding[v] {
                            Some(y) => ok &= y == x,
                            None => {
                                binding[v] = Some(x);
                                set.push(v);
                            }
                        },
                    }
                }
                if ok {
                    rec(k + 1, atoms, index, binding, answer_len, found);
                }
                for v in set {
                    binding[v] = None;
                }
            }
        }
        rec(
            0,
            &atoms,
            &index,
            &mut binding,
            cq.answer_vars.len(),
            &mut found,
        );
        for tuple in found {
            let mut expanded: Vec<Vec<String>> = vec![Vec::new()];
            for t in tuple {
                let names = self.named_members(t);
                expanded = expanded
                    .into_iter()
                    .flat_map(|prefix| {
                        names.iter().map(move |n| {
                            let mut p = prefix.clone();
                            p.push(n.clone());
                            p
                        })
                    })
                    .collect();
            }
            out.extend(expanded);
        }
        out
    }
}

/// Facts by predicate and by (predicate, first argument).
struct FactIndex {
    by_pred: HashMap<Pred, Vec<(TermId, TermId)>>,
    by_first: HashMap<(Pred, TermId), Vec<TermId>>,
}

impl FactIndex {
    fn new(facts: &BTreeSet<Fact>) -> Self {
        let mut by_pred: HashMap<Pred, Vec<(TermId, TermId)>> = HashMap::new();
        let mut by_first: HashMap<(Pred, TermId), Vec<TermId>> = HashMap::new();
        for &(p, a, b) in facts {
            by_pred.entry(p).or_default().push((a, b));
            by_first.entry((p, a)).or_default().push(b);
        }
        FactIndex { by_pred, by_first }
    }

    fn matching(&self, p: Pred, a: Option<TermId>, b: Option<TermId>) -> Vec<(TermId, TermId)> {
        match a {
            Some(a) => self
                .by_first
                .get(&(p, a))
                .into_iter()
                .flatten()
                .filter(|&&y| b.is_none_or(|b| b == y))
                .map(|&y| (a, y))
                .collect(),
            None => self
                .by_pred
                .get(&p)
                .into_iter()
                .flatten()
                .filter(|&&(_, y)| b.is_none_or(|b| b == y))
                .copied()
                .collect(),
        }
    }
}

fn body_matches(
    body: &[Atom],
    index: &FactIndex,
    inst: &ChaseInstance,
) -> Vec<[Option<TermId>; 3]> {
    fn rec(
        k: usize,
        body: &[Atom],
        index: &FactIndex,
        inst: &ChaseInstance,
        b: &mut [Option<TermId>; 3],
        out: &mut Vec<[Option<TermId>; 3]>,
    ) {
        if k == body.len() {
            out.push(*b);
            return;
        }
        let atom = body[k];
        let value = |t: Term, b: &[Option<TermId>; 3]| match t {
            Term::Var(v) => b[v as usize],
            Term::Const(c) => inst.named(c),
        };
        let [s, t] = atom.args;
        for (x, y) in index.matching(atom.pred, value(s, b), value(t, b)) {
            let mut set = Vec::new();
            let mut ok = true;
            for (term, val) in [(s, x), (t, y)] {
                match term {
                    Term::Const(c) => ok &= inst.named(c) == Some(val),
                    Term::Var(v) => match b[v as usize] {
                        Some(old) => ok &= old == val,
                        None => {
                            b[v as usize] = Some(val);
                            set.push(v);
                        }
                    },
                }
            }
            if ok {
                rec(k + 1, body, index, inst, b, out);
            }
            for v in set {
                b[v as usize] = None;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, body, index, inst, &mut [None; 3], &mut out);
    out
}

/// Runs the chase on `base` in breadth-first rounds until no rule applies or
/// a limit is hit.
pub fn chase(base: &RuleBase, limits: ChaseLimits) -> ChaseInstance {
    let mut inst = ChaseInstance {
        base: base.clone(),
        terms: Vec::new(),
        depth: Vec::new(),
        interned: HashMap::new(),
        merged: HashMap::new(),
        facts: BTreeSet::new(),
        saturated: false,
        truncated: false,
        depth_reached: 0,
        merges: 0,
    };
    for u in base
        .individuals
        .ids()
        .filter(|&u| base.individuals.is_named(u))
    {
        inst.intern(ChaseTerm::Named(u));
    }
    for atom in &base.facts {
        let value = |t: Term| match t {
            Term::Const(c) => inst.named(c).expect("fact constants are named"),
            Term::Var(_) => unreachable!("facts are ground"),
        };
        let f = (atom.pred, value(atom.args[0]), value(atom.args[1]));
        inst.facts.insert(f);
    }
    let mut depth_blocked = false;
    'round: loop {
        let index = FactIndex::new(&inst.facts);
        let mut added = false;
        for rule in &base.rules {
            for b in body_matches(&rule.body, &index, &inst) {
                let value = |t: Term, inst: &ChaseInstance| match t {
                    Term::Var(v) => b[v as usize].unwrap(),
                    Term::Const(c) => inst.named(c).unwrap(),
                };
                let (atoms, fresh): (&[Atom], Option<(u32, TermId)>) = match &rule.head {
                    Head::Atoms(atoms) => (atoms, None),
                    Head::Exists { var, skolem, atoms } => {
                        let w = value(Term::Var(0), &inst);
                        let t = inst.intern(ChaseTerm::Func(*skolem, w));
                        if inst.depth_of(t) > limits.depth {
                            depth_blocked = true;
                            continue;
                        }
                        inst.depth_reached = inst.depth_reached.max(inst.depth_of(t));
                        (atoms, Some((*var, inst.normalize(t))))
                    }
                    Head::Equal(s, t) => {
                        let (x, y) = (value(*s, &inst), value(*t, &inst));
                        if x != y {
                            inst.merge(x, y);
                            continue 'round;
                        }
                        continue;
                    }
                };
                for a in atoms {
                    let arg = |t: Term| match (t, fresh) {
                        (Term::Var(v), Some((z, w))) if v == z => w,
                        _ => value(t, &inst),
                    };
                    let f = (a.pred, arg(a.args[0]), arg(a.args[1]));
                    if inst.facts.insert(f) {
                        added = true;
                        if inst.facts.len() > limits.facts {
                            inst.truncated = true;
                            return inst;
                        }
                    }
                }
            }
        }
        if !added {
            break;
        }
    }
    inst.truncated |= depth_blocked;
    inst.saturated = !inst.truncated;
    inst
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleAnswers {
    pub tuples: BTreeSet<Vec<String>>,
    /// The chase saturated, so `tuples` are exactly the certain answers.
    pub complete: bool,
    pub unsatisfiable: bool,
}

pub fn oracle_answers(base: &RuleBase, cq: &Cq, limits: ChaseLimits) -> OracleAnswers {
    let inst = chase(base, limits);
    OracleAnswers {
        tuples: inst.answers(cq),
        complete: inst.saturated,
        unsatisfiable: inst.is_unsatisfiable(),
    }
}
