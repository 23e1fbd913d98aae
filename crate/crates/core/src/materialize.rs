//! Fixpoint evaluation of the datalog program with equality.
//!
//! Facts are processed one round at a time: every rule is matched with
//! one body atom bound to a fact of the current round and the remaining
//! atoms joined against the whole store. Equalities merge two classes and
//! rewrite every fact of the losing individual to the representative, which
//! is always the class minimum in the term order (so named before aux).

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::kb::{ConceptId, RoleHierarchy, RoleId, Signature};
use crate::translate::{Atom, DatalogProgram, Head, IndId, IndKind, Individuals, Pred, Term};

pub const DEFAULT_FACT_CAP: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ResourceLimit {
    #[error("fact limit of {0} exceeded")]
    Facts(usize),
    #[error("branch limit of {0} exceeded")]
    Branches(u64),
}

#[derive(Clone, Debug, Default)]
struct Rel {
    fwd: BTreeSet<(u32, u32)>,
    bwd: BTreeSet<(u32, u32)>,
}

impl Rel {
    fn insert(&mut self, a: u32, b: u32) -> bool {
        if self.fwd.insert((a, b)) {
            self.bwd.insert((b, a));
            true
        } else {
            false
        }
    }

    fn remove(&mut self, a: u32, b: u32) {
        self.fwd.remove(&(a, b));
        self.bwd.remove(&(b, a));
    }

    fn contains(&self, a: u32, b: u32) -> bool {
        self.fwd.contains(&(a, b))
    }

    fn succ(&self, a: u32) -> impl Iterator<Item = u32> + '_ {
        self.fwd.range((a, 0)..=(a, u32::MAX)).map(|p| p.1)
    }

    fn pred(&self, b: u32) -> impl Iterator<Item = u32> + '_ {
        self.bwd.range((b, 0)..=(b, u32::MAX)).map(|p| p.1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaterializeStats {
    /// Ground facts of the program (ABox atoms and `ind` facts).
    pub input_facts: usize,
    /// ABox atoms alone.
    pub abox_facts: usize,
    /// Facts in the saturated store.
    pub total_facts: usize,
    pub merges: usize,
    pub iterations: usize,
    pub elapsed: Duration,
}

impl MaterializeStats {
    /// Stored facts per ABox atom.
    pub fn ratio(&self) -> f64 {
        if self.abox_facts == 0 {
            0.0
        } else {
            self.total_facts as f64 / self.abox_facts as f64
        }
    }
}

const UNBOUND: u32 = u32::MAX;
type Binding = [u32; 3];

/// The least model of a datalog program over representatives of the
/// equality classes.
#[derive(Clone, Debug)]
pub struct FactStore {
    sig: Signature,
    hierarchy: RoleHierarchy,
    individuals: Individuals,
    rep: Vec<u32>,
    members: Vec<Vec<u32>>,
    unary: BTreeMap<Pred, BTreeSet<u32>>,
    binary: BTreeMap<Pred, Rel>,
    count: usize,
    empty_set: BTreeSet<u32>,
    empty_rel: Rel,
}

impl FactStore {
    fn new(program: &DatalogProgram) -> Self {
        let n = program.individuals.len();
        FactStore {
            sig: program.sig.clone(),
            hierarchy: program.hierarchy.clone(),
            individuals: program.individuals.clone(),
            rep: (0..n as u32).collect(),
            members: (0..n as u32).map(|i| vec![i]).collect(),
            unary: BTreeMap::new(),
            binary: BTreeMap::new(),
            count: 0,
            empty_set: BTreeSet::new(),
            empty_rel: Rel::default(),
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn hierarchy(&self) -> &RoleHierarchy {
        &self.hierarchy
    }

    pub fn individuals(&self) -> &Individuals {
        &self.individuals
    }

    pub fn individual_ids(&self) -> impl Iterator<Item = IndId> {
        self.individuals.ids()
    }

    pub fn individual_name(&self, u: IndId) -> String {
        self.individuals.name(&self.sig, u)
    }

    pub fn fact_count(&self) -> usize {
        self.count
    }

    pub fn representative(&self, u: IndId) -> IndId {
        IndId(self.rep[u.0 as usize])
    }

    /// Members of the equality class represented by `u`.
    pub fn class_of(&self, u: IndId) -> Vec<IndId> {
        let r = self.rep[u.0 as usize];
        self.members[r as usize].iter().map(|&m| IndId(m)).collect()
    }

    /// True if `u` is the representative of a class without named members.
    pub fn is_aux(&self, u: IndId) -> bool {
        self.rep[u.0 as usize] == u.0 && !self.individuals.is_named(u)
    }

    /// True if `u` is a named individual or equal to one.
    pub fn is_named(&self, u: IndId) -> bool {
        self.individuals.is_named(self.representative(u))
    }

    /// Representatives that are auxiliary individuals.
    pub fn aux_individuals(&self) -> Vec<IndId> {
        self.individuals
            .aux_ids()
            .filter(|u| self.is_aux(*u))
            .collect()
    }

    /// Representatives of the classes of named individuals.
    pub fn named_individuals(&self) -> Vec<IndId> {
        let set: BTreeSet<u32> = (0..self.individuals.named_count())
            .map(|i| self.rep[i])
            .collect();
        set.into_iter().map(IndId).collect()
    }

    pub fn holds(&self, pred: Pred, a: IndId, b: IndId) -> bool {
        let a = self.rep[a.0 as usize];
        let b = self.rep[b.0 as usize];
        match pred.arity() {
            1 => self.unary.get(&pred).is_some_and(|s| s.contains(&a)),
            _ => self.binary.get(&pred).is_some_and(|r| r.contains(a, b)),
        }
    }

    pub fn has_concept(&self, c: ConceptId, u: IndId) -> bool {
        self.holds(Pred::Concept(c), u, u)
    }

    pub fn has_role(&self, r: RoleId, u: IndId, v: IndId) -> bool {
        self.holds(Pred::Role(r), u, v)
    }

    pub fn has_direct(&self, r: RoleId, u: IndId, v: IndId) -> bool {
        self.holds(Pred::Direct(r), u, v)
    }

    pub fn has_self(&self, r: RoleId, u: IndId) -> bool {
        self.holds(Pred::SelfOf(r), u, u)
    }

    pub fn is_unsatisfiable(&self) -> bool {
        self.unary
            .get(&Pred::Concept(ConceptId::BOT))
            .is_some_and(|s| !s.is_empty())
    }

    fn set(&self, pred: Pred) -> &BTreeSet<u32> {
        self.unary.get(&pred).unwrap_or(&self.empty_set)
    }

    fn rel(&self, pred: Pred) -> &Rel {
        self.binary.get(&pred).unwrap_or(&self.empty_rel)
    }

    /// Individuals in the extension of a unary predicate.
    pub fn unary_members(&self, pred: Pred) -> impl Iterator<Item = IndId> + '_ {
        self.set(pred).iter().map(|&u| IndId(u))
    }

    pub fn binary_pairs(&self, pred: Pred) -> impl Iterator<Item = (IndId, IndId)> + '_ {
        self.rel(pred)
            .fwd
            .iter()
            .map(|&(a, b)| (IndId(a), IndId(b)))
    }

    pub fn successors(&self, pred: Pred, u: IndId) -> impl Iterator<Item = IndId> + '_ {
        self.rel(pred).succ(self.rep[u.0 as usize]).map(IndId)
    }

    pub fn predecessors(&self, pred: Pred, u: IndId) -> impl Iterator<Item = IndId> + '_ {
        self.rel(pred).pred(self.rep[u.0 as usize]).map(IndId)
    }

    pub fn binary_len(&self, pred: Pred) -> usize {
        self.rel(pred).fwd.len()
    }

    pub fn unary_len(&self, pred: Pred) -> usize {
        self.set(pred).len()
    }

    /// All `(R, v)` with `dir_R(u, v)` stored and `v` auxiliary.
    pub fn direct_successors(&self, u: IndId) -> BTreeSet<(RoleId, IndId)> {
        let u = self.rep[u.0 as usize];
        let mut out = BTreeSet::new();
        for (pred, rel) in &self.binary {
            if let Pred::Direct(r) = *pred {
                for v in rel.succ(u) {
                    if self.is_aux(IndId(v)) {
                        out.insert((r, IndId(v)));
                    }
                }
            }
        }
        out
    }

    /// All `w` with `dir_R(w, u)` stored for some `R`.
    pub fn direct_predecessors(&self, u: IndId) -> BTreeSet<IndId> {
        let u = self.rep[u.0 as usize];
        let mut out = BTreeSet::new();
        for (pred, rel) in &self.binary {
            if matches!(pred, Pred::Direct(_)) {
                out.extend(rel.pred(u).map(IndId));
            }
        }
        out
    }

    /// Every stored fact as `(pred, a, b)`; unary facts have `a == b`.
    pub fn facts(&self) -> impl Iterator<Item = (Pred, IndId, IndId)> + '_ {
        let unary = self
            .unary
            .iter()
            .flat_map(|(p, s)| s.iter().map(move |&u| (*p, IndId(u), IndId(u))));
        let binary = self
            .binary
            .iter()
            .flat_map(|(p, r)| r.fwd.iter().map(move |&(a, b)| (*p, IndId(a), IndId(b))));
        unary.chain(binary)
    }

    fn contains(&self, pred: Pred, a: u32, b: u32) -> bool {
        match pred.arity() {
            1 => self.set(pred).contains(&a),
            _ => self.rel(pred).contains(a, b),
        }
    }

    fn insert(&mut self, pred: Pred, a: u32, b: u32) -> bool {
        let new = match pred.arity() {
            1 => self.unary.entry(pred).or_default().insert(a),
            _ => self.binary.entry(pred).or_default().insert(a, b),
        };
        if new {
            self.count += 1;
        }
        new
    }

    fn value(&self, t: Term, binding: &Binding) -> u32 {
        match t {
            Term::Var(v) => binding[v as usize],
            Term::Const(c) => self.rep[c.0 as usize],
        }
    }

    /// Binds the terms of `atom` to the fact `(a, b)`; false on a clash.
    fn unify(&self, atom: &Atom, a: u32, b: u32, binding: &mut Binding) -> bool {
        let vals = [a, b];
        for (k, t) in atom.terms().iter().enumerate() {
            match *t {
                Term::Var(v) => {
                    let slot = &mut binding[v as usize];
                    if *slot == UNBOUND {
                        *slot = vals[k];
                    } else if *slot != vals[k] {
                        return false;
                    }
                }
                Term::Const(c) => {
                    if self.rep[c.0 as usize] != vals[k] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Extends `binding` over `atoms` (skipping index `skip`) in every way
    /// consistent with the store.
    fn join(
        &self,
        atoms: &[Atom],
        skip: usize,
        next: usize,
        binding: Binding,
        out: &mut Vec<Binding>,
    ) {
        if next == atoms.len() {
            out.push(binding);
            return;
        }
        if next == skip {
            return self.join(atoms, skip, next + 1, binding, out);
        }
        let atom = &atoms[next];
        let bound = |t: Term| match t {
            Term::Var(v) => binding[v as usize] != UNBOUND,
            Term::Const(_) => true,
        };
        if atom.pred.arity() == 1 {
            if bound(atom.args[0]) {
                if self
                    .set(atom.pred)
                    .contains(&self.value(atom.args[0], &binding))
                {
                    self.join(atoms, skip, next + 1, binding, out);
                }
            } else {
                for &u in self.set(atom.pred) {
                    let mut b = binding;
                    if self.unify(atom, u, u, &mut b) {
                        self.join(atoms, skip, next + 1, b, out);
                    }
                }
            }
            return;
        }
        let rel = self.rel(atom.pred);
        match (bound(atom.args[0]), bound(atom.args[1])) {
            (true, true) => {
                if rel.contains(
                    self.value(atom.args[0], &binding),
                    self.value(atom.args[1], &binding),
                ) {
                    self.join(atoms, skip, next + 1, binding, out);
                }
            }
            (true, false) => {
                let a = self.value(atom.args[0], &binding);
                for v in rel.succ(a) {
                    let mut b = binding;
                    if self.unify(atom, a, v, &mut b) {
                        self.join(atoms, skip, next + 1, b, out);
                    }
                }
            }
            (false, true) => {
                let v = self.value(atom.args[1], &binding);
                for u in rel.pred(v) {
                    let mut b = binding;
                    if self.unify(atom, u, v, &mut b) {
                        self.join(atoms, skip, next + 1, b, out);
                    }
                }
            }
            (false, false) => {
                for &(u, v) in &rel.fwd {
                    let mut b = binding;
                    if self.unify(atom, u, v, &mut b) {
                        self.join(atoms, skip, next + 1, b, out);
                    }
                }
            }
        }
    }

    /// Merges the classes of `x` and `y`; returns the facts that became new
    /// through rewriting.
    fn merge(&mut self, x: u32, y: u32, fresh: &mut Vec<(Pred, u32, u32)>) -> bool {
        let (rx, ry) = (self.rep[x as usize], self.rep[y as usize]);
        if rx == ry {
            return false;
        }
        let (win, lose) = if rx < ry { (rx, ry) } else { (ry, rx) };
        let moved = std::mem::take(&mut self.members[lose as usize]);
        for &m in &moved {
            self.rep[m as usize] = win;
        }
        self.members[win as usize].extend(moved);
        let r = |u: u32| if u == lose { win } else { u };

        let unary_preds: Vec<Pred> = self
            .unary
            .iter()
            .filter(|(_, s)| s.contains(&lose))
            .map(|(p, _)| *p)
            .collect();
        for p in unary_preds {
            self.unary.get_mut(&p).unwrap().remove(&lose);
            self.count -= 1;
            if self.insert(p, win, win) {
                fresh.push((p, win, win));
            }
        }
        let mut touched: Vec<(Pred, u32, u32)> = Vec::new();
        for (p, rel) in &self.binary {
            touched.extend(rel.succ(lose).map(|v| (*p, lose, v)));
            touched.extend(rel.pred(lose).filter(|&u| u != lose).map(|u| (*p, u, lose)));
        }
        for &(p, a, b) in &touched {
            self.binary.get_mut(&p).unwrap().remove(a, b);
            self.count -= 1;
        }
        for (p, a, b) in touched {
            let (a, b) = (r(a), r(b));
            if self.insert(p, a, b) {
                fresh.push((p, a, b));
            }
        }
        true
    }
}

/// Evaluates `program` to its least fixpoint.
pub fn materialize(
    program: &DatalogProgram,
) -> Result<(FactStore, MaterializeStats), ResourceLimit> {
    materialize_with_cap(program, DEFAULT_FACT_CAP)
}

pub fn materialize_with_cap(
    program: &DatalogProgram,
    fact_cap: usize,
) -> Result<(FactStore, MaterializeStats), ResourceLimit> {
    let start = Instant::now();
    let mut store = FactStore::new(program);
    let mut stats = MaterializeStats {
        input_facts: program.facts.len(),
        abox_facts: program.facts.iter().filter(|a| a.pred != Pred::Ind).count(),
        ..Default::default()
    };

    let mut triggers: BTreeMap<Pred, Vec<(usize, usize)>> = BTreeMap::new();
    for (ri, rule) in program.rules.iter().enumerate() {
        assert!(rule.is_datalog(), "existential rule in a datalog program");
        for (ai, atom) in rule.body.iter().enumerate() {
            triggers.entry(atom.pred).or_default().push((ri, ai));
        }
    }

    let mut delta: Vec<(Pred, u32, u32)> = Vec::new();
    for f in &program.facts {
        let a = store.value(f.args[0], &[UNBOUND; 3]);
        let b = store.value(f.args[1], &[UNBOUND; 3]);
        if store.insert(f.pred, a, b) {
            delta.push((f.pred, a, b));
        }
    }

    let mut matches: Vec<Binding> = Vec::new();
    while !delta.is_empty() {
        stats.iterations += 1;
        let mut next: Vec<(Pred, u32, u32)> = Vec::new();
        for (pred, a, b) in std::mem::take(&mut delta) {
            // Facts rewritten by a merge are requeued in their new form.
            if store.rep[a as usize] != a
                || store.rep[b as usize] != b
                || !store.contains(pred, a, b)
            {
                continue;
            }
            let Some(list) = triggers.get(&pred) else {
                continue;
            };
            for &(ri, ai) in list {
                let rule = &program.rules[ri];
                let mut binding = [UNBOUND; 3];
                if !store.unify(&rule.body[ai], a, b, &mut binding) {
                    continue;
                }
                matches.clear();
                store.join(&rule.body, ai, 0, binding, &mut matches);
                for m in &matches {
                    match &rule.head {
                        Head::Atoms(atoms) => {
                            for h in atoms {
                                // A merge earlier in this loop may have retired a bound value.
                                let x = store.rep[store.value(h.args[0], m) as usize];
                                let y = store.rep[store.value(h.args[1], m) as usize];
                                if store.insert(h.pred, x, y) {
                                    next.push((h.pred, x, y));
                                }
                            }
                        }
                        Head::Equal(s, t) => {
                            let x = store.value(*s, m);
                            let y = store.value(*t, m);
                            if store.merge(x, y, &mut next) {
                                stats.merges += 1;
                            }
                        }
                        Head::Exists { .. } => unreachable!(),
                    }
                }
                if store.count > fact_cap {
                    return Err(ResourceLimit::Facts(fact_cap));
                }
            }
        }
        delta = next;
    }
    stats.total_facts = store.count;
    stats.elapsed = start.elapsed();
    Ok((store, stats))
}

/// Number of rule applications that would add something to `store`; zero
/// for a saturated store.
pub fn missing_consequences(program: &DatalogProgram, store: &FactStore) -> usize {
    let mut missing = 0;
    let mut matches = Vec::new();
    for rule in &program.rules {
        matches.clear();
        store.join(&rule.body, usize::MAX, 0, [UNBOUND; 3], &mut matches);
        for m in &matches {
            match &rule.head {
                Head::Atoms(atoms) => {
                    for h in atoms {
                        if !store.contains(
                            h.pred,
                            store.value(h.args[0], m),
                            store.value(h.args[1], m),
                        ) {
                            missing += 1;
                        }
                    }
                }
                Head::Equal(s, t) => {
                    if store.value(*s, m) != store.value(*t, m) {
                        missing += 1;
                    }
                }
                Head::Exists { .. } => {}
            }
        }
    }
    for f in &program.facts {
        if !store.contains(
            f.pred,
            store.value(f.args[0], &[UNBOUND; 3]),
            store.value(f.args[1], &[UNBOUND; 3]),
        ) {
            missing += 1;
        }
    }
    missing
}

/// Whether every stored fact mentions only representatives.
pub fn is_canonical(store: &FactStore) -> bool {
    store
        .facts()
        .all(|(_, a, b)| store.representative(a) == a && store.representative(b) == b)
}

/// Name of the aux individual `o_{R,A}` in the store, if it exists.
pub fn aux_individual(store: &FactStore, role: &str, concept: &str) -> Option<IndId> {
    let r = store.sig.find_role(role)?;
    let c = store.sig.find_concept(concept)?;
    store.individuals.aux(r, c)
}

pub fn named_individual(store: &FactStore, name: &str) -> Option<IndId> {
    let a = store.sig.find_individual(name)?;
    store.individuals.named(a)
}

impl FactStore {
    /// Kind of the individual `u` (not of its representative).
    pub fn kind(&self, u: IndId) -> IndKind {
        self.individuals.kind(u)
    }
}
