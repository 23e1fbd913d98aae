//! Certain answers: candidate enumeration over the materialized datalog
//! model, canonicalization of each candidate, and filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::filter::{canonical_term, forks_consistent, is_sound, FilterConfig, Verdict};
use crate::kb::{ConceptId, Kb, RoleId};
use crate::materialize::{materialize, FactStore, ResourceLimit};
use crate::translate::{build_datalog, IndId, Pred, ValidationFailed};

/// A term of a parsed query.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CqTerm {
    Var(String),
    Const(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CqAtom {
    Concept(String, CqTerm),
    Role(String, CqTerm, CqTerm),
}

impl CqAtom {
    pub fn terms(&self) -> Vec<&CqTerm> {
        match self {
            CqAtom::Concept(_, t) => vec![t],
            CqAtom::Role(_, s, t) => vec![s, t],
        }
    }
}

/// A conjunctive query over symbol names, as written in a query file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cq {
    pub name: String,
    pub answer_vars: Vec<String>,
    pub atoms: Vec<CqAtom>,
}

impl Cq {
    pub fn body_vars(&self) -> BTreeSet<String> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms())
            .filter_map(|t| match t {
                CqTerm::Var(v) => Some(v.clone()),
                CqTerm::Const(_) => None,
            })
            .collect()
    }

    /// Body variables that are not answer variables, in order of first occurrence.
    pub fn existential_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in self.atoms.iter().flat_map(|a| a.terms()) {
            if let CqTerm::Var(v) = t {
                if !self.answer_vars.contains(v) && !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn is_boolean(&self) -> bool {
        self.answer_vars.is_empty()
    }
}

/// A query term over the individuals of a store.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QTerm {
    Const(IndId),
    Var(u32),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QAtom {
    Concept(ConceptId, QTerm),
    Role(RoleId, QTerm, QTerm),
}

impl QAtom {
    pub fn terms(&self) -> Vec<QTerm> {
        match *self {
            QAtom::Concept(_, t) => vec![t],
            QAtom::Role(_, s, t) => vec![s, t],
        }
    }

    pub fn map_terms(&self, f: impl Fn(QTerm) -> QTerm) -> QAtom {
        match *self {
            QAtom::Concept(c, t) => QAtom::Concept(c, f(t)),
            QAtom::Role(r, s, t) => QAtom::Role(r, f(s), f(t)),
        }
    }
}

/// A query resolved against a store. Variables are numbered with the
/// answer variables first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub var_names: Vec<String>,
    pub answer_vars: Vec<u32>,
    pub atoms: Vec<QAtom>,
}

impl Query {
    pub fn var_count(&self) -> usize {
        self.var_names.len()
    }

    /// Variables occurring in some atom.
    pub fn vars(&self) -> BTreeSet<u32> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms())
            .filter_map(|t| match t {
                QTerm::Var(v) => Some(v),
                QTerm::Const(_) => None,
            })
            .collect()
    }

    pub fn terms(&self) -> BTreeSet<QTerm> {
        self.atoms.iter().flat_map(|a| a.terms()).collect()
    }

    pub fn binary_atoms(&self) -> impl Iterator<Item = (RoleId, QTerm, QTerm)> + '_ {
        self.atoms.iter().filter_map(|a| match *a {
            QAtom::Role(r, s, t) => Some((r, s, t)),
            QAtom::Concept(..) => None,
        })
    }
}

/// Maps each symbol of `cq` to the store's identifiers. `None` if some
/// predicate or constant does not occur in the KB, in which case the query
/// has no candidate answers.
pub fn resolve(cq: &Cq, store: &FactStore) -> Option<Query> {
    let sig = store.signature();
    let mut var_names: Vec<String> = cq.answer_vars.clone();
    var_names.extend(cq.existential_vars());
    let term = |t: &CqTerm| -> Option<QTerm> {
        match t {
            CqTerm::Var(v) => var_names
                .iter()
                .position(|n| n == v)
                .map(|i| QTerm::Var(i as u32)),
            CqTerm::Const(c) => {
                let a = sig.find_individual(c)?;
                store.individuals().named(a).map(QTerm::Const)
            }
        }
    };
    let mut atoms = Vec::new();
    for a in &cq.atoms {
        atoms.push(match a {
            CqAtom::Concept(p, t) => QAtom::Concept(sig.find_concept(p)?, term(t)?),
            CqAtom::Role(p, s, t) => QAtom::Role(sig.find_role(p)?, term(s)?, term(t)?),
        });
    }
    let answer_vars = (0..cq.answer_vars.len() as u32).collect();
    Some(Query {
        var_names,
        answer_vars,
        atoms,
    })
}

/// A partial mapping from query variables to individuals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    values: Vec<Option<IndId>>,
}

impl Substitution {
    pub fn new(var_count: usize) -> Self {
        Substitution {
            values: vec![None; var_count],
        }
    }

    pub fn get(&self, v: u32) -> Option<IndId> {
        self.values.get(v as usize).copied().flatten()
    }

    pub fn set(&mut self, v: u32, u: IndId) {
        self.values[v as usize] = Some(u);
    }

    pub fn unset(&mut self, v: u32) {
        self.values[v as usize] = None;
    }

    /// The image of a term; constants map to themselves.
    pub fn apply(&self, t: QTerm) -> Option<IndId> {
        match t {
            QTerm::Const(c) => Some(c),
            QTerm::Var(v) => self.get(v),
        }
    }

    pub fn domain(&self) -> impl Iterator<Item = u32> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, x)| x.is_some())
            .map(|(i, _)| i as u32)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|u| format!("{i}->{}", u.0)))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Replaces every term whose image is not an auxiliary individual by the
/// smallest named individual equal to that image, and restricts `tau` to
/// the surviving variables.
pub fn canonicalize(q: &Query, tau: &Substitution, store: &FactStore) -> (Query, Substitution) {
    let map = |t: QTerm| -> QTerm {
        let u = tau.apply(t).expect("candidate is total on the query");
        let rep = store.representative(u);
        if store.is_aux(rep) {
            t
        } else {
            QTerm::Const(rep)
        }
    };
    let mut atoms: Vec<QAtom> = Vec::new();
    for a in &q.atoms {
        let m = a.map_terms(map);
        if !atoms.contains(&m) {
            atoms.push(m);
        }
    }
    let out = Query {
        var_names: q.var_names.clone(),
        answer_vars: q.answer_vars.clone(),
        atoms,
    };
    let mut restricted = Substitution::new(q.var_count());
    for v in out.vars() {
        restricted.set(v, store.representative(tau.get(v).unwrap()));
    }
    (out, restricted)
}

fn atom_size(a: &QAtom, store: &FactStore) -> usize {
    match *a {
        QAtom::Concept(c, _) => store.unary_len(Pred::Concept(c)),
        QAtom::Role(r, _, _) => store.binary_len(Pred::Role(r)),
    }
}

/// Greedy join order: start from the smallest extension, then prefer atoms
/// sharing a bound term, unary before binary, smaller extensions first.
fn join_order(q: &Query, store: &FactStore) -> Vec<usize> {
    let mut bound: BTreeSet<u32> = BTreeSet::new();
    let mut left: Vec<usize> = (0..q.atoms.len()).collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let score = |i: usize| {
            let a = &q.atoms[i];
            let terms = a.terms();
            let free = terms
                .iter()
                .filter(|t| matches!(t, QTerm::Var(v) if !bound.contains(v)))
                .count();
            let connected = free < terms.len();
            let unary = matches!(a, QAtom::Concept(..));
            (!connected, free, !unary, atom_size(a, store), i)
        };
        let (pos, &best) = left
            .iter()
            .enumerate()
            .min_by_key(|(_, &i)| score(i))
            .unwrap();
        left.remove(pos);
        for t in q.atoms[best].terms() {
            if let QTerm::Var(v) = t {
                bound.insert(v);
            }
        }
        order.push(best);
    }
    order
}

struct Enumerator<'a, F> {
    q: &'a Query,
    store: &'a FactStore,
    order: Vec<usize>,
    tau: Substitution,
    prune: bool,
    pruned: u64,
    emit: F,
}

impl<F: FnMut(&Substitution) -> ControlFlow<()>> Enumerator<'_, F> {
    fn bind(&mut self, t: QTerm, u: IndId, k: usize) -> ControlFlow<()> {
        match t {
            QTerm::Var(v) => match self.tau.get(v) {
                Some(w) if w == u => self.step(k),
                Some(_) => ControlFlow::Continue(()),
                None => {
                    self.tau.set(v, u);
                    let r = self.step(k);
                    self.tau.unset(v);
                    r
                }
            },
            QTerm::Const(c) => {
                if self.store.representative(c) == u {
                    self.step(k)
                } else {
                    ControlFlow::Continue(())
                }
            }
        }
    }

    fn value(&self, t: QTerm) -> Option<IndId> {
        self.tau.apply(t).map(|u| self.store.representative(u))
    }

    /// Whether the atom bound last rules out every extension.
    fn violates_forks(&self, k: usize) -> bool {
        let QAtom::Role(r, s, t) = self.q.atoms[self.order[k - 1]] else {
            return false;
        };
        let t = canonical_term(t, &self.tau, self.store);
        if s == t || !self.store.hierarchy().is_simple(r) || matches!(t, QTerm::Const(_)) {
            return false;
        }
        let bound = self.order[..k]
            .iter()
            .filter_map(|&i| match self.q.atoms[i] {
                QAtom::Role(r, s, t) => Some((r, s, t)),
                QAtom::Concept(..) => None,
            });
        !forks_consistent(bound, &self.tau, self.store)
    }

    fn step(&mut self, k: usize) -> ControlFlow<()> {
        if self.prune && k > 0 && self.violates_forks(k) {
            self.pruned += 1;
            return ControlFlow::Continue(());
        }
        if k == self.order.len() {
            return (self.emit)(&self.tau);
        }
        let store = self.store;
        match self.q.atoms[self.order[k]] {
            QAtom::Concept(c, t) => {
                let pred = Pred::Concept(c);
                match self.value(t) {
                    Some(u) => {
                        if store.holds(pred, u, u) {
                            self.step(k + 1)?;
                        }
                    }
                    None => {
                        let members: Vec<IndId> = store.unary_members(pred).collect();
                        for u in members {
                            self.bind(t, u, k + 1)?;
                        }
                    }
                }
            }
            QAtom::Role(r, s, t) => {
                let pred = Pred::Role(r);
                match (self.value(s), self.value(t)) {
                    (Some(a), Some(b)) => {
                        if store.holds(pred, a, b) {
                            self.step(k + 1)?;
                        }
                    }
                    (Some(a), None) => {
                        let succ: Vec<IndId> = store.successors(pred, a).collect();
                        for b in succ {
                            self.bind(t, b, k + 1)?;
                        }
                    }
                    (None, Some(b)) => {
                        let pred_: Vec<IndId> = store.predecessors(pred, b).collect();
                        for a in pred_ {
                            self.bind(s, a, k + 1)?;
                        }
                    }
                    (None, None) => {
                        let pairs: Vec<(IndId, IndId)> = store.binary_pairs(pred).collect();
                        for (a, b) in pairs {
                            if s == t {
                                if a == b {
                                    self.bind(s, a, k + 1)?;
                                }
                                continue;
                            }
                            if let QTerm::Var(v) = s {
                                self.tau.set(v, a);
                                let r = self.bind(t, b, k + 1);
                                self.tau.unset(v);
                                r?;
                            }
                        }
                    }
                }
            }
        }
        ControlFlow::Continue(())
    }
}

/// Calls `emit` for every candidate answer to `q`: every total substitution
/// over representatives under which all atoms of `q` are stored. Stops early
/// when `emit` breaks.
pub fn for_each_candidate(
    q: &Query,
    store: &FactStore,
    emit: impl FnMut(&Substitution) -> ControlFlow<()>,
) {
    enumerate(q, store, false, emit);
}

/// Like [`for_each_candidate`], but skips every candidate whose partial
/// match already merges two terms with different images under the fork
/// rule; such candidates are never d-sound. Returns the number of pruned
/// partial matches.
pub fn for_each_dsound_candidate(
    q: &Query,
    store: &FactStore,
    emit: impl FnMut(&Substitution) -> ControlFlow<()>,
) -> u64 {
    enumerate(q, store, true, emit)
}

fn enumerate(
    q: &Query,
    store: &FactStore,
    prune: bool,
    emit: impl FnMut(&Substitution) -> ControlFlow<()>,
) -> u64 {
    let order = join_order(q, store);
    let mut e = Enumerator {
        q,
        store,
        order,
        tau: Substitution::new(q.var_count()),
        prune,
        pruned: 0,
        emit,
    };
    let _ = e.step(0);
    e.pruned
}

pub fn candidate_answers(q: &Query, store: &FactStore) -> Vec<Substitution> {
    let mut out = Vec::new();
    for_each_candidate(q, store, |tau| {
        out.push(tau.clone());
        ControlFlow::Continue(())
    });
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchStats {
    /// Candidate answers whose answer variables map to named individuals.
    pub candidates: u64,
    /// Candidates handed to the filter (the rest share an answer tuple with
    /// a candidate already found sound).
    pub filtered: u64,
    pub unsound: u64,
    /// Candidates on which the filter hit its branch cap.
    pub indeterminate: u64,
    pub fast_path_hits: u64,
    pub choices: u64,
    pub filter_time: Duration,
    /// Partial matches discarded during enumeration.
    pub pruned: u64,
}

impl SearchStats {
    pub fn filter_ms_avg(&self) -> f64 {
        if self.filtered == 0 {
            0.0
        } else {
            self.filter_time.as_secs_f64() * 1000.0 / self.filtered as f64
        }
    }

    pub fn choices_avg(&self) -> f64 {
        if self.filtered == 0 {
            0.0
        } else {
            self.choices as f64 / self.filtered as f64
        }
    }

    fn add(&mut self, other: &SearchStats) {
        self.candidates += other.candidates;
        self.filtered += other.filtered;
        self.unsound += other.unsound;
        self.indeterminate += other.indeterminate;
        self.fast_path_hits += other.fast_path_hits;
        self.choices += other.choices;
        self.filter_time += other.filter_time;
        self.pruned += other.pruned;
    }
}

pub type Tuple = Vec<String>;

#[derive(Clone, Debug, PartialEq)]
pub enum Answers {
    /// The KB is unsatisfiable, so every tuple is a certain answer.
    Unsatisfiable,
    Tuples(BTreeSet<Tuple>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnswerSet {
    pub answers: Answers,
    /// Tuples whose soundness could not be decided within the branch cap.
    pub undecided: BTreeSet<Tuple>,
    pub stats: SearchStats,
}

impl AnswerSet {
    pub fn tuples(&self) -> Option<&BTreeSet<Tuple>> {
        match &self.answers {
            Answers::Tuples(t) => Some(t),
            Answers::Unsatisfiable => None,
        }
    }

    /// Boolean reading: unsatisfiable, or some tuple is an answer.
    pub fn entailed(&self) -> bool {
        match &self.answers {
            Answers::Unsatisfiable => true,
            Answers::Tuples(t) => !t.is_empty(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnswerOptions {
    pub filter: FilterConfig,
    /// Worker threads for filtering; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Skip partial matches that already violate fork consistency.
    pub prune: bool,
}

impl Default for AnswerOptions {
    fn default() -> Self {
        AnswerOptions {
            filter: FilterConfig::default(),
            jobs: None,
            prune: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnswerError {
    #[error(transparent)]
    Invalid(#[from] ValidationFailed),
    #[error(transparent)]
    Limit(#[from] ResourceLimit),
}

/// Materializes `kb` and answers `cq` over it.
pub fn certain_answers(kb: &Kb, cq: &Cq, opts: &AnswerOptions) -> Result<AnswerSet, AnswerError> {
    let program = build_datalog(kb)?;
    let (store, _) = materialize(&program)?;
    Ok(answer_over_store(&store, cq, opts))
}

/// Every tuple of named individuals obtained by replacing each component
/// of `reps` by a named member of its equality class.
fn expand(store: &FactStore, reps: &[IndId]) -> Vec<Tuple> {
    let mut out: Vec<Tuple> = vec![Vec::new()];
    for &r in reps {
        let names: Vec<String> = store
            .class_of(r)
            .into_iter()
            .filter(|u| store.individuals().is_named(*u))
            .map(|u| store.individual_name(u))
            .collect();
        out = out
            .into_iter()
            .flat_map(|t| {
                names.iter().map(move |n| {
                    let mut t = t.clone();
                    t.push(n.clone());
                    t
                })
            })
            .collect();
    }
    out
}

enum GroupResult {
    Sound,
    Unsound,
    Undecided,
}

fn filter_group(
    q: &Query,
    store: &FactStore,
    group: &[Substitution],
    cfg: &FilterConfig,
) -> (GroupResult, SearchStats) {
    let mut stats = SearchStats::default();
    let mut undecided = false;
    for tau in group {
        let start = Instant::now();
        let outcome = is_sound(q, store, tau, cfg);
        stats.filter_time += start.elapsed();
        stats.filtered += 1;
        stats.choices += outcome.choices;
        if outcome.fast_path {
            stats.fast_path_hits += 1;
        }
        match outcome.verdict {
            Verdict::Sound => return (GroupResult::Sound, stats),
            Verdict::Unsound => stats.unsound += 1,
            Verdict::Indeterminate => {
                stats.indeterminate += 1;
                undecided = true;
            }
        }
    }
    (
        if undecided {
            GroupResult::Undecided
        } else {
            GroupResult::Unsound
        },
        stats,
    )
}

/// Answers `cq` over a saturated store.
pub fn answer_over_store(store: &FactStore, cq: &Cq, opts: &AnswerOptions) -> AnswerSet {
    let mut result = AnswerSet {
        answers: Answers::Tuples(BTreeSet::new()),
        undecided: BTreeSet::new(),
        stats: SearchStats::default(),
    };
    if store.is_unsatisfiable() {
        result.answers = Answers::Unsatisfiable;
        return result;
    }
    let Some(q) = resolve(cq, store) else {
        return result;
    };

    let mut tuples = BTreeSet::new();
    if q.answer_vars.is_empty() {
        // One group only: stop at the first sound candidate.
        let mut stats = SearchStats::default();
        let mut found = false;
        let mut undecided = false;
        let pruned = enumerate(&q, store, opts.prune, |tau| {
            stats.candidates += 1;
            let (res, s) = filter_group(&q, store, std::slice::from_ref(tau), &opts.filter);
            stats.add(&s);
            match res {
                GroupResult::Sound => {
                    found = true;
                    ControlFlow::Break(())
                }
                GroupResult::Undecided => {
                    undecided = true;
                    ControlFlow::Continue(())
                }
                GroupResult::Unsound => ControlFlow::Continue(()),
            }
        });
        stats.pruned = pruned;
        result.stats = stats;
        if found {
            tuples.insert(Vec::new());
        } else if undecided {
            result.undecided.insert(Vec::new());
        }
        result.answers = Answers::Tuples(tuples);
        return result;
    }

    let mut groups: BTreeMap<Vec<IndId>, Vec<Substitution>> = BTreeMap::new();
    let pruned = enumerate(&q, store, opts.prune, |tau| {
        let key: Vec<IndId> = q.answer_vars.iter().map(|&v| tau.get(v).unwrap()).collect();
        if key.iter().all(|&u| store.is_named(u)) {
            groups.entry(key).or_default().push(tau.clone());
        }
        ControlFlow::Continue(())
    });
    let groups: Vec<(Vec<IndId>, Vec<Substitution>)> = groups.into_iter().collect();
    let run = || -> Vec<(GroupResult, SearchStats)> {
        groups
            .par_iter()
            .map(|(_, g)| filter_group(&q, store, g, &opts.filter))
            .collect()
    };
    let results = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run()),
        None => run(),
    };
    let mut stats = SearchStats::default();
    for ((key, group), (res, s)) in groups.iter().zip(results) {
        stats.candidates += group.len() as u64;
        stats.add(&SearchStats { candidates: 0, ..s });
        match res {
            GroupResult::Sound => tuples.extend(expand(store, key)),
            GroupResult::Undecided => result.undecided.extend(expand(store, key)),
            GroupResult::Unsound => {}
        }
    }
    stats.pruned = pruned;
    result.stats = stats;
    result.answers = Answers::Tuples(tuples);
    result
}
