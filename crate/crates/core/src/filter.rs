//! Soundness check for candidate answers.
//!
//! A candidate answer matches the query into the datalog model, where one
//! auxiliary individual may stand for many anonymous elements of a real
//! model. The check below searches for a forest of query variables over the
//! auxiliary individuals that can be unfolded into a genuine match: the fork
//! closure and connection graph first, then a backtracking search over
//! variable renamings, skeleton parents and the role used by each
//! non-trivial atom. Every nondeterministic guess is one branch; the search
//! gives up with an indeterminate verdict once the branch cap is reached.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::answer::{canonicalize, QAtom, QTerm, Query, Substitution};
use crate::kb::RoleId;
use crate::materialize::FactStore;
use crate::translate::{IndId, Pred};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AtomKind {
    Good,
    AuxSimple,
    Other,
}

fn image(tau: &Substitution, t: QTerm) -> IndId {
    tau.apply(t).expect("substitution covers every query term")
}

/// Classifies the binary atom `role(s, t)` with respect to `tau`.
pub fn classify_atom(
    role: RoleId,
    s: QTerm,
    t: QTerm,
    tau: &Substitution,
    store: &FactStore,
) -> AtomKind {
    let us = image(tau, s);
    let ut = image(tau, t);
    let self_loop = store.has_self(role, us);
    if store.is_named(ut) || (s == t && self_loop) {
        AtomKind::Good
    } else if s != t
        && store.hierarchy().is_simple(role)
        && store.is_aux(store.representative(ut))
        && !(us == ut && self_loop)
    {
        AtomKind::AuxSimple
    } else {
        AtomKind::Other
    }
}

fn aux_simple_atoms(
    q: &Query,
    tau: &Substitution,
    store: &FactStore,
) -> Vec<(RoleId, QTerm, QTerm)> {
    q.binary_atoms()
        .filter(|&(r, s, t)| classify_atom(r, s, t, tau, store) == AtomKind::AuxSimple)
        .collect()
}

/// Equivalence over query terms, closed under the fork rule: sources of two
/// aux-simple atoms with equivalent targets are equivalent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForkRelation {
    rep: BTreeMap<QTerm, QTerm>,
}

impl ForkRelation {
    pub fn representative(&self, t: QTerm) -> QTerm {
        self.rep.get(&t).copied().unwrap_or(t)
    }

    pub fn equivalent(&self, s: QTerm, t: QTerm) -> bool {
        self.representative(s) == self.representative(t)
    }

    pub fn classes(&self) -> Vec<Vec<QTerm>> {
        let mut by_rep: BTreeMap<QTerm, Vec<QTerm>> = BTreeMap::new();
        for (&t, &r) in &self.rep {
            by_rep.entry(r).or_default().push(t);
        }
        by_rep.into_values().collect()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Fork closure with class representatives chosen as the minimum under
/// `key`, and the query with every term replaced by its representative.
pub fn fork_closure_by<K: Ord>(
    q: &Query,
    tau: &Substitution,
    store: &FactStore,
    key: impl Fn(QTerm) -> K,
) -> (ForkRelation, Query) {
    let terms: Vec<QTerm> = q.terms().into_iter().collect();
    let index: BTreeMap<QTerm, usize> = terms.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut parent: Vec<usize> = (0..terms.len()).collect();
    let simple = aux_simple_atoms(q, tau, store);
    loop {
        let mut changed = false;
        let mut by_target: BTreeMap<usize, usize> = BTreeMap::new();
        for &(_, s, t) in &simple {
            let ct = find(&mut parent, index[&t]);
            let cs = find(&mut parent, index[&s]);
            match by_target.get(&ct) {
                None => {
                    by_target.insert(ct, cs);
                }
                Some(&other) => {
                    let other = find(&mut parent, other);
                    if other != cs {
                        parent[cs] = other;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut classes: BTreeMap<usize, Vec<QTerm>> = BTreeMap::new();
    for (i, &t) in terms.iter().enumerate() {
        let c = find(&mut parent, i);
        classes.entry(c).or_default().push(t);
    }
    let mut rep = BTreeMap::new();
    for members in classes.values() {
        let r = *members.iter().min_by_key(|&&t| (key(t), t)).unwrap();
        for &t in members {
            rep.insert(t, r);
        }
    }
    let rel = ForkRelation { rep };
    let mut atoms: Vec<QAtom> = Vec::new();
    for a in &q.atoms {
        let m = a.map_terms(|t| rel.representative(t));
        if !atoms.contains(&m) {
            atoms.push(m);
        }
    }
    let q_merged = Query {
        var_names: q.var_names.clone(),
        answer_vars: q.answer_vars.clone(),
        atoms,
    };
    (rel, q_merged)
}

/// Fork closure with constants preferred as representatives, then the
/// smallest term.
pub fn fork_closure(q: &Query, tau: &Substitution, store: &FactStore) -> (ForkRelation, Query) {
    fork_closure_by(q, tau, store, |t| t)
}

/// Query variables and named individuals as vertices, with the edges of
/// aux-simple atoms and the edges realizable by direct-edge paths
/// through auxiliary individuals.
#[derive(Clone, Debug)]
pub struct ConnectionGraph {
    pub named: Vec<IndId>,
    pub vars: Vec<u32>,
    pub simple_edges: BTreeSet<(QTerm, QTerm)>,
    tau: BTreeMap<u32, IndId>,
    /// For each variable `v`, every individual that starts a path of
    /// direct edges through auxiliary individuals ending at `tau(v)`.
    sources: BTreeMap<u32, BTreeSet<IndId>>,
}

impl ConnectionGraph {
    pub fn image(&self, t: QTerm) -> IndId {
        match t {
            QTerm::Const(c) => c,
            QTerm::Var(v) => self.tau[&v],
        }
    }

    /// Whether `(from, to)` is a transit edge through auxiliary individuals.
    pub fn has_path_edge(&self, from: QTerm, to: QTerm) -> bool {
        let QTerm::Var(v) = to else { return false };
        let Some(src) = self.sources.get(&v) else {
            return false;
        };
        let u = match from {
            QTerm::Const(c) if self.named.binary_search(&c).is_ok() => c,
            QTerm::Const(_) => return false,
            QTerm::Var(w) => match self.tau.get(&w) {
                Some(&u) => u,
                None => return false,
            },
        };
        src.contains(&u)
    }

    /// All transit edges.
    pub fn path_edges(&self) -> BTreeSet<(QTerm, QTerm)> {
        let mut out = BTreeSet::new();
        for &v in &self.vars {
            for &a in &self.named {
                if self.has_path_edge(QTerm::Const(a), QTerm::Var(v)) {
                    out.insert((QTerm::Const(a), QTerm::Var(v)));
                }
            }
            for &w in &self.vars {
                if self.has_path_edge(QTerm::Var(w), QTerm::Var(v)) {
                    out.insert((QTerm::Var(w), QTerm::Var(v)));
                }
            }
        }
        out
    }

    /// Possible skeleton parents of `v` among `vertices`, named individuals
    /// first.
    fn parent_candidates(&self, v: u32, vars: &[u32]) -> Vec<QTerm> {
        let src = &self.sources[&v];
        let mut out: Vec<QTerm> = src
            .iter()
            .filter(|u| self.named.binary_search(u).is_ok())
            .map(|&u| QTerm::Const(u))
            .collect();
        out.extend(
            vars.iter()
                .filter(|&&w| w != v && src.contains(&self.tau[&w]))
                .map(|&w| QTerm::Var(w)),
        );
        out
    }
}

/// Individuals from which `u` is reachable by a non-empty path of direct
/// edges whose inner nodes and endpoint are auxiliary.
fn path_sources(store: &FactStore, u: IndId) -> BTreeSet<IndId> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::from([u]);
    let mut queue = vec![u];
    while let Some(x) = queue.pop() {
        for w in store.direct_predecessors(x) {
            out.insert(w);
            if store.is_aux(w) && seen.insert(w) {
                queue.push(w);
            }
        }
    }
    out
}

pub fn connection_graph(
    q_merged: &Query,
    tau: &Substitution,
    store: &FactStore,
) -> ConnectionGraph {
    let named = store.named_individuals();
    let vars: Vec<u32> = q_merged
        .vars()
        .into_iter()
        .filter(|&v| {
            tau.get(v)
                .is_some_and(|u| store.is_aux(store.representative(u)))
        })
        .collect();
    let tau_map: BTreeMap<u32, IndId> = vars
        .iter()
        .map(|&v| (v, store.representative(tau.get(v).unwrap())))
        .collect();
    let mut by_image: BTreeMap<IndId, BTreeSet<IndId>> = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for (&v, &u) in &tau_map {
        let src = by_image
            .entry(u)
            .or_insert_with(|| path_sources(store, u))
            .clone();
        sources.insert(v, src);
    }
    let simple_edges = aux_simple_atoms(q_merged, tau, store)
        .into_iter()
        .map(|(_, s, t)| (s, t))
        .collect();
    ConnectionGraph {
        named,
        vars,
        simple_edges,
        tau: tau_map,
        sources,
    }
}

fn has_cycle(edges: &BTreeSet<(QTerm, QTerm)>) -> bool {
    let mut succ: BTreeMap<QTerm, Vec<QTerm>> = BTreeMap::new();
    for &(a, b) in edges {
        succ.entry(a).or_default().push(b);
    }
    // 0 unvisited, 1 on stack, 2 done
    let mut state: BTreeMap<QTerm, u8> = BTreeMap::new();
    for &start in succ.keys() {
        if state.get(&start).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state.insert(start, 1);
        while let Some((node, i)) = stack.pop() {
            let next = succ.get(&node).and_then(|s| s.get(i)).copied();
            match next {
                None => {
                    state.insert(node, 2);
                }
                Some(n) => {
                    stack.push((node, i + 1));
                    match state.get(&n).copied().unwrap_or(0) {
                        1 => return true,
                        0 => {
                            state.insert(n, 1);
                            stack.push((n, 0));
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    false
}

fn dsound_parts(rel: &ForkRelation, cg: &ConnectionGraph, tau: &Substitution) -> bool {
    let consistent = rel.classes().iter().all(|class| {
        let first = tau.apply(class[0]);
        class.iter().all(|&t| tau.apply(t) == first)
    });
    consistent && !has_cycle(&cg.simple_edges)
}

/// The term standing for `t` after canonicalization under `tau`.
pub fn canonical_term(t: QTerm, tau: &Substitution, store: &FactStore) -> QTerm {
    let u = store.representative(image(tau, t));
    if store.is_aux(u) {
        t
    } else {
        QTerm::Const(u)
    }
}

/// A necessary condition for a partial candidate to extend to a sound one,
/// checked over the given fully bound binary atoms; `tau` may be partial.
///
/// In the real model a simple role reaches an anonymous element only from
/// its parent or through a self loop. So an aux-simple atom makes its
/// source the parent of its target, and a simple-role atom between distinct
/// terms with the same auxiliary image and no direct self edge there makes
/// both terms the same element. Closing these equalities under "same child,
/// same parent" must keep images apart and leave the parent edges acyclic.
/// More atoms only add equalities and edges, so a `false` here rules out
/// every extension of `tau`.
pub fn forks_consistent(
    atoms: impl IntoIterator<Item = (RoleId, QTerm, QTerm)>,
    tau: &Substitution,
    store: &FactStore,
) -> bool {
    forced_equalities(atoms, tau, store).is_some()
}

/// Terms every real match must send to the same element, as a map from
/// term to class index; `None` when no real match agrees with `tau`.
fn forced_equalities(
    atoms: impl IntoIterator<Item = (RoleId, QTerm, QTerm)>,
    tau: &Substitution,
    store: &FactStore,
) -> Option<BTreeMap<QTerm, usize>> {
    let mut index: BTreeMap<QTerm, usize> = BTreeMap::new();
    let mut images: Vec<IndId> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut same: Vec<(usize, usize)> = Vec::new();
    for (r, s, t) in atoms {
        let (s, t) = (canonical_term(s, tau, store), canonical_term(t, tau, store));
        let (us, ut) = (image(tau, s), image(tau, t));
        let ut = store.representative(ut);
        if s == t || !store.hierarchy().is_simple(r) || !store.is_aux(ut) {
            continue;
        }
        let mut id = |x: QTerm| {
            *index.entry(x).or_insert_with(|| {
                images.push(store.representative(image(tau, x)));
                images.len() - 1
            })
        };
        let (i, j) = (id(s), id(t));
        if store.representative(us) != ut || !store.has_self(r, ut) {
            edges.push((i, j));
        } else if !store.has_direct(r, ut, ut) {
            same.push((i, j));
        }
    }
    let mut parent: Vec<usize> = (0..images.len()).collect();
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| -> Option<bool> {
        let (a, b) = (find(parent, a), find(parent, b));
        if a == b {
            return Some(false);
        }
        if images[a] != images[b] {
            return None;
        }
        parent[a.max(b)] = a.min(b);
        Some(true)
    };
    for &(a, b) in &same {
        union(&mut parent, a, b)?;
    }
    loop {
        let mut changed = false;
        let mut by_target: BTreeMap<usize, usize> = BTreeMap::new();
        for &(s, t) in &edges {
            let ct = find(&mut parent, t);
            let cs = find(&mut parent, s);
            match by_target.get(&ct) {
                None => {
                    by_target.insert(ct, cs);
                }
                Some(&other) => changed |= union(&mut parent, other, cs)?,
            }
        }
        if !changed {
            break;
        }
    }
    let classes: BTreeSet<(QTerm, QTerm)> = edges
        .iter()
        .map(|&(s, t)| {
            (
                QTerm::Var(find(&mut parent, s) as u32),
                QTerm::Var(find(&mut parent, t) as u32),
            )
        })
        .collect();
    if has_cycle(&classes) {
        return None;
    }
    Some(
        index
            .into_iter()
            .map(|(t, i)| (t, find(&mut parent, i)))
            .collect(),
    )
}

/// Fork constraints agree with `tau` and aux-simple atoms form no cycle.
/// Expects a canonicalized query and substitution.
pub fn is_dsound(q: &Query, tau: &Substitution, store: &FactStore) -> bool {
    let (rel, q_merged) = fork_closure(q, tau, store);
    let cg = connection_graph(&q_merged, tau, store);
    dsound_parts(&rel, &cg, tau)
}

/// A mapping of the connection graph's variables onto variables with the
/// same image. Variables not in the map are fixed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Renaming {
    map: BTreeMap<u32, u32>,
}

impl Renaming {
    pub fn apply(&self, t: QTerm) -> QTerm {
        match t {
            QTerm::Var(v) => QTerm::Var(self.map.get(&v).copied().unwrap_or(v)),
            c => c,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().all(|(a, b)| a == b)
    }

    /// Number of variables mapped to a different variable.
    pub fn identifications(&self) -> usize {
        self.map.iter().filter(|(a, b)| a != b).count()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.map
            .iter()
            .filter(|(a, b)| a != b)
            .map(|(&a, &b)| (a, b))
    }
}

/// the renamed simple edges form a forest: no self-loops, at most one parent per vertex,
/// no cycles.
fn renamed_forest(cg: &ConnectionGraph, renaming: &Renaming) -> Option<BTreeSet<(QTerm, QTerm)>> {
    let edges: BTreeSet<(QTerm, QTerm)> = cg
        .simple_edges
        .iter()
        .map(|&(a, b)| (renaming.apply(a), renaming.apply(b)))
        .collect();
    let mut targets = BTreeSet::new();
    for &(a, b) in &edges {
        if a == b || !targets.insert(b) {
            return None;
        }
    }
    if has_cycle(&edges) {
        None
    } else {
        Some(edges)
    }
}

/// Variables of `cg` grouped by their image.
fn image_groups(cg: &ConnectionGraph) -> Vec<Vec<u32>> {
    let mut groups: BTreeMap<IndId, Vec<u32>> = BTreeMap::new();
    for &v in &cg.vars {
        groups.entry(cg.tau[&v]).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Blocks of variables, one list of blocks per group.
type Blocks = [Vec<Vec<u32>>];

/// Calls `f` with every partition of each group into blocks (as block
/// indices per variable, groups concatenated) having exactly `merges`
/// identifications.
fn for_each_partition<B>(
    groups: &[Vec<u32>],
    merges: usize,
    f: &mut dyn FnMut(&Blocks) -> Result<(), B>,
) -> Result<(), B> {
    fn rec<B>(
        groups: &[Vec<u32>],
        g: usize,
        i: usize,
        left: usize,
        blocks: &mut Vec<Vec<Vec<u32>>>,
        f: &mut dyn FnMut(&Blocks) -> Result<(), B>,
    ) -> Result<(), B> {
        if g == groups.len() {
            return if left == 0 { f(blocks) } else { Ok(()) };
        }
        if i == groups[g].len() {
            blocks.push(Vec::new());
            let r = rec(groups, g + 1, 0, left, blocks, f);
            blocks.pop();
            return r;
        }
        let v = groups[g][i];
        let cur = blocks.len() - 1;
        // Joining an existing block costs one identification.
        if left > 0 {
            for b in 0..blocks[cur].len() {
                blocks[cur][b].push(v);
                let r = rec(groups, g, i + 1, left - 1, blocks, f);
                blocks[cur][b].pop();
                r?;
            }
        }
        blocks[cur].push(vec![v]);
        let r = rec(groups, g, i + 1, left, blocks, f);
        blocks[cur].pop();
        r
    }
    let mut blocks = vec![Vec::new()];
    rec(groups, 0, 0, merges, &mut blocks, f)
}

/// Every variable renaming whose image of the simple edges is a forest, fewest
/// identifications first (so the identity comes first).
pub fn enumerate_renamings(cg: &ConnectionGraph) -> Vec<Renaming> {
    let groups = image_groups(cg);
    let max: usize = groups.iter().map(|g| g.len() - 1).sum();
    let mut out = Vec::new();
    for merges in 0..=max {
        let _ = for_each_partition::<()>(&groups, merges, &mut |blocks| {
            let all: Vec<&Vec<u32>> = blocks.iter().flatten().collect();
            let mut choice = vec![0usize; all.len()];
            loop {
                let mut map = BTreeMap::new();
                for (b, &k) in all.iter().zip(&choice) {
                    for &v in b.iter() {
                        map.insert(v, b[k]);
                    }
                }
                let renaming = Renaming { map };
                if renamed_forest(cg, &renaming).is_some() {
                    out.push(renaming);
                }
                let mut i = 0;
                loop {
                    if i == all.len() {
                        return Ok(());
                    }
                    choice[i] += 1;
                    if choice[i] < all[i].len() {
                        break;
                    }
                    choice[i] = 0;
                    i += 1;
                }
            }
        });
    }
    out
}

/// A forest over the renamed vertices: the parent of each variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub parent: BTreeMap<u32, QTerm>,
}

impl Skeleton {
    pub fn edges(&self) -> BTreeSet<(QTerm, QTerm)> {
        self.parent
            .iter()
            .map(|(&v, &p)| (p, QTerm::Var(v)))
            .collect()
    }
}

fn renamed_vars(cg: &ConnectionGraph, renaming: &Renaming) -> Vec<u32> {
    let set: BTreeSet<u32> = cg
        .vars
        .iter()
        .map(|&v| match renaming.apply(QTerm::Var(v)) {
            QTerm::Var(w) => w,
            QTerm::Const(_) => unreachable!(),
        })
        .collect();
    set.into_iter().collect()
}

/// Every skeleton for `renaming`, by exhaustive parent choice. Exponential in
/// the number of variables; `is_sound` explores skeletons lazily instead.
pub fn enumerate_skeletons(cg: &ConnectionGraph, renaming: &Renaming) -> Vec<Skeleton> {
    let Some(forced) = renamed_forest(cg, renaming) else {
        return Vec::new();
    };
    let vars = renamed_vars(cg, renaming);
    let forced: BTreeMap<u32, QTerm> = forced
        .into_iter()
        .map(|(a, b)| match b {
            QTerm::Var(v) => (v, a),
            QTerm::Const(_) => unreachable!(),
        })
        .collect();
    let options: Vec<Vec<QTerm>> = vars
        .iter()
        .map(|&v| match forced.get(&v) {
            Some(&p) => vec![p],
            None => cg.parent_candidates(v, &vars),
        })
        .collect();
    let mut out = Vec::new();
    if options.iter().any(|o| o.is_empty()) {
        return out;
    }
    let mut choice = vec![0usize; vars.len()];
    loop {
        let parent: BTreeMap<u32, QTerm> = vars
            .iter()
            .zip(&choice)
            .enumerate()
            .map(|(i, (&v, &k))| (v, options[i][k]))
            .collect();
        let rooted = vars.iter().all(|&v| {
            let mut cur = QTerm::Var(v);
            for _ in 0..=vars.len() {
                match cur {
                    QTerm::Const(_) => return true,
                    QTerm::Var(w) => cur = parent[&w],
                }
            }
            false
        });
        if rooted {
            out.push(Skeleton { parent });
        }
        let mut i = 0;
        loop {
            if i == vars.len() {
                return out;
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Whether `u` can be reached from `from` by a non-empty path of auxiliary
/// individuals where every step is a direct edge for every role in `roles`.
/// A non-transitive role in `roles` limits the path to a single step.
pub fn exist(store: &FactStore, from: IndId, u: IndId, roles: &[RoleId]) -> bool {
    if roles.is_empty() {
        return true;
    }
    let h = store.hierarchy();
    let step = |a: IndId, b: IndId| roles.iter().all(|&r| store.has_direct(r, a, b));
    if roles.iter().any(|&r| !h.is_transitive(r)) {
        return step(from, u);
    }
    let first = roles[0];
    let mut seen = BTreeSet::new();
    let mut queue = vec![store.representative(from)];
    while let Some(x) = queue.pop() {
        for y in store.successors(Pred::Direct(first), x) {
            if !store.is_aux(y) || !step(x, y) {
                continue;
            }
            if y == u {
                return true;
            }
            if seen.insert(y) {
                queue.push(y);
            }
        }
    }
    false
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    /// Branches explored before giving up with an indeterminate verdict.
    pub branch_cap: u64,
    /// Accept at once when every binary atom is good or aux-simple.
    pub fast_path: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            branch_cap: 10_000_000,
            fast_path: true,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Sound,
    Unsound,
    Indeterminate,
}

/// The role chosen for one atom and, if the atom was not realized along an
/// existing path, the root the path was routed through.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Guess {
    pub atom: (RoleId, QTerm, QTerm),
    pub role: RoleId,
    pub split_root: Option<IndId>,
}

/// The accepting branch of a sound verdict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub renaming: Renaming,
    pub parent: BTreeMap<u32, QTerm>,
    pub labels: BTreeMap<u32, BTreeSet<RoleId>>,
    pub guesses: Vec<Guess>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterOutcome {
    pub verdict: Verdict,
    pub choices: u64,
    pub fast_path: bool,
    pub witness: Option<Witness>,
}

impl FilterOutcome {
    pub fn is_sound(&self) -> bool {
        self.verdict == Verdict::Sound
    }

    fn decided(verdict: Verdict, choices: u64) -> Self {
        FilterOutcome {
            verdict,
            choices,
            fast_path: false,
            witness: None,
        }
    }
}

struct CapReached;

type Step = Result<bool, CapReached>;

struct Search<'a> {
    store: &'a FactStore,
    cg: &'a ConnectionGraph,
    vars: Vec<u32>,
    others: Vec<(RoleId, QTerm, QTerm)>,
    candidates: BTreeMap<u32, Vec<QTerm>>,
    parent: BTreeMap<u32, QTerm>,
    parent_trail: Vec<u32>,
    labels: BTreeMap<u32, BTreeSet<RoleId>>,
    label_trail: Vec<(u32, RoleId)>,
    guesses: Vec<Guess>,
    exist_memo: HashMap<(IndId, IndId, Vec<RoleId>), bool>,
    choices: u64,
    cap: u64,
}

impl Search<'_> {
    fn tick(&mut self) -> Result<(), CapReached> {
        self.choices += 1;
        if self.choices > self.cap {
            Err(CapReached)
        } else {
            Ok(())
        }
    }

    fn image(&self, t: QTerm) -> IndId {
        self.cg.image(t)
    }

    /// First variable without a parent on the way up from `t`, if any.
    fn unparented_ancestor(&self, t: QTerm) -> Option<u32> {
        let mut cur = t;
        loop {
            match cur {
                QTerm::Const(_) => return None,
                QTerm::Var(v) => match self.parent.get(&v) {
                    None => return Some(v),
                    Some(&p) => cur = p,
                },
            }
        }
    }

    fn creates_cycle(&self, cand: QTerm, child: u32) -> bool {
        let mut cur = cand;
        loop {
            match cur {
                QTerm::Const(_) => return false,
                QTerm::Var(v) if v == child => return true,
                QTerm::Var(v) => match self.parent.get(&v) {
                    None => return false,
                    Some(&p) => cur = p,
                },
            }
        }
    }

    /// Path from the root down to `t`; `t`'s ancestors must all be parented.
    fn path_to(&self, t: QTerm) -> Vec<QTerm> {
        let mut path = vec![t];
        let mut cur = t;
        while let QTerm::Var(v) = cur {
            cur = self.parent[&v];
            path.push(cur);
        }
        path.reverse();
        path
    }

    fn set_parent(&mut self, v: u32, p: QTerm) {
        self.parent.insert(v, p);
        self.parent_trail.push(v);
    }

    fn undo_parents(&mut self, mark: usize) {
        while self.parent_trail.len() > mark {
            let v = self.parent_trail.pop().unwrap();
            self.parent.remove(&v);
        }
    }

    fn undo_labels(&mut self, mark: usize) {
        while self.label_trail.len() > mark {
            let (v, r) = self.label_trail.pop().unwrap();
            self.labels.get_mut(&v).unwrap().remove(&r);
        }
    }

    fn edge_exists(&mut self, child: u32) -> bool {
        let from = self.image(self.parent[&child]);
        let to = self.image(QTerm::Var(child));
        let roles: Vec<RoleId> = self.labels[&child].iter().copied().collect();
        let key = (from, to, roles);
        if let Some(&r) = self.exist_memo.get(&key) {
            return r;
        }
        let r = exist(self.store, from, to, &key.2);
        self.exist_memo.insert(key, r);
        r
    }

    /// Adds `role` to the label of the edge into `child`; false if the
    /// edge can no longer be realized.
    fn label(&mut self, child: u32, role: RoleId) -> bool {
        if self.labels.entry(child).or_default().insert(role) {
            self.label_trail.push((child, role));
            self.edge_exists(child)
        } else {
            true
        }
    }

    /// Roles usable for `role(s, t)`, most specific first.
    fn role_choices(&self, role: RoleId, us: IndId, ut: IndId) -> Vec<RoleId> {
        let h = self.store.hierarchy();
        let mut out: Vec<RoleId> = h
            .subs(role)
            .into_iter()
            .filter(|&p| self.store.has_role(p, us, ut))
            .collect();
        out.sort_by_key(|&p| (h.subs(p).len(), p));
        out
    }

    fn atom(&mut self, k: usize) -> Step {
        if k == self.others.len() {
            return Ok(self.complete());
        }
        let (_, _, t) = self.others[k];
        self.extend_chain(k, t)
    }

    /// Fixes the parents on the way from `t` to a root, then picks a role.
    fn extend_chain(&mut self, k: usize, t: QTerm) -> Step {
        let Some(w) = self.unparented_ancestor(t) else {
            return self.choose_role(k);
        };
        let (role, s, _) = self.others[k];
        let us = self.image(s);
        let ut = self.image(t);
        let cands = self.candidates[&w].clone();
        for cand in cands {
            if self.creates_cycle(cand, w) {
                continue;
            }
            if let QTerm::Const(root) = cand {
                // The chain ends at `root`; unless `s` lies on it, the atom
                // has to be routed through the root by a transitive role.
                let on_chain = cand == s || self.chain_contains(t, w, s);
                if !on_chain && !self.can_split(role, us, ut, root) {
                    continue;
                }
            }
            self.tick()?;
            let mark = self.parent_trail.len();
            self.set_parent(w, cand);
            if self.extend_chain(k, t)? {
                return Ok(true);
            }
            self.undo_parents(mark);
        }
        Ok(false)
    }

    /// Whether `s` is a proper ancestor of `t` up to and including `top`.
    fn chain_contains(&self, t: QTerm, top: u32, s: QTerm) -> bool {
        let mut cur = t;
        while let QTerm::Var(v) = cur {
            if v == top {
                return false;
            }
            cur = self.parent[&v];
            if cur == s {
                return true;
            }
        }
        false
    }

    fn can_split(&self, role: RoleId, us: IndId, ut: IndId, root: IndId) -> bool {
        let h = self.store.hierarchy();
        h.subs(role).into_iter().any(|p| {
            h.is_transitive(p) && self.store.has_role(p, us, ut) && self.store.has_role(p, us, root)
        })
    }

    fn choose_role(&mut self, k: usize) -> Step {
        let (role, s, t) = self.others[k];
        let path = self.path_to(t);
        let from = path[..path.len() - 1].iter().position(|&x| x == s);
        let us = self.image(s);
        let ut = self.image(t);
        let QTerm::Var(tv) = t else {
            unreachable!("targets of non-good atoms are variables")
        };
        let direct = self.parent.get(&tv) == Some(&s);
        let h = self.store.hierarchy();
        for p in self.role_choices(role, us, ut) {
            self.tick()?;
            if !direct && !h.is_transitive(p) {
                continue;
            }
            let (start, split_root) = match from {
                Some(i) => (i, None),
                None => {
                    let root = self.image(path[0]);
                    if !self.store.has_role(p, us, root) {
                        continue;
                    }
                    (0, Some(root))
                }
            };
            let mark = self.label_trail.len();
            let mut ok = true;
            for node in &path[start + 1..] {
                let QTerm::Var(c) = *node else { unreachable!() };
                if !self.label(c, p) {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.guesses.push(Guess {
                    atom: (role, s, t),
                    role: p,
                    split_root,
                });
                if self.atom(k + 1)? {
                    return Ok(true);
                }
                self.guesses.pop();
            }
            self.undo_labels(mark);
        }
        Ok(false)
    }

    /// Attaches every remaining variable below some rooted vertex. Their
    /// edges carry no labels, so any attachment will do.
    fn complete(&mut self) -> bool {
        let mark = self.parent_trail.len();
        loop {
            let mut changed = false;
            let mut missing = false;
            for i in 0..self.vars.len() {
                let v = self.vars[i];
                if self.parent.contains_key(&v) {
                    continue;
                }
                let found = self.candidates[&v]
                    .iter()
                    .copied()
                    .find(|&c| self.unparented_ancestor(c).is_none());
                match found {
                    Some(c) => {
                        self.set_parent(v, c);
                        changed = true;
                    }
                    None => missing = true,
                }
            }
            if !missing {
                let rooted = self
                    .vars
                    .iter()
                    .all(|&v| self.unparented_ancestor(QTerm::Var(v)).is_none());
                if rooted {
                    return true;
                }
            }
            if !changed {
                self.undo_parents(mark);
                return false;
            }
        }
    }
}

/// Decides whether the candidate answer `tau` to `q` corresponds to a match
/// in every model of the KB.
pub fn is_sound(
    q: &Query,
    store: &FactStore,
    tau: &Substitution,
    cfg: &FilterConfig,
) -> FilterOutcome {
    let (q, tau) = canonicalize(q, tau, store);
    let (rel, q_merged) = fork_closure(&q, &tau, store);
    let cg = connection_graph(&q_merged, &tau, store);
    if !dsound_parts(&rel, &cg, &tau) {
        return FilterOutcome::decided(Verdict::Unsound, 0);
    }
    let simple_only = q_merged
        .binary_atoms()
        .all(|(r, s, t)| classify_atom(r, s, t, &tau, store) != AtomKind::Other);
    if cfg.fast_path && simple_only {
        return FilterOutcome {
            verdict: Verdict::Sound,
            choices: 0,
            fast_path: true,
            witness: None,
        };
    }

    // Variables forced equal move together, so renamings only ever merge
    // whole units.
    let Some(forced) = forced_equalities(q_merged.binary_atoms(), &tau, store) else {
        return FilterOutcome::decided(Verdict::Unsound, 0);
    };
    let mut by_class: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let mut units: Vec<Vec<u32>> = Vec::new();
    for &v in &cg.vars {
        match forced.get(&QTerm::Var(v)) {
            Some(&c) => by_class.entry(c).or_default().push(v),
            None => units.push(vec![v]),
        }
    }
    units.extend(by_class.into_values());
    units.sort();
    let mut groups: BTreeMap<IndId, Vec<u32>> = BTreeMap::new();
    for (i, unit) in units.iter().enumerate() {
        groups.entry(cg.tau[&unit[0]]).or_default().push(i as u32);
    }
    let groups: Vec<Vec<u32>> = groups.into_values().collect();
    let max: usize = groups.iter().map(|g| g.len() - 1).sum();
    let mut choices = 0u64;
    for merges in 0..=max {
        let mut found = None;
        let r = for_each_partition(&groups, merges, &mut |blocks| {
            let mut map = BTreeMap::new();
            for b in blocks.iter().flatten() {
                let target = units[b[0] as usize][0];
                for &u in b {
                    for &v in &units[u as usize] {
                        map.insert(v, target);
                    }
                }
            }
            let renaming = Renaming { map };
            choices += 1;
            if choices > cfg.branch_cap {
                return Err(CapReached);
            }
            let budget = cfg.branch_cap - choices;
            let (res, used) = search_renaming(&q_merged, &tau, store, &cg, &renaming, budget);
            choices += used;
            match res {
                Err(CapReached) => Err(CapReached),
                Ok(Some(w)) => {
                    found = Some(w);
                    // Stop the enumeration; the witness is kept above.
                    Err(CapReached)
                }
                Ok(None) => Ok(()),
            }
        });
        if let Some(w) = found {
            return FilterOutcome {
                verdict: Verdict::Sound,
                choices,
                fast_path: false,
                witness: Some(w),
            };
        }
        if r.is_err() {
            return FilterOutcome::decided(Verdict::Indeterminate, choices);
        }
    }
    FilterOutcome::decided(Verdict::Unsound, choices)
}

fn search_renaming(
    q_merged: &Query,
    tau: &Substitution,
    store: &FactStore,
    cg: &ConnectionGraph,
    renaming: &Renaming,
    budget: u64,
) -> (Result<Option<Witness>, CapReached>, u64) {
    let Some(forced) = renamed_forest(cg, renaming) else {
        return (Ok(None), 0);
    };
    let vars = renamed_vars(cg, renaming);
    let candidates: BTreeMap<u32, Vec<QTerm>> = vars
        .iter()
        .map(|&v| (v, cg.parent_candidates(v, &vars)))
        .collect();
    let mut search = Search {
        store,
        cg,
        vars: vars.clone(),
        others: Vec::new(),
        candidates,
        parent: BTreeMap::new(),
        parent_trail: Vec::new(),
        labels: BTreeMap::new(),
        label_trail: Vec::new(),
        guesses: Vec::new(),
        exist_memo: HashMap::new(),
        choices: 0,
        cap: budget,
    };
    for &(p, c) in &forced {
        let QTerm::Var(v) = c else { unreachable!() };
        search.parent.insert(v, p);
    }
    if vars
        .iter()
        .any(|v| !search.parent.contains_key(v) && search.candidates[v].is_empty())
    {
        return (Ok(None), 0);
    }
    let mut seen = BTreeSet::new();
    for (r, s, t) in q_merged.binary_atoms() {
        let (s, t) = (renaming.apply(s), renaming.apply(t));
        if !seen.insert((r, s, t)) {
            continue;
        }
        match classify_atom(r, s, t, tau, store) {
            AtomKind::Good => {}
            AtomKind::AuxSimple => {
                let QTerm::Var(v) = t else { unreachable!() };
                if !search.label(v, r) {
                    return (Ok(None), 0);
                }
            }
            AtomKind::Other => search.others.push((r, s, t)),
        }
    }
    let res = search.atom(0);
    let used = search.choices;
    let res = res.map(|ok| {
        ok.then(|| Witness {
            renaming: renaming.clone(),
            parent: search.parent.clone(),
            labels: search
                .labels
                .iter()
                .filter(|(_, l)| !l.is_empty())
                .map(|(&v, l)| (v, l.clone()))
                .collect(),
            guesses: search.guesses.clone(),
        })
    });
    (res, used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::resolve;
    use crate::materialize::{aux_individual, materialize, named_individual};
    use crate::text::{parse_kb, parse_query};
    use crate::translate::build_datalog;

    fn store_of(text: &str) -> FactStore {
        materialize(&build_datalog(&parse_kb(text).unwrap()).unwrap())
            .unwrap()
            .0
    }

    fn ex1() -> FactStore {
        store_of(include_str!("../tests/data/ex1.kb"))
    }

    fn role(store: &FactStore, name: &str) -> RoleId {
        store.signature().find_role(name).unwrap()
    }

    fn subst(values: &[IndId]) -> Substitution {
        let mut tau = Substitution::new(values.len());
        for (i, &u) in values.iter().enumerate() {
            tau.set(i as u32, u);
        }
        tau
    }

    const SELF_LOOP_QUERY: &str =
        "q(?x) :- S(?x,?y1), S(?y1,?y1), R(?x,?y3), D(?y3), R(?y2,?y3), F(?y2), T(?y2,?x).";

    /// The self-loop query with its candidate: x, y1, y3, y2 in variable order.
    fn self_loop_query(store: &FactStore) -> (Query, Substitution) {
        let q = resolve(&parse_query(SELF_LOOP_QUERY).unwrap(), store).unwrap();
        let tau = subst(&[
            named_individual(store, "a").unwrap(),
            aux_individual(store, "S", "C").unwrap(),
            aux_individual(store, "T", "D").unwrap(),
            aux_individual(store, "T", "F").unwrap(),
        ]);
        (q, tau)
    }

    fn v(i: u32) -> QTerm {
        QTerm::Var(i)
    }

    #[test]
    fn self_loop_query_atom_kinds() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let (cq, ctau) = canonicalize(&q, &tau, &store);
        let a = QTerm::Const(named_individual(&store, "a").unwrap());
        let kind = |r: &str, s, t| classify_atom(role(&store, r), s, t, &ctau, &store);
        assert_eq!(kind("T", v(3), a), AtomKind::Good);
        assert_eq!(kind("S", v(1), v(1)), AtomKind::Good);
        assert_eq!(kind("S", a, v(1)), AtomKind::AuxSimple);
        assert_eq!(kind("R", a, v(2)), AtomKind::Other);
        assert_eq!(kind("R", v(3), v(2)), AtomKind::Other);
        let aux_simple: Vec<_> = aux_simple_atoms(&cq, &ctau, &store);
        assert_eq!(aux_simple, vec![(role(&store, "S"), a, v(1))]);
    }

    #[test]
    fn self_loop_query_has_no_forks() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let (cq, ctau) = canonicalize(&q, &tau, &store);
        let (rel, q_merged) = fork_closure(&cq, &ctau, &store);
        assert_eq!(q_merged, cq);
        assert!(rel.classes().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn fork_rule_merges_sources() {
        let store = store_of("A SubClassOf some S B\nA(a)\nA(b)\n");
        let q = resolve(
            &parse_query("q() :- A(?x), S(?x,?y), S(?z,?y).").unwrap(),
            &store,
        )
        .unwrap();
        let o = aux_individual(&store, "S", "B").unwrap();
        let a = named_individual(&store, "a").unwrap();
        let b = named_individual(&store, "b").unwrap();
        let (rel, q_merged) = fork_closure(&q, &subst(&[a, o, a]), &store);
        assert!(rel.equivalent(QTerm::Const(a), QTerm::Const(a)));
        assert_eq!(q_merged.atoms.len(), 2);
        // Sources a and b are forked together but have different images.
        let q2 = resolve(&parse_query("q() :- S(?x,?y), S(?z,?y).").unwrap(), &store).unwrap();
        let tau = subst(&[a, o, b]);
        let (rel, _) = fork_closure(&q2, &tau, &store);
        assert!(rel.equivalent(v(0), v(2)));
        assert!(!is_dsound(&q2, &tau, &store));
        assert_eq!(
            is_sound(&q2, &store, &tau, &FilterConfig::default()).verdict,
            Verdict::Unsound
        );
        assert!(is_sound(&q2, &store, &subst(&[a, o, a]), &FilterConfig::default()).is_sound());
    }

    #[test]
    fn self_loop_query_connection_graph() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let (cq, ctau) = canonicalize(&q, &tau, &store);
        let (_, q_merged) = fork_closure(&cq, &ctau, &store);
        let cg = connection_graph(&q_merged, &ctau, &store);
        let a = QTerm::Const(named_individual(&store, "a").unwrap());
        assert_eq!(cg.vars, vec![1, 2, 3]);
        assert_eq!(cg.simple_edges, BTreeSet::from([(a, v(1))]));
        assert!(cg.has_path_edge(a, v(2)));
        assert!(cg.path_edges().is_superset(&cg.simple_edges));
        assert!(is_dsound(&cq, &ctau, &store));
    }

    #[test]
    fn no_aux_variables_give_empty_graph() {
        let store = ex1();
        let q = resolve(&parse_query("q(?x) :- A(?x).").unwrap(), &store).unwrap();
        let tau = subst(&[named_individual(&store, "a").unwrap()]);
        let (cq, ctau) = canonicalize(&q, &tau, &store);
        let cg = connection_graph(&cq, &ctau, &store);
        assert!(cg.vars.is_empty());
        assert!(cg.path_edges().is_empty());
        assert_eq!(enumerate_renamings(&cg), vec![Renaming::default()]);
    }

    #[test]
    fn self_loop_query_is_sound_via_root_split() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let out = is_sound(&q, &store, &tau, &FilterConfig::default());
        assert_eq!(out.verdict, Verdict::Sound);
        assert!(!out.fast_path);
        let w = out.witness.unwrap();
        assert!(w.renaming.is_identity());
        let a = named_individual(&store, "a").unwrap();
        let b = named_individual(&store, "b").unwrap();
        assert_eq!(w.parent[&1], QTerm::Const(a));
        assert_eq!(w.parent[&2], QTerm::Const(a));
        assert_eq!(w.parent[&3], QTerm::Const(b));
        let t = role(&store, "T");
        assert!(w.guesses.iter().all(|g| g.role == t));
        assert!(w.guesses.iter().any(|g| g.split_root == Some(a)));
    }

    #[test]
    fn self_loop_query_skeletons_include_the_expected_one() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let (cq, ctau) = canonicalize(&q, &tau, &store);
        let (_, q_merged) = fork_closure(&cq, &ctau, &store);
        let cg = connection_graph(&q_merged, &ctau, &store);
        let renamings = enumerate_renamings(&cg);
        assert!(renamings[0].is_identity());
        let a = QTerm::Const(named_individual(&store, "a").unwrap());
        let b = QTerm::Const(named_individual(&store, "b").unwrap());
        let skeletons = enumerate_skeletons(&cg, &renamings[0]);
        let want = BTreeMap::from([(1, a), (2, a), (3, b)]);
        assert!(skeletons.iter().any(|s| s.parent == want));
        assert!(skeletons.iter().all(|s| s.parent[&1] == a));
    }

    #[test]
    fn exist_on_running_kb() {
        let store = ex1();
        let t = role(&store, "T");
        let s = role(&store, "S");
        let a = named_individual(&store, "a").unwrap();
        let tf = aux_individual(&store, "T", "F").unwrap();
        let td = aux_individual(&store, "T", "D").unwrap();
        assert!(exist(&store, tf, td, &[t]));
        assert!(exist(&store, a, td, &[t]));
        assert!(!store.has_direct(t, a, td));
        assert!(!exist(&store, a, td, &[s]));
        assert!(exist(&store, a, td, &[]));
    }

    #[test]
    fn simple_two_cycle_is_unsound() {
        let store = store_of("A SubClassOf some S A\nA(a)\n");
        let q = resolve(&parse_query("q() :- S(?y,?z), S(?z,?y).").unwrap(), &store).unwrap();
        let o = aux_individual(&store, "S", "A").unwrap();
        let tau = subst(&[o, o]);
        assert!(!is_dsound(&q, &tau, &store));
        let out = is_sound(&q, &store, &tau, &FilterConfig::default());
        assert_eq!(out.verdict, Verdict::Unsound);
        assert_eq!(out.choices, 0);
    }

    #[test]
    fn renamings_identify_same_image() {
        let store = store_of("A SubClassOf some S B\nA(a)\n");
        let q = resolve(&parse_query("q() :- B(?y), B(?z).").unwrap(), &store).unwrap();
        let o = aux_individual(&store, "S", "B").unwrap();
        let tau = subst(&[o, o]);
        let cg = connection_graph(&q, &tau, &store);
        let r = enumerate_renamings(&cg);
        assert_eq!(r.len(), 3);
        assert!(r[0].is_identity());
        assert_eq!(r[1].identifications(), 1);
    }

    #[test]
    fn fast_path_reports_no_choices() {
        let store = ex1();
        let q = resolve(&parse_query("q(?x) :- S(?x, ?y), C(?y).").unwrap(), &store).unwrap();
        let tau = subst(&[
            named_individual(&store, "a").unwrap(),
            aux_individual(&store, "S", "C").unwrap(),
        ]);
        let out = is_sound(&q, &store, &tau, &FilterConfig::default());
        assert!(out.fast_path && out.is_sound());
        assert_eq!(out.choices, 0);
        let slow = is_sound(
            &q,
            &store,
            &tau,
            &FilterConfig {
                fast_path: false,
                ..Default::default()
            },
        );
        assert!(slow.is_sound() && !slow.fast_path);
    }

    #[test]
    fn branch_cap_gives_indeterminate() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let out = is_sound(
            &q,
            &store,
            &tau,
            &FilterConfig {
                branch_cap: 1,
                fast_path: true,
            },
        );
        assert_eq!(out.verdict, Verdict::Indeterminate);
    }

    #[test]
    fn forks_with_different_images_are_inconsistent() {
        let store = store_of("A SubClassOf some S B\nA(a)\nA(b)\n");
        let q = resolve(&parse_query("q() :- S(?x,?y), S(?z,?y).").unwrap(), &store).unwrap();
        let o = aux_individual(&store, "S", "B").unwrap();
        let a = named_individual(&store, "a").unwrap();
        let b = named_individual(&store, "b").unwrap();
        assert!(forks_consistent(
            q.binary_atoms(),
            &subst(&[a, o, a]),
            &store
        ));
        assert!(!forks_consistent(
            q.binary_atoms(),
            &subst(&[a, o, b]),
            &store
        ));
        // Partial substitutions only see the atoms handed over.
        let mut partial = Substitution::new(3);
        partial.set(0, a);
        partial.set(1, o);
        assert!(forks_consistent(q.binary_atoms().take(1), &partial, &store));
    }

    #[test]
    fn simple_cycles_through_aux_are_inconsistent() {
        let store = store_of("A SubClassOf some S A\nA(a)\n");
        let q = resolve(&parse_query("q() :- S(?y,?z), S(?z,?y).").unwrap(), &store).unwrap();
        let o = aux_individual(&store, "S", "A").unwrap();
        assert!(!forks_consistent(q.binary_atoms(), &subst(&[o, o]), &store));
    }

    #[test]
    fn self_loops_on_aux_force_equal_terms() {
        // The aux individual carries a self loop but no direct S edge to
        // itself, so y and z joined by S are one element, whose parents
        // x1 and x2 must then coincide.
        let store = store_of("A SubClassOf some S C\nC SubClassOf self S\nA(a)\nA(b)\n");
        let q = resolve(
            &parse_query("q() :- S(?y,?z), S(?x1,?y), S(?x2,?z).").unwrap(),
            &store,
        )
        .unwrap();
        let o = aux_individual(&store, "S", "C").unwrap();
        let a = named_individual(&store, "a").unwrap();
        let b = named_individual(&store, "b").unwrap();
        assert!(store.has_self(role(&store, "S"), o) && !store.has_direct(role(&store, "S"), o, o));
        // Variables in order y, z, x1, x2.
        assert!(forks_consistent(
            q.binary_atoms(),
            &subst(&[o, o, a, a]),
            &store
        ));
        assert!(!forks_consistent(
            q.binary_atoms(),
            &subst(&[o, o, a, b]),
            &store
        ));
    }

    #[test]
    fn canonical_terms_collapse_named_images() {
        let store = ex1();
        let a = named_individual(&store, "a").unwrap();
        let tg = aux_individual(&store, "T", "G").unwrap();
        let td = aux_individual(&store, "T", "D").unwrap();
        let tau = subst(&[tg, td]);
        assert_eq!(canonical_term(v(0), &tau, &store), QTerm::Const(a));
        assert_eq!(canonical_term(v(1), &tau, &store), v(1));
    }

    #[test]
    fn outcomes_are_deterministic() {
        let store = ex1();
        let (q, tau) = self_loop_query(&store);
        let a = is_sound(&q, &store, &tau, &FilterConfig::default());
        let b = is_sound(&q, &store, &tau, &FilterConfig::default());
        assert_eq!(a, b);
    }
}
