//! Query shapes, and a polynomial entailment check for arborescent queries
//! over ELHO KBs.
//!
//! An arborescent query is an individual-free tree whose role atoms all
//! point from child to parent. Entailment is decided bottom-up: for each
//! set of variables that can be mapped onto one element, compute the
//! individuals of the datalog model able to host it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::answer::{resolve, Cq, CqAtom, CqTerm, QAtom, QTerm, Query};
use crate::kb::{Kb, RoleId};
use crate::materialize::{materialize, FactStore, ResourceLimit};
use crate::translate::{build_datalog, IndId, Pred, ValidationFailed};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryShape {
    Cyclic,
    Acyclic,
    Arborescent { root: String },
}

impl fmt::Display for QueryShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryShape::Cyclic => write!(f, "cyclic"),
            QueryShape::Acyclic => write!(f, "acyclic"),
            QueryShape::Arborescent { root } => write!(f, "arborescent (root ?{root})"),
        }
    }
}

/// Edges `(child, parent)` between variables, one per distinct ordered pair.
fn var_edges(q: &Cq) -> BTreeSet<(String, String)> {
    q.atoms
        .iter()
        .filter_map(|a| match a {
            CqAtom::Role(_, CqTerm::Var(x), CqTerm::Var(y)) => Some((x.clone(), y.clone())),
            _ => None,
        })
        .collect()
}

fn has_constants(q: &Cq) -> bool {
    q.atoms
        .iter()
        .flat_map(|a| a.terms())
        .any(|t| matches!(t, CqTerm::Const(_)))
}

/// Classifies `q` by the graph of its variable-to-variable role atoms.
/// Two atoms in opposite directions between the same variables form a
/// cycle; parallel atoms in the same direction form a single edge.
pub fn classify_query(q: &Cq) -> QueryShape {
    let vars: Vec<String> = q.body_vars().into_iter().collect();
    let edges = var_edges(q);
    let idx = |v: &str| vars.iter().position(|x| x == v).unwrap();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (x, y) in &edges {
        let (a, b) = (find(&mut parent, idx(x)), find(&mut parent, idx(y)));
        if a == b {
            return QueryShape::Cyclic;
        }
        parent[a] = b;
    }
    // Answer variables behave like individuals: the tree must be anonymous.
    if has_constants(q) || !q.answer_vars.is_empty() || vars.is_empty() {
        return QueryShape::Acyclic;
    }
    let roots: BTreeSet<usize> = (0..vars.len()).map(|i| find(&mut parent, i)).collect();
    if roots.len() != 1 {
        return QueryShape::Acyclic;
    }
    let mut out_degree: BTreeMap<&str, usize> = BTreeMap::new();
    for (x, _) in &edges {
        *out_degree.entry(x.as_str()).or_default() += 1;
    }
    let sinks: Vec<&String> = vars
        .iter()
        .filter(|v| !out_degree.contains_key(v.as_str()))
        .collect();
    if sinks.len() == 1 && out_degree.values().all(|&d| d == 1) {
        QueryShape::Arborescent {
            root: sinks[0].clone(),
        }
    } else {
        QueryShape::Acyclic
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArborescentError {
    #[error("query is not arborescent ({0})")]
    Shape(QueryShape),
    #[error("arborescent entailment needs a Boolean query")]
    NotBoolean,
    #[error("knowledge base is outside ELHO: {0}")]
    Dialect(String),
    #[error("knowledge base is unsatisfiable")]
    Unsatisfiable,
    #[error(transparent)]
    Invalid(#[from] ValidationFailed),
    #[error(transparent)]
    Limit(#[from] ResourceLimit),
}

/// The tree of an arborescent query over resolved variables.
struct Tree {
    root: u32,
    children: BTreeMap<u32, Vec<u32>>,
    /// Roles of the atoms from a variable to its parent.
    roles: BTreeMap<u32, BTreeSet<RoleId>>,
    unary: BTreeMap<u32, Vec<Pred>>,
}

impl Tree {
    fn new(q: &Query, root: u32) -> Self {
        let mut t = Tree {
            root,
            children: BTreeMap::new(),
            roles: BTreeMap::new(),
            unary: BTreeMap::new(),
        };
        for a in &q.atoms {
            match *a {
                QAtom::Concept(c, QTerm::Var(x)) => {
                    t.unary.entry(x).or_default().push(Pred::Concept(c))
                }
                QAtom::Role(r, QTerm::Var(y), QTerm::Var(x)) => {
                    let roles = t.roles.entry(y).or_default();
                    if roles.is_empty() {
                        t.children.entry(x).or_default().push(y);
                    }
                    roles.insert(r);
                }
                _ => unreachable!("arborescent queries have no individuals"),
            }
        }
        t
    }

    fn pred(&self, v: &BTreeSet<u32>) -> BTreeSet<u32> {
        v.iter()
            .flat_map(|x| self.children.get(x).into_iter().flatten().copied())
            .collect()
    }
}

/// The family of variable sets considered by the bottom-up computation,
/// each with its level. The empty set is not included.
pub fn rt_family(q: &Query, root: u32) -> Vec<(BTreeSet<u32>, usize)> {
    let tree = Tree::new(q, root);
    rt_of(&tree)
}

fn rt_of(tree: &Tree) -> Vec<(BTreeSet<u32>, usize)> {
    let mut out: Vec<(BTreeSet<u32>, usize)> = vec![(BTreeSet::from([tree.root]), 0)];
    let mut seen: BTreeSet<(BTreeSet<u32>, usize)> = out.iter().cloned().collect();
    let mut i = 0;
    while i < out.len() {
        let (v, level) = out[i].clone();
        let p = tree.pred(&v);
        if !p.is_empty() {
            let mut next = vec![p.clone()];
            next.extend(p.iter().map(|&y| BTreeSet::from([y])));
            for w in next {
                if seen.insert((w.clone(), level + 1)) {
                    out.push((w, level + 1));
                }
            }
        }
        i += 1;
    }
    out
}

struct Entails<'a> {
    store: &'a FactStore,
    tree: Tree,
    universe: Vec<IndId>,
    memo: BTreeMap<BTreeSet<u32>, BTreeSet<IndId>>,
}

impl Entails<'_> {
    fn candidates(&self, v: &BTreeSet<u32>) -> BTreeSet<IndId> {
        let preds: Vec<Pred> = v
            .iter()
            .flat_map(|x| self.tree.unary.get(x).into_iter().flatten().copied())
            .collect();
        self.universe
            .iter()
            .copied()
            .filter(|&u| preds.iter().all(|&p| self.store.holds(p, u, u)))
            .collect()
    }

    fn hosts(&mut self, v: &BTreeSet<u32>) -> BTreeSet<IndId> {
        if let Some(a) = self.memo.get(v) {
            return a.clone();
        }
        let c = self.candidates(v);
        let p = self.tree.pred(v);
        let result = if p.is_empty() {
            c
        } else {
            let singles: Vec<(BTreeSet<RoleId>, BTreeSet<IndId>)> = p
                .iter()
                .map(|&y| {
                    (
                        self.tree.roles[&y].clone(),
                        self.hosts(&BTreeSet::from([y])),
                    )
                })
                .collect();
            let joint = self.hosts(&p);
            let all_roles: BTreeSet<RoleId> = p
                .iter()
                .flat_map(|y| self.tree.roles[y].iter().copied())
                .collect();
            let store = self.store;
            c.into_iter()
                .filter(|&u| {
                    if store.is_named(u) {
                        singles.iter().all(|(roles, hosts)| {
                            hosts
                                .iter()
                                .any(|&w| roles.iter().all(|&r| store.has_role(r, w, u)))
                        })
                    } else {
                        joint
                            .iter()
                            .any(|&w| all_roles.iter().all(|&r| store.has_direct(r, w, u)))
                    }
                })
                .collect()
        };
        self.memo.insert(v.clone(), result.clone());
        result
    }
}

/// Decides a Boolean arborescent query over a materialized ELHO KB.
pub fn entails(store: &FactStore, q: &Cq) -> Result<bool, ArborescentError> {
    if !q.answer_vars.is_empty() {
        return Err(ArborescentError::NotBoolean);
    }
    let root = match classify_query(q) {
        QueryShape::Arborescent { root } => root,
        other => return Err(ArborescentError::Shape(other)),
    };
    let h = store.hierarchy();
    if let Some(r) = h.roles().find(|&r| h.is_transitive(r) || h.is_reflexive(r)) {
        let name = store.signature().role_name(r);
        return Err(ArborescentError::Dialect(format!(
            "role {name} is transitive or reflexive"
        )));
    }
    if store.is_unsatisfiable() {
        return Err(ArborescentError::Unsatisfiable);
    }
    let Some(resolved) = resolve(q, store) else {
        return Ok(false);
    };
    let root = resolved.var_names.iter().position(|n| *n == root).unwrap() as u32;
    let mut universe = store.named_individuals();
    universe.extend(store.aux_individuals());
    let mut e = Entails {
        store,
        tree: Tree::new(&resolved, root),
        universe,
        memo: BTreeMap::new(),
    };
    Ok(!e.hosts(&BTreeSet::from([root])).is_empty())
}

/// Checks the dialect, materializes `kb` and decides `q`.
pub fn entails_arborescent(kb: &Kb, q: &Cq) -> Result<bool, ArborescentError> {
    if let Some(ax) = kb.tbox().find(|ax| ax.form() > 7) {
        return Err(ArborescentError::Dialect(format!(
            "axiom of form {}",
            ax.form()
        )));
    }
    let (store, _) = materialize(&build_datalog(kb)?)?;
    entails(&store, q)
}
