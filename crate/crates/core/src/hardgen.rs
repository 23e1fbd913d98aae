//! Reductions from CNF satisfiability to query entailment, used as hard
//! test cases: one where deciding a single candidate is NP-hard, and three
//! where the query is acyclic or arborescent but the TBox is slightly more
//! expressive than necessary for tractability.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::answer::{Cq, CqAtom, CqTerm};
use crate::kb::{Axiom, Kb};

/// A literal: variable index from 1 and polarity.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    pub var: u32,
    pub positive: bool,
}

impl Lit {
    pub fn from_dimacs(x: i64) -> Self {
        Lit {
            var: x.unsigned_abs() as u32,
            positive: x > 0,
        }
    }

    pub fn to_dimacs(self) -> i64 {
        if self.positive {
            self.var as i64
        } else {
            -(self.var as i64)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cnf {
    pub vars: u32,
    pub clauses: Vec<Vec<Lit>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CnfError {
    #[error("bad DIMACS input: {0}")]
    Syntax(String),
    #[error("clause {0} does not have exactly three literals")]
    NotThreeCnf(usize),
}

impl Cnf {
    pub fn new(vars: u32, clauses: Vec<Vec<i64>>) -> Self {
        Cnf {
            vars,
            clauses: clauses
                .into_iter()
                .map(|c| c.into_iter().map(Lit::from_dimacs).collect())
                .collect(),
        }
    }

    pub fn is_three_cnf(&self) -> bool {
        self.clauses.iter().all(|c| c.len() == 3)
    }

    /// Parses DIMACS text. The `p cnf` header is optional; without it the
    /// variable count is the largest variable mentioned.
    pub fn parse_dimacs(text: &str) -> Result<Self, CnfError> {
        let mut declared = None;
        let mut clauses = Vec::new();
        let mut current = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.starts_with('c') || line.starts_with('%') || line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "cnf" {
                    return Err(CnfError::Syntax(format!("bad header '{line}'")));
                }
                declared = Some(
                    parts[1]
                        .parse::<u32>()
                        .map_err(|e| CnfError::Syntax(e.to_string()))?,
                );
                continue;
            }
            for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                let x: i64 = tok
                    .parse()
                    .map_err(|_| CnfError::Syntax(format!("bad literal '{tok}'")))?;
                if x == 0 {
                    clauses.push(std::mem::take(&mut current));
                } else {
                    current.push(Lit::from_dimacs(x));
                }
            }
        }
        if !current.is_empty() {
            clauses.push(current);
        }
        let used = clauses.iter().flatten().map(|l| l.var).max().unwrap_or(0);
        let vars = declared.unwrap_or(used);
        if used > vars {
            return Err(CnfError::Syntax(format!(
                "variable {used} exceeds declared count {vars}"
            )));
        }
        Ok(Cnf { vars, clauses })
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(out, "{} ", l.to_dimacs());
            }
            out.push_str("0\n");
        }
        out
    }

    /// A uniformly random 3CNF formula with `vars` variables and `clauses`
    /// clauses; literals may repeat within a clause.
    pub fn random_three_cnf(rng: &mut impl Rng, vars: u32, clauses: usize) -> Self {
        let clauses = (0..clauses)
            .map(|_| {
                (0..3)
                    .map(|_| Lit {
                        var: rng.gen_range(1..=vars),
                        positive: rng.gen_bool(0.5),
                    })
                    .collect()
            })
            .collect();
        Cnf { vars, clauses }
    }
}

/// Truth-table satisfiability.
pub fn brute_sat(phi: &Cnf) -> bool {
    assert!(phi.vars <= 24, "truth table too large");
    (0u64..1 << phi.vars).any(|bits| {
        phi.clauses.iter().all(|c| {
            c.iter()
                .any(|l| ((bits >> (l.var - 1)) & 1 == 1) == l.positive)
        })
    })
}

/// Every 3CNF formula with `vars` variables and `clauses` clauses, up to
/// clause order, renaming of variables and flipping of polarities.
pub fn all_three_cnf(vars: u32, clauses: usize) -> Vec<Cnf> {
    let lits: Vec<Lit> = (1..=vars)
        .flat_map(|v| {
            [
                Lit {
                    var: v,
                    positive: true,
                },
                Lit {
                    var: v,
                    positive: false,
                },
            ]
        })
        .collect();
    let mut all_clauses = Vec::new();
    for i in 0..lits.len() {
        for j in i..lits.len() {
            for k in j..lits.len() {
                all_clauses.push(vec![lits[i], lits[j], lits[k]]);
            }
        }
    }
    let perms = permutations(vars);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    let mut idx = vec![0usize; clauses];
    loop {
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            let phi = Cnf {
                vars,
                clauses: idx.iter().map(|&i| all_clauses[i].clone()).collect(),
            };
            if seen.insert(canonical(&phi, &perms)) {
                out.push(phi);
            }
        }
        let mut p = 0;
        loop {
            if p == clauses {
                return out;
            }
            idx[p] += 1;
            if idx[p] < all_clauses.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

fn permutations(n: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n);
            out.push(q);
        }
    }
    out
}

fn canonical(phi: &Cnf, perms: &[Vec<u32>]) -> Vec<Vec<Lit>> {
    let mut best: Option<Vec<Vec<Lit>>> = None;
    for perm in perms {
        for flips in 0u32..1 << phi.vars {
            let mut clauses: Vec<Vec<Lit>> = phi
                .clauses
                .iter()
                .map(|c| {
                    let mut c: Vec<Lit> = c
                        .iter()
                        .map(|l| Lit {
                            var: perm[l.var as usize - 1],
                            positive: l.positive ^ ((flips >> (l.var - 1)) & 1 == 1),
                        })
                        .collect();
                    c.sort();
                    c
                })
                .collect();
            clauses.sort();
            if best.as_ref().is_none_or(|b| clauses < *b) {
                best = Some(clauses);
            }
        }
    }
    best.unwrap_or_default()
}

/// A generated KB and Boolean query. For the filter-hardness construction,
/// `expected_tau` maps each query variable to the auxiliary individual
/// `(role, concept)` of its unique candidate.
#[derive(Clone, Debug)]
pub struct HardInstance {
    pub kb: Kb,
    pub query: Cq,
    pub expected_tau: Option<BTreeMap<String, (String, String)>>,
}

fn var(name: impl Into<String>) -> CqTerm {
    CqTerm::Var(name.into())
}

fn concept_atom(c: impl Into<String>, t: CqTerm) -> CqAtom {
    CqAtom::Concept(c.into(), t)
}

fn role_atom(r: impl Into<String>, s: CqTerm, t: CqTerm) -> CqAtom {
    CqAtom::Role(r.into(), s, t)
}

struct Builder {
    kb: Kb,
}

impl Builder {
    fn new() -> Self {
        Builder { kb: Kb::new() }
    }

    fn sub(&mut self, sub: &str, sup: &str) {
        let (sub, sup) = (self.kb.sig.concept(sub), self.kb.sig.concept(sup));
        self.kb.add_axiom(Axiom::SubClass { sub, sup });
    }

    fn exists(&mut self, sub: &str, role: &str, filler: &str) {
        let (sub, filler) = (self.kb.sig.concept(sub), self.kb.sig.concept(filler));
        let role = self.kb.sig.role(role);
        self.kb.add_axiom(Axiom::ExistsSup { sub, role, filler });
    }

    fn subrole(&mut self, sub: &str, sup: &str) {
        let (sub, sup) = (self.kb.sig.role(sub), self.kb.sig.role(sup));
        self.kb.add_axiom(Axiom::SubRole { sub, sup });
    }

    fn transitive(&mut self, r: &str) {
        let r = self.kb.sig.role(r);
        self.kb.add_axiom(Axiom::Transitive(r));
    }

    fn nominal(&mut self, sub: &str, a: &str) {
        let sub = self.kb.sig.concept(sub);
        let individual = self.kb.sig.individual(a);
        self.kb.add_axiom(Axiom::Nominal { sub, individual });
    }
}

/// The construction where the query has exactly one candidate answer and
/// that candidate is sound iff `phi` is satisfiable.
pub fn gen_filter_hard(phi: &Cnf) -> Result<HardInstance, CnfError> {
    if let Some(j) = phi.clauses.iter().position(|c| c.len() != 3) {
        return Err(CnfError::NotThreeCnf(j + 1));
    }
    let n = phi.vars;
    let m = phi.clauses.len();
    let mut b = Builder::new();
    b.kb.assert_concept("A", "a");
    for j in 1..=m {
        b.exists("A", "R", &format!("C_{j}"));
    }
    b.exists("A", "R", "G");
    for (j, clause) in phi.clauses.iter().enumerate() {
        let j = j + 1;
        for (k, lit) in clause.iter().enumerate() {
            let k = k + 1;
            b.exists(
                &format!("C_{j}"),
                &format!("S_{j}_{k}"),
                &format!("L_{j}_{k}"),
            );
            b.sub(&format!("L_{j}_{k}"), "A");
            for i in 1..=n {
                let over = lit.var == i;
                if !over || lit.positive {
                    b.subrole(&format!("S_{j}_{k}"), &format!("P_{i}"));
                }
                if !over || !lit.positive {
                    b.subrole(&format!("S_{j}_{k}"), &format!("N_{i}"));
                }
            }
        }
    }
    for i in 1..=n {
        b.subrole("R", &format!("P_{i}"));
        b.subrole("R", &format!("N_{i}"));
        b.transitive(&format!("P_{i}"));
        b.transitive(&format!("N_{i}"));
        b.subrole(&format!("P_{i}"), &format!("T_{i}"));
        b.subrole(&format!("N_{i}"), &format!("T_{i}"));
        b.subrole(&format!("T_{i}"), "T");
    }
    let mut atoms = vec![concept_atom("G", var("y"))];
    for i in 1..=n {
        atoms.push(role_atom(
            format!("T_{i}"),
            CqTerm::Const("a".into()),
            var("y"),
        ));
    }
    for j in 1..=m {
        atoms.push(concept_atom(format!("C_{j}"), var(format!("z{j}"))));
        atoms.push(role_atom("T", var(format!("z{j}")), var("y")));
    }
    let mut tau = BTreeMap::from([("y".to_string(), ("R".to_string(), "G".to_string()))]);
    for j in 1..=m {
        tau.insert(format!("z{j}"), ("R".to_string(), format!("C_{j}")));
    }
    Ok(HardInstance {
        kb: b.kb,
        query: Cq {
            name: "q".into(),
            answer_vars: Vec::new(),
            atoms,
        },
        expected_tau: Some(tau),
    })
}

/// The binary assignment tree of depth `n + 1` below `a`, and the query
/// walking one branch of it.
fn assignment_tree(phi: &Cnf) -> (Builder, Vec<CqAtom>) {
    let n = phi.vars;
    let mut b = Builder::new();
    b.kb.assert_concept("A_0", "a");
    for i in 1..=n {
        b.exists(&format!("A_{}", i - 1), "R", &format!("T_{i}"));
        b.exists(&format!("A_{}", i - 1), "R", &format!("F_{i}"));
        b.sub(&format!("T_{i}"), &format!("A_{i}"));
        b.sub(&format!("F_{i}"), &format!("A_{i}"));
    }
    b.exists(&format!("A_{n}"), "R", "G");
    for (j, clause) in phi.clauses.iter().enumerate() {
        for lit in clause {
            let prefix = if lit.positive { "T" } else { "F" };
            b.sub(&format!("{prefix}_{}", lit.var), &format!("C_{}", j + 1));
        }
    }
    let p = |i: u32| var(format!("p{i}"));
    let mut atoms = Vec::new();
    for i in 0..=n {
        atoms.push(concept_atom(format!("A_{i}"), p(i)));
        atoms.push(role_atom("R", p(i), p(i + 1)));
    }
    atoms.push(concept_atom("G", p(n + 1)));
    (b, atoms)
}

/// An acyclic query over an ELHO KB (with nominals) that is entailed iff
/// `phi` is satisfiable.
pub fn gen_acyclic_hard(phi: &Cnf) -> HardInstance {
    let n = phi.vars;
    let (mut b, mut atoms) = assignment_tree(phi);
    for j in 1..=phi.clauses.len() {
        let c = format!("c_{j}");
        let s = format!("S_{j}");
        b.kb.assert_role("R", &c, &c);
        // C_j ⊑ ∃S_j.{c_j}, through a fresh concept pinned to c_j.
        let pin = format!("N_{j}");
        b.exists(&format!("C_{j}"), &s, &pin);
        b.nominal(&pin, &c);
        b.subrole("R", &s);

        let x = |i: u32| var(format!("x{j}_{i}"));
        let y = |i: u32| var(format!("y{j}_{i}"));
        let z = |i: u32| var(format!("z{j}_{i}"));
        atoms.push(role_atom("R", var(format!("y{j}")), x(0)));
        for i in 1..=n + 1 {
            atoms.push(role_atom("R", x(i - 1), z(i)));
            atoms.push(role_atom(&s, y(i - 1), z(i)));
            if i <= n {
                atoms.push(role_atom("R", y(i - 1), x(i)));
            }
        }
        atoms.push(role_atom("R", y(n), var(format!("p{}", n + 1))));
    }
    HardInstance {
        kb: b.kb,
        query: Cq {
            name: "q".into(),
            answer_vars: Vec::new(),
            atoms,
        },
        expected_tau: None,
    }
}

/// An arborescent query over the assignment tree with `R` transitive.
pub fn gen_trans_hard(phi: &Cnf) -> HardInstance {
    let n = phi.vars;
    let (mut b, mut atoms) = assignment_tree(phi);
    b.transitive("R");
    for j in 1..=phi.clauses.len() {
        let x = var(format!("x{j}"));
        atoms.push(concept_atom(format!("C_{j}"), x.clone()));
        atoms.push(role_atom("R", x, var(format!("p{}", n + 1))));
    }
    HardInstance {
        kb: b.kb,
        query: Cq {
            name: "q".into(),
            answer_vars: Vec::new(),
            atoms,
        },
        expected_tau: None,
    }
}

/// An arborescent query over the assignment tree with `R` reflexive.
pub fn gen_refl_hard(phi: &Cnf) -> HardInstance {
    let n = phi.vars;
    let (mut b, mut atoms) = assignment_tree(phi);
    let r = b.kb.sig.role("R");
    b.kb.add_axiom(Axiom::Reflexive(r));
    for j in 1..=phi.clauses.len() {
        let x = |i: u32| var(format!("x{j}_{i}"));
        atoms.push(concept_atom(format!("C_{j}"), x(0)));
        atoms.push(role_atom("R", var(format!("x{j}")), x(0)));
        for i in 1..=n {
            atoms.push(role_atom("R", x(i - 1), x(i)));
        }
        atoms.push(role_atom("R", x(n), var(format!("p{}", n + 1))));
    }
    HardInstance {
        kb: b.kb,
        query: Cq {
            name: "q".into(),
            answer_vars: Vec::new(),
            atoms,
        },
        expected_tau: None,
    }
}
