//! In-memory knowledge base model: an interned signature, the eleven
//! normalized axiom forms, ABox assertions, the role hierarchy and role
//! simplicity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexSet;

/// Identifier of an atomic concept. `TOP` and `BOT` are reserved.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub const TOP: ConceptId = ConceptId(0);
    pub const BOT: ConceptId = ConceptId(1);

    pub fn is_reserved(self) -> bool {
        self == Self::TOP || self == Self::BOT
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoleId(pub u32);

/// Identifier of a named individual.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndividualId(pub u32);

pub const TOP_NAME: &str = "Top";
pub const BOT_NAME: &str = "Bot";

#[derive(Clone, Debug, Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// Interned concept, role and individual names.
///
/// Concept ids 0 and 1 are always `Top` and `Bot`; these names can never be
/// declared as user concepts.
#[derive(Clone, Debug)]
pub struct Signature {
    concepts: Interner,
    roles: Interner,
    individuals: Interner,
}

impl Default for Signature {
    fn default() -> Self {
        Self::new()
    }
}

impl Signature {
    pub fn new() -> Self {
        let mut concepts = Interner::default();
        concepts.intern(TOP_NAME);
        concepts.intern(BOT_NAME);
        Signature {
            concepts,
            roles: Interner::default(),
            individuals: Interner::default(),
        }
    }

    pub fn concept(&mut self, name: &str) -> ConceptId {
        ConceptId(self.concepts.intern(name))
    }

    pub fn role(&mut self, name: &str) -> RoleId {
        RoleId(self.roles.intern(name))
    }

    pub fn individual(&mut self, name: &str) -> IndividualId {
        IndividualId(self.individuals.intern(name))
    }

    pub fn find_concept(&self, name: &str) -> Option<ConceptId> {
        self.concepts.get(name).map(ConceptId)
    }

    pub fn find_role(&self, name: &str) -> Option<RoleId> {
        self.roles.get(name).map(RoleId)
    }

    pub fn find_individual(&self, name: &str) -> Option<IndividualId> {
        self.individuals.get(name).map(IndividualId)
    }

    pub fn concept_name(&self, id: ConceptId) -> &str {
        self.concepts.name(id.0)
    }

    pub fn role_name(&self, id: RoleId) -> &str {
        self.roles.name(id.0)
    }

    pub fn individual_name(&self, id: IndividualId) -> &str {
        self.individuals.name(id.0)
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn role_count(&self) -> usize {
        self.roles.len()
    }

    pub fn individual_count(&self) -> usize {
        self.individuals.len()
    }

    pub fn has_concept(&self, id: ConceptId) -> bool {
        (id.0 as usize) < self.concepts.len()
    }

    pub fn has_role(&self, id: RoleId) -> bool {
        (id.0 as usize) < self.roles.len()
    }

    pub fn has_individual(&self, id: IndividualId) -> bool {
        (id.0 as usize) < self.individuals.len()
    }
}

/// The eleven normalized TBox axiom forms.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axiom {
    /// (1) `A ⊑ B`
    SubClass { sub: ConceptId, sup: ConceptId },
    /// (2) `A ⊑ {a}`
    Nominal {
        sub: ConceptId,
        individual: IndividualId,
    },
    /// (3) `A1 ⊓ A2 ⊑ A`
    Conjunction {
        left: ConceptId,
        right: ConceptId,
        sup: ConceptId,
    },
    /// (4) `∃R.A1 ⊑ A`
    ExistsSub {
        role: RoleId,
        filler: ConceptId,
        sup: ConceptId,
    },
    /// (5) `S ⊑ R`
    SubRole { sub: RoleId, sup: RoleId },
    /// (6) `range(R) ⊑ A`
    Range { role: RoleId, concept: ConceptId },
    /// (7) `A1 ⊑ ∃R.A`
    ExistsSup {
        sub: ConceptId,
        role: RoleId,
        filler: ConceptId,
    },
    /// (8) `Trans(R)`
    Transitive(RoleId),
    /// (9) `Refl(R)`
    Reflexive(RoleId),
    /// (10) `A ⊑ ∃R.Self`
    SelfSup { sub: ConceptId, role: RoleId },
    /// (11) `∃R.Self ⊑ A`
    SelfSub { role: RoleId, sup: ConceptId },
}

impl Axiom {
    /// Position of this form in the normalized axiom table (1..=11).
    pub fn form(&self) -> u8 {
        match self {
            Axiom::SubClass { .. } => 1,
            Axiom::Nominal { .. } => 2,
            Axiom::Conjunction { .. } => 3,
            Axiom::ExistsSub { .. } => 4,
            Axiom::SubRole { .. } => 5,
            Axiom::Range { .. } => 6,
            Axiom::ExistsSup { .. } => 7,
            Axiom::Transitive(_) => 8,
            Axiom::Reflexive(_) => 9,
            Axiom::SelfSup { .. } => 10,
            Axiom::SelfSub { .. } => 11,
        }
    }

    /// Concepts in left-hand-side positions.
    pub fn lhs_concepts(&self) -> Vec<ConceptId> {
        match *self {
            Axiom::SubClass { sub, .. } => vec![sub],
            Axiom::Nominal { sub, .. } => vec![sub],
            Axiom::Conjunction { left, right, .. } => vec![left, right],
            Axiom::ExistsSub { filler, .. } => vec![filler],
            Axiom::ExistsSup { sub, .. } => vec![sub],
            Axiom::SelfSup { sub, .. } => vec![sub],
            _ => vec![],
        }
    }

    /// Every concept mentioned by the axiom.
    pub fn concepts(&self) -> Vec<ConceptId> {
        match *self {
            Axiom::SubClass { sub, sup } => vec![sub, sup],
            Axiom::Nominal { sub, .. } => vec![sub],
            Axiom::Conjunction { left, right, sup } => vec![left, right, sup],
            Axiom::ExistsSub { filler, sup, .. } => vec![filler, sup],
            Axiom::SubRole { .. } => vec![],
            Axiom::Range { concept, .. } => vec![concept],
            Axiom::ExistsSup { sub, filler, .. } => vec![sub, filler],
            Axiom::Transitive(_) | Axiom::Reflexive(_) => vec![],
            Axiom::SelfSup { sub, .. } => vec![sub],
            Axiom::SelfSub { sup, .. } => vec![sup],
        }
    }

    pub fn roles(&self) -> Vec<RoleId> {
        match *self {
            Axiom::ExistsSub { role, .. }
            | Axiom::Range { role, .. }
            | Axiom::ExistsSup { role, .. }
            | Axiom::Transitive(role)
            | Axiom::Reflexive(role)
            | Axiom::SelfSup { role, .. }
            | Axiom::SelfSub { role, .. } => vec![role],
            Axiom::SubRole { sub, sup } => vec![sub, sup],
            _ => vec![],
        }
    }

    pub fn individuals(&self) -> Vec<IndividualId> {
        match *self {
            Axiom::Nominal { individual, .. } => vec![individual],
            _ => vec![],
        }
    }
}

/// A ground ABox atom.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assertion {
    Concept(ConceptId, IndividualId),
    Role(RoleId, IndividualId, IndividualId),
}

/// A knowledge base: TBox, ABox and the signature both are written over.
///
/// Symbols are declared on first use. Duplicate axioms and assertions are
/// dropped; insertion order is otherwise preserved.
#[derive(Clone, Debug, Default)]
pub struct Kb {
    pub sig: Signature,
    tbox: IndexSet<Axiom>,
    abox: IndexSet<Assertion>,
}

impl Kb {
    pub fn new() -> Self {
        Kb::default()
    }

    pub fn tbox(&self) -> impl ExactSizeIterator<Item = &Axiom> + '_ {
        self.tbox.iter()
    }

    pub fn abox(&self) -> impl ExactSizeIterator<Item = &Assertion> + '_ {
        self.abox.iter()
    }

    pub fn tbox_len(&self) -> usize {
        self.tbox.len()
    }

    pub fn abox_len(&self) -> usize {
        self.abox.len()
    }

    pub fn add_axiom(&mut self, axiom: Axiom) -> bool {
        self.tbox.insert(axiom)
    }

    pub fn add_assertion(&mut self, assertion: Assertion) -> bool {
        self.abox.insert(assertion)
    }

    /// Keeps the axioms for which `keep(index, axiom)` holds, indices
    /// counted before removal.
    pub fn retain_axioms(&mut self, mut keep: impl FnMut(usize, &Axiom) -> bool) {
        let mut i = 0;
        self.tbox.retain(|ax| {
            i += 1;
            keep(i - 1, ax)
        });
    }

    pub fn assert_concept(&mut self, concept: &str, individual: &str) {
        let c = self.sig.concept(concept);
        let a = self.sig.individual(individual);
        self.add_assertion(Assertion::Concept(c, a));
    }

    pub fn assert_role(&mut self, role: &str, subject: &str, object: &str) {
        let r = self.sig.role(role);
        let a = self.sig.individual(subject);
        let b = self.sig.individual(object);
        self.add_assertion(Assertion::Role(r, a, b));
    }

    /// Concepts occurring in some axiom or assertion, excluding `Top`/`Bot`.
    pub fn concepts_in_use(&self) -> BTreeSet<ConceptId> {
        let mut out = BTreeSet::new();
        for ax in &self.tbox {
            out.extend(ax.concepts());
        }
        for a in &self.abox {
            if let Assertion::Concept(c, _) = a {
                out.insert(*c);
            }
        }
        out.retain(|c| !c.is_reserved());
        out
    }

    pub fn roles_in_use(&self) -> BTreeSet<RoleId> {
        let mut out = BTreeSet::new();
        for ax in &self.tbox {
            out.extend(ax.roles());
        }
        for a in &self.abox {
            if let Assertion::Role(r, _, _) = a {
                out.insert(*r);
            }
        }
        out
    }

    pub fn individuals_in_use(&self) -> BTreeSet<IndividualId> {
        let mut out = BTreeSet::new();
        for ax in &self.tbox {
            out.extend(ax.individuals());
        }
        for a in &self.abox {
            match *a {
                Assertion::Concept(_, i) => {
                    out.insert(i);
                }
                Assertion::Role(_, i, j) => {
                    out.insert(i);
                    out.insert(j);
                }
            }
        }
        out
    }

    /// True if the TBox only uses forms 1 to 7.
    pub fn is_elho(&self) -> bool {
        self.tbox.iter().all(|ax| ax.form() <= 7)
    }

    pub fn hierarchy(&self) -> RoleHierarchy {
        role_hierarchy(self.tbox.iter())
    }
}

/// The reflexive-transitive closure of the role inclusions, together with
/// the transitive and reflexive roles of a TBox.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoleHierarchy {
    supers: BTreeMap<RoleId, BTreeSet<RoleId>>,
    subs: BTreeMap<RoleId, BTreeSet<RoleId>>,
    transitive: BTreeSet<RoleId>,
    reflexive: BTreeSet<RoleId>,
}

impl RoleHierarchy {
    /// `sub ⊑* sup`. Every role is its own sub-role, including roles the
    /// TBox never mentions.
    pub fn is_sub(&self, sub: RoleId, sup: RoleId) -> bool {
        sub == sup || self.supers.get(&sub).is_some_and(|s| s.contains(&sup))
    }

    /// All `R` with `role ⊑* R`, in id order.
    pub fn supers(&self, role: RoleId) -> Vec<RoleId> {
        match self.supers.get(&role) {
            Some(s) => s.iter().copied().collect(),
            None => vec![role],
        }
    }

    /// All `S` with `S ⊑* role`, in id order.
    pub fn subs(&self, role: RoleId) -> Vec<RoleId> {
        match self.subs.get(&role) {
            Some(s) => s.iter().copied().collect(),
            None => vec![role],
        }
    }

    pub fn is_transitive(&self, role: RoleId) -> bool {
        self.transitive.contains(&role)
    }

    pub fn is_reflexive(&self, role: RoleId) -> bool {
        self.reflexive.contains(&role)
    }

    pub fn transitive_roles(&self) -> &BTreeSet<RoleId> {
        &self.transitive
    }

    /// A role is simple if none of its sub-roles (itself included) is transitive.
    pub fn is_simple(&self, role: RoleId) -> bool {
        self.subs(role).iter().all(|s| !self.transitive.contains(s))
    }

    /// Roles known to the hierarchy.
    pub fn roles(&self) -> impl Iterator<Item = RoleId> + '_ {
        self.supers.keys().copied()
    }
}

/// Builds the `⊑*` closure over all roles occurring in `tbox`.
pub fn role_hierarchy<'a>(tbox: impl IntoIterator<Item = &'a Axiom>) -> RoleHierarchy {
    let mut h = RoleHierarchy::default();
    let mut direct: BTreeMap<RoleId, BTreeSet<RoleId>> = BTreeMap::new();
    for ax in tbox {
        for r in ax.roles() {
            direct.entry(r).or_default();
        }
        match *ax {
            Axiom::SubRole { sub, sup } => {
                direct.entry(sub).or_default().insert(sup);
            }
            Axiom::Transitive(r) => {
                h.transitive.insert(r);
            }
            Axiom::Reflexive(r) => {
                h.reflexive.insert(r);
            }
            _ => {}
        }
    }
    for &start in direct.keys() {
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(r) = stack.pop() {
            for &s in direct.get(&r).into_iter().flatten() {
                if seen.insert(s) {
                    stack.push(s);
                }
            }
        }
        for &s in &seen {
            h.subs.entry(s).or_default().insert(start);
        }
        h.supers.insert(start, seen);
    }
    for &r in direct.keys() {
        h.subs.entry(r).or_default().insert(r);
    }
    h
}

pub fn is_simple(role: RoleId, hierarchy: &RoleHierarchy) -> bool {
    hierarchy.is_simple(role)
}

/// One structural problem found by [`validate_kb`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// A role used in a self axiom (forms 10, 11) has a transitive sub-role.
    NonSimpleSelfRole { axiom: usize, role: String },
    /// `Bot` in a left-hand-side concept position.
    BotOnLeftHandSide { axiom: usize },
    /// An id that the signature does not know.
    UndeclaredSymbol { what: &'static str, id: u32 },
}

impl Diagnostic {
    /// Index of the offending axiom, if the problem sits in the TBox.
    pub fn axiom(&self) -> Option<usize> {
        match *self {
            Diagnostic::NonSimpleSelfRole { axiom, .. }
            | Diagnostic::BotOnLeftHandSide { axiom } => Some(axiom),
            Diagnostic::UndeclaredSymbol { .. } => None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NonSimpleSelfRole { axiom, role } => {
                write!(f, "axiom #{axiom}: non-simple role in self axiom: {role}")
            }
            Diagnostic::BotOnLeftHandSide { axiom } => {
                write!(f, "axiom #{axiom}: Bot on a left-hand side")
            }
            Diagnostic::UndeclaredSymbol { what, id } => {
                write!(f, "undeclared {what} with id {id}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

pub fn validate_kb(kb: &Kb) -> ValidationReport {
    let mut report = ValidationReport::default();
    let hierarchy = kb.hierarchy();
    for (i, ax) in kb.tbox().enumerate() {
        for c in ax.concepts() {
            if !kb.sig.has_concept(c) {
                report.diagnostics.push(Diagnostic::UndeclaredSymbol {
                    what: "concept",
                    id: c.0,
                });
            }
        }
        for r in ax.roles() {
            if !kb.sig.has_role(r) {
                report.diagnostics.push(Diagnostic::UndeclaredSymbol {
                    what: "role",
                    id: r.0,
                });
            }
        }
        for a in ax.individuals() {
            if !kb.sig.has_individual(a) {
                report.diagnostics.push(Diagnostic::UndeclaredSymbol {
                    what: "individual",
                    id: a.0,
                });
            }
        }
        if ax.lhs_concepts().contains(&ConceptId::BOT) {
            report
                .diagnostics
                .push(Diagnostic::BotOnLeftHandSide { axiom: i });
        }
        if let Axiom::SelfSup { role, .. } | Axiom::SelfSub { role, .. } = *ax {
            if !hierarchy.is_simple(role) {
                let name = if kb.sig.has_role(role) {
                    kb.sig.role_name(role).to_string()
                } else {
                    format!("#{}", role.0)
                };
                report.diagnostics.push(Diagnostic::NonSimpleSelfRole {
                    axiom: i,
                    role: name,
                });
            }
        }
    }
    for a in kb.abox() {
        let (concepts, roles, inds) = match *a {
            Assertion::Concept(c, i) => (vec![c], vec![], vec![i]),
            Assertion::Role(r, i, j) => (vec![], vec![r], vec![i, j]),
        };
        for c in concepts.into_iter().filter(|c| !kb.sig.has_concept(*c)) {
            report.diagnostics.push(Diagnostic::UndeclaredSymbol {
                what: "concept",
                id: c.0,
            });
        }
        for r in roles.into_iter().filter(|r| !kb.sig.has_role(*r)) {
            report.diagnostics.push(Diagnostic::UndeclaredSymbol {
                what: "role",
                id: r.0,
            });
        }
        for i in inds.into_iter().filter(|i| !kb.sig.has_individual(*i)) {
            report.diagnostics.push(Diagnostic::UndeclaredSymbol {
                what: "individual",
                id: i.0,
            });
        }
    }
    report
}
