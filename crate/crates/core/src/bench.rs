//! Synthetic university benchmark: a fixed schema with a transitive
//! sub-organization role and an ABox that grows linearly with the number of
//! universities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::answer::Cq;
use crate::kb::{Axiom, Kb};
use crate::text::parse_query;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchSpec {
    /// Number of universities.
    pub scale: usize,
    pub seed: u64,
    /// Length of each chain of research groups below a department.
    pub depth: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            scale: 1,
            seed: 7,
            depth: 3,
        }
    }
}

const DEPARTMENTS: usize = 4;
const FULL: usize = 2;
const ASSOCIATE: usize = 3;
const LECTURERS: usize = 2;
const UNDERGRADS: usize = 8;
const GRADS: usize = 4;
const COURSES: usize = 4;
const GRAD_COURSES: usize = 2;
const GROUPS: usize = 2;

const SCHEMA: &[(&str, &str)] = &[
    ("University", "Organization"),
    ("Department", "Organization"),
    ("ResearchGroup", "Organization"),
    ("FullProfessor", "Professor"),
    ("AssociateProfessor", "Professor"),
    ("Professor", "Faculty"),
    ("Lecturer", "Faculty"),
    ("Faculty", "Employee"),
    ("Employee", "Person"),
    ("UndergraduateStudent", "Student"),
    ("GraduateStudent", "Student"),
    ("Student", "Person"),
    ("GraduateCourse", "Course"),
    ("Chair", "Professor"),
];

/// Names of the five query templates, in order.
pub const QUERY_NAMES: [&str; 5] = ["q1", "q2", "q3", "q4", "q5"];

/// Index of the query using the transitive role.
pub const TRANSITIVE_QUERY: usize = 2;

const QUERIES: [&str; 5] = [
    "q1(?x) :- GraduateStudent(?x), takesCourse(?x, ?c), GraduateCourse(?c).",
    "q2(?x, ?y) :- Professor(?x), worksFor(?x, ?y), Department(?y).",
    "q3(?x) :- ResearchGroup(?x), subOrganizationOf(?x, ?y), University(?y).",
    "q4(?x) :- Student(?x), advisor(?x, ?y), degreeFrom(?y, ?u), University(?u).",
    "q5(?x, ?y) :- Person(?x), memberOf(?x, ?y), Organization(?y).",
];

pub fn bench_queries() -> Vec<Cq> {
    QUERIES
        .iter()
        .map(|q| parse_query(q).expect("query templates parse"))
        .collect()
}

fn schema() -> Kb {
    let mut kb = Kb::new();
    let c = |kb: &mut Kb, n: &str| kb.sig.concept(n);
    let r = |kb: &mut Kb, n: &str| kb.sig.role(n);
    for (sub, sup) in SCHEMA {
        let (sub, sup) = (c(&mut kb, sub), c(&mut kb, sup));
        kb.add_axiom(Axiom::SubClass { sub, sup });
    }
    let sub_org = r(&mut kb, "subOrganizationOf");
    kb.add_axiom(Axiom::Transitive(sub_org));

    let (works_for, organization, employee) = (
        r(&mut kb, "worksFor"),
        c(&mut kb, "Organization"),
        c(&mut kb, "Employee"),
    );
    kb.add_axiom(Axiom::ExistsSub {
        role: works_for,
        filler: organization,
        sup: employee,
    });
    let (head_of, department, chair) = (
        r(&mut kb, "headOf"),
        c(&mut kb, "Department"),
        c(&mut kb, "Chair"),
    );
    kb.add_axiom(Axiom::ExistsSub {
        role: head_of,
        filler: department,
        sup: chair,
    });
    let (takes, course, student) = (
        r(&mut kb, "takesCourse"),
        c(&mut kb, "Course"),
        c(&mut kb, "Student"),
    );
    kb.add_axiom(Axiom::ExistsSub {
        role: takes,
        filler: course,
        sup: student,
    });
    let teacher_of = r(&mut kb, "teacherOf");
    kb.add_axiom(Axiom::Range {
        role: teacher_of,
        concept: course,
    });
    kb.add_axiom(Axiom::Range {
        role: takes,
        concept: course,
    });

    let university = c(&mut kb, "University");
    kb.add_axiom(Axiom::ExistsSup {
        sub: department,
        role: sub_org,
        filler: university,
    });
    let (professor, degree_from) = (c(&mut kb, "Professor"), r(&mut kb, "degreeFrom"));
    kb.add_axiom(Axiom::ExistsSup {
        sub: professor,
        role: degree_from,
        filler: university,
    });
    kb.add_axiom(Axiom::ExistsSup {
        sub: student,
        role: takes,
        filler: course,
    });

    // Beyond the base schema: one role inclusion and one existential.
    let member_of = r(&mut kb, "memberOf");
    kb.add_axiom(Axiom::SubRole {
        sub: works_for,
        sup: member_of,
    });
    let (grad, advisor) = (c(&mut kb, "GraduateStudent"), r(&mut kb, "advisor"));
    kb.add_axiom(Axiom::ExistsSup {
        sub: grad,
        role: advisor,
        filler: professor,
    });
    kb
}

/// The benchmark KB for `spec`. Every university contributes the same
/// number of assertions, so the ABox size is exactly linear in the scale.
pub fn gen_bench(spec: &BenchSpec) -> Kb {
    let mut kb = schema();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let universities: Vec<String> = (0..spec.scale).map(|u| format!("u{u}")).collect();
    for u in &universities {
        kb.assert_concept("University", u);
        for d in 0..DEPARTMENTS {
            let dept = format!("{u}_d{d}");
            kb.assert_concept("Department", &dept);
            // Every other department is only known to belong to some
            // university through the schema.
            if d % 2 == 0 {
                kb.assert_role("subOrganizationOf", &dept, u);
            } else {
                kb.assert_role("memberOf", &dept, u);
            }
            for g in 0..GROUPS {
                let mut above = dept.clone();
                for level in 0..spec.depth {
                    let group = format!("{dept}_g{g}_{level}");
                    kb.assert_concept("ResearchGroup", &group);
                    kb.assert_role("subOrganizationOf", &group, &above);
                    above = group;
                }
            }
            let courses: Vec<String> = (0..COURSES).map(|i| format!("{dept}_c{i}")).collect();
            let grad_courses: Vec<String> =
                (0..GRAD_COURSES).map(|i| format!("{dept}_gc{i}")).collect();
            for c in &courses {
                kb.assert_concept("Course", c);
            }
            for c in &grad_courses {
                kb.assert_concept("GraduateCourse", c);
            }
            let mut professors = Vec::new();
            for (kind, count, tag) in [
                ("FullProfessor", FULL, "fp"),
                ("AssociateProfessor", ASSOCIATE, "ap"),
                ("Lecturer", LECTURERS, "l"),
            ] {
                for i in 0..count {
                    let p = format!("{dept}_{tag}{i}");
                    kb.assert_concept(kind, &p);
                    kb.assert_role("worksFor", &p, &dept);
                    let teaches = courses.iter().chain(&grad_courses).collect::<Vec<_>>();
                    kb.assert_role("teacherOf", &p, teaches.choose(&mut rng).unwrap());
                    if kind != "Lecturer" {
                        let alma = &universities[rng.gen_range(0..universities.len())];
                        // Half of the professors have a recorded degree.
                        if i % 2 == 0 {
                            kb.assert_role("degreeFrom", &p, alma);
                        } else {
                            kb.assert_concept("Person", &p);
                        }
                        professors.push(p);
                    }
                }
            }
            kb.assert_role("headOf", &professors[0], &dept);
            for i in 0..UNDERGRADS {
                let s = format!("{dept}_us{i}");
                kb.assert_concept("UndergraduateStudent", &s);
                kb.assert_role("memberOf", &s, &dept);
                kb.assert_role("takesCourse", &s, courses.choose(&mut rng).unwrap());
            }
            for i in 0..GRADS {
                let s = format!("{dept}_gs{i}");
                kb.assert_concept("GraduateStudent", &s);
                kb.assert_role("memberOf", &s, &dept);
                kb.assert_role("takesCourse", &s, grad_courses.choose(&mut rng).unwrap());
                // Half of the graduate students have a named advisor.
                if i % 2 == 0 {
                    kb.assert_role("advisor", &s, professors.choose(&mut rng).unwrap());
                } else {
                    kb.assert_concept("Person", &s);
                }
            }
        }
    }
    kb
}
