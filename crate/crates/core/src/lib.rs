//! Conjunctive query answering over normalized ELHO knowledge bases with
//! transitive roles, reflexive roles, nominals and self restrictions.
//!
//! The KB is compiled to a datalog program whose least model over-approximates
//! query answers; candidate answers read off that model are then filtered.

pub mod answer;
pub mod arborescent;
pub mod bench;
pub mod chase;
pub mod corpus;
pub mod filter;
pub mod hardgen;
pub mod kb;
pub mod materialize;
pub mod text;
pub mod translate;
