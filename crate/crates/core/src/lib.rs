//! Core data model and non-neural machinery for unsupervised conversion
//! between knowledge graphs and text.

pub mod data;
pub mod exec;
pub mod kg;
pub mod lingo;
pub mod metrics;
pub mod noise;
pub mod rules;
pub mod seeding;

pub use exec::Exec;
pub use kg::{deserialize, fact_multiset_equal, serialize, Fact, KnowledgeGraph, Modality, TokenSeq};
pub use lingo::Lexicon;
