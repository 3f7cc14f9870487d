//! Training and evaluation engine for multi-label, multi-task prediction of
//! behavioral codes over turn-structured dialogues: hierarchical BiLSTM
//! word/turn encoders, inverse-frequency sample weighting, and adversarial
//! shared-encoder multi-task learning, exercised on synthetic corpora with
//! planted label rules.

pub mod corpus;
pub mod encoders;
pub mod evalreport;
pub mod gradcheck;
pub mod model;
pub mod objectives;
pub mod sgns;
pub mod tensor;
pub mod trainer;
