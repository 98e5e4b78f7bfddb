pub mod corpus;
pub mod seq2seq;
pub mod decode;
pub mod wugeval;
pub mod runner;
