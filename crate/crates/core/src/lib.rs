pub mod arith;
pub mod ckks;
pub mod packing;
pub mod aespa;
pub mod graph;
pub mod cli;
