//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gen;
pub mod oracle;
