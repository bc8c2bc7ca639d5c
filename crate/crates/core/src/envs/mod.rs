//! Benchmark environments and random instance generators.

pub mod circuit;
pub mod gather;
pub mod jam;
pub mod layout;
pub mod random;
pub mod trap;
