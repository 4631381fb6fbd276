//! Alternative protocol variants.

pub mod keyserver;
pub mod simple;
