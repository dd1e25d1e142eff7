//! Holds the `acceptance` test target, which exercises the `infocam` library
//! and command line together. It runs after the per-crate suites.
