//! Acceptance suite for the simulator; the checks live in
//! `tests/acceptance.rs` and print one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p optofock-acceptance --test acceptance`.
