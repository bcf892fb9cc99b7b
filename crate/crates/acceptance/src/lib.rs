//! Acceptance checks live in `tests/acceptance.rs`; run them with
//! `cargo test -p fedmorph-acceptance` (pass criterion names to filter).
