//! Holds the `acceptance` test target, which checks the end-to-end
//! criteria against both `sandpile-core` and `sandpile-cli`. Run it with
//! `cargo test -p sandpile-validation --test acceptance [-- N ...]`.
