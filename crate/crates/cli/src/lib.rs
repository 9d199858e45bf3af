//! Library backing the `padctl` binary: JSON document schemas, the
//! end-to-end hospital scenario, and the overhead benchmark. Split from
//! the binary so integration tests can drive the same code paths.

pub mod bench;
pub mod docs;
pub mod scenario;
