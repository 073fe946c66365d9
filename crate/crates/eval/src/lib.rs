//! Benchmarks and metrics for vctx agents: nested key-value retrieval,
//! deep memory retrieval over past sessions, paged document QA, budget
//! fuzzing, ROUGE-L and CSIM.

pub mod dmr;
pub mod docqa;
pub mod fuzz;
pub mod kv;
pub mod metrics;
pub mod policy;
pub mod report;
