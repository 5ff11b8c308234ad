//! Failure-input reduction and LLM-guided program repair for
//! competitive-programming submissions.

pub mod config;
pub mod corpus;
pub mod hash;
pub mod llm;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
mod process;
pub mod reducer;
pub mod reducergen;
pub mod repair;
pub mod runner;
pub mod template;

pub use process::shell_quote;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/reduction.md")]
    mod reduction {}
    #[doc = include_str!("../../../book/src/repair.md")]
    mod repair {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/llm.md")]
    mod llm {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
