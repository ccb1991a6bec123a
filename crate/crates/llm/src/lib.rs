//! LLM side of object-level planning: chat providers, exemplar retrieval,
//! the prompting pipeline and the baseline planners.

pub mod baselines;
pub mod embed;
pub mod library;
pub mod pipeline;
pub mod prompts;
pub mod provider;
