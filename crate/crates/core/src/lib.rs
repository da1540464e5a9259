//! Retrieval-augmented planning for a simulated tabletop robot.
//!
//! The pipeline recalls candidate programs from a [`corpus::Codebase`],
//! rewrites and reranks them, assembles a generator prompt from the best
//! `k`, asks a [`gateway::GeneratorGateway`] for a plan in the
//! [`plan`] language and executes it in the [`sim`] world.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod gateway;
pub mod lexical;
pub mod plan;
pub mod prompt;
pub mod retrieval;
pub mod sim;

pub use config::{BackendKind, ConfigError, EngineConfig};
pub use corpus::{Codebase, CorpusError, PolicyEntry};
pub use embedding::{cosine, dot, EmbeddingProvider, EmbeddingVector, HashingEmbedder};
pub use eval::{
    mean_ap, run_ablation, run_episode, run_suite, success_rate, sweep_lambda, DetectionFixture, EpisodeOutcome,
    EpisodeRecord, EvalContext, EvalError, Planner, Suite,
};
pub use gateway::{GatewayError, GeneratorGateway, LlmMode};
pub use lexical::{tokenize, Bm25Params, CorpusStats, TokenStream};
pub use plan::{parse_plan, validate_plan, PlanError, PlanProgram, PlanStep};
pub use prompt::{assemble, load_template, PromptBundle, PromptTemplate};
pub use retrieval::{run_pipeline, Metric, Query, RankedCandidate, RetrievalConfig};
pub use sim::{execute_plan, generate_task, is_success, Scene, TaskFamily, TaskSpec};
