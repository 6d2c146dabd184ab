pub mod assembly;
pub mod catalog;
pub mod eval;
pub mod evidence;
pub mod index;
pub mod retrieval;
pub mod router;
pub mod synth;
pub mod transport;
pub mod vecmath;

pub use assembly::{
    run_assembly, AssemblyError, AssemblyOutcome, AvatarLook, GenerationBudget, JudgeClient, LookStatus,
    ScriptedJudge, UsageLedger,
};
pub use catalog::{Asset, Catalog, CatalogError, Taxonomy, View};
pub use evidence::{EvidenceDocument, EvidenceError, EvidenceStore, PartEvidence, PartStatus};
pub use index::{build_index, load_snapshot, save_snapshot, CategoryIndex, IndexError, SearchHit};
pub use retrieval::{
    retrieve_all, retrieve_category, Candidate, CandidatePool, RetrievalConfig, RetrievalContext, RetrievalError,
    Source,
};
pub use router::{route, route_naive, Concept, PromptSpec, RouterError, RoutingPlan};
pub use vecmath::{
    compute_category_subspace, fuse, suppress, CategorySubspace, EmbeddingVector, FusionWeights, SubspaceOptions,
    VecError,
};
