//! Interpretability analyses over (question, gold passage) pairs: where the
//! tokens of each text land in the other's vocabulary projection, how much
//! of the query projection is expansion, and how deep shared tokens sink for
//! passages the dense retriever misses.

mod amnesia;
mod overlap;
mod pairs;
mod stats;

pub use amnesia::{
    amnesia_profile, select_amnesia_pairs, AmnesiaProfile, AmnesiaRecord, BucketSummary, RankBuckets,
};
pub use overlap::{
    category_breakdown, query_expansion_stats, shared_token_coverage, token_level_mrr, CategoryFractions,
    CategoryReport, CoverageMode, CoverageReport, ExpansionRow, MrrResult, Selector, Target,
};
pub use pairs::{PairContext, PairSource, RankSummary};
pub use stats::{median, quantile_sorted, Quartiles};
