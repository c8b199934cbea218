//! Observational datasets with confounded treatment assignment, optional
//! dosage levels and full counterfactual ground truth.
//!
//! Treatments and dosage levels are stored 0-based in memory; files use
//! 1-based indices.

mod dataset;
mod io;
mod news;
mod response;
mod split;
mod syn;

pub use dataset::{empirical_treatment_marginal, uniform_dosage_grid, Dataset, DatasetMeta, Source};
pub use io::{
    load_dataset_dir, load_external, save_dataset, ASSIGNMENTS_FILE, COUNTERFACTUALS_FILE,
    COVARIATES_FILE, META_FILE,
};
pub use news::gen_news_like;
pub use split::{split_dataset, Split, SplitRatios, MAX_SPLIT_ATTEMPTS};
pub use syn::gen_syn;

/// Dispatches on `meta.source`.
pub fn generate(meta: &DatasetMeta) -> crate::Result<Dataset> {
    match meta.source {
        Source::Syn => gen_syn(meta),
        Source::NewsLike => gen_news_like(meta),
        Source::External => Err(crate::Error::Config(
            "external datasets are loaded, not generated".into(),
        )),
    }
}
