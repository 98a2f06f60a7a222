//! RBF-kernel support vector classification.

mod binary;
mod kernel;
mod model_file;
mod multiclass;

pub use binary::{train_binary, BinarySvm, RbfParams, SmoOptions};
pub use kernel::rbf_kernel;
pub use model_file::{fmt_f64, load_model, model_to_string, parse_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use multiclass::{
    grid_search, stratified_folds, train_multiclass, GridCell, GridSearchResult, GridSpec, PairMachine,
    Prediction, SvmModel,
};
