//! Soft-margin kernel SVMs trained by SMO, plus one-vs-one multiclass voting.

mod io;
mod kernel;
mod model;
mod multiclass;
mod smo;

pub use io::{load_model, model_from_json, model_to_json, save_model, AnyModel, MODEL_FORMAT_VERSION};
pub use kernel::{kernel_eval, resolve_gamma, Gamma, Kernel, KernelKind, KernelSpec};
pub use model::{
    decision_function, predict_binary, train_binary, train_binary_detailed, train_binary_labeled,
    BinaryFit, SvmModel, TrainConfig,
};
pub use multiclass::{predict_multiclass, train_multiclass, MulticlassModel};
pub use smo::{dual_objective, DualSolution, FULL_GRAM_MAX_ROWS, ROW_CACHE_BYTES};
