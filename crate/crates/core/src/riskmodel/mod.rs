//! Label resolution, the random-forest risk classifier and its evaluation.

mod eval;
mod forest;
mod labels;
mod split;

pub use eval::{average_precision, evaluate, pr_curve, EvalReport, DEFAULT_THRESHOLD};
pub use forest::{train_forest, ForestConfig, ForestModel, Node, Tree};
pub use labels::{read_label_csv, resolve_labels, write_label_csv, RiskLabel, LABEL_CSV_HEADER};
pub use split::{stratified_split, Split};
