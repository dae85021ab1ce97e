//! Mixed sum-product networks: tractable density estimation over hybrid
//! continuous, discrete and categorical data.
//!
//! Structure is learned top-down with the randomized dependence coefficient
//! splitting variables into independent groups and clustering rows into
//! mixture components. Leaves are nonparametric univariate densities:
//! adaptive histograms or unimodal piecewise-linear fits. Joint, marginal,
//! conditional, MPE and sampling queries run in time linear in the network.

pub mod analysis;
pub mod data;
pub mod error;
pub mod inference;
pub mod leaves;
pub mod model_file;
pub mod numerics;
pub mod rdc;
pub mod structure;
pub mod synth;

pub use analysis::{mi_graph, mutual_information, MiGraph, MiResult};
pub use data::{load_dataset, ColumnSpec, ColumnType, Dataset, Schema, StatType};
pub use error::{MspnError, Result};
pub use inference::{
    log_conditional, log_evaluate, log_likelihoods, mpe, sample, Assignment, Evidence, QueryStats, VarState,
};
pub use leaves::{LeafKind, PiecewiseDensity};
pub use model_file::{deserialize, load_model, save_model, serialize, ModelFile};
pub use rdc::{rdc, split_features};
pub use structure::{learn_mspn, validate, LearnConfig, Mspn, MspnNode, NodeKind, ValidityReport};
