//! Numerical federated-learning engine: the feed-forward classifier, SGD
//! local updates, FedAvg, dataset handling and compute-time sampling.

pub mod compute;
pub mod data;
pub mod model;
pub mod train;

pub use compute::ComputeProfile;
pub use data::{shard_dataset, DataError, DataShard, Dataset, EvalSplit};
pub use model::{Dense, ModelWeights};
pub use train::{evaluate, fedavg, fedavg_uniform, local_update, Evaluation, SgdParams};
