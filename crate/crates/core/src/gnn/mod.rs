//! Client-side training: LightGCN propagation and BPR optimization over a local subgraph.

mod bpr;
mod client;
mod lightgcn;

pub use bpr::{
    bpr_loss, bpr_loss_and_grad, bpr_step, neg_log_sigmoid, sample_negative, LocalModelState, StepParams, Triple,
};
pub use client::{client_update, ClientUpdate, LightGcnTrainer, LocalHyper, LocalTrainer};
pub use lightgcn::{lightgcn_propagate, NormalizedAdjacency};
