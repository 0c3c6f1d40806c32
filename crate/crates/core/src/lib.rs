//! Critic-guided 3D generation at desk scale.
//!
//! A differentiable dual-query log-odds reward over multi-view renders of a
//! voxel asset steers two generators: a score-distillation optimization loop
//! and the ancestral sampling loop of a small native-3D diffusion prior.
//! Pairwise judging with Bradley–Terry/Elo fitting evaluates the results.

pub mod par;
pub mod rng;
pub mod tensor;
pub mod render;
pub mod voxel;
pub mod checkpoint;
pub mod dataset;
pub mod critic;
pub mod optim;
pub mod diffusion;
pub mod guidance;
pub mod evaluation;
