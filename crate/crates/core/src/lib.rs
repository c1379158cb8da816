//! Gaze-restricted myoelectric grasp control: EMG conditioning and features,
//! dense and spiking gesture classifiers, scene and gaze context, grasp
//! candidate scoring, a safety-gated controller, and the evaluation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod controller;
pub mod grasp;
pub mod harness;
pub mod scene;
pub mod signal;
