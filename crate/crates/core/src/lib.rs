// SPDX-License-Identifier: Apache-2.0

//! A NUMA-aware actor language: parsing, type-and-effect checking, a small-step
//! interpreter over a multi-node machine, a runtime soundness monitor and a
//! static communication-cost model.

pub mod diag;
pub mod effects;
pub mod syntax;
pub mod typer;
pub mod runtime;
pub mod monitor;
pub mod cost;
pub mod cli;
