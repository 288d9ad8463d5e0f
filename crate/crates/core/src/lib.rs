//! Survival analysis toolkit for right-censored data: six predictors, the
//! concordance index and IPCW Brier scores, an exponentiated-gradient convex
//! ensemble, and synthetic data generators with sweep scenarios.

pub mod data;
pub mod ensemble;
pub mod models;
pub mod scoring;
pub mod simulate;

pub use data::{risk_set, survival_at, validate_dataset, DataError, Dataset, RawRow, RiskScore, Subject, SurvivalCurve};
