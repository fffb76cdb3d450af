//! Compiles the guide's code samples as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub struct Introduction;

#[doc = include_str!("../../../book/src/trees.md")]
pub struct Trees;

#[doc = include_str!("../../../book/src/head.md")]
pub struct Head;

#[doc = include_str!("../../../book/src/ensembles.md")]
pub struct Ensembles;

#[doc = include_str!("../../../book/src/evolution.md")]
pub struct Evolution;

#[doc = include_str!("../../../book/src/metrics.md")]
pub struct Metrics;

#[doc = include_str!("../../../book/src/statistics.md")]
pub struct Statistics;

#[doc = include_str!("../../../book/src/experiments.md")]
pub struct Experiments;
