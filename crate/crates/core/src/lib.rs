//! Temporal topic analysis: per-epoch HDP topic models, relatedness graphs
//! between consecutive epochs, and the topic events read off them.

pub mod bundle;
pub mod config;
pub mod corpus;
pub mod events;
pub mod hdp;
pub mod pipeline;
pub mod preprocess;
pub mod queries;
pub mod relatedness;
pub mod synthetic;

#[cfg(test)]
mod testutil;
