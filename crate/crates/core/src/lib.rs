//! Simulation laboratory for a common-pool fishery that sells its harvest
//! through a linear Fisher market, with learning harvesters and an optional
//! learning policymaker that posts prices.

pub mod fishery;
pub mod market;
pub mod nn;
pub mod objectives;
pub mod rl;
pub mod harness;
pub mod simloop;
