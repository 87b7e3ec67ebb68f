pub mod agent;
pub mod autodiff;
pub mod cli;
pub mod lang;
pub mod metrics;
pub mod seed;
pub mod trainer;
pub mod world;
