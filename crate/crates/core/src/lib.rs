pub mod cli;
pub mod datasets;
pub mod imaging;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod registration;
pub mod review;
pub mod template;
