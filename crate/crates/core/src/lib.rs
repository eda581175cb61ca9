pub mod distrisk;
pub mod resim;
pub mod ensemble;
pub mod reactive;
pub mod optimize;
pub mod experiment;
