pub mod analysis;
pub mod autodiff;
pub mod camp;
pub mod checkpoint;
pub mod config;
pub mod curriculum;
pub mod eval;
pub mod gait;
pub mod kinematics;
pub mod nets;
pub mod parallel;
pub mod reward;
pub mod sim;
pub mod trainer;
