pub mod problem;
pub mod rates;
pub mod solve;
pub mod verify;
