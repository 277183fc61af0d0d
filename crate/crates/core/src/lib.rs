pub mod bench;
pub mod enkm;
pub mod fem2d;
pub mod models;
pub mod observe;
pub mod rom;
pub mod seeding;
