pub mod evaluate;
pub mod extract;
pub mod search;
pub mod train;
