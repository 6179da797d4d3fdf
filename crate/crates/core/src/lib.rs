//! Live-programming runtime for nested state machine robot behaviors.

pub mod bridge;
pub mod bus;
pub mod diag;
pub mod expr;
pub mod interp;
pub mod live;
pub mod msg;
pub mod session;
pub mod sim;
pub mod syntax;
