pub mod conformance;
pub mod denote;
pub mod eval;
pub mod freemodel;
pub mod grading;
pub mod signature;
pub mod syntax;
pub mod typecheck;
