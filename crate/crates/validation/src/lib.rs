//! Host crate for the `acceptance` test target. It runs after every other
//! suite in the workspace so a failing criterion never hides their results.
