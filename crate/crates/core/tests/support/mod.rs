//! Criterion checks shared by the integration tests and the acceptance runner.
//! Each test binary uses only some of them.
#![allow(dead_code)]

pub mod adversary;
pub mod feedback;
pub mod fixtures;
pub mod independence;
pub mod oracle;
pub mod svggen;
