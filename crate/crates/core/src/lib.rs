//! Object-level planning core: FOON plans, PDDL, geometric grounding,
//! optimal search and a kinematic block-world executor.

pub mod foon;
pub mod grounding;
pub mod pddl;
pub mod planner;
pub mod scene;
pub mod simulator;
