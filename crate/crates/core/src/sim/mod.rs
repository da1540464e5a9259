//! Deterministic 2D tabletop world.

pub mod exec;
pub mod reference;
pub mod render;
pub mod scene;
pub mod tasks;

pub use exec::{execute_plan, ActionLog, FailureReason, LogEntry, Outcome};
pub use reference::{
    normalize, resolve_reference, resolve_reference_with, ParsedRef, ReferenceError, ReferenceExpr, Relation,
    ResolveOptions,
};
pub use render::{render, render_png};
pub use scene::{BBox, Color, Point, Scene, SceneObject, Shape, TABLE_DEPTH, TABLE_WIDTH};
pub use tasks::{generate_task, generate_task_with, is_success, Goal, TaskError, TaskFamily, TaskSpec};
