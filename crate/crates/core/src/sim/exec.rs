//! Applying a [`PlanProgram`] to a [`Scene`].
//!
//! Execution is a pure transition: the input scene is cloned, steps run in
//! order, and the first grounding or argument failure ends the episode. No
//! error escapes; failures are reported in the returned [`Outcome`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::reference::{normalize, resolve_reference, ReferenceError, ReferenceExpr};
use super::scene::{BBox, Point, Scene, TABLE_DEPTH, TABLE_WIDTH};
use crate::plan::{ApiName, PlanProgram, PlanStep};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FailureReason {
    UnresolvableReference(String),
    AmbiguousReference(String),
    AmbiguousAnchor(String),
    Unparseable(String),
    NotAContainer(String),
    BadArgument(String),
}

impl FailureReason {
    /// Short stable name, e.g. `UnresolvableReference`.
    pub fn name(&self) -> &'static str {
        match self {
            FailureReason::UnresolvableReference(_) => "UnresolvableReference",
            FailureReason::AmbiguousReference(_) => "AmbiguousReference",
            FailureReason::AmbiguousAnchor(_) => "AmbiguousAnchor",
            FailureReason::Unparseable(_) => "Unparseable",
            FailureReason::NotAContainer(_) => "NotAContainer",
            FailureReason::BadArgument(_) => "BadArgument",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let detail = match self {
            FailureReason::UnresolvableReference(s)
            | FailureReason::AmbiguousReference(s)
            | FailureReason::AmbiguousAnchor(s)
            | FailureReason::Unparseable(s)
            | FailureReason::NotAContainer(s)
            | FailureReason::BadArgument(s) => s,
        };
        write!(f, "{}({})", self.name(), detail)
    }
}

impl From<ReferenceError> for FailureReason {
    fn from(e: ReferenceError) -> Self {
        match e {
            ReferenceError::Unparseable(s) => FailureReason::Unparseable(s),
            ReferenceError::UnresolvableReference(s) => FailureReason::UnresolvableReference(s),
            ReferenceError::AmbiguousAnchor(s) => FailureReason::AmbiguousAnchor(s),
        }
    }
}

/// One executed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub api: ApiName,
    /// Objects the step acted on, sorted by id.
    pub objects: Vec<String>,
    /// Receptacle for placement steps.
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionLog {
    pub entries: Vec<LogEntry>,
    /// Set when execution stopped early.
    pub failure: Option<(usize, FailureReason)>,
}

impl ActionLog {
    /// Placement targets of `obj` in execution order.
    pub fn placements_of(&self, obj: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| matches!(e.api, ApiName::PickPlace | ApiName::Sweep))
            .filter(|e| e.objects.iter().any(|o| o == obj))
            .filter_map(|e| e.target.as_deref())
            .collect()
    }

    /// Index of the first entry that moved `obj` (any moving api).
    pub fn first_move_of(&self, obj: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| !matches!(e.api, ApiName::Detect | ApiName::Rotate) && e.objects.iter().any(|o| o == obj))
    }

    /// Index of the first placement of `obj` into `container`.
    pub fn first_placement(&self, obj: &str, container: &str) -> Option<usize> {
        self.entries.iter().position(|e| {
            matches!(e.api, ApiName::PickPlace | ApiName::Sweep)
                && e.target.as_deref() == Some(container)
                && e.objects.iter().any(|o| o == obj)
        })
    }

    pub fn rotated(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.api == ApiName::Rotate)
            .flat_map(|e| e.objects.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Failed(FailureReason),
}

struct Executor {
    scene: Scene,
    labels: BTreeMap<String, Vec<String>>,
    log: ActionLog,
}

enum Quantity {
    One,
    Any,
}

impl Executor {
    fn ground(&self, text: &str, quantity: Quantity) -> Result<Vec<String>, FailureReason> {
        let key = normalize(text);
        if let Some(ids) = self.labels.get(&key) {
            return match quantity {
                Quantity::One if ids.len() != 1 => Err(FailureReason::AmbiguousReference(key)),
                _ => Ok(ids.clone()),
            };
        }
        let expr = ReferenceExpr::parse(text)?;
        let found = resolve_reference(&self.scene, &expr)?;
        let ids: Vec<String> = found.iter().map(|o| o.id.clone()).collect();
        match quantity {
            Quantity::One if ids.len() > 1 && !expr.plural => Err(FailureReason::AmbiguousReference(expr.text)),
            _ => Ok(ids),
        }
    }

    fn ground_container(&self, text: &str) -> Result<String, FailureReason> {
        let ids = self.ground(text, Quantity::One)?;
        if ids.len() != 1 {
            return Err(FailureReason::AmbiguousReference(normalize(text)));
        }
        let id = ids.into_iter().next().expect("one id");
        if !self.scene.get(&id).is_some_and(|o| o.receptacle) {
            return Err(FailureReason::NotAContainer(normalize(text)));
        }
        Ok(id)
    }

    fn arg<'p>(step: &'p PlanStep, name: &str) -> Result<&'p str, FailureReason> {
        step.str_arg(name)
            .ok_or_else(|| FailureReason::BadArgument(format!("{} needs `{name}`", step.api)))
    }

    /// Puts `obj` at the next free slot of a 3x3 grid inside the container.
    fn place_into(&mut self, obj: &str, container: &str) {
        let c = self.scene.get(container).expect("container exists").bbox;
        let occupied = self
            .scene
            .contents(container)
            .into_iter()
            .filter(|id| id != obj)
            .count();
        let slot = occupied % 9;
        let (col, row) = ((slot % 3) as f64, (slot / 3) as f64);
        let center = Point::new(
            c.x0 + c.width() * (col + 1.0) / 4.0,
            c.y0 + c.height() * (row + 1.0) / 4.0,
        );
        let o = self.scene.get_mut(obj).expect("object exists");
        o.bbox = o.bbox.moved_to(center).clamped_to_table();
    }

    /// First spot along the front edge of the table (then the back edge)
    /// that overlaps no other object.
    fn park(&mut self, obj: &str) {
        let size = self.scene.get(obj).expect("object exists").bbox;
        let step = 10.0;
        let rows = [size.height() / 2.0 + 5.0, TABLE_DEPTH - size.height() / 2.0 - 5.0];
        for y in rows {
            let mut x = size.width() / 2.0 + 5.0;
            while x + size.width() / 2.0 <= TABLE_WIDTH {
                let candidate = size.moved_to(Point::new(x, y));
                let free = self
                    .scene
                    .objects
                    .iter()
                    .filter(|o| o.id != obj)
                    .all(|o| !o.bbox.overlaps(&candidate, 5.0));
                if free {
                    self.scene.get_mut(obj).expect("object exists").bbox = candidate;
                    return;
                }
                x += step;
            }
        }
        // table is full; leave it where it is
    }

    fn run_step(&mut self, index: usize, step: &PlanStep) -> Result<(), FailureReason> {
        let mut entry = LogEntry {
            step: index,
            api: step.api,
            objects: Vec::new(),
            target: None,
        };
        match step.api {
            ApiName::PickPlace | ApiName::Sweep => {
                let quantity = if step.api == ApiName::Sweep {
                    Quantity::Any
                } else {
                    Quantity::One
                };
                let objs = self.ground(Self::arg(step, "obj")?, quantity)?;
                let target = self.ground_container(Self::arg(step, "target")?)?;
                for id in &objs {
                    if *id == target {
                        return Err(FailureReason::BadArgument(format!("cannot place {id} into itself")));
                    }
                }
                for id in &objs {
                    self.place_into(id, &target);
                }
                entry.objects = objs;
                entry.target = Some(target);
            }
            ApiName::Rotate => {
                let objs = self.ground(Self::arg(step, "obj")?, Quantity::One)?;
                let degrees = step
                    .num_arg("degrees")
                    .ok_or_else(|| FailureReason::BadArgument("rotate needs `degrees`".into()))?;
                for id in &objs {
                    let o = self.scene.get_mut(id).expect("object exists");
                    o.orientation = (o.orientation + degrees).rem_euclid(360.0);
                }
                entry.objects = objs;
            }
            ApiName::Push => {
                let objs = self.ground(Self::arg(step, "obj")?, Quantity::One)?;
                let distance = step
                    .num_arg("distance")
                    .ok_or_else(|| FailureReason::BadArgument("push needs `distance`".into()))?;
                let (dx, dy) = match Self::arg(step, "direction")? {
                    "left" => (-distance, 0.0),
                    "right" => (distance, 0.0),
                    "up" => (0.0, distance),
                    "down" => (0.0, -distance),
                    other => return Err(FailureReason::BadArgument(format!("direction `{other}`"))),
                };
                for id in &objs {
                    let o = self.scene.get_mut(id).expect("object exists");
                    let b = o.bbox;
                    o.bbox = BBox::new(b.x0 + dx, b.y0 + dy, b.x1 + dx, b.y1 + dy).clamped_to_table();
                }
                entry.objects = objs;
            }
            ApiName::Detect => {
                let objs = self.ground(Self::arg(step, "obj")?, Quantity::Any)?;
                self.labels.insert(normalize(Self::arg(step, "label")?), objs.clone());
                entry.objects = objs;
            }
            ApiName::Distract => {
                let objs = self.ground(Self::arg(step, "obj")?, Quantity::Any)?;
                for id in &objs {
                    self.park(id);
                }
                entry.objects = objs;
            }
        }
        self.log.entries.push(entry);
        Ok(())
    }
}

/// Runs `plan` against a copy of `scene`.
pub fn execute_plan(scene: &Scene, plan: &PlanProgram) -> (Scene, ActionLog, Outcome) {
    let mut exec = Executor {
        scene: scene.clone(),
        labels: BTreeMap::new(),
        log: ActionLog::default(),
    };
    for (i, step) in plan.steps().iter().enumerate() {
        if let Err(reason) = exec.run_step(i + 1, step) {
            exec.log.failure = Some((i + 1, reason.clone()));
            return (exec.scene, exec.log, Outcome::Failed(reason));
        }
    }
    (exec.scene, exec.log, Outcome::Completed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;
    use crate::sim::scene::{Color, SceneObject, Shape};

    fn scene() -> Scene {
        let mk = |id: &str, name: &str, color, shape, x, y, w, r| SceneObject {
            id: id.into(),
            name: name.into(),
            color,
            shape,
            bbox: BBox::centered(Point::new(x, y), w, w),
            receptacle: r,
            orientation: 0.0,
            properties: Default::default(),
        };
        Scene::new(
            vec![
                mk("o0", "block", Color::Red, Shape::Square, 100.0, 100.0, 40.0, false),
                mk("o1", "star", Color::Blue, Shape::Star, 300.0, 100.0, 40.0, false),
                mk("o2", "bowl", Color::Green, Shape::Bowl, 700.0, 400.0, 120.0, true),
                mk("o3", "pan", Color::Gray, Shape::Pan, 300.0, 400.0, 120.0, true),
            ],
            0,
        )
    }

    #[test]
    fn pick_place_moves_into_container() {
        let s = scene();
        let plan = parse_plan(r#"pick_place(obj="red block", target="green bowl")"#).unwrap();
        let (after, log, outcome) = execute_plan(&s, &plan);
        assert_eq!(outcome, Outcome::Completed);
        assert!(after.is_inside("o0", "o2"));
        assert_eq!(log.placements_of("o0"), ["o2"]);
        // the input is untouched
        assert_eq!(s, scene());
    }

    #[test]
    fn absent_object_fails_episode() {
        let plan = parse_plan(
            "pick_place(obj=\"purple heart\", target=\"green bowl\")\nrotate(obj=\"red block\", degrees=90)",
        )
        .unwrap();
        let (after, log, outcome) = execute_plan(&scene(), &plan);
        match outcome {
            Outcome::Failed(r) => assert_eq!(r.name(), "UnresolvableReference"),
            other => panic!("{other:?}"),
        }
        assert!(log.entries.is_empty());
        assert_eq!(after.get("o0").unwrap().orientation, 0.0);
    }

    #[test]
    fn target_must_be_a_container() {
        let plan = parse_plan(r#"pick_place(obj="red block", target="blue star")"#).unwrap();
        let (_, _, outcome) = execute_plan(&scene(), &plan);
        assert!(matches!(outcome, Outcome::Failed(FailureReason::NotAContainer(_))));
    }

    #[test]
    fn detect_labels_survive_moves() {
        let plan = parse_plan(
            "detect(obj=\"the object to the left of the blue star\", label=\"old neighbor\")\n\
             pick_place(obj=\"blue star\", target=\"gray pan\")\n\
             pick_place(obj=\"old neighbor\", target=\"gray pan\")",
        )
        .unwrap();
        let (after, log, outcome) = execute_plan(&scene(), &plan);
        assert_eq!(outcome, Outcome::Completed);
        assert!(after.is_inside("o0", "o3") && after.is_inside("o1", "o3"));
        assert_eq!(log.first_placement("o1", "o3"), Some(1));
        // two objects in one container occupy distinct slots
        assert_ne!(after.get("o0").unwrap().center(), after.get("o1").unwrap().center());
    }

    #[test]
    fn rotate_push_and_distract() {
        let plan = parse_plan(
            "rotate(obj=\"red block\", degrees=-90)\npush(obj=\"blue star\", direction=\"up\", distance=50)\ndistract(obj=\"red block\")",
        )
        .unwrap();
        let (after, _, outcome) = execute_plan(&scene(), &plan);
        assert_eq!(outcome, Outcome::Completed);
        assert_eq!(after.get("o0").unwrap().orientation, 270.0);
        assert_eq!(after.get("o1").unwrap().center(), Point::new(300.0, 150.0));
        assert!(after.validate().is_ok());
    }

    #[test]
    fn ambiguous_singular_reference_fails() {
        let plan = parse_plan(r#"rotate(obj="the object", degrees=90)"#).unwrap();
        let (_, _, outcome) = execute_plan(&scene(), &plan);
        assert!(matches!(outcome, Outcome::Failed(FailureReason::AmbiguousReference(_))));
    }
}
