//! Built-in task families, seeded scene generation and success predicates.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::exec::{execute_plan, ActionLog, Outcome};
use super::reference::{relation_holds, resolve_reference, ReferenceExpr, Relation};
use super::scene::{BBox, Color, Point, Scene, SceneObject, Shape, TABLE_DEPTH, TABLE_WIDTH};
use crate::plan::{parse_plan, PlanProgram};

pub const DEFAULT_DISTRACTORS: usize = 3;
const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("unknown task family `{0}`")]
    UnknownFamily(String),
    #[error("could not generate a valid `{family}` scene for seed {seed}")]
    GenerationFailed { family: TaskFamily, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    VisualManipulation,
    SameShape,
    SameColor,
    ManipulateOldNeighbor,
    PickInOrderThenRestore,
    InterferingManipulation,
    Rotate,
    Rearrange,
    SceneUnderstanding,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 9] = [
        TaskFamily::VisualManipulation,
        TaskFamily::SameShape,
        TaskFamily::SameColor,
        TaskFamily::ManipulateOldNeighbor,
        TaskFamily::PickInOrderThenRestore,
        TaskFamily::InterferingManipulation,
        TaskFamily::Rotate,
        TaskFamily::Rearrange,
        TaskFamily::SceneUnderstanding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::VisualManipulation => "visual_manipulation",
            TaskFamily::SameShape => "same_shape",
            TaskFamily::SameColor => "same_color",
            TaskFamily::ManipulateOldNeighbor => "manipulate_old_neighbor",
            TaskFamily::PickInOrderThenRestore => "pick_in_order_then_restore",
            TaskFamily::InterferingManipulation => "interfering_manipulation",
            TaskFamily::Rotate => "rotate",
            TaskFamily::Rearrange => "rearrange",
            TaskFamily::SceneUnderstanding => "scene_understanding",
        }
    }

    pub fn parse(name: &str) -> Result<Self, TaskError> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == name)
            .ok_or_else(|| TaskError::UnknownFamily(name.to_string()))
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Goal predicates, stated over object ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    Inside {
        obj: String,
        container: String,
    },
    /// Every member ends inside the container and no other movable object does.
    AllInside {
        members: Vec<String>,
        container: String,
    },
    /// Both inside, the first one placed before the neighbor.
    OldNeighbor {
        first: String,
        neighbor: String,
        container: String,
    },
    /// Placements visit `route` in order and the object ends in the last stop.
    Route {
        obj: String,
        route: Vec<String>,
    },
    /// The interferer leaves the container before the object is placed.
    Interfering {
        obj: String,
        container: String,
        interferer: String,
    },
    Rotated {
        obj: String,
        degrees: f64,
    },
    AllPlaced {
        pairs: Vec<(String, String)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: TaskFamily,
    pub seed: u64,
    pub instruction: String,
    pub goal: Goal,
    pub distractors: usize,
    /// Reference solution in the plan DSL.
    pub oracle_plan: String,
}

impl TaskSpec {
    pub fn oracle(&self) -> PlanProgram {
        parse_plan(&self.oracle_plan).expect("oracle plans parse")
    }
}

fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(360.0);
    d < 1e-6 || 360.0 - d < 1e-6
}

/// Pure evaluation of the task's goal. An episode that stopped on a
/// failure never counts as a success.
pub fn is_success(task: &TaskSpec, initial: &Scene, fin: &Scene, log: &ActionLog) -> bool {
    if log.failure.is_some() {
        return false;
    }
    match &task.goal {
        Goal::Inside { obj, container } => fin.is_inside(obj, container),
        Goal::AllInside { members, container } => {
            let inside: BTreeSet<String> = fin.contents(container).into_iter().collect();
            let wanted: BTreeSet<String> = members.iter().cloned().collect();
            inside == wanted
        }
        Goal::OldNeighbor {
            first,
            neighbor,
            container,
        } => {
            let order = (
                log.first_placement(first, container),
                log.first_placement(neighbor, container),
            );
            fin.is_inside(first, container)
                && fin.is_inside(neighbor, container)
                && matches!(order, (Some(a), Some(b)) if a < b)
        }
        Goal::Route { obj, route } => {
            let mut want = route.iter().peekable();
            for stop in log.placements_of(obj) {
                if want.peek().is_some_and(|w| w.as_str() == stop) {
                    want.next();
                }
            }
            want.peek().is_none() && route.last().is_some_and(|c| fin.is_inside(obj, c))
        }
        Goal::Interfering {
            obj,
            container,
            interferer,
        } => {
            let cleared_first = matches!(
                (log.first_move_of(interferer), log.first_placement(obj, container)),
                (Some(a), Some(b)) if a < b
            );
            cleared_first && fin.is_inside(obj, container) && !fin.is_inside(interferer, container)
        }
        Goal::Rotated { obj, degrees } => {
            let rotated_ok = match (initial.get(obj), fin.get(obj)) {
                (Some(a), Some(b)) => same_angle(b.orientation, a.orientation + degrees),
                _ => false,
            };
            let others_ok = initial
                .objects
                .iter()
                .filter(|o| o.id != *obj)
                .all(|o| fin.get(&o.id).is_some_and(|f| same_angle(f.orientation, o.orientation)));
            rotated_ok && others_ok
        }
        Goal::AllPlaced { pairs } => pairs.iter().all(|(o, c)| fin.is_inside(o, c)),
    }
}

const MOVABLE: &[(Shape, &str)] = &[
    (Shape::Square, "block"),
    (Shape::LShape, "L-shaped block"),
    (Shape::Cube, "cube"),
    (Shape::Star, "star"),
    (Shape::Heart, "heart"),
    (Shape::Ring, "ring"),
    (Shape::Triangle, "triangle"),
    (Shape::Cross, "cross"),
];

const CONTAINERS: &[(Shape, &str)] = &[
    (Shape::Bowl, "bowl"),
    (Shape::Pan, "pan"),
    (Shape::Box, "box"),
    (Shape::Tray, "tray"),
];

/// (name, capability verb, thing)
const TOOLS: &[(&str, &str, &str)] = &[
    ("screwdriver", "repair", "television"),
    ("scissors", "cut", "paper"),
    ("hammer", "drive", "nail"),
    ("sponge", "wash", "dishes"),
    ("pen", "write", "letter"),
    ("brush", "paint", "wall"),
];

const DIRECTIONS: &[&str] = &["to the left of", "to the right of", "above", "below"];

fn seed_for(family: TaskFamily, seed: u64) -> u64 {
    let digest = Sha256::digest(format!("{family}:{seed}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    objects: Vec<SceneObject>,
    /// (color, head noun) pairs already used, keeping name references unique.
    used: BTreeSet<(Color, String)>,
}

impl<'r> Builder<'r> {
    fn new(rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            rng,
            objects: Vec::new(),
            used: BTreeSet::new(),
        }
    }

    fn free(&self, b: &BBox) -> bool {
        b.within_table() && self.objects.iter().all(|o| !o.bbox.overlaps(b, 10.0))
    }

    fn key(color: Color, name: &str) -> (Color, String) {
        (color, name.rsplit(' ').next().unwrap_or(name).to_string())
    }

    fn pick_color(&mut self, name: &str, allowed: &dyn Fn(Color) -> bool) -> Option<Color> {
        let choices: Vec<Color> = Color::ALL
            .iter()
            .copied()
            .filter(|c| allowed(*c) && !self.used.contains(&Self::key(*c, name)))
            .collect();
        choices.choose(self.rng).copied()
    }

    fn add(&mut self, name: &str, color: Color, shape: Shape, bbox: BBox, receptacle: bool) -> String {
        let id = format!("o{}", self.objects.len());
        self.used.insert(Self::key(color, name));
        self.objects.push(SceneObject {
            id: id.clone(),
            name: name.to_string(),
            color,
            shape,
            bbox,
            receptacle,
            orientation: 0.0,
            properties: Default::default(),
        });
        id
    }

    /// Samples a free spot whose center satisfies `ok`.
    fn spot(&mut self, w: f64, h: f64, ok: &dyn Fn(Point) -> bool) -> Option<BBox> {
        for _ in 0..200 {
            let c = Point::new(
                self.rng.gen_range(w / 2.0..TABLE_WIDTH - w / 2.0),
                self.rng.gen_range(h / 2.0..TABLE_DEPTH - h / 2.0),
            );
            let b = BBox::centered(c, w, h);
            if ok(c) && self.free(&b) {
                return Some(b);
            }
        }
        None
    }

    fn container(&mut self, allowed: &dyn Fn(Color) -> bool) -> Option<String> {
        let &(shape, name) = CONTAINERS.choose(self.rng)?;
        let color = self.pick_color(name, allowed)?;
        let (w, h) = (self.rng.gen_range(150.0..190.0), self.rng.gen_range(140.0..170.0));
        let b = self.spot(w, h, &|_| true)?;
        Some(self.add(name, color, shape, b, true))
    }

    fn movable_size(&mut self) -> f64 {
        self.rng.gen_range(40.0..60.0)
    }

    fn movable_of(
        &mut self,
        shape: Shape,
        name: &str,
        allowed: &dyn Fn(Color) -> bool,
        ok: &dyn Fn(Point) -> bool,
    ) -> Option<String> {
        let color = self.pick_color(name, allowed)?;
        let s = self.movable_size();
        let b = self.spot(s, s, ok)?;
        Some(self.add(name, color, shape, b, false))
    }

    fn movable(
        &mut self,
        shapes: &dyn Fn(Shape) -> bool,
        colors: &dyn Fn(Color) -> bool,
        ok: &dyn Fn(Point) -> bool,
    ) -> Option<String> {
        let kinds: Vec<(Shape, &str)> = MOVABLE.iter().copied().filter(|(s, _)| shapes(*s)).collect();
        let &(shape, name) = kinds.choose(self.rng)?;
        self.movable_of(shape, name, colors, ok)
    }

    /// A movable object resting inside `container`.
    fn movable_inside(&mut self, container: &str, colors: &dyn Fn(Color) -> bool) -> Option<String> {
        let &(shape, name) = MOVABLE.choose(self.rng)?;
        let color = self.pick_color(name, colors)?;
        let s = self.movable_size();
        let c = self.objects.iter().find(|o| o.id == container)?.bbox.center();
        Some(self.add(name, color, shape, BBox::centered(c, s, s), false))
    }

    fn tool(&mut self, index: usize) -> Option<String> {
        let (name, verb, thing) = TOOLS[index];
        let color = self.pick_color(name, &|_| true)?;
        let (w, h) = (self.rng.gen_range(60.0..90.0), self.rng.gen_range(30.0..45.0));
        let b = self.spot(w, h, &|_| true)?;
        let id = self.add(name, color, Shape::Tool, b, false);
        self.objects
            .last_mut()
            .expect("just added")
            .properties
            .insert(verb.to_string(), thing.to_string());
        Some(id)
    }

    fn distractors(
        &mut self,
        n: usize,
        shapes: &dyn Fn(Shape) -> bool,
        colors: &dyn Fn(Color) -> bool,
        ok: &dyn Fn(Point) -> bool,
    ) -> Option<()> {
        for _ in 0..n {
            self.movable(shapes, colors, ok)?;
        }
        Some(())
    }

    fn describe(&self, id: &str) -> String {
        let o = self.objects.iter().find(|o| o.id == id).expect("known id");
        o.description()
    }

    fn get(&self, id: &str) -> &SceneObject {
        self.objects.iter().find(|o| o.id == id).expect("known id")
    }
}

struct Draft {
    instruction: String,
    goal: Goal,
    oracle: String,
}

fn any<T>(_: T) -> bool {
    true
}

fn draft(family: TaskFamily, b: &mut Builder<'_>, distractors: usize) -> Option<Draft> {
    let d = distractors;
    match family {
        TaskFamily::VisualManipulation => {
            let c = b.container(&any)?;
            b.container(&any)?;
            let obj = b.movable(&any, &any, &any)?;
            b.distractors(d, &any, &any, &any)?;
            let (on, cn) = (b.describe(&obj), b.describe(&c));
            Some(Draft {
                instruction: format!("put the {on} into the {cn}"),
                goal: Goal::Inside { obj, container: c },
                oracle: format!("pick_place(obj=\"{on}\", target=\"{cn}\")"),
            })
        }
        TaskFamily::SameShape | TaskFamily::SameColor => {
            let by_shape = family == TaskFamily::SameShape;
            let &(shape, name) = MOVABLE.choose(b.rng)?;
            let anchor = b.movable_of(shape, name, &any, &any)?;
            let anchor_color = b.get(&anchor).color;
            let not_anchor_color = move |c: Color| c != anchor_color;
            let c = b.container(&not_anchor_color)?;
            b.container(&not_anchor_color)?;
            let n = b.rng.gen_range(2..=3);
            let mut members = Vec::new();
            for _ in 0..n {
                let m = if by_shape {
                    b.movable_of(shape, name, &not_anchor_color, &any)?
                } else {
                    let other_shape = move |s: Shape| s != shape;
                    b.movable(&other_shape, &|c| c == anchor_color, &any)?
                };
                members.push(m);
            }
            if by_shape {
                b.distractors(d, &|s| s != shape, &any, &any)?;
            } else {
                b.distractors(d, &any, &not_anchor_color, &any)?;
            }
            members.sort();
            let attr = if by_shape { "shape" } else { "color" };
            let (an, cn) = (b.describe(&anchor), b.describe(&c));
            let expr = format!("all objects with the same {attr} as the {an}");
            Some(Draft {
                instruction: format!("put {expr} into the {cn}"),
                goal: Goal::AllInside { members, container: c },
                oracle: format!("pick_place(obj=\"{expr}\", target=\"{cn}\")"),
            })
        }
        TaskFamily::ManipulateOldNeighbor => {
            let dir = b.rng.gen_range(0..DIRECTIONS.len());
            let c = b.container(&any)?;
            b.container(&any)?;
            let (fx, fy) = match dir {
                0 => (180.0..400.0, 60.0..540.0),
                1 => (600.0..820.0, 60.0..540.0),
                2 => (60.0..940.0, 200.0..420.0),
                _ => (60.0..940.0, 180.0..400.0),
            };
            let first = b.movable(&any, &any, &|p| fx.contains(&p.x) && fy.contains(&p.y))?;
            let fc = b.get(&first).center();
            let gap = b.rng.gen_range(80.0..120.0);
            let (dx, dy) = [(-gap, 0.0), (gap, 0.0), (0.0, gap), (0.0, -gap)][dir];
            let s = b.movable_size();
            let nb = BBox::centered(Point::new(fc.x + dx, fc.y + dy), s, s);
            if !b.free(&nb) {
                return None;
            }
            let &(shape, name) = MOVABLE.choose(b.rng)?;
            let color = b.pick_color(name, &any)?;
            let neighbor = b.add(name, color, shape, nb, false);
            // keep everything else out of the cone on that side
            let first_obj = b.get(&first).clone();
            let rel = [Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below][dir];
            let outside_cone = move |p: Point| {
                let probe = SceneObject {
                    bbox: first_obj.bbox.moved_to(p),
                    ..first_obj.clone()
                };
                !relation_holds(rel, &probe, &first_obj)
            };
            b.distractors(d, &any, &any, &outside_cone)?;
            let (fnm, cn) = (b.describe(&first), b.describe(&c));
            let rel = DIRECTIONS[dir];
            let expr = format!("the object that was {rel} the {fnm}");
            Some(Draft {
                instruction: format!("put the {fnm} into the {cn}, then put {expr} into the same container"),
                goal: Goal::OldNeighbor {
                    first,
                    neighbor,
                    container: c,
                },
                oracle: format!(
                    "detect(obj=\"{expr}\", label=\"old neighbor\")\n\
                     pick_place(obj=\"{fnm}\", target=\"{cn}\")\n\
                     pick_place(obj=\"old neighbor\", target=\"{cn}\")"
                ),
            })
        }
        TaskFamily::PickInOrderThenRestore => {
            let c1 = b.container(&any)?;
            let c2 = b.container(&any)?;
            let c3 = b.container(&any)?;
            let obj = b.movable_inside(&c1, &any)?;
            b.distractors(d, &any, &any, &any)?;
            let (on, n2, n3) = (b.describe(&obj), b.describe(&c2), b.describe(&c3));
            Some(Draft {
                instruction: format!(
                    "put the {on} into the {n2}, then into the {n3}, then restore it to its original container"
                ),
                goal: Goal::Route {
                    obj,
                    route: vec![c2, c3, c1],
                },
                oracle: format!(
                    "detect(obj=\"the container holding the {on}\", label=\"original container\")\n\
                     pick_place(obj=\"{on}\", target=\"{n2}\")\n\
                     pick_place(obj=\"{on}\", target=\"{n3}\")\n\
                     pick_place(obj=\"{on}\", target=\"original container\")"
                ),
            })
        }
        TaskFamily::InterferingManipulation => {
            let c = b.container(&any)?;
            b.container(&any)?;
            let interferer = b.movable_inside(&c, &any)?;
            let obj = b.movable(&any, &any, &any)?;
            b.distractors(d, &any, &any, &any)?;
            let (on, cn) = (b.describe(&obj), b.describe(&c));
            Some(Draft {
                instruction: format!("clear the {cn}, then put the {on} into it"),
                goal: Goal::Interfering {
                    obj,
                    container: c,
                    interferer,
                },
                oracle: format!(
                    "distract(obj=\"the object in the {cn}\")\n\
                     pick_place(obj=\"{on}\", target=\"{cn}\")"
                ),
            })
        }
        TaskFamily::Rotate => {
            b.container(&any)?;
            let obj = b.movable(&any, &any, &any)?;
            b.distractors(d, &any, &any, &any)?;
            let degrees = *[30, 45, 60, 90, 120, 135, 150, 180].choose(b.rng)?;
            let on = b.describe(&obj);
            Some(Draft {
                instruction: format!("rotate the {on} by {degrees} degrees"),
                goal: Goal::Rotated {
                    obj,
                    degrees: f64::from(degrees),
                },
                oracle: format!("rotate(obj=\"{on}\", degrees={degrees})"),
            })
        }
        TaskFamily::Rearrange => {
            let c1 = b.container(&any)?;
            let c2 = b.container(&any)?;
            // start swapped so both moves are needed
            let a = b.movable_inside(&c2, &any)?;
            let bb = b.movable_inside(&c1, &any)?;
            b.distractors(d, &any, &any, &any)?;
            let (an, bn, n1, n2) = (b.describe(&a), b.describe(&bb), b.describe(&c1), b.describe(&c2));
            Some(Draft {
                instruction: format!("rearrange the scene so that the {an} is in the {n1} and the {bn} is in the {n2}"),
                goal: Goal::AllPlaced {
                    pairs: vec![(a, c1), (bb, c2)],
                },
                oracle: format!(
                    "pick_place(obj=\"{an}\", target=\"{n1}\")\n\
                     pick_place(obj=\"{bn}\", target=\"{n2}\")"
                ),
            })
        }
        TaskFamily::SceneUnderstanding => {
            let c = b.container(&any)?;
            b.container(&any)?;
            let mut idx: Vec<usize> = (0..TOOLS.len()).collect();
            idx.shuffle(b.rng);
            let tool = b.tool(idx[0])?;
            for &i in &idx[1..3] {
                b.tool(i)?;
            }
            b.distractors(d, &any, &any, &any)?;
            let (_, verb, thing) = TOOLS[idx[0]];
            let expr = format!("the object that can {verb} the {thing}");
            let cn = b.describe(&c);
            Some(Draft {
                instruction: format!("put {expr} into the {cn}"),
                goal: Goal::Inside {
                    obj: tool,
                    container: c,
                },
                oracle: format!("pick_place(obj=\"{expr}\", target=\"{cn}\")"),
            })
        }
    }
}

/// Every referenced name in the oracle must ground to exactly one object,
/// except the quantified `all ...` references.
fn references_unique(scene: &Scene, plan: &PlanProgram) -> bool {
    plan.steps().iter().all(|step| {
        step.args.iter().all(|(name, value)| {
            let Some(text) = value.as_str() else { return true };
            if name == "label" || text.ends_with("neighbor") || text.ends_with("original container") {
                return true;
            }
            match ReferenceExpr::parse(text) {
                Ok(e) if e.plural => true,
                Ok(e) => resolve_reference(scene, &e).is_ok_and(|v| v.len() == 1),
                Err(_) => false,
            }
        })
    })
}

/// Seeded scene and task. Scenes are resampled until the oracle plan
/// succeeds and the untouched scene does not.
pub fn generate_task_with(family: TaskFamily, seed: u64, distractors: usize) -> Result<(Scene, TaskSpec), TaskError> {
    let rng_seed = seed_for(family, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut b = Builder::new(&mut rng);
        let Some(d) = draft(family, &mut b, distractors) else {
            continue;
        };
        let scene = Scene::new(b.objects, rng_seed);
        let task = TaskSpec {
            family,
            seed,
            instruction: d.instruction,
            goal: d.goal,
            distractors,
            oracle_plan: d.oracle,
        };
        if scene.validate().is_err() {
            continue;
        }
        let oracle = task.oracle();
        if !references_unique(&scene, &oracle) {
            continue;
        }
        let (fin, log, outcome) = execute_plan(&scene, &oracle);
        if outcome != Outcome::Completed || !is_success(&task, &scene, &fin, &log) {
            continue;
        }
        if is_success(&task, &scene, &scene, &ActionLog::default()) {
            continue;
        }
        return Ok((scene, task));
    }
    Err(TaskError::GenerationFailed { family, seed })
}

pub fn generate_task(family: TaskFamily, seed: u64) -> Result<(Scene, TaskSpec), TaskError> {
    generate_task_with(family, seed, DEFAULT_DISTRACTORS)
}
