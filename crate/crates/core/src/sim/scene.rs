use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Table extent in millimetres. `x` grows to the right, `y` grows away
/// from the robot (towards the top of the rendered image).
pub const TABLE_WIDTH: f64 = 1000.0;
pub const TABLE_DEPTH: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Axis-aligned box, `min` inclusive corner to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn centered(c: Point, w: f64, h: f64) -> Self {
        Self::new(c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x1 > self.x0 && self.y1 > self.y0
    }

    pub fn center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    pub fn overlaps(&self, other: &BBox, margin: f64) -> bool {
        self.x0 - margin < other.x1
            && other.x0 - margin < self.x1
            && self.y0 - margin < other.y1
            && other.y0 - margin < self.y1
    }

    pub fn moved_to(&self, c: Point) -> BBox {
        BBox::centered(c, self.width(), self.height())
    }

    pub fn within_table(&self) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= TABLE_WIDTH && self.y1 <= TABLE_DEPTH
    }

    /// Shifts the box by the smallest amount that puts it on the table.
    pub fn clamped_to_table(&self) -> BBox {
        let dx = if self.x0 < 0.0 {
            -self.x0
        } else if self.x1 > TABLE_WIDTH {
            TABLE_WIDTH - self.x1
        } else {
            0.0
        };
        let dy = if self.y0 < 0.0 {
            -self.y0
        } else if self.y1 > TABLE_DEPTH {
            TABLE_DEPTH - self.y1
        } else {
            0.0
        };
        BBox::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }
}

macro_rules! word_enum {
    ($name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $word),+ }
            }

            pub fn parse(word: &str) -> Option<Self> {
                match word { $($word => Some($name::$variant),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

word_enum!(Color {
    Red => "red",
    Orange => "orange",
    Yellow => "yellow",
    Green => "green",
    Blue => "blue",
    Purple => "purple",
    Pink => "pink",
    Brown => "brown",
    Gray => "gray",
});

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Orange => [245, 140, 30],
            Color::Yellow => [240, 220, 40],
            Color::Green => [50, 170, 70],
            Color::Blue => [40, 90, 220],
            Color::Purple => [140, 60, 190],
            Color::Pink => [240, 130, 190],
            Color::Brown => [130, 80, 40],
            Color::Gray => [130, 130, 130],
        }
    }
}

word_enum!(Shape {
    Square => "square",
    LShape => "l_shape",
    Cube => "cube",
    Star => "star",
    Heart => "heart",
    Ring => "ring",
    Triangle => "triangle",
    Cross => "cross",
    Bowl => "bowl",
    Pan => "pan",
    Tray => "tray",
    Box => "box",
    Tool => "tool",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    /// Category noun phrase, e.g. `block`, `L-shaped block`, `bowl`.
    pub name: String,
    pub color: Color,
    pub shape: Shape,
    pub bbox: BBox,
    #[serde(default)]
    pub receptacle: bool,
    /// Degrees, normalized to `[0, 360)`.
    #[serde(default)]
    pub orientation: f64,
    /// Capability facts such as `repair -> television`.
    #[serde(default)]
    pub properties: BTreeMap<String, String>,
}

impl SceneObject {
    pub fn center(&self) -> Point {
        self.bbox.center()
    }

    /// `"<color> <name>"`, unique per generated scene for referenced objects.
    pub fn description(&self) -> String {
        format!("{} {}", self.color, self.name)
    }

    /// Head noun of the category, e.g. `block` for `L-shaped block`.
    pub fn head_noun(&self) -> &str {
        self.name.rsplit(' ').next().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub rng_seed: u64,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, rng_seed: u64) -> Self {
        Self { objects, rng_seed }
    }

    pub fn get(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn containers(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.receptacle)
    }

    /// True when the object's center lies inside the container's box.
    pub fn is_inside(&self, obj: &str, container: &str) -> bool {
        match (self.get(obj), self.get(container)) {
            (Some(o), Some(c)) if c.receptacle && o.id != c.id => c.bbox.contains(o.center()),
            _ => false,
        }
    }

    /// Ids of movable objects whose centers are inside `container`.
    pub fn contents(&self, container: &str) -> Vec<String> {
        self.objects
            .iter()
            .filter(|o| !o.receptacle && self.is_inside(&o.id, container))
            .map(|o| o.id.clone())
            .collect()
    }

    /// Structured text snapshot.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                return Err(format!("duplicate object id {}", o.id));
            }
            if !o.bbox.is_valid() || !o.bbox.within_table() {
                return Err(format!("object {} has an invalid or off-table box", o.id));
            }
        }
        Ok(())
    }
}
