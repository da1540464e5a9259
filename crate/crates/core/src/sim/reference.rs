//! Grounding referential expressions against a [`Scene`].
//!
//! Four categories are recognized by grammar:
//!
//! * by name: `the red block`, `all bowls`
//! * by attribute: `all the objects with the same color of the blue cube`
//! * by spatial relation: `the yellow block in the middle of the blue blocks`
//! * by knowledge: `an object capable of repairing the television`
//!
//! The top-level category is decided by the earliest marker phrase in the
//! expression (longest match wins at equal positions); anchors on the right
//! of a marker are parsed recursively.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scene::{Color, Scene, SceneObject, Shape};

/// Lateral tolerance for "in the middle of", millimetres.
pub const MIDDLE_TOLERANCE_MM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ReferenceError {
    #[error("cannot parse reference `{0}`")]
    Unparseable(String),
    #[error("no object matches `{0}`")]
    UnresolvableReference(String),
    #[error("anchor `{0}` matches more than one object")]
    AmbiguousAnchor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Color,
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
    MiddleOf,
    Nearest,
    Inside,
    Holding,
}

impl Relation {
    pub fn inverse(self) -> Option<Relation> {
        match self {
            Relation::LeftOf => Some(Relation::RightOf),
            Relation::RightOf => Some(Relation::LeftOf),
            Relation::Above => Some(Relation::Below),
            Relation::Below => Some(Relation::Above),
            Relation::Inside => Some(Relation::Holding),
            Relation::Holding => Some(Relation::Inside),
            Relation::MiddleOf | Relation::Nearest => None,
        }
    }
}

const RELATION_PHRASES: &[(&str, Relation)] = &[
    ("in the middle of", Relation::MiddleOf),
    ("between", Relation::MiddleOf),
    ("to the left of", Relation::LeftOf),
    ("on the left of", Relation::LeftOf),
    ("at the left of", Relation::LeftOf),
    ("left of", Relation::LeftOf),
    ("to the right of", Relation::RightOf),
    ("on the right of", Relation::RightOf),
    ("at the right of", Relation::RightOf),
    ("right of", Relation::RightOf),
    ("above", Relation::Above),
    ("at the top of", Relation::Above),
    ("to the top of", Relation::Above),
    ("below", Relation::Below),
    ("under", Relation::Below),
    ("beneath", Relation::Below),
    ("at the bottom of", Relation::Below),
    ("to the bottom of", Relation::Below),
    ("nearest to", Relation::Nearest),
    ("closest to", Relation::Nearest),
    ("next to", Relation::Nearest),
    ("inside of", Relation::Inside),
    ("inside", Relation::Inside),
    ("within", Relation::Inside),
    ("in", Relation::Inside),
    ("that holds", Relation::Holding),
    ("that contains", Relation::Holding),
    ("holding", Relation::Holding),
    ("containing", Relation::Holding),
];

const KNOWLEDGE_PHRASES: &[&str] = &[
    "capable of",
    "that can",
    "which can",
    "that is able to",
    "able to",
    "used to",
    "used for",
];

const ATTRIBUTE_CONNECTORS: &[&str] = &["with", "that have", "that has", "having", "of", "in"];

const GENERIC_NOUNS: &[&str] = &["object", "thing", "item", "one", "everything", "anything"];
const INVARIANT_PLURALS: &[&str] = &["scissors", "pliers", "tongs", "glasses"];
const HEAD_FILLERS: &[&str] = &[
    "that",
    "which",
    "who",
    "was",
    "is",
    "are",
    "were",
    "located",
    "placed",
    "sitting",
    "lying",
    "originally",
    "initially",
];

/// `[color] noun`, where the noun may be generic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub color: Option<Color>,
    /// Singular form, or `None` for generic nouns such as `object`.
    pub noun: Option<String>,
    pub plural: bool,
}

impl NounPhrase {
    fn parse(text: &str) -> Result<Self, ReferenceError> {
        let mut words: Vec<&str> = text.split_whitespace().collect();
        while let Some(w) = words.first() {
            if matches!(*w, "the" | "a" | "an" | "all" | "any" | "every" | "each" | "of") {
                words.remove(0);
            } else {
                break;
            }
        }
        let mut color = None;
        if let Some(c) = words.first().and_then(|w| Color::parse(w)) {
            color = Some(c);
            words.remove(0);
        }
        if words.is_empty() {
            return if color.is_some() {
                Ok(Self {
                    color,
                    noun: None,
                    plural: false,
                })
            } else {
                Err(ReferenceError::Unparseable(text.to_string()))
            };
        }
        let phrase = words.join(" ");
        let last = *words.last().expect("non-empty");
        let plural = is_plural(last);
        let singular_last = if plural { singularize(last) } else { last.to_string() };
        if GENERIC_NOUNS.contains(&singular_last.as_str()) && words.len() == 1 {
            return Ok(Self {
                color,
                noun: None,
                plural,
            });
        }
        let noun = if plural {
            let mut w: Vec<String> = words[..words.len() - 1].iter().map(|s| s.to_string()).collect();
            w.push(singular_last);
            w.join(" ")
        } else {
            phrase
        };
        Ok(Self {
            color,
            noun: Some(noun),
            plural,
        })
    }

    pub fn matches(&self, obj: &SceneObject) -> bool {
        if self.color.is_some_and(|c| c != obj.color) {
            return false;
        }
        match self.noun.as_deref() {
            None => true,
            Some("container") | Some("receptacle") => obj.receptacle,
            Some("tool") => obj.shape == Shape::Tool,
            Some(noun) => {
                let name = obj.name.to_lowercase();
                name == noun || name.ends_with(&format!(" {noun}"))
            }
        }
    }
}

fn is_plural(word: &str) -> bool {
    word.len() > 2 && word.ends_with('s') && !word.ends_with("ss") && !INVARIANT_PLURALS.contains(&word)
}

fn singularize(word: &str) -> String {
    if word.ends_with("xes") || word.ends_with("ches") || word.ends_with("shes") {
        word[..word.len() - 2].to_string()
    } else {
        word[..word.len() - 1].to_string()
    }
}

/// `-ing` form of a base verb, for matching `capable of <gerund>`.
pub fn gerund(verb: &str) -> String {
    let chars: Vec<char> = verb.chars().collect();
    let is_vowel = |c: char| "aeiou".contains(c);
    let n = chars.len();
    if let Some(stem) = verb.strip_suffix("ie") {
        return format!("{stem}ying");
    }
    if verb.ends_with('e') && !verb.ends_with("ee") && n > 2 {
        return format!("{}ing", &verb[..verb.len() - 1]);
    }
    let vowel_groups = chars
        .iter()
        .enumerate()
        .filter(|(i, c)| is_vowel(**c) && (*i == 0 || !is_vowel(chars[i - 1])))
        .count();
    if n >= 3
        && vowel_groups == 1
        && !is_vowel(chars[n - 1])
        && !"wxy".contains(chars[n - 1])
        && is_vowel(chars[n - 2])
        && !is_vowel(chars[n - 3])
    {
        return format!("{verb}{}ing", chars[n - 1]);
    }
    format!("{verb}ing")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedRef {
    ByName(NounPhrase),
    ByAttribute {
        head: NounPhrase,
        attribute: Attribute,
        anchor: Box<ReferenceExpr>,
    },
    BySpatial {
        head: NounPhrase,
        relation: Relation,
        anchor: Box<ReferenceExpr>,
    },
    ByKnowledge {
        head: NounPhrase,
        verb: String,
        object: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExpr {
    pub text: String,
    pub parsed: ParsedRef,
    /// True when the expression asks for every match (`all ...`, plural noun).
    pub plural: bool,
}

impl fmt::Display for ReferenceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Lowercase, drop trailing punctuation, collapse whitespace.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let trimmed = lowered.trim().trim_end_matches(['.', '!', '?', ',', ';']);
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

enum Marker {
    Relation(Relation),
    Knowledge,
    Attribute(Attribute),
}

/// Whole-word occurrences of `phrase` in `s` (byte offsets).
fn find_words(s: &str, phrase: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(i) = s[from..].find(phrase) {
        let start = from + i;
        let end = start + phrase.len();
        let left_ok = start == 0 || s.as_bytes()[start - 1] == b' ';
        let right_ok = end == s.len() || s.as_bytes()[end] == b' ';
        if left_ok && right_ok && start > 0 {
            out.push(start);
        }
        from = start + 1;
    }
    out
}

impl ReferenceExpr {
    pub fn parse(text: &str) -> Result<Self, ReferenceError> {
        let norm = normalize(text);
        if norm.is_empty() {
            return Err(ReferenceError::Unparseable(text.to_string()));
        }
        let mut body = norm.as_str();
        let mut quantified = false;
        for prefix in ["all of the ", "all the ", "all ", "every ", "each "] {
            if let Some(rest) = body.strip_prefix(prefix) {
                body = rest;
                quantified = true;
                break;
            }
        }
        for det in ["the ", "an ", "a "] {
            if let Some(rest) = body.strip_prefix(det) {
                body = rest;
                break;
            }
        }

        // earliest marker, longest at equal positions
        let mut best: Option<(usize, usize, Marker)> = None;
        let mut consider = |start: usize, len: usize, marker: Marker| {
            let better = match &best {
                None => true,
                Some((s, l, _)) => start < *s || (start == *s && len > *l),
            };
            if better {
                best = Some((start, len, marker));
            }
        };
        for (phrase, rel) in RELATION_PHRASES {
            if let Some(&pos) = find_words(body, phrase).first() {
                consider(pos, phrase.len(), Marker::Relation(*rel));
            }
        }
        for phrase in KNOWLEDGE_PHRASES {
            if let Some(&pos) = find_words(body, phrase).first() {
                consider(pos, phrase.len(), Marker::Knowledge);
            }
        }
        for (word, attr) in [
            ("color", Attribute::Color),
            ("colour", Attribute::Color),
            ("shape", Attribute::Shape),
        ] {
            for conn in ATTRIBUTE_CONNECTORS {
                for rel in ["of", "as"] {
                    let phrase = format!("{conn} the same {word} {rel}");
                    if let Some(&pos) = find_words(body, &phrase).first() {
                        consider(pos, phrase.len(), Marker::Attribute(attr));
                    }
                }
            }
        }

        let parsed = match best {
            None => ParsedRef::ByName(NounPhrase::parse(body)?),
            Some((pos, len, marker)) => {
                let head_text = strip_fillers(body[..pos].trim());
                let rest = body[pos + len..].trim();
                if rest.is_empty() {
                    return Err(ReferenceError::Unparseable(text.to_string()));
                }
                let head = if head_text.is_empty() {
                    NounPhrase {
                        color: None,
                        noun: None,
                        plural: quantified,
                    }
                } else {
                    NounPhrase::parse(&head_text)?
                };
                match marker {
                    Marker::Relation(relation) => ParsedRef::BySpatial {
                        head,
                        relation,
                        anchor: Box::new(ReferenceExpr::parse(rest)?),
                    },
                    Marker::Attribute(attribute) => ParsedRef::ByAttribute {
                        head,
                        attribute,
                        anchor: Box::new(ReferenceExpr::parse(rest)?),
                    },
                    Marker::Knowledge => {
                        let mut words = rest.split_whitespace();
                        let verb = words.next().expect("rest non-empty").to_string();
                        let object: Vec<&str> = words.collect();
                        let object = strip_articles(&object.join(" "));
                        ParsedRef::ByKnowledge { head, verb, object }
                    }
                }
            }
        };
        let head_plural = match &parsed {
            ParsedRef::ByName(np) => np.plural,
            ParsedRef::ByAttribute { head, .. }
            | ParsedRef::BySpatial { head, .. }
            | ParsedRef::ByKnowledge { head, .. } => head.plural,
        };
        Ok(Self {
            text: norm,
            plural: quantified || head_plural,
            parsed,
        })
    }

    pub fn category(&self) -> &'static str {
        match self.parsed {
            ParsedRef::ByName(_) => "name",
            ParsedRef::ByAttribute { .. } => "attribute",
            ParsedRef::BySpatial { .. } => "spatial",
            ParsedRef::ByKnowledge { .. } => "knowledge",
        }
    }
}

fn strip_fillers(head: &str) -> String {
    let mut words: Vec<&str> = head.split_whitespace().collect();
    while words.last().is_some_and(|w| HEAD_FILLERS.contains(w)) {
        words.pop();
    }
    words.join(" ")
}

fn strip_articles(s: &str) -> String {
    let mut s = s.trim();
    for det in ["the ", "a ", "an ", "some "] {
        if let Some(rest) = s.strip_prefix(det) {
            s = rest;
        }
    }
    s.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ResolveOptions {
    /// Keep the anchor in "same attribute as the anchor" results.
    pub attribute_includes_anchor: bool,
}

/// Resolves with default options. Results are sorted by object id.
pub fn resolve_reference<'s>(scene: &'s Scene, expr: &ReferenceExpr) -> Result<Vec<&'s SceneObject>, ReferenceError> {
    resolve_reference_with(scene, expr, ResolveOptions::default())
}

pub fn resolve_reference_with<'s>(
    scene: &'s Scene,
    expr: &ReferenceExpr,
    opts: ResolveOptions,
) -> Result<Vec<&'s SceneObject>, ReferenceError> {
    let mut found = resolve_inner(scene, expr, opts)?;
    if found.is_empty() {
        return Err(ReferenceError::UnresolvableReference(expr.text.clone()));
    }
    found.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(found)
}

fn resolve_anchor<'s>(
    scene: &'s Scene,
    anchor: &ReferenceExpr,
    opts: ResolveOptions,
    allow_many: bool,
) -> Result<Vec<&'s SceneObject>, ReferenceError> {
    let anchors = resolve_reference_with(scene, anchor, opts)?;
    if anchors.len() > 1 && !allow_many && !anchor.plural {
        return Err(ReferenceError::AmbiguousAnchor(anchor.text.clone()));
    }
    Ok(anchors)
}

fn resolve_inner<'s>(
    scene: &'s Scene,
    expr: &ReferenceExpr,
    opts: ResolveOptions,
) -> Result<Vec<&'s SceneObject>, ReferenceError> {
    match &expr.parsed {
        ParsedRef::ByName(np) => Ok(scene.objects.iter().filter(|o| np.matches(o)).collect()),
        ParsedRef::ByAttribute {
            head,
            attribute,
            anchor,
        } => {
            let anchors = resolve_anchor(scene, anchor, opts, false)?;
            let same = |o: &SceneObject| {
                anchors.iter().any(|a| match attribute {
                    Attribute::Color => a.color == o.color,
                    Attribute::Shape => a.shape == o.shape,
                })
            };
            Ok(scene
                .objects
                .iter()
                .filter(|o| head.matches(o) && same(o))
                .filter(|o| opts.attribute_includes_anchor || !anchors.iter().any(|a| a.id == o.id))
                .collect())
        }
        ParsedRef::BySpatial { head, relation, anchor } => {
            let anchors = resolve_anchor(scene, anchor, opts, *relation == Relation::MiddleOf)?;
            if *relation == Relation::MiddleOf && anchors.len() < 2 {
                return Err(ReferenceError::UnresolvableReference(expr.text.clone()));
            }
            let candidates = scene
                .objects
                .iter()
                .filter(|o| head.matches(o) && !anchors.iter().any(|a| a.id == o.id));
            if *relation == Relation::Nearest {
                let nearest = candidates.min_by(|a, b| {
                    let da = anchor_distance(a, &anchors);
                    let db = anchor_distance(b, &anchors);
                    da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
                });
                return Ok(nearest.into_iter().collect());
            }
            Ok(candidates.filter(|o| satisfies(*relation, o, &anchors)).collect())
        }
        ParsedRef::ByKnowledge { head, verb, object } => Ok(scene
            .objects
            .iter()
            .filter(|o| head.matches(o))
            .filter(|o| {
                o.properties.iter().any(|(k, v)| {
                    let verb_ok = verb == k || *verb == gerund(k) || *verb == format!("{k}s");
                    verb_ok && strip_articles(&v.to_lowercase()) == *object
                })
            })
            .collect()),
    }
}

fn anchor_distance(o: &SceneObject, anchors: &[&SceneObject]) -> f64 {
    anchors
        .iter()
        .map(|a| o.center().dist(a.center()))
        .fold(f64::INFINITY, f64::min)
}

/// Directional relations use a 90-degree cone around the axis, measured
/// between box centers.
pub fn relation_holds(relation: Relation, target: &SceneObject, anchor: &SceneObject) -> bool {
    let (t, a) = (target.center(), anchor.center());
    let dx = t.x - a.x;
    let dy = t.y - a.y;
    match relation {
        Relation::LeftOf => dx < 0.0 && dy.abs() <= dx.abs(),
        Relation::RightOf => dx > 0.0 && dy.abs() <= dx.abs(),
        Relation::Above => dy > 0.0 && dx.abs() <= dy.abs(),
        Relation::Below => dy < 0.0 && dx.abs() <= dy.abs(),
        Relation::Inside => anchor.receptacle && anchor.bbox.contains(t),
        Relation::Holding => target.receptacle && target.bbox.contains(a),
        Relation::Nearest => true,
        Relation::MiddleOf => false,
    }
}

fn between(target: &SceneObject, a: &SceneObject, b: &SceneObject) -> bool {
    let (t, p, q) = (target.center(), a.center(), b.center());
    let (dx, dy) = (q.x - p.x, q.y - p.y);
    if dx == 0.0 && dy == 0.0 {
        return false;
    }
    if dx.abs() >= dy.abs() {
        let inside = (t.x - p.x) * (t.x - q.x) < 0.0;
        let line_y = p.y + (t.x - p.x) / dx * dy;
        inside && (t.y - line_y).abs() <= MIDDLE_TOLERANCE_MM
    } else {
        let inside = (t.y - p.y) * (t.y - q.y) < 0.0;
        let line_x = p.x + (t.y - p.y) / dy * dx;
        inside && (t.x - line_x).abs() <= MIDDLE_TOLERANCE_MM
    }
}

fn satisfies(relation: Relation, o: &SceneObject, anchors: &[&SceneObject]) -> bool {
    match relation {
        Relation::MiddleOf => anchors
            .iter()
            .enumerate()
            .any(|(i, a)| anchors[i + 1..].iter().any(|b| between(o, a, b))),
        _ => anchors.iter().any(|a| relation_holds(relation, o, a)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{BBox, Point};
    use std::collections::BTreeMap;

    fn obj(id: &str, name: &str, color: Color, shape: Shape, x: f64, y: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            name: name.into(),
            color,
            shape,
            bbox: BBox::centered(Point::new(x, y), 40.0, 40.0),
            receptacle: false,
            orientation: 0.0,
            properties: BTreeMap::new(),
        }
    }

    #[test]
    fn grammar_categories() {
        let cat = |s: &str| ReferenceExpr::parse(s).unwrap().category();
        assert_eq!(cat("the red block"), "name");
        assert_eq!(cat("all the objects with the same color of the blue cube"), "attribute");
        assert_eq!(cat("yellow block in the middle of the blue blocks"), "spatial");
        assert_eq!(cat("the orange block at the bottom of the purple block"), "spatial");
        assert_eq!(cat("an object capable of repairing the television"), "knowledge");
        assert_eq!(cat("the object that can cut paper"), "knowledge");
        assert_eq!(cat("the container holding the red block"), "spatial");
        assert_eq!(cat("the object that was to the left of the red block"), "spatial");
        assert!(ReferenceExpr::parse("  ").is_err());
    }

    #[test]
    fn plurality() {
        assert!(ReferenceExpr::parse("all red blocks").unwrap().plural);
        assert!(ReferenceExpr::parse("the blue blocks").unwrap().plural);
        assert!(!ReferenceExpr::parse("the red block").unwrap().plural);
        assert!(!ReferenceExpr::parse("the scissors").unwrap().plural);
        assert!(!ReferenceExpr::parse("the gray box").unwrap().plural);
        assert!(ReferenceExpr::parse("boxes").unwrap().plural);
    }

    #[test]
    fn gerunds() {
        assert_eq!(gerund("repair"), "repairing");
        assert_eq!(gerund("cut"), "cutting");
        assert_eq!(gerund("write"), "writing");
        assert_eq!(gerund("open"), "opening");
        assert_eq!(gerund("tie"), "tying");
        assert_eq!(gerund("clean"), "cleaning");
    }

    #[test]
    fn head_noun_matches_compound_names() {
        let np = NounPhrase::parse("red block").unwrap();
        assert!(np.matches(&obj("a", "L-shaped block", Color::Red, Shape::LShape, 0.0, 0.0)));
        assert!(!np.matches(&obj("b", "star", Color::Red, Shape::Star, 0.0, 0.0)));
    }

    #[test]
    fn ambiguous_anchor() {
        let scene = Scene::new(
            vec![
                obj("a", "block", Color::Red, Shape::Square, 100.0, 100.0),
                obj("b", "block", Color::Red, Shape::Square, 300.0, 100.0),
                obj("c", "star", Color::Blue, Shape::Star, 50.0, 100.0),
            ],
            0,
        );
        let e = ReferenceExpr::parse("the star to the left of the red block").unwrap();
        assert_eq!(
            resolve_reference(&scene, &e),
            Err(ReferenceError::AmbiguousAnchor("the red block".into()))
        );
        let e = ReferenceExpr::parse("the star left of the red blocks").unwrap();
        assert_eq!(resolve_reference(&scene, &e).unwrap()[0].id, "c");
        let e = ReferenceExpr::parse("the green star").unwrap();
        assert!(matches!(
            resolve_reference(&scene, &e),
            Err(ReferenceError::UnresolvableReference(_))
        ));
    }

    #[test]
    fn nearest_and_inside() {
        let mut bowl = obj("z", "bowl", Color::Green, Shape::Bowl, 500.0, 300.0);
        bowl.bbox = BBox::centered(Point::new(500.0, 300.0), 120.0, 120.0);
        bowl.receptacle = true;
        let scene = Scene::new(
            vec![
                obj("a", "block", Color::Red, Shape::Square, 100.0, 100.0),
                obj("b", "star", Color::Red, Shape::Star, 180.0, 100.0),
                obj("c", "star", Color::Blue, Shape::Star, 400.0, 100.0),
                obj("d", "ring", Color::Pink, Shape::Ring, 510.0, 290.0),
                bowl,
            ],
            0,
        );
        let e = ReferenceExpr::parse("the star nearest to the red block").unwrap();
        assert_eq!(resolve_reference(&scene, &e).unwrap()[0].id, "b");
        let e = ReferenceExpr::parse("the object in the green bowl").unwrap();
        let got: Vec<_> = resolve_reference(&scene, &e)
            .unwrap()
            .iter()
            .map(|o| o.id.clone())
            .collect();
        assert_eq!(got, ["d"]);
        let e = ReferenceExpr::parse("the container holding the pink ring").unwrap();
        assert_eq!(resolve_reference(&scene, &e).unwrap()[0].id, "z");
    }
}
