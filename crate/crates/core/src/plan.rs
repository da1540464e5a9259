//! The plan DSL: a flat sequence of API calls, one per line.
//!
//! ```text
//! # comments and blank lines are ignored, as are ``` fences
//! detect(obj="the container holding the red block", label="start")
//! pick_place(obj="red block", target="green bowl")
//! rotate(obj="L-shaped block", degrees=120)
//! ```
//!
//! Every call must name a function from the signature table and pass every
//! declared argument exactly once, by keyword. String arguments carry
//! referential expressions untouched; resolving them is the simulator's job.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SIGNATURES_JSON: &str = include_str!("../data/signatures.json");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("line {line}: syntax error at `{token}`: {reason}")]
    Syntax { line: usize, token: String, reason: String },
    #[error("line {line}: unknown api `{name}`")]
    UnknownApi { line: usize, name: String },
    #[error("line {line}: bad argument `{arg}` for `{api}`: {reason}")]
    Arg {
        line: usize,
        api: String,
        arg: String,
        reason: String,
    },
    #[error("plan contains no steps")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiName {
    PickPlace,
    Rotate,
    Sweep,
    Push,
    Detect,
    Distract,
}

impl ApiName {
    pub const ALL: [ApiName; 6] = [
        ApiName::PickPlace,
        ApiName::Rotate,
        ApiName::Sweep,
        ApiName::Push,
        ApiName::Detect,
        ApiName::Distract,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ApiName::PickPlace => "pick_place",
            ApiName::Rotate => "rotate",
            ApiName::Sweep => "sweep",
            ApiName::Push => "push",
            ApiName::Detect => "detect",
            ApiName::Distract => "distract",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == name)
    }
}

impl fmt::Display for ApiName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    /// Non-empty referential expression (or a detected label).
    Ref,
    /// Non-empty identifier bound by `detect`.
    Label,
    Number,
    /// One of [`DIRECTIONS`].
    Direction,
}

pub const DIRECTIONS: [&str; 4] = ["left", "right", "up", "down"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ArgType,
    pub doc: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSpec {
    pub name: String,
    pub doc: String,
    pub args: Vec<ArgSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureTable {
    pub version: u32,
    pub apis: Vec<ApiSpec>,
}

impl SignatureTable {
    pub fn parse(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// The shipped table, parsed once.
    pub fn builtin() -> &'static SignatureTable {
        static TABLE: OnceLock<SignatureTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let table = Self::parse(SIGNATURES_JSON).expect("shipped signature table is valid");
            for api in &table.apis {
                assert!(ApiName::parse(&api.name).is_some(), "unknown api {} in table", api.name);
            }
            table
        })
    }

    pub fn get(&self, api: ApiName) -> Option<&ApiSpec> {
        self.apis.iter().find(|a| a.name == api.as_str())
    }

    /// Python-style stubs used in the prompt preamble.
    pub fn render_docs(&self) -> String {
        let mut out = String::new();
        for api in &self.apis {
            let params: Vec<String> = api
                .args
                .iter()
                .map(|a| {
                    let ty = match a.ty {
                        ArgType::Ref | ArgType::Label | ArgType::Direction => "str",
                        ArgType::Number => "float",
                    };
                    format!("{}: {}", a.name, ty)
                })
                .collect();
            out.push_str(&format!("def {}({}) -> None:\n", api.name, params.join(", ")));
            out.push_str(&format!("    \"\"\"{}\n\n", api.doc));
            out.push_str("    Args:\n");
            for a in &api.args {
                out.push_str(&format!("        {}: {}\n", a.name, a.doc));
            }
            out.push_str("    \"\"\"\n\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Str(String),
    Num(f64),
}

impl ArgValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            ArgValue::Str(s) => Some(s),
            ArgValue::Num(_) => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            ArgValue::Num(n) => Some(*n),
            ArgValue::Str(_) => None,
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            ArgValue::Num(n) => write!(f, "{}", format_number(*n)),
        }
    }
}

/// Integral values render without a fractional part.
pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// One call. Arguments are stored in signature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub api: ApiName,
    pub args: Vec<(String, ArgValue)>,
}

impl PlanStep {
    pub fn arg(&self, name: &str) -> Option<&ArgValue> {
        self.args.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn str_arg(&self, name: &str) -> Option<&str> {
        self.arg(name).and_then(ArgValue::as_str)
    }

    pub fn num_arg(&self, name: &str) -> Option<f64> {
        self.arg(name).and_then(ArgValue::as_num)
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.api)?;
        for (i, (name, value)) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}={value}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProgram {
    steps: Vec<PlanStep>,
}

impl PlanProgram {
    /// Validates every step against the built-in signature table.
    pub fn new(steps: Vec<PlanStep>) -> Result<Self, PlanError> {
        if steps.is_empty() {
            return Err(PlanError::Empty);
        }
        let table = SignatureTable::builtin();
        let mut checked = Vec::with_capacity(steps.len());
        for (i, step) in steps.into_iter().enumerate() {
            let args: Vec<_> = step.args.into_iter().collect();
            checked.push(typecheck(table, i + 1, step.api, args)?);
        }
        Ok(Self { steps: checked })
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&step.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn parse_plan(text: &str) -> Result<PlanProgram, PlanError> {
    parse_plan_with(text, SignatureTable::builtin())
}

pub fn parse_plan_with(text: &str, table: &SignatureTable) -> Result<PlanProgram, PlanError> {
    let mut steps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("```") {
            continue;
        }
        let (api, args) = parse_call(line, line_no)?;
        let api_name = ApiName::parse(&api).ok_or_else(|| PlanError::UnknownApi {
            line: line_no,
            name: api.clone(),
        })?;
        steps.push(typecheck(table, line_no, api_name, args)?);
    }
    if steps.is_empty() {
        return Err(PlanError::Empty);
    }
    Ok(PlanProgram { steps })
}

fn typecheck(
    table: &SignatureTable,
    line: usize,
    api: ApiName,
    args: Vec<(String, ArgValue)>,
) -> Result<PlanStep, PlanError> {
    let spec = table.get(api).ok_or_else(|| PlanError::UnknownApi {
        line,
        name: api.to_string(),
    })?;
    let arg_err = |arg: &str, reason: &str| PlanError::Arg {
        line,
        api: api.to_string(),
        arg: arg.to_string(),
        reason: reason.to_string(),
    };
    let mut given: BTreeMap<String, ArgValue> = BTreeMap::new();
    for (name, value) in args {
        if !spec.args.iter().any(|a| a.name == name) {
            return Err(arg_err(&name, "unknown argument"));
        }
        if given.insert(name.clone(), value).is_some() {
            return Err(arg_err(&name, "given more than once"));
        }
    }
    let mut ordered = Vec::with_capacity(spec.args.len());
    for a in &spec.args {
        let value = given.remove(&a.name).ok_or_else(|| arg_err(&a.name, "missing"))?;
        match (a.ty, &value) {
            (ArgType::Number, ArgValue::Num(n)) if n.is_finite() => {}
            (ArgType::Number, _) => return Err(arg_err(&a.name, "expected a number")),
            (ArgType::Ref | ArgType::Label, ArgValue::Str(s)) if !s.trim().is_empty() => {}
            (ArgType::Ref | ArgType::Label, ArgValue::Str(_)) => return Err(arg_err(&a.name, "must not be empty")),
            (ArgType::Direction, ArgValue::Str(s)) if DIRECTIONS.contains(&s.as_str()) => {}
            (ArgType::Direction, _) => return Err(arg_err(&a.name, "expected one of left, right, up, down")),
            (_, ArgValue::Num(_)) => return Err(arg_err(&a.name, "expected a string")),
        }
        ordered.push((a.name.clone(), value));
    }
    Ok(PlanStep { api, args: ordered })
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn rest_token(&self) -> String {
        let rest = &self.src[self.pos..];
        let Some(first) = rest.chars().next() else {
            return "<end of line>".to_string();
        };
        let word: String = rest
            .chars()
            .take_while(|c| !c.is_whitespace() && !matches!(c, ',' | ')' | '('))
            .collect();
        if word.is_empty() {
            first.to_string()
        } else {
            word
        }
    }

    fn error(&self, reason: &str) -> PlanError {
        PlanError::Syntax {
            line: self.line,
            token: self.rest_token(),
            reason: reason.to_string(),
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(self.src[start..self.pos].to_string())
    }

    fn expect(&mut self, want: char, reason: &str) -> Result<(), PlanError> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(reason))
        }
    }

    fn string(&mut self) -> Result<String, PlanError> {
        let quote = self.bump().expect("caller checked quote");
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string")),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some(c @ ('"' | '\'' | '\\')) => out.push(c),
                    _ => return Err(self.error("invalid escape")),
                },
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<f64, PlanError> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.bump();
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.bump();
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.error("invalid number")
        })
    }
}

fn parse_call(line: &str, line_no: usize) -> Result<(String, Vec<(String, ArgValue)>), PlanError> {
    let mut cur = Cursor {
        src: line,
        pos: 0,
        line: line_no,
    };
    let name = cur.ident().ok_or_else(|| cur.error("expected a function name"))?;
    cur.expect('(', "expected `(` after function name")?;
    let mut args = Vec::new();
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.bump();
    } else {
        loop {
            cur.skip_ws();
            let arg = cur.ident().ok_or_else(|| cur.error("expected keyword argument name"))?;
            cur.expect('=', "arguments must be passed as name=value")?;
            cur.skip_ws();
            let value = match cur.peek() {
                Some('"' | '\'') => ArgValue::Str(cur.string()?),
                Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => ArgValue::Num(cur.number()?),
                _ => return Err(cur.error("expected a string or number")),
            };
            args.push((arg, value));
            cur.skip_ws();
            match cur.bump() {
                Some(',') => continue,
                Some(')') => break,
                _ => {
                    return Err(PlanError::Syntax {
                        line: line_no,
                        token: line[cur.pos.saturating_sub(1)..].chars().take(12).collect(),
                        reason: "expected `,` or `)`".into(),
                    })
                }
            }
        }
    }
    cur.skip_ws();
    if cur.peek() == Some(';') {
        cur.bump();
        cur.skip_ws();
    }
    match cur.peek() {
        None | Some('#') => Ok((name, args)),
        Some(_) => Err(cur.error("unexpected trailing text")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanWarning {
    pub step: usize,
    pub message: String,
}

/// Non-fatal lints over a parsed program.
pub fn validate_plan(p: &PlanProgram, table: &SignatureTable) -> Vec<PlanWarning> {
    let mut warnings = Vec::new();
    let ref_args = |step: &PlanStep| -> Vec<String> {
        let spec = table.get(step.api);
        step.args
            .iter()
            .filter(|(name, _)| {
                spec.and_then(|s| s.args.iter().find(|a| &a.name == name))
                    .is_some_and(|a| a.ty == ArgType::Ref)
            })
            .filter_map(|(_, v)| v.as_str().map(|s| s.trim().to_lowercase()))
            .collect()
    };
    let mut used: BTreeSet<String> = BTreeSet::new();
    for step in p.steps() {
        used.extend(ref_args(step));
    }
    for (i, step) in p.steps().iter().enumerate() {
        let n = i + 1;
        if i > 0 && p.steps()[i - 1] == *step {
            warnings.push(PlanWarning {
                step: n,
                message: "repeated step".into(),
            });
        }
        match step.api {
            ApiName::Rotate if step.num_arg("degrees").is_some_and(|d| d % 360.0 == 0.0) => {
                warnings.push(PlanWarning {
                    step: n,
                    message: "no-op rotation".into(),
                });
            }
            ApiName::Push if step.num_arg("distance").is_some_and(|d| d == 0.0) => {
                warnings.push(PlanWarning {
                    step: n,
                    message: "no-op push".into(),
                });
            }
            ApiName::Detect => {
                let label = step.str_arg("label").unwrap_or_default().trim().to_lowercase();
                let later_use = p.steps()[i + 1..].iter().any(|s| ref_args(s).contains(&label));
                if !later_use {
                    let message = if used.contains(&label) {
                        "detection label used before it is bound"
                    } else {
                        "detect result never used"
                    };
                    warnings.push(PlanWarning {
                        step: n,
                        message: message.into(),
                    });
                }
            }
            _ => {}
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_pick_place() {
        let p = parse_plan(r#"pick_place(obj="red block", target="green container")"#).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.steps()[0].api, ApiName::PickPlace);
        assert_eq!(p.steps()[0].str_arg("obj"), Some("red block"));
        assert_eq!(p.steps()[0].str_arg("target"), Some("green container"));
    }

    #[test]
    fn parses_rotate_number() {
        let p = parse_plan(r#"rotate(obj="L-shaped block", degrees=120)"#).unwrap();
        assert_eq!(p.steps()[0].num_arg("degrees"), Some(120.0));
    }

    #[test]
    fn unknown_api() {
        assert_eq!(
            parse_plan(r#"fly(obj="block")"#),
            Err(PlanError::UnknownApi {
                line: 1,
                name: "fly".into()
            })
        );
    }

    #[test]
    fn ignores_fences_comments_and_blank_lines() {
        let text = "```python\n# move it\n\npick_place(obj='a', target=\"b\")  # trailing\n```\n";
        let p = parse_plan(text).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.steps()[0].str_arg("obj"), Some("a"));
    }

    #[test]
    fn arg_errors_carry_line_and_name() {
        let text = "\nrotate(obj=\"a\")";
        match parse_plan(text) {
            Err(PlanError::Arg { line, api, arg, .. }) => {
                assert_eq!((line, api.as_str(), arg.as_str()), (2, "rotate", "degrees"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_plan(r#"rotate(obj="a", degrees="ninety")"#),
            Err(PlanError::Arg { .. })
        ));
        assert!(matches!(
            parse_plan(r#"pick_place(obj="", target="b")"#),
            Err(PlanError::Arg { .. })
        ));
        assert!(matches!(
            parse_plan(r#"push(obj="a", direction="north", distance=3)"#),
            Err(PlanError::Arg { .. })
        ));
        assert!(matches!(
            parse_plan(r#"distract(obj="a", obj="b")"#),
            Err(PlanError::Arg { .. })
        ));
    }

    #[test]
    fn syntax_errors() {
        match parse_plan("pick_place(\"a\", \"b\")") {
            Err(PlanError::Syntax { line: 1, token, .. }) => assert!(token.starts_with('"')),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_plan("rotate(obj=\"a\", degrees=90"),
            Err(PlanError::Syntax { .. })
        ));
        assert!(matches!(
            parse_plan("x = rotate(obj=\"a\", degrees=90)"),
            Err(PlanError::Syntax { .. })
        ));
        assert_eq!(parse_plan("# nothing\n"), Err(PlanError::Empty));
    }

    #[test]
    fn lints() {
        let table = SignatureTable::builtin();
        let ok = parse_plan(
            "detect(obj=\"the container holding the red block\", label=\"start\")\npick_place(obj=\"red block\", target=\"start\")",
        )
        .unwrap();
        assert!(validate_plan(&ok, table).is_empty());

        let noop = parse_plan("rotate(obj=\"a\", degrees=0)").unwrap();
        assert_eq!(validate_plan(&noop, table)[0].message, "no-op rotation");

        let rep = parse_plan("distract(obj=\"a\")\ndistract(obj=\"a\")").unwrap();
        let w = validate_plan(&rep, table);
        assert_eq!(
            w,
            vec![PlanWarning {
                step: 2,
                message: "repeated step".into()
            }]
        );

        let unused = parse_plan("detect(obj=\"a\", label=\"x\")\ndistract(obj=\"b\")").unwrap();
        assert_eq!(validate_plan(&unused, table)[0].message, "detect result never used");
    }

    #[test]
    fn docs_render_every_api() {
        let docs = SignatureTable::builtin().render_docs();
        for api in ApiName::ALL {
            assert!(docs.contains(&format!("def {}(", api)));
        }
    }

    fn arb_step() -> impl Strategy<Value = PlanStep> {
        let text = "[a-zA-Z0-9 \"'\\\\,()=#-]{1,20}".prop_filter("non-blank", |s: &String| !s.trim().is_empty());
        let num = prop_oneof![(-720i32..720).prop_map(f64::from), -1e4f64..1e4];
        let dir = prop::sample::select(DIRECTIONS.to_vec());
        prop_oneof![
            (text.clone(), text.clone()).prop_map(|(o, t)| PlanStep {
                api: ApiName::PickPlace,
                args: vec![("obj".into(), ArgValue::Str(o)), ("target".into(), ArgValue::Str(t))],
            }),
            (text.clone(), num.clone()).prop_map(|(o, d)| PlanStep {
                api: ApiName::Rotate,
                args: vec![("obj".into(), ArgValue::Str(o)), ("degrees".into(), ArgValue::Num(d))],
            }),
            (text.clone(), dir, num).prop_map(|(o, d, n)| PlanStep {
                api: ApiName::Push,
                args: vec![
                    ("obj".into(), ArgValue::Str(o)),
                    ("direction".into(), ArgValue::Str(d.to_string())),
                    ("distance".into(), ArgValue::Num(n)),
                ],
            }),
            text.prop_map(|o| PlanStep {
                api: ApiName::Distract,
                args: vec![("obj".into(), ArgValue::Str(o))],
            }),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(steps in prop::collection::vec(arb_step(), 1..6)) {
            let program = PlanProgram::new(steps).unwrap();
            let reparsed = parse_plan(&program.render()).unwrap();
            prop_assert_eq!(reparsed, program);
        }
    }
}
