//! Deterministic offline stand-in for the language model.
//!
//! As a generator it reads the demonstrations in the prompt, turns each
//! demo instruction into a pattern whose holes are the argument values the
//! demo code copies from it, and instantiates the code of the best matching
//! demo with the task's words. As a rewriter it strips politeness fluff.
//! It knows nothing about the simulator; a demo that does not match the task
//! contributes nothing.

use regex::Regex;

use super::{ChatRequest, CompletionBackend, GatewayError};
use crate::plan::{format_number, parse_plan, ArgValue, PlanProgram, PlanStep};

/// Marker line that ends the rewriter template.
pub const REWRITE_MARKER: &str = "Rewritten instruction:";
const DEMO_PREFIX: &str = "# Instruction: ";
const TASK_PREFIX: &str = "# Task: ";

const FLUFF: &[&str] = &[
    "please",
    "could you",
    "can you",
    "would you",
    "kindly",
    "i want you to",
    "i would like you to",
    "go ahead and",
    "now",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct ImitationBackend;

impl CompletionBackend for ImitationBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let text = req.text();
        if text.contains(TASK_PREFIX) {
            Ok(imitate_plan(&text))
        } else if text.contains(REWRITE_MARKER) {
            Ok(imitate_rewrite(&text))
        } else {
            Err(GatewayError::BadResponse(
                "prompt is neither a plan nor a rewrite request".into(),
            ))
        }
    }
}

/// Last `Instruction:` line of a rewriter prompt, minus fluff.
pub fn imitate_rewrite(prompt: &str) -> String {
    let raw = prompt
        .lines()
        .filter_map(|l| l.strip_prefix("Instruction:"))
        .next_back()
        .unwrap_or("")
        .trim();
    let mut s = raw.trim_end_matches(['.', '!', '?']).trim().to_string();
    loop {
        let lower = s.to_lowercase();
        let Some(f) = FLUFF
            .iter()
            .find(|f| lower.starts_with(*f) && lower[f.len()..].starts_with([' ', ',']))
        else {
            break;
        };
        s = s[f.len()..].trim_start_matches([' ', ',']).to_string();
    }
    for tail in [", please", " please", ", thanks", " thanks", " thank you"] {
        if s.to_lowercase().ends_with(tail) {
            s.truncate(s.len() - tail.len());
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Demo {
    instruction: String,
    code: String,
}

fn split_prompt(prompt: &str) -> (Vec<Demo>, Option<String>) {
    let mut demos: Vec<Demo> = Vec::new();
    let mut task = None;
    let mut in_demo = false;
    for line in prompt.lines() {
        if let Some(instr) = line.strip_prefix(DEMO_PREFIX) {
            demos.push(Demo {
                instruction: instr.trim().to_string(),
                code: String::new(),
            });
            in_demo = true;
        } else if let Some(t) = line.strip_prefix(TASK_PREFIX) {
            task = Some(t.trim().to_string());
            in_demo = false;
        } else if in_demo {
            let d = demos.last_mut().expect("inside a demo");
            d.code.push_str(line);
            d.code.push('\n');
        }
    }
    (demos, task)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Byte offsets of whole-word occurrences of `needle` in `hay`.
fn word_occurrences(hay: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    hay.match_indices(needle)
        .filter(|(i, _)| {
            let before = hay[..*i].chars().next_back();
            let after = hay[i + needle.len()..].chars().next();
            !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone)]
struct Slot {
    value: String,
    numeric: bool,
}

fn slots_of(plan: &PlanProgram, instruction: &str) -> Vec<Slot> {
    let mut slots: Vec<Slot> = Vec::new();
    for step in plan.steps() {
        for (_, v) in &step.args {
            let (value, numeric) = match v {
                ArgValue::Str(s) => (s.clone(), false),
                ArgValue::Num(n) => (format_number(*n), true),
            };
            if !word_occurrences(instruction, &value).is_empty() && !slots.iter().any(|s| s.value == value) {
                slots.push(Slot { value, numeric });
            }
        }
    }
    slots.sort_by(|a, b| b.value.len().cmp(&a.value.len()).then_with(|| a.value.cmp(&b.value)));
    slots
}

struct Pattern {
    regex: Regex,
    /// Slot index for each capture group.
    groups: Vec<usize>,
    literal_len: usize,
}

fn build_pattern(instruction: &str, slots: &[Slot]) -> Option<Pattern> {
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (si, slot) in slots.iter().enumerate() {
        for start in word_occurrences(instruction, &slot.value) {
            let end = start + slot.value.len();
            if spans.iter().all(|&(s, e, _)| end <= s || start >= e) {
                spans.push((start, end, si));
            }
        }
    }
    spans.sort();
    let mut pat = String::new();
    let mut groups = Vec::new();
    let mut literal_len = 0;
    let mut at = 0;
    for (s, e, si) in spans {
        pat.push_str(&regex::escape(&instruction[at..s]));
        literal_len += s - at;
        pat.push_str(if slots[si].numeric {
            r"(-?\d+(?:\.\d+)?)"
        } else {
            "(.+?)"
        });
        groups.push(si);
        at = e;
    }
    pat.push_str(&regex::escape(&instruction[at..]));
    literal_len += instruction.len() - at;
    pat.push('$');
    Some(Pattern {
        regex: Regex::new(&pat).ok()?,
        groups,
        literal_len,
    })
}

/// Replaces whole-word slot values inside `s` in one left-to-right pass.
fn substitute(s: &str, bindings: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut i = 0;
    'outer: while i < s.len() {
        for (from, to) in bindings {
            if s[i..].starts_with(from.as_str()) {
                let before = s[..i].chars().next_back();
                let after = s[i + from.len()..].chars().next();
                if !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char) {
                    out.push_str(to);
                    i += from.len();
                    continue 'outer;
                }
            }
        }
        let c = s[i..].chars().next().expect("in bounds");
        out.push(c);
        i += c.len_utf8();
    }
    out
}

fn instantiate(demo: &Demo, task: &str) -> Option<(usize, String)> {
    let plan = parse_plan(&demo.code).ok()?;
    let slots = slots_of(&plan, &demo.instruction);
    let pattern = build_pattern(&demo.instruction, &slots)?;
    let caps = pattern.regex.captures(task)?;
    let mut bound: Vec<Option<String>> = vec![None; slots.len()];
    for (gi, &si) in pattern.groups.iter().enumerate() {
        let text = caps.get(gi + 1)?.as_str().to_string();
        match &bound[si] {
            Some(prev) if *prev != text => return None,
            _ => bound[si] = Some(text),
        }
    }
    let bindings: Vec<(String, String)> = slots
        .iter()
        .zip(bound)
        .filter_map(|(s, b)| b.map(|b| (s.value.clone(), b)))
        .collect();
    let steps = plan
        .steps()
        .iter()
        .map(|step| {
            let args = step
                .args
                .iter()
                .map(|(name, v)| {
                    let v = match v {
                        ArgValue::Str(s) => ArgValue::Str(substitute(s, &bindings)),
                        ArgValue::Num(n) => {
                            let key = format_number(*n);
                            match bindings.iter().find(|(from, _)| *from == key) {
                                Some((_, to)) => ArgValue::Num(to.parse().ok()?),
                                None => ArgValue::Num(*n),
                            }
                        }
                    };
                    Some((name.clone(), v))
                })
                .collect::<Option<Vec<_>>>()?;
            Some(PlanStep { api: step.api, args })
        })
        .collect::<Option<Vec<_>>>()?;
    let program = PlanProgram::new(steps).ok()?;
    Some((pattern.literal_len, program.render().trim_end().to_string()))
}

/// Plan text for the `# Task:` line of a generator prompt.
pub fn imitate_plan(prompt: &str) -> String {
    let (demos, task) = split_prompt(prompt);
    let task = task.unwrap_or_default();
    let task = task.trim_end_matches(['.', '!', '?']);
    let best = demos
        .iter()
        .enumerate()
        .filter_map(|(i, d)| instantiate(d, task).map(|(len, code)| (len, i, code)))
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    match best {
        Some((_, _, code)) => code,
        None => demos.last().map(|d| d.code.trim_end().to_string()).unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(demos: &[(&str, &str)], task: &str) -> String {
        let mut s = String::from("import robot\n");
        for (i, c) in demos {
            s.push_str(&format!("{DEMO_PREFIX}{i}\n{c}\n"));
        }
        s.push_str(&format!("{TASK_PREFIX}{task}"));
        s
    }

    #[test]
    fn copies_slots_from_task() {
        let p = prompt(
            &[
                (
                    "rotate the red block by 90 degrees",
                    "rotate(obj=\"red block\", degrees=90)",
                ),
                (
                    "put the blue star into the green bowl",
                    "pick_place(obj=\"blue star\", target=\"green bowl\")",
                ),
            ],
            "rotate the yellow L-shaped block by 135 degrees",
        );
        assert_eq!(imitate_plan(&p), "rotate(obj=\"yellow L-shaped block\", degrees=135)");
    }

    #[test]
    fn derived_arguments_follow_their_slots() {
        let p = prompt(
            &[(
                "clear the green bowl, then put the red heart into it",
                "distract(obj=\"the object in the green bowl\")\npick_place(obj=\"red heart\", target=\"green bowl\")",
            )],
            "clear the gray pan, then put the blue cube into it",
        );
        assert_eq!(
            imitate_plan(&p),
            "distract(obj=\"the object in the gray pan\")\npick_place(obj=\"blue cube\", target=\"gray pan\")"
        );
    }

    #[test]
    fn unmatched_demos_fall_back_to_the_last_one() {
        let p = prompt(
            &[(
                "push the cube to the left",
                "push(obj=\"cube\", direction=\"left\", distance=100)",
            )],
            "rotate the red block by 90 degrees",
        );
        assert_eq!(imitate_plan(&p), "push(obj=\"cube\", direction=\"left\", distance=100)");
    }

    #[test]
    fn rewrite_strips_fluff() {
        let p = "Example:\nInstruction: x\nInstruction: Please could you put the red block into the bowl, thanks.\nRewritten instruction:";
        assert_eq!(imitate_rewrite(p), "put the red block into the bowl");
    }
}
