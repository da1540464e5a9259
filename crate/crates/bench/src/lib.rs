//! Shared fixtures for the criterion benches.

use ramp_core::{generate_task, Codebase, Query, TaskFamily};

/// One instruction per task family, taken from seed 0.
pub fn family_queries() -> Vec<Query> {
    TaskFamily::ALL
        .iter()
        .map(|f| {
            let (_, task) = generate_task(*f, 0).expect("task generates");
            Query::new(task.instruction).expect("non-empty instruction")
        })
        .collect()
}

/// The distractor corpus replicated `times` over, with unique ids.
pub fn scaled_codebase(times: usize) -> Codebase {
    let base = Codebase::with_distractors();
    let entries = (0..times)
        .flat_map(|i| {
            base.iter().map(move |e| {
                let mut e = e.clone();
                e.id = format!("{}-{i}", e.id);
                e
            })
        })
        .collect();
    Codebase::from_entries(entries).expect("ids are unique")
}
