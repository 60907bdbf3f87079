//! Shared workloads for the criterion benches.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use structverify::bench::{load_snapshots, load_suite, SuiteError, TaskKind, TaskSpec};
use structverify::fixtures::{odb_index, odb_schema};
use structverify::retrieval::CorpusIndex;
use structverify::runtime::DesignDb;
use structverify::schema::ApiSchema;

/// The bundled suite directory.
pub fn suite_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/suite")
}

/// Schema, corpus, tasks and snapshots for the bundled OpenDB suite.
pub struct Workload {
    pub schema: Arc<ApiSchema>,
    pub index: CorpusIndex,
    pub tasks: Vec<TaskSpec>,
    pub snapshots: BTreeMap<String, DesignDb>,
}

impl Workload {
    pub fn odb() -> Result<Workload, SuiteError> {
        let schema = odb_schema();
        let dir = suite_dir();
        let tasks = load_suite(&dir)?;
        let snapshots = load_snapshots(&tasks, &dir, &schema)?;
        Ok(Workload { schema: Arc::new(schema), index: odb_index(), tasks, snapshots })
    }

    /// Prompts of the single-step tasks that carry no fault plan.
    pub fn clean_prompts(&self) -> Vec<&str> {
        self.tasks
            .iter()
            .filter(|t| t.kind == TaskKind::Single && t.fault.is_none())
            .filter_map(|t| t.prompt.as_deref())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_workload_loads() {
        let w = Workload::odb().unwrap();
        assert!(w.tasks.len() >= 50);
        assert!(w.clean_prompts().len() >= 20);
        assert!(w.snapshots.contains_key("synthetic:gcd"));
    }
}
