#![allow(dead_code)]

use std::path::{Path, PathBuf};

use convertest_core::exec::{ExecMode, ExecutorConfig};
use convertest_core::model::{Generator, Strategy, Task};
use convertest_core::pipeline::{ProviderMode, RunConfig};
use convertest_core::provider::{GenContext, MockProvider, MockScript, PromptSet, Sampling};

pub fn minibench() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/minibench")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Mini-benchmark config for the given ablation point with M=N=Z=3.
pub fn bench_config(strategy: Strategy, generator: Generator) -> RunConfig {
    RunConfig {
        strategy,
        generator,
        m: 3,
        n: 3,
        z: 3,
        provider: ProviderMode::Mock,
        mock_script: Some(minibench().join("mock.json")),
        oracle: Some(minibench().join("oracle.json")),
        executor: ExecutorConfig { mode: ExecMode::Simulated, worker_count: 4, ..ExecutorConfig::default() },
        ..RunConfig::default()
    }
}

pub fn task(id: &str, entry_point: &str) -> Task {
    Task {
        task_id: id.into(),
        description: format!("Description of {entry_point}."),
        entry_point: entry_point.into(),
        signature: format!("def {entry_point}(x):"),
        setup_code: None,
        ground_truth: None,
    }
}

pub fn with_mock<R>(script: MockScript, f: impl FnOnce(&GenContext<'_>) -> R) -> R {
    let provider = MockProvider::new(script);
    let prompts = PromptSet::default();
    let ctx = GenContext { provider: &provider, prompts: &prompts, sampling: Sampling::default(), model_id: "mock".into() };
    f(&ctx)
}

pub fn fenced(code: &str) -> String {
    format!("```python\n{code}\n```")
}
