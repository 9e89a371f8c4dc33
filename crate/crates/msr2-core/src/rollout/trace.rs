//! Trajectory trace files: one JSON trajectory per line, carrying everything
//! needed to replay reward computation offline.

use super::{RolloutError, Trajectory};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub fn write_traces(path: &Path, trajectories: &[Trajectory]) -> Result<(), RolloutError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for trajectory in trajectories {
        serde_json::to_writer(&mut w, trajectory)
            .map_err(|e| RolloutError::Trace(format!("serialization: {e}")))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<Trajectory>, RolloutError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trajectory: Trajectory = serde_json::from_str(&line)
            .map_err(|e| RolloutError::Trace(format!("line {}: {e}", idx + 1)))?;
        out.push(trajectory);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::ScriptedGenerator;
    use crate::retrieval::{build_source, CorpusRecord, HashEmbedder, IndexStrategy, SourceConfig};
    use crate::rollout::{run_rollout, RolloutConfig};
    use crate::retrieval::SourceRegistry;
    use std::sync::Arc;

    #[test]
    fn traces_round_trip() {
        let embedder = Arc::new(HashEmbedder::new(32));
        let source = build_source(
            SourceConfig::new("statutes", IndexStrategy::Lexical, 32),
            vec![CorpusRecord::new("a", "fraud of property")],
            embedder.as_ref(),
        )
        .unwrap();
        let registry = SourceRegistry::builder("statutes", embedder)
            .source(source)
            .build()
            .unwrap();
        let generator = ScriptedGenerator::new(vec![
            "<search>fraud</search>".to_string(),
            "<answer>12</answer>".to_string(),
        ]);
        let t = run_rollout("f", &generator, &registry, &RolloutConfig::default()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.trace");
        write_traces(&path, &[t.clone()]).unwrap();
        let back = read_traces(&path).unwrap();
        assert_eq!(back, vec![t]);
    }
}
