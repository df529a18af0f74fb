//! Dictionary snapshots: `m x k` CSV plus a JSON sidecar.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dictionary, LearnerConfig, LearnerState};
use crate::error::{check_len, Result};
use crate::harness::io::{read_json, read_matrix_csv, write_json, write_matrix_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub m: usize,
    pub k: usize,
    pub beta_d: Option<usize>,
    pub element_ages: Vec<usize>,
    pub element_ids: Vec<u64>,
    pub config: LearnerConfig,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_snapshot(csv_path: &Path, state: &LearnerState) -> Result<()> {
    let d = state.dictionary();
    write_matrix_csv(csv_path, d.atoms())?;
    let meta = SnapshotMeta {
        m: d.m(),
        k: d.k(),
        beta_d: state.config().beta_d,
        element_ages: d.ages().to_vec(),
        element_ids: d.ids().to_vec(),
        config: state.config().clone(),
    };
    write_json(&sidecar_path(csv_path), &meta)
}

pub fn read_snapshot(csv_path: &Path) -> Result<(Dictionary, SnapshotMeta)> {
    let meta: SnapshotMeta = read_json(&sidecar_path(csv_path))?;
    let atoms = if meta.k == 0 {
        Array2::zeros((meta.m, 0))
    } else {
        read_matrix_csv(csv_path)?
    };
    check_len(meta.m, atoms.nrows(), "snapshot rows vs sidecar m")?;
    check_len(meta.k, atoms.ncols(), "snapshot columns vs sidecar k")?;
    let dict = Dictionary::from_parts(atoms, meta.element_ages.clone(), meta.element_ids.clone())?;
    Ok((dict, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Variant;

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = LearnerConfig {
            beta_d: Some(3),
            variant: Variant::Odl,
            ..Default::default()
        };
        let st = LearnerState::new(9, 4, &config).unwrap();
        let p = dir.path().join("dictionary.csv");
        write_snapshot(&p, &st).unwrap();
        let (dict, meta) = read_snapshot(&p).unwrap();
        assert_eq!(&dict, st.dictionary());
        assert_eq!(meta.k, 4);
        assert_eq!(meta.config, *st.config());

        let empty = LearnerState::new(5, 0, &config).unwrap();
        write_snapshot(&p, &empty).unwrap();
        let (dict, _) = read_snapshot(&p).unwrap();
        assert_eq!((dict.m(), dict.k()), (5, 0));
    }
}
