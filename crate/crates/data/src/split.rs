use std::collections::BTreeSet;
use std::path::Path;

use ct2mr_tensor::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{DataError, Result};

/// Assignment of subject ids to K test folds; pairwise disjoint and
/// jointly covering every subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSplit {
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldSplit {
    pub fn load(path: impl AsRef<Path>) -> Result<FoldSplit> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::IoAt {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| DataError::IoAt {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(())
    }

    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn test_subjects(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    /// Complement of the test fold, in split order.
    pub fn train_subjects(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != fold)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .collect()
    }

    /// Fold whose test set contains `subject`, if any.
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|ids| ids.iter().any(|s| s == subject))
    }

    /// Check disjointness and exact coverage of `subjects`.
    pub fn validate_over(&self, subjects: &[String]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for ids in &self.folds {
            for id in ids {
                if !seen.insert(id.clone()) {
                    return Err(DataError::Split(format!(
                        "subject '{id}' appears in more than one test fold"
                    )));
                }
            }
        }
        let expected: BTreeSet<String> = subjects.iter().cloned().collect();
        if seen != expected {
            let missing: Vec<_> = expected.difference(&seen).cloned().collect();
            let extra: Vec<_> = seen.difference(&expected).cloned().collect();
            return Err(DataError::Split(format!(
                "fold coverage mismatch: missing {missing:?}, unknown {extra:?}"
            )));
        }
        Ok(())
    }
}

/// Shuffle subjects by seed and partition into K near-equal test folds.
pub fn kfold_by_subject(subject_ids: &[String], k: usize, seed: u64) -> Result<FoldSplit> {
    if k == 0 {
        return Err(DataError::Split("fold count must be >= 1".to_string()));
    }
    if subject_ids.len() < k {
        return Err(DataError::Split(format!(
            "{} subjects cannot fill {k} folds",
            subject_ids.len()
        )));
    }
    let unique: BTreeSet<&String> = subject_ids.iter().collect();
    if unique.len() != subject_ids.len() {
        return Err(DataError::Split("duplicate subject ids".to_string()));
    }

    let mut ids = subject_ids.to_vec();
    let mut stream = rng::stream(rng::derive(seed, &[0x5F]));
    ids.shuffle(&mut stream);

    let n = ids.len();
    let base = n / k;
    let remainder = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0usize;
    for fold in 0..k {
        let take = base + usize::from(fold < remainder);
        folds.push(ids[cursor..cursor + take].to_vec());
        cursor += take;
    }
    Ok(FoldSplit { seed, folds })
}
