use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (train|val|test)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn get(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Seeded 70:20:10 partition: `floor(0.7n)` train, `floor(0.2n)` val, the
/// remainder test.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<Split> {
    let n = ids.len();
    if n < 10 {
        return Err(Error::Data(format!("need at least 10 items to split, got {n}")));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 7 / 10;
    let n_val = n * 2 / 10;
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok(Split { train: shuffled, val, test })
}

pub fn write_splits(dir: &Path, split: &Split) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for name in SplitName::ALL {
        let path = dir.join(format!("{name}.txt"));
        let body: String = split.get(name).iter().map(|id| format!("{id}\n")).collect();
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_split(dir: &Path, name: SplitName) -> Result<Vec<String>> {
    let path = dir.join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("img_{i:04}")).collect()
    }

    #[test]
    fn six_hundred_and_minimal_splits() {
        let s = split_dataset(&ids(600), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (420, 120, 60));
        let s = split_dataset(&ids(10), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 1));
        assert!(split_dataset(&ids(9), 1).is_err());
    }

    #[test]
    fn deterministic_disjoint_exhaustive() {
        for n in 10..=1000 {
            let all = ids(n);
            let s = split_dataset(&all, n as u64).unwrap();
            assert_eq!(s, split_dataset(&all, n as u64).unwrap());
            assert_eq!((s.train.len(), s.val.len()), (n * 7 / 10, n * 2 / 10));
            let union: HashSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
            assert_eq!(union.len(), n);
        }
    }
}
