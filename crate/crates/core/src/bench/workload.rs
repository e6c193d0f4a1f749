use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::path::NormPath;

/// Average file size of the synthetic corpus, in bytes.
pub const DEFAULT_MEAN_SIZE: u64 = 36_000;

const MAX_FILE_SIZE: u64 = 4 << 20;

/// Shape of a synthetic source tree: many small files spread over a
/// balanced directory hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub files: usize,
    /// Files per directory and subdirectories per directory.
    pub fanout: usize,
    pub mean_size: u64,
    /// Shape of the lognormal size distribution.
    pub size_sigma: f64,
    /// Share of file slots that become symlinks to a sibling.
    pub symlink_fraction: f64,
    pub seed: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload { files: 1000, fanout: 16, mean_size: DEFAULT_MEAN_SIZE, size_sigma: 1.0, symlink_fraction: 0.0, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanEntry {
    Dir { path: NormPath },
    File { path: NormPath, size: u64, content_seed: u64 },
    Symlink { path: NormPath, target: String },
}

impl PlanEntry {
    pub fn path(&self) -> &NormPath {
        match self {
            PlanEntry::Dir { path } | PlanEntry::File { path, .. } | PlanEntry::Symlink { path, .. } => path,
        }
    }
}

/// The entries of a generated tree in creation order: every directory
/// precedes its contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub dest: NormPath,
    pub entries: Vec<PlanEntry>,
}

impl Plan {
    pub fn dirs(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, PlanEntry::Dir { .. })).count()
    }

    pub fn files(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, PlanEntry::File { .. })).count()
    }

    pub fn symlinks(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, PlanEntry::Symlink { .. })).count()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries
            .iter()
            .map(|e| match e {
                PlanEntry::File { size, .. } => *size,
                _ => 0,
            })
            .sum()
    }
}

/// Deterministic file content.
pub fn file_content(content_seed: u64, size: u64) -> Vec<u8> {
    let mut buf = vec![0u8; size as usize];
    ChaCha8Rng::seed_from_u64(content_seed).fill_bytes(&mut buf);
    buf
}

impl Workload {
    pub fn with_files(files: usize) -> Self {
        Workload { files, ..Workload::default() }
    }

    /// Directories below `dest`; `dest` itself holds the first batch of
    /// files.
    pub fn dir_count(&self) -> usize {
        self.files.div_ceil(self.fanout.max(1)).saturating_sub(1)
    }

    /// Entry count of the generated tree, `dest` excluded.
    pub fn entry_count(&self) -> usize {
        self.files + self.dir_count()
    }

    /// Lays the tree out below `dest`. Directory `i` (with 0 being `dest`)
    /// has parent `(i - 1) / fanout`, and holds file slots
    /// `i * fanout .. (i + 1) * fanout`.
    pub fn plan(&self, dest: &NormPath) -> Plan {
        let fanout = self.fanout.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sigma = self.size_sigma.max(0.0);
        let mu = (self.mean_size.max(1) as f64).ln() - sigma * sigma / 2.0;
        let sizes = LogNormal::new(mu, sigma).expect("finite parameters");

        let n_dirs = self.dir_count() + usize::from(self.files > 0);
        let mut dirs: Vec<NormPath> = Vec::with_capacity(n_dirs);
        let mut entries = Vec::with_capacity(self.entry_count());
        for i in 0..n_dirs {
            if i == 0 {
                dirs.push(dest.clone());
                continue;
            }
            let parent = &dirs[(i - 1) / fanout];
            let path = parent.join(&format!("d{i:05}")).expect("valid name");
            dirs.push(path.clone());
            entries.push(PlanEntry::Dir { path });
        }
        for (i, dir) in dirs.iter().enumerate() {
            let start = i * fanout;
            let end = ((i + 1) * fanout).min(self.files);
            let mut last_file: Option<String> = None;
            for j in start..end {
                let name = format!("f{j:06}");
                let path = dir.join(&name).expect("valid name");
                let link = last_file.is_some() && rng.random_bool(self.symlink_fraction.clamp(0.0, 1.0));
                if link {
                    entries.push(PlanEntry::Symlink { path, target: last_file.clone().expect("checked") });
                } else {
                    let size = (sizes.sample(&mut rng).round() as u64).min(MAX_FILE_SIZE);
                    entries.push(PlanEntry::File { path, size, content_seed: rng.random() });
                    last_file = Some(name);
                }
            }
        }
        Plan { dest: dest.clone(), entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::p;

    #[test]
    fn zero_files_zero_entries() {
        let w = Workload::with_files(0);
        assert_eq!(w.dir_count(), 0);
        assert!(w.plan(&p("/x")).entries.is_empty());
    }

    #[test]
    fn counts_follow_fanout() {
        let w = Workload::with_files(1000);
        let plan = w.plan(&p("/x"));
        assert_eq!(plan.files(), 1000);
        // 1000 files in batches of 16 need 63 directories, one of which is
        // the destination itself.
        assert_eq!(plan.dirs(), 62);
        assert_eq!(plan.entries.len(), w.entry_count());
    }

    #[test]
    fn parents_precede_children() {
        let plan = Workload { files: 500, fanout: 4, ..Workload::default() }.plan(&p("/x"));
        let mut seen = std::collections::HashSet::new();
        seen.insert(p("/x"));
        for e in &plan.entries {
            assert!(seen.contains(&e.path().parent().unwrap()), "{e:?}");
            seen.insert(e.path().clone());
        }
    }

    #[test]
    fn mean_size_near_target() {
        let plan = Workload { files: 20_000, ..Workload::default() }.plan(&p("/x"));
        let mean = plan.total_bytes() as f64 / plan.files() as f64;
        assert!((mean - 36_000.0).abs() < 3_000.0, "{mean}");
    }

    #[test]
    fn symlinks_point_at_earlier_siblings() {
        let plan = Workload { files: 200, symlink_fraction: 0.3, ..Workload::default() }.plan(&p("/x"));
        assert!(plan.symlinks() > 20);
        assert_eq!(plan.files() + plan.symlinks(), 200);
        for e in &plan.entries {
            if let PlanEntry::Symlink { path, target } = e {
                let sibling = path.parent().unwrap().join(target).unwrap();
                assert!(plan.entries.iter().any(|x| x.path() == &sibling));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let w = Workload::with_files(300);
        assert_eq!(w.plan(&p("/x")), w.plan(&p("/x")));
        let other = Workload { seed: 2, ..w.clone() };
        assert_ne!(w.plan(&p("/x")), other.plan(&p("/x")));
        assert_eq!(file_content(5, 64), file_content(5, 64));
    }
}
