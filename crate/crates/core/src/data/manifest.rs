use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 11 preparation states, in label order.
pub const CLASS_NAMES: [&str; 11] = [
    "creamy_paste",
    "diced",
    "floured",
    "grated",
    "juiced",
    "julienne",
    "mixed",
    "other",
    "peeled",
    "sliced",
    "whole",
];

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Valid];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "val" | "validation" => Ok(Split::Valid),
            other => Err(Error::config(format!("unknown split {other:?}"))),
        }
    }
}

pub fn class_index(name: &str) -> Option<usize> {
    CLASS_NAMES.iter().position(|&c| c == name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Index of a dataset laid out as `<root>/{train,valid}/<class>/<image>`.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<Record>,
    /// Non-fatal findings: empty classes, skipped files.
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> Vec<Record> {
        self.records.iter().filter(|r| r.split == split).cloned().collect()
    }

    /// `counts()[split][label]`.
    pub fn counts(&self) -> [[usize; 11]; 2] {
        let mut out = [[0; 11]; 2];
        for r in &self.records {
            out[r.split as usize][r.label] += 1;
        }
        out
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    /// Plain-text table of per-class and per-split counts plus warnings.
    pub fn summary(&self) -> String {
        let counts = self.counts();
        let mut s = format!("{:<14}{:>8}{:>8}\n", "class", "train", "valid");
        for (i, name) in CLASS_NAMES.iter().enumerate() {
            s += &format!("{name:<14}{:>8}{:>8}\n", counts[0][i], counts[1][i]);
        }
        let totals: Vec<usize> = counts.iter().map(|c| c.iter().sum()).collect();
        s += &format!("{:<14}{:>8}{:>8}\n", "total", totals[0], totals[1]);
        for w in &self.warnings {
            s += &format!("warning: {w}\n");
        }
        s
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        entries.push(entry.path());
    }
    entries.sort();
    Ok(entries)
}

/// Enumerates every decodable image under `root`. Files are ordered by
/// split, then class directory, then file name.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<Manifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::data(format!(
            "dataset root {} does not exist or is not a directory",
            root.display()
        )));
    }
    let mut manifest = Manifest::default();
    for split in Split::ALL {
        let split_dir = root.join(split.dir_name());
        if !split_dir.is_dir() {
            return Err(Error::data(format!(
                "missing split directory {}",
                split_dir.display()
            )));
        }
        let mut seen = [false; 11];
        for class_dir in sorted_entries(&split_dir)? {
            let name = class_dir.file_name().unwrap().to_string_lossy().into_owned();
            if !class_dir.is_dir() {
                manifest
                    .warnings
                    .push(format!("ignoring non-directory {}", class_dir.display()));
                continue;
            }
            let label = class_index(&name).ok_or_else(|| {
                Error::Manifest(format!(
                    "unknown class directory {name:?} in {} (expected one of {})",
                    split_dir.display(),
                    CLASS_NAMES.join(", ")
                ))
            })?;
            seen[label] = true;
            let mut found = 0;
            for file in sorted_entries(&class_dir)? {
                if !file.is_file() || !is_image(&file) {
                    continue;
                }
                if let Err(e) = image::image_dimensions(&file) {
                    manifest
                        .warnings
                        .push(format!("skipping undecodable {}: {e}", file.display()));
                    continue;
                }
                manifest.records.push(Record {
                    path: file,
                    label,
                    split,
                });
                found += 1;
            }
            if found == 0 {
                manifest
                    .warnings
                    .push(format!("class {name} in {split} has no images"));
            }
        }
        for (i, present) in seen.iter().enumerate() {
            if !present {
                manifest
                    .warnings
                    .push(format!("class {} missing from {split}", CLASS_NAMES[i]));
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png(path: &Path) {
        image::RgbImage::from_pixel(4, 4, image::Rgb([10, 20, 30]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn enumerates_fixture_tree() {
        let dir = tempfile::tempdir().unwrap();
        for split in ["train", "valid"] {
            for class in ["diced", "whole"] {
                let d = dir.path().join(split).join(class);
                fs::create_dir_all(&d).unwrap();
                if split == "train" {
                    for i in 0..3 {
                        png(&d.join(format!("{i}.png")));
                    }
                }
            }
        }
        fs::write(dir.path().join("train/diced/notes.txt"), "x").unwrap();
        fs::write(dir.path().join("train/diced/broken.jpg"), "not a jpeg").unwrap();
        let m = scan_dataset(dir.path()).unwrap();
        assert_eq!(m.records.len(), 6);
        assert!(m.records[..3].iter().all(|r| r.label == 1));
        assert!(m.records[3..].iter().all(|r| r.label == 10));
        assert_eq!(m.counts()[0][1], 3);
        assert!(m.warnings.iter().any(|w| w.contains("broken.jpg")));
        assert!(m.warnings.iter().any(|w| w.contains("valid has no images")));
    }

    #[test]
    fn unknown_class_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("train/minced")).unwrap();
        fs::create_dir_all(dir.path().join("valid")).unwrap();
        let err = scan_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Manifest(_)));
        assert!(err.to_string().contains("minced"));
    }

    #[test]
    fn missing_root_is_data_error() {
        let err = scan_dataset("/nonexistent/cooking").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("/nonexistent/cooking"));
    }

    #[test]
    fn class_table_is_exact() {
        assert_eq!(CLASS_NAMES.len(), 11);
        assert_eq!(class_index("creamy_paste"), Some(0));
        assert_eq!(class_index("whole"), Some(10));
        assert_eq!(class_index("minced"), None);
    }
}
