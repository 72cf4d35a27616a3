use std::fs;
use std::path::{Path, PathBuf};

use crate::pgm;
use crate::preprocess::GrayImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Index into [`Dataset::labels`].
    pub label: usize,
    pub image: GrayImage,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    /// Class labels, sorted; the position is the output neuron index.
    pub labels: Vec<String>,
    pub samples: Vec<Sample>,
    /// Files that could not be read, with the reason.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = fs::read_dir(dir)
        .map_err(|e| Error::from(e).in_file(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    paths.sort();
    Ok(paths)
}

/// Loads a directory-per-class tree of PGM files. Labels are directory
/// names, taken verbatim; classes and files are visited in lexicographic
/// order. Unreadable files are skipped and listed in `warnings`.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let entries = sorted_entries(root)?;
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_dirs: Vec<PathBuf> = entries.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::NoClasses(root.to_path_buf()));
    }

    let mut ds = Dataset::default();
    for dir in class_dirs {
        let Some(label) = dir.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            ds.warnings
                .push(format!("{}: directory name is not UTF-8", dir.display()));
            continue;
        };
        let mut images = Vec::new();
        for file in sorted_entries(&dir)? {
            if !file.is_file() {
                continue;
            }
            match pgm::read(&file) {
                Ok(img) => images.push((img, file)),
                Err(e) => ds.warnings.push(e.to_string()),
            }
        }
        if images.is_empty() {
            continue;
        }
        let index = ds.labels.len();
        ds.labels.push(label);
        ds.samples
            .extend(images.into_iter().map(|(image, path)| Sample {
                label: index,
                image,
                source: Some(path),
            }));
    }
    if ds.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ds)
}
