//! On-disk dataset layout: `root/images/*.png` with optional
//! `root/labels/*.png` paired by file stem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, load_mask, save_image, save_mask, BinaryMask, GrayImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub image: PathBuf,
    pub label: Option<PathBuf>,
}

impl Entry {
    pub fn stem(&self) -> String {
        self.image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub domain_id: String,
    pub root: PathBuf,
    pub entries: Vec<Entry>,
    pub role: Role,
}

fn png_stems(dir: &Path, root: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for item in rd {
        let path = item.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if !is_png || !path.is_file() {
            continue;
        }
        let stem = path
            .file_stem()
            .ok_or_else(|| Error::Dataset {
                root: root.to_path_buf(),
                reason: format!("bad file name {}", path.display()),
            })?
            .to_string_lossy()
            .into_owned();
        out.insert(stem, path);
    }
    Ok(out)
}

/// Indexes a dataset directory. Entries are sorted by file stem. The role is
/// `Source` when every image has a label and `Target` otherwise; use
/// [`DatasetIndex::with_role`] to treat a labeled set as a target.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let images_dir = root.join("images");
    if !images_dir.is_dir() {
        return Err(Error::Dataset {
            root: root.to_path_buf(),
            reason: "missing images/ directory".into(),
        });
    }
    let images = png_stems(&images_dir, root)?;
    if images.is_empty() {
        return Err(Error::Dataset {
            root: root.to_path_buf(),
            reason: "images/ holds no PNG files".into(),
        });
    }
    let labels_dir = root.join("labels");
    let labels = if labels_dir.is_dir() {
        png_stems(&labels_dir, root)?
    } else {
        BTreeMap::new()
    };
    if let Some(orphan) = labels.keys().find(|k| !images.contains_key(*k)) {
        return Err(Error::Dataset {
            root: root.to_path_buf(),
            reason: format!("label `{orphan}` has no matching image"),
        });
    }
    let entries: Vec<Entry> = images
        .into_iter()
        .map(|(stem, image)| Entry {
            image,
            label: labels.get(&stem).cloned(),
        })
        .collect();
    let role = if entries.iter().all(|e| e.label.is_some()) {
        Role::Source
    } else {
        Role::Target
    };
    let domain_id = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| root.display().to_string());
    Ok(DatasetIndex {
        domain_id,
        root: root.to_path_buf(),
        entries,
        role,
    })
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.entries.iter().all(|e| e.label.is_some())
    }

    /// Changes the role. Asking for `Source` on a partially labeled set fails.
    pub fn with_role(mut self, role: Role) -> Result<Self> {
        if role == Role::Source && !self.is_fully_labeled() {
            return Err(Error::Dataset {
                root: self.root.clone(),
                reason: "source entries must carry labels".into(),
            });
        }
        self.role = role;
        Ok(self)
    }

    pub fn load_images<T: Scalar>(&self) -> Result<Vec<GrayImage<T>>> {
        self.entries.iter().map(|e| load_image(&e.image)).collect()
    }

    /// Loads image/label pairs; fails on the first unlabeled entry.
    pub fn load_labeled<T: Scalar>(&self) -> Result<Vec<(GrayImage<T>, BinaryMask)>> {
        self.entries
            .iter()
            .map(|e| {
                let label = e.label.as_ref().ok_or_else(|| Error::Dataset {
                    root: self.root.clone(),
                    reason: format!("entry `{}` has no label", e.stem()),
                })?;
                let img = load_image::<T>(&e.image)?;
                let mask = load_mask(label)?;
                if !img.same_dims(&mask.to_image::<T>()) {
                    return Err(Error::shape(
                        format!("{}x{}", img.width(), img.height()),
                        format!("{}x{} label", mask.width(), mask.height()),
                    ));
                }
                Ok((img, mask))
            })
            .collect()
    }
}

/// File stem used for the `i`-th generated sample.
pub fn sample_stem(i: usize) -> String {
    format!("img_{i:04}")
}

/// Writes pairs as `root/images/img_NNNN.png`, `root/labels/img_NNNN.png`.
pub fn write_dataset<T: Scalar>(
    root: impl AsRef<Path>,
    samples: &[(GrayImage<T>, BinaryMask)],
    with_labels: bool,
) -> Result<()> {
    let root = root.as_ref();
    for (i, (img, mask)) in samples.iter().enumerate() {
        let stem = sample_stem(i);
        save_image(img, root.join("images").join(format!("{stem}.png")))?;
        if with_labels {
            save_mask(mask, root.join("labels").join(format!("{stem}.png")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(v: f32) -> (GrayImage<f32>, BinaryMask) {
        (
            GrayImage::filled(4, 4, v).unwrap(),
            BinaryMask::from_fn(4, 4, |x, _| x == 1),
        )
    }

    #[test]
    fn labeled_set_is_source() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[pair(0.1), pair(0.2), pair(0.3)], true).unwrap();
        let idx = load_dataset(dir.path()).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.role, Role::Source);
        assert!(idx.entries.iter().all(|e| e.label.is_some()));
        assert_eq!(idx.load_labeled::<f32>().unwrap().len(), 3);
    }

    #[test]
    fn unlabeled_set_is_target() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[pair(0.1), pair(0.2), pair(0.3)], false).unwrap();
        let idx = load_dataset(dir.path()).unwrap();
        assert_eq!(idx.role, Role::Target);
        assert!(idx.clone().with_role(Role::Source).is_err());
        assert!(idx.load_labeled::<f32>().is_err());
        assert_eq!(idx.load_images::<f32>().unwrap().len(), 3);
    }

    #[test]
    fn orphan_label_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[pair(0.1)], true).unwrap();
        save_mask(&pair(0.0).1, dir.path().join("labels/stray.png")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
        assert!(load_dataset(dir.path().join("nope")).is_err());
    }

    #[test]
    fn ordering_is_lexicographic_by_name() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["c", "a", "b10", "b2"] {
            save_image(&pair(0.5).0, dir.path().join(format!("images/{name}.png"))).unwrap();
        }
        let idx = load_dataset(dir.path()).unwrap();
        let stems: Vec<String> = idx.entries.iter().map(Entry::stem).collect();
        assert_eq!(stems, ["a", "b10", "b2", "c"]);
    }
}
