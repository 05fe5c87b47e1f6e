//! Dataset layout on disk.
//!
//! ```text
//! root/manifest.csv          id,split
//! root/images/<id>.png       8-bit RGB
//! root/gt/<id>.png           8-bit gray, salient where >= 128
//! root/depth/<id>.png        16-bit gray, optional
//! root/edges/<id>.png        8-bit gray edge probability, optional
//! root/masks_sp/<id>.png     16-bit superpixel labels, written by `segment`
//! root/masks_edge/<id>.png   16-bit edge-region labels, written by `segment`
//! root/pred/                 default prediction directory
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const IMAGES_DIR: &str = "images";
pub const GT_DIR: &str = "gt";
pub const DEPTH_DIR: &str = "depth";
pub const EDGES_DIR: &str = "edges";
pub const MASKS_SP_DIR: &str = "masks_sp";
pub const MASKS_EDGE_DIR: &str = "masks_edge";
pub const PRED_DIR: &str = "pred";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("split must be `train` or `test`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    pub image: PathBuf,
    pub gt: PathBuf,
    pub depth: Option<PathBuf>,
    pub edge_prob: Option<PathBuf>,
    pub superpixel_mask: Option<PathBuf>,
    pub edge_mask: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub samples: Vec<SampleEntry>,
}

fn optional(path: PathBuf) -> Option<PathBuf> {
    path.is_file().then_some(path)
}

fn file_name(id: &str) -> String {
    format!("{id}.png")
}

impl DatasetManifest {
    /// Reads `root/manifest.csv`; image and gt files must exist, the others
    /// are picked up when present.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("id,split") => {}
            other => {
                return Err(Error::file(&path, format!("expected header `id,split`, found `{}`", other.unwrap_or(""))));
            }
        }
        let mut samples = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::file(&path, format!("line {}: {m}", i + 2));
            let (id, split) = line.split_once(',').ok_or_else(|| bad(format!("expected `id,split`, got `{line}`")))?;
            let (id, split) = (id.trim(), split.trim());
            if id.is_empty() || id.contains(['/', '\\']) {
                return Err(bad(format!("invalid id `{id}`")));
            }
            if !seen.insert(id.to_string()) {
                return Err(bad(format!("duplicate id `{id}`")));
            }
            let split: Split = split.parse().map_err(|e: Error| bad(e.to_string()))?;
            let name = file_name(id);
            let image = root.join(IMAGES_DIR).join(&name);
            let gt = root.join(GT_DIR).join(&name);
            for p in [&image, &gt] {
                if !p.is_file() {
                    return Err(Error::file(p, format!("missing file for sample `{id}`")));
                }
            }
            samples.push(SampleEntry {
                id: id.to_string(),
                split,
                image,
                gt,
                depth: optional(root.join(DEPTH_DIR).join(&name)),
                edge_prob: optional(root.join(EDGES_DIR).join(&name)),
                superpixel_mask: optional(root.join(MASKS_SP_DIR).join(&name)),
                edge_mask: optional(root.join(MASKS_EDGE_DIR).join(&name)),
            });
        }
        Ok(DatasetManifest { root: root.to_path_buf(), samples })
    }

    pub fn write(root: &Path, entries: &[(String, Split)]) -> Result<()> {
        let mut text = String::from("id,split\n");
        for (id, split) in entries {
            text.push_str(&format!("{id},{split}\n"));
        }
        write_atomic(&root.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn mask_paths(&self, id: &str) -> (PathBuf, PathBuf) {
        let name = file_name(id);
        (self.root.join(MASKS_SP_DIR).join(&name), self.root.join(MASKS_EDGE_DIR).join(name))
    }

    pub fn default_pred_dir(&self) -> PathBuf {
        self.root.join(PRED_DIR)
    }
}
