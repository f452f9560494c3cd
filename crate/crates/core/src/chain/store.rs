use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::Block;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("no blocks in {0}")]
    Empty(PathBuf),
    #[error("{file}: {reason}")]
    Corrupt { file: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One JSON file per block named `<height>-<hexhash>.json`.
#[derive(Debug, Clone)]
pub struct ChainStore {
    dir: PathBuf,
}

impl ChainStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(StoreError::NotADirectory(dir));
        }
        Ok(Self { dir })
    }

    pub fn create(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.as_ref())?;
        Self::open(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file_name(block: &Block) -> String {
        format!("{}-{}.json", block.height, hex::encode(block.hash))
    }

    /// Writes to a temporary file and renames it into place.
    pub fn append(&self, block: &Block) -> Result<PathBuf, StoreError> {
        let path = self.dir.join(Self::file_name(block));
        let tmp = self.dir.join(format!(".{}.tmp", Self::file_name(block)));
        let mut f = fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, block).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// All blocks sorted by height. Unreadable files and names that
    /// disagree with their contents are reported as corrupt.
    pub fn load(&self) -> Result<Vec<Block>, StoreError> {
        let mut blocks = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let corrupt = |reason: String| StoreError::Corrupt { file: path.clone(), reason };
            let text = fs::read_to_string(&path)?;
            let block: Block = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name != Self::file_name(&block) {
                return Err(corrupt(format!("file name does not match block {}", Self::file_name(&block))));
            }
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(StoreError::Empty(self.dir.clone()));
        }
        blocks.sort_by_key(|b| b.height);
        Ok(blocks)
    }

    pub fn tip(&self) -> Result<Option<Block>, StoreError> {
        match self.load() {
            Ok(mut b) => Ok(b.pop()),
            Err(StoreError::Empty(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
