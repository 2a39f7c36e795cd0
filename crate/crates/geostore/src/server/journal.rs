//! Per-import journals of written chunk ids. A journal exists from the
//! first chunk until the import finished or was rolled back; journals left
//! behind by a crash name the chunks of imports that never completed.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use geostore_core::model::ChunkId;

pub struct Journal {
    dir: PathBuf,
}

pub struct JournalFile {
    file: File,
}

impl JournalFile {
    /// Records `id` before the chunk itself is stored.
    pub fn append(&mut self, id: &ChunkId) -> io::Result<()> {
        self.file.write_all(format!("{id}\n").as_bytes())
    }
}

impl Journal {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Journal {
            dir: dir.to_owned(),
        })
    }

    fn path(&self, task: &str) -> PathBuf {
        self.dir.join(format!("{task}.journal"))
    }

    pub fn begin(&self, task: &str) -> io::Result<JournalFile> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path(task))?;
        Ok(JournalFile { file })
    }

    pub fn finish(&self, task: &str) -> io::Result<()> {
        match fs::remove_file(self.path(task)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    /// Journals of unfinished imports with the ids they list. A torn last
    /// line is ignored.
    pub fn leftovers(&self) -> io::Result<Vec<(PathBuf, Vec<ChunkId>)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "journal") {
                continue;
            }
            let ids = BufReader::new(File::open(&path)?)
                .lines()
                .map_while(Result::ok)
                .filter_map(|l| ChunkId::parse(l.trim()).ok())
                .collect();
            out.push((path, ids));
        }
        Ok(out)
    }
}
