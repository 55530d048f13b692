use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{parse_standoff, write_standoff, AnnotatedDocument, Corpus, CorpusError, Split};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads every `.txt`/`.ann` pair in one directory, sorted by basename.
pub fn load_split(dir: &Path) -> Result<Vec<AnnotatedDocument>, CorpusError> {
    let mut texts = BTreeMap::new();
    let mut anns = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        let stem = stem.to_string_lossy().into_owned();
        match ext.to_str() {
            Some("txt") => {
                texts.insert(stem, path);
            }
            Some("ann") => {
                anns.insert(stem, path);
            }
            _ => {}
        }
    }
    if let Some(orphan) = anns.keys().find(|k| !texts.contains_key(*k)) {
        return Err(CorpusError::MissingPair(format!("{orphan}.ann (no .txt)")));
    }
    let mut docs = Vec::with_capacity(texts.len());
    for (stem, txt_path) in texts {
        let ann_path = anns
            .get(&stem)
            .ok_or_else(|| CorpusError::MissingPair(txt_path.display().to_string()))?;
        let text = fs::read_to_string(&txt_path).map_err(io_err(&txt_path))?;
        let ann = fs::read_to_string(ann_path).map_err(io_err(ann_path))?;
        let doc = parse_standoff(&stem, &text, &ann).map_err(|e| match e {
            CorpusError::Parse { line, message } => CorpusError::Parse {
                line,
                message: format!("{}: {message}", ann_path.display()),
            },
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Loads `root/{train,dev,test}`; split membership comes from the directory.
pub fn load_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    let [train, dev, test] = Split::ALL.map(|s| load_split(&root.join(s.dir_name())));
    Corpus::new(train?, dev?, test?)
}

/// Writes a corpus in the layout [`load_corpus`] reads.
pub fn save_corpus(corpus: &Corpus, root: &Path) -> Result<(), CorpusError> {
    for split in Split::ALL {
        let dir = root.join(split.dir_name());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for doc in corpus.split(split) {
            let txt = dir.join(format!("{}.txt", doc.doc_id));
            fs::write(&txt, &doc.text).map_err(io_err(&txt))?;
            let ann = dir.join(format!("{}.ann", doc.doc_id));
            fs::write(&ann, write_standoff(doc)).map_err(io_err(&ann))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directories_give_empty_splits() {
        let dir = tempfile::tempdir().unwrap();
        for s in Split::ALL {
            fs::create_dir(dir.path().join(s.dir_name())).unwrap();
        }
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!((c.train.len(), c.dev.len(), c.test.len()), (0, 0, 0));
    }

    #[test]
    fn missing_ann_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        for s in Split::ALL {
            fs::create_dir(dir.path().join(s.dir_name())).unwrap();
        }
        fs::write(dir.path().join("dev/n1.txt"), "aspirin").unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::MissingPair(_))));
    }

    #[test]
    fn duplicate_basename_across_splits() {
        let dir = tempfile::tempdir().unwrap();
        for s in Split::ALL {
            fs::create_dir(dir.path().join(s.dir_name())).unwrap();
        }
        for s in ["train", "test"] {
            fs::write(dir.path().join(format!("{s}/n1.txt")), "aspirin").unwrap();
            fs::write(dir.path().join(format!("{s}/n1.ann")), "").unwrap();
        }
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::Duplicate(_))));
    }
}
