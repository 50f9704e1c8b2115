use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::sha256_hex;

/// Content address of a chat reply.
pub fn chat_key(model_id: &str, prompt_hash: &str, temperature: f64, run_index: u32) -> String {
    sha256_hex(&format!(
        "{model_id}\n{prompt_hash}\n{temperature:?}\n{run_index}"
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatEntry {
    pub key: String,
    pub model_id: String,
    pub prompt_hash: String,
    pub temperature: f64,
    pub run_index: u32,
    pub raw_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub model_id: String,
    pub text_hash: String,
    pub values: Vec<f64>,
}

struct Store<T> {
    map: HashMap<String, T>,
    file: Option<File>,
}

/// Append-only JSONL cache for chat replies (`chat.jsonl`) and embeddings
/// (`embeddings.jsonl`). Writes are serialized; the last entry for a key wins
/// on reload.
pub struct ResponseCache {
    dir: Option<PathBuf>,
    chat: Mutex<Store<ChatEntry>>,
    embeddings: Mutex<Store<EmbeddingEntry>>,
}

fn load<T: for<'de> Deserialize<'de>>(
    path: &Path,
    key: impl Fn(&T) -> String,
) -> Result<HashMap<String, T>> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        map.insert(key(&entry), entry);
    }
    Ok(map)
}

fn append(path: &Path) -> Result<File> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

fn embedding_key(model_id: &str, text_hash: &str) -> String {
    format!("{model_id}\n{text_hash}")
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            dir: None,
            chat: Mutex::new(Store {
                map: HashMap::new(),
                file: None,
            }),
            embeddings: Mutex::new(Store {
                map: HashMap::new(),
                file: None,
            }),
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let chat_path = dir.join("chat.jsonl");
        let emb_path = dir.join("embeddings.jsonl");
        let chat = load::<ChatEntry>(&chat_path, |e| e.key.clone())?;
        let emb = load::<EmbeddingEntry>(&emb_path, |e| embedding_key(&e.model_id, &e.text_hash))?;
        Ok(ResponseCache {
            dir: Some(dir.to_path_buf()),
            chat: Mutex::new(Store {
                map: chat,
                file: Some(append(&chat_path)?),
            }),
            embeddings: Mutex::new(Store {
                map: emb,
                file: Some(append(&emb_path)?),
            }),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get_chat(&self, key: &str) -> Option<ChatEntry> {
        self.chat.lock().unwrap().map.get(key).cloned()
    }

    pub fn put_chat(&self, entry: ChatEntry) -> Result<()> {
        let mut store = self.chat.lock().unwrap();
        if let Some(f) = store.file.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
            f.flush()?;
        }
        store.map.insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn chat_len(&self) -> usize {
        self.chat.lock().unwrap().map.len()
    }

    pub fn get_embedding(&self, model_id: &str, text_hash: &str) -> Option<Vec<f64>> {
        let store = self.embeddings.lock().unwrap();
        store
            .map
            .get(&embedding_key(model_id, text_hash))
            .map(|e| e.values.clone())
    }

    pub fn put_embedding(&self, entry: EmbeddingEntry) -> Result<()> {
        let mut store = self.embeddings.lock().unwrap();
        if let Some(f) = store.file.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
            f.flush()?;
        }
        store
            .map
            .insert(embedding_key(&entry.model_id, &entry.text_hash), entry);
        Ok(())
    }
}
