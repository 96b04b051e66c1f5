//! Corpus specifications: `markov`, `markov:<tokens>`, `file:<path>` or a
//! bare path.

use std::path::PathBuf;
use std::str::FromStr;

use growformer_core::training::Corpus;

pub const DEFAULT_MARKOV_TOKENS: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorpusSpec {
    Markov { tokens: usize },
    File(PathBuf),
}

impl FromStr for CorpusSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "markov" {
            return Ok(CorpusSpec::Markov {
                tokens: DEFAULT_MARKOV_TOKENS,
            });
        }
        if let Some(n) = s.strip_prefix("markov:") {
            let tokens = n.parse().map_err(|_| format!("bad token count in corpus spec {s:?}"))?;
            return Ok(CorpusSpec::Markov { tokens });
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        if path.is_empty() {
            return Err("empty corpus path".into());
        }
        Ok(CorpusSpec::File(PathBuf::from(path)))
    }
}

impl CorpusSpec {
    /// Builds the stream. Markov corpora use `vocab`; byte files always have
    /// the byte vocabulary.
    pub fn load(&self, vocab: usize, seed: u64) -> Result<Corpus, String> {
        match self {
            CorpusSpec::Markov { tokens } => Corpus::markov(vocab, *tokens, seed).map_err(|e| e.to_string()),
            CorpusSpec::File(path) => std::fs::read(path)
                .map(|b| Corpus::from_bytes(&b))
                .map_err(|e| format!("{}: {e}", path.display())),
        }
    }
}
