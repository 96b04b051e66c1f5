use alloc::format;
use alloc::vec::Vec;

use crate::numerics::SeededRng;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
/// Ids below this are reserved.
pub const NUM_SPECIAL: u32 = 4;
/// Vocabulary of a byte-level corpus: every byte plus the specials.
pub const BYTE_VOCAB: usize = 256 + NUM_SPECIAL as usize;

/// A token stream over `vocab` ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: usize,
    pub tokens: Vec<u32>,
}

/// Seeded order-2 Markov chain over the non-special ids.
///
/// Each context `(a, b)` has four preferred successors drawn from a
/// Zipf-like prior, taken with probabilities 0.5/0.25/0.1/0.05; the remaining
/// 0.1 is spread uniformly.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    symbols: usize,
    successors: Vec<[u32; 4]>,
}

const PREFERRED: [f32; 4] = [0.5, 0.25, 0.1, 0.05];

impl MarkovChain {
    pub fn new(vocab: usize, seed: u64) -> Result<Self> {
        if vocab <= NUM_SPECIAL as usize {
            return Err(Error::InvalidConfig(format!("vocab must exceed {NUM_SPECIAL}, got {vocab}")));
        }
        let n = vocab - NUM_SPECIAL as usize;
        let mut rng = SeededRng::new(seed);
        let zipf: Vec<f32> = (0..n).map(|r| 1.0 / (r as f32 + 1.0)).collect();
        let total: f32 = zipf.iter().sum();
        let draw = |rng: &mut SeededRng| {
            let mut u = rng.uniform() * total;
            for (i, &w) in zipf.iter().enumerate() {
                if u < w {
                    return i as u32;
                }
                u -= w;
            }
            (n - 1) as u32
        };
        let successors = (0..n * n)
            .map(|_| [draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng)])
            .collect();
        Ok(Self { symbols: n, successors })
    }

    fn next(&self, a: u32, b: u32, rng: &mut SeededRng) -> u32 {
        let ctx = a as usize * self.symbols + b as usize;
        let mut u = rng.uniform();
        for (k, &p) in PREFERRED.iter().enumerate() {
            if u < p {
                return self.successors[ctx][k];
            }
            u -= p;
        }
        rng.sample_index(self.symbols).expect("symbols > 0") as u32
    }

    /// `length` tokens, already offset past the special ids.
    pub fn generate(&self, length: usize, rng: &mut SeededRng) -> Vec<u32> {
        let n = self.symbols;
        let mut out = Vec::with_capacity(length);
        let (mut a, mut b) = (
            rng.sample_index(n).expect("symbols > 0") as u32,
            rng.sample_index(n).expect("symbols > 0") as u32,
        );
        for _ in 0..length {
            let c = self.next(a, b, rng);
            out.push(c + NUM_SPECIAL);
            (a, b) = (b, c);
        }
        out
    }
}

impl Corpus {
    /// Synthetic order-2 Markov text; the chain and the sample both derive
    /// from `seed`.
    pub fn markov(vocab: usize, length: usize, seed: u64) -> Result<Self> {
        let root = SeededRng::new(seed);
        let chain = MarkovChain::new(vocab, root.derive(1).seed())?;
        let tokens = chain.generate(length, &mut root.derive(2));
        Ok(Self { vocab, tokens })
    }

    /// Byte-level tokens: id = byte + 4.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self {
            vocab: BYTE_VOCAB,
            tokens: bytes.iter().map(|&b| b as u32 + NUM_SPECIAL).collect(),
        }
    }

    /// Inverse of [`from_bytes`](Self::from_bytes); `None` for special ids.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        self.tokens
            .iter()
            .map(|&t| t.checked_sub(NUM_SPECIAL).and_then(|b| u8::try_from(b).ok()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Splits off the last `n` tokens (e.g. as a held-out set).
    pub fn split_tail(mut self, n: usize) -> Result<(Corpus, Corpus)> {
        if n >= self.tokens.len() {
            return Err(Error::CorpusTooShort(format!("cannot hold out {n} of {} tokens", self.tokens.len())));
        }
        let tail = self.tokens.split_off(self.tokens.len() - n);
        let vocab = self.vocab;
        Ok((self, Corpus { vocab, tokens: tail }))
    }

    /// `count` windows of `len` tokens at uniformly random offsets.
    pub fn sample_windows(&self, count: usize, len: usize, rng: &mut SeededRng) -> Result<Vec<&[u32]>> {
        if len == 0 || self.tokens.len() < len {
            return Err(Error::CorpusTooShort(format!(
                "need windows of {len}, corpus has {} tokens",
                self.tokens.len()
            )));
        }
        let starts = self.tokens.len() - len + 1;
        (0..count)
            .map(|_| rng.sample_index(starts).map(|s| &self.tokens[s..s + len]))
            .collect()
    }

    /// Non-overlapping windows covering the stream from the start.
    pub fn chunks(&self, len: usize) -> impl Iterator<Item = &[u32]> {
        self.tokens.chunks_exact(len.max(1))
    }

    /// Unigram entropy of the stream in nats.
    pub fn unigram_entropy(&self) -> f64 {
        let mut counts = alloc::vec![0usize; self.vocab];
        for &t in &self.tokens {
            counts[t as usize] += 1;
        }
        let n = self.tokens.len() as f64;
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * libm::log(p)
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab <= NUM_SPECIAL as usize {
            return Err(Error::InvalidConfig(format!("vocab must exceed {NUM_SPECIAL}, got {}", self.vocab)));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t as usize >= self.vocab) {
            return Err(Error::TokenOutOfRange { id: bad, vocab: self.vocab });
        }
        Ok(())
    }
}
