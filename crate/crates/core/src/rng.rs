use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::fmt;

/// A named, reproducible random substream.
///
/// Streams form a tree rooted at a single `u64` seed. Each child key is the
/// SHA-256 digest of the parent key and the child label, so adding a new
/// experiment or path never shifts the draws of existing ones. The leaf key
/// seeds a ChaCha8 generator, itself a counter-based cipher.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Stream {
    key: [u8; 32],
}

const TAG_ROOT: u8 = 0;
const TAG_LABEL: u8 = 1;
const TAG_INDEX: u8 = 2;

impl Stream {
    pub fn root(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"cdp-lab/stream/v1");
        h.update([TAG_ROOT]);
        h.update(seed.to_le_bytes());
        Self { key: h.finalize().into() }
    }

    /// Child stream identified by a label (experiment name, role, ...).
    pub fn child(&self, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([TAG_LABEL]);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        Self { key: h.finalize().into() }
    }

    /// Child stream identified by an integer (path index, slot, ...).
    pub fn index(&self, i: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([TAG_INDEX]);
        h.update(i.to_le_bytes());
        Self { key: h.finalize().into() }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key)
    }
}

impl fmt::Debug for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Stream(")?;
        for b in &self.key[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}
