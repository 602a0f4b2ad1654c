//! Counter-based random substreams.
//!
//! Every random draw in the simulator is keyed by a `(master_seed,
//! trial_index)` pair. The master seed is expanded into a ChaCha key and the
//! trial index selects the ChaCha stream, so any two trials are independent and
//! can be generated in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Identifies one reproducible random realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    /// Fresh generator positioned at the start of this trial's stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.trial_index);
        rng
    }

    /// Derives a new master seed for a labelled sub-experiment, keeping the
    /// trial index. Used to give each grid cell and each noise block its own
    /// stream without coordinating counters. The new master depends on the
    /// trial index too, so re-indexing a derived seed with
    /// [`with_trial`](Self::with_trial) never collides across parent trials.
    pub fn derive(&self, label: u64) -> Self {
        let mut state = self.master_seed ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03);
        state ^= splitmix64(&mut self.trial_index.clone()).rotate_left(29);
        let a = splitmix64(&mut state);
        let b = splitmix64(&mut state);
        Self {
            master_seed: a ^ b.rotate_left(17),
            trial_index: self.trial_index,
        }
    }

    pub fn with_trial(&self, trial_index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            trial_index,
        }
    }
}

/// Mixes an arbitrary list of words into one label for [`SeedSpec::derive`].
pub fn label(parts: &[u64]) -> u64 {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut acc = 0u64;
    for &p in parts {
        state ^= p;
        acc = acc.rotate_left(23) ^ splitmix64(&mut state);
    }
    acc
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
