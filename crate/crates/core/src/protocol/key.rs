use serde::{Deserialize, Serialize};

use super::BepRecord;
use crate::error::{domain, Result};

/// A bit string with the BEP indices it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Key {
    pub bits: Vec<u8>,
    pub session_seed: u64,
    pub bep_indices: Vec<u64>,
    pub amplification_rounds: u32,
}

impl Key {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of positions where two keys disagree.
    pub fn mismatches(&self, other: &Key) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

/// Alice's and Bob's raw keys from the kept records. Both encode Alice's
/// resistor choice; Bob reads it as the complement of his own.
pub fn assemble_keys(records: &[BepRecord], session_seed: u64) -> (Key, Key) {
    let kept: Vec<&BepRecord> = records.iter().filter(|r| r.kept).collect();
    let indices: Vec<u64> = kept.iter().map(|r| r.index).collect();
    let key = |bits: Vec<u8>| Key { bits, session_seed, bep_indices: indices.clone(), amplification_rounds: 0 };
    let alice = kept.iter().map(|r| r.alice_bit.as_u8()).collect();
    let bob = kept
        .iter()
        .map(|r| r.bob_inferred_alice.map_or(0, |b| b.as_u8()))
        .collect();
    (key(alice), key(bob))
}

/// XOR adjacent bit pairs, `rounds` times. Each round halves the key.
pub fn privacy_amplify(key: &Key, rounds: u32) -> Result<Key> {
    if rounds >= usize::BITS || key.len() < (1usize << rounds) {
        return domain(format!("key of {} bits too short for {rounds} rounds", key.len()));
    }
    let mut bits = key.bits.clone();
    for _ in 0..rounds {
        bits = bits.chunks_exact(2).map(|p| p[0] ^ p[1]).collect();
    }
    Ok(Key {
        bits,
        session_seed: key.session_seed,
        bep_indices: key.bep_indices.clone(),
        amplification_rounds: key.amplification_rounds + rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::Bit;
    use crate::protocol::Classification;

    fn key(bits: &[u8]) -> Key {
        Key { bits: bits.to_vec(), session_seed: 0, bep_indices: vec![], amplification_rounds: 0 }
    }

    #[test]
    fn xor_pairs() {
        let k = privacy_amplify(&key(&[1, 0, 1, 1, 0, 0, 1]), 1).unwrap();
        assert_eq!(k.bits, vec![1, 0, 0]);
        let k2 = privacy_amplify(&key(&[1, 0, 1, 1]), 2).unwrap();
        assert_eq!(k2.bits, vec![1]);
        assert_eq!(k2.amplification_rounds, 2);
    }

    #[test]
    fn too_short() {
        assert!(privacy_amplify(&key(&[1, 0, 1]), 2).is_err());
        assert!(privacy_amplify(&key(&[1]), 0).is_ok());
    }

    #[test]
    fn keys_agree_without_errors() {
        let recs = vec![
            BepRecord::new(0, Bit::L, Bit::H, Classification::MidLevel),
            BepRecord::new(1, Bit::H, Bit::H, Classification::HhLevel),
            BepRecord::new(2, Bit::H, Bit::L, Classification::MidLevel),
        ];
        let (a, b) = assemble_keys(&recs, 9);
        assert_eq!(a.bits, vec![0, 1]);
        assert_eq!(a, b);
        assert_eq!(a.bep_indices, vec![0, 2]);
    }
}
