//! SIMON 64/128: 32-bit words, four key words, 44 rounds.

const ROUNDS: usize = 44;
// z3 constant sequence, bit 0 first.
const Z3: u64 = 0x3c2c_e512_07a6_35db;

#[derive(Clone)]
pub struct Simon64_128 {
    round_keys: [u32; ROUNDS],
}

#[inline]
fn f(x: u32) -> u32 {
    (x.rotate_left(1) & x.rotate_left(8)) ^ x.rotate_left(2)
}

impl Simon64_128 {
    /// Key words in the order `k[0]` (first used round key) .. `k[3]`.
    pub fn from_words(k: [u32; 4]) -> Self {
        let mut rk = [0u32; ROUNDS];
        rk[..4].copy_from_slice(&k);
        for i in 4..ROUNDS {
            let mut tmp = rk[i - 1].rotate_right(3) ^ rk[i - 3];
            tmp ^= tmp.rotate_right(1);
            let z = ((Z3 >> ((i - 4) % 62)) & 1) as u32;
            rk[i] = !rk[i - 4] ^ tmp ^ z ^ 3;
        }
        Self { round_keys: rk }
    }

    /// Key bytes are read as four little-endian words, `k[0]` first.
    pub fn new(key: &[u8; 16]) -> Self {
        let w = |i: usize| u32::from_le_bytes([key[i], key[i + 1], key[i + 2], key[i + 3]]);
        Self::from_words([w(0), w(4), w(8), w(12)])
    }

    pub fn encrypt_words(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for k in &self.round_keys {
            let tmp = x;
            x = y ^ f(x) ^ k;
            y = tmp;
        }
        (x, y)
    }

    pub fn decrypt_words(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for k in self.round_keys.iter().rev() {
            let tmp = y;
            y = x ^ f(y) ^ k;
            x = tmp;
        }
        (x, y)
    }

    /// Block bytes `[y_le, x_le]`.
    pub fn encrypt_block(&self, block: &mut [u8; 8]) {
        let y = u32::from_le_bytes([block[0], block[1], block[2], block[3]]);
        let x = u32::from_le_bytes([block[4], block[5], block[6], block[7]]);
        let (x, y) = self.encrypt_words(x, y);
        block[..4].copy_from_slice(&y.to_le_bytes());
        block[4..].copy_from_slice(&x.to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vector from the SIMON/SPECK design document.
    #[test]
    fn simon64_128_known_answer() {
        let c = Simon64_128::from_words([0x0302_0100, 0x0b0a_0908, 0x1312_1110, 0x1b1a_1918]);
        let (x, y) = c.encrypt_words(0x656b_696c, 0x2064_6e75);
        assert_eq!((x, y), (0x44c8_fc20, 0xb9df_a07a));
        assert_eq!(c.decrypt_words(x, y), (0x656b_696c, 0x2064_6e75));
    }

    #[test]
    fn byte_interface_matches_word_interface() {
        let key: [u8; 16] = core::array::from_fn(|i| (i as u8 & 3) | ((i as u8 / 4) * 8));
        let c = Simon64_128::new(&key);
        let mut block = [0x75, 0x6e, 0x64, 0x20, 0x6c, 0x69, 0x6b, 0x65];
        c.encrypt_block(&mut block);
        assert_eq!(block, [0x7a, 0xa0, 0xdf, 0xb9, 0x20, 0xfc, 0xc8, 0x44]);
    }
}
