//! Arithmetic in GF(2^m) for small `m`, via exp/log tables.

/// Primitive polynomials, bit i = coefficient of x^i.
const PRIMITIVE: [(u32, u32); 5] = [
    (3, 0b1011),
    (4, 0b1_0011),
    (5, 0b10_0101),
    (6, 0b100_0011),
    (7, 0b1000_1001),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf {
    m: u32,
    order: usize,
    exp: Vec<u8>,
    log: Vec<u8>,
}

impl Gf {
    pub fn new(m: u32) -> Option<Self> {
        let poly = PRIMITIVE.iter().find(|(d, _)| *d == m)?.1;
        let order = (1usize << m) - 1;
        let mut exp = vec![0u8; 2 * order];
        let mut log = vec![0u8; order + 1];
        let mut x = 1u32;
        for (i, e) in exp.iter_mut().take(order).enumerate() {
            *e = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & (1 << m) != 0 {
                x ^= poly;
            }
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Some(Self { m, order, exp, log })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Multiplicative group order, `2^m - 1`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// `alpha^e` for any exponent.
    pub fn pow_alpha(&self, e: usize) -> u8 {
        self.exp[e % self.order]
    }

    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    pub fn div(&self, a: u8, b: u8) -> u8 {
        assert!(b != 0, "division by zero in GF(2^m)");
        if a == 0 {
            0
        } else {
            let e = self.log[a as usize] as usize + self.order - self.log[b as usize] as usize;
            self.exp[e % self.order]
        }
    }

    pub fn log(&self, a: u8) -> usize {
        debug_assert!(a != 0);
        self.log[a as usize] as usize
    }
}
