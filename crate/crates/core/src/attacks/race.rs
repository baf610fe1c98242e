//! Closed-form man-in-the-middle race between attacker and server.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RaceError {
    #[error("costs must be positive and n at least 1")]
    NonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RaceCosts {
    pub t_hash: u64,
    pub t_dec1: u64,
    pub t_dec2: u64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RaceAnalysis {
    /// `(n+2) t_hash + t_dec1 + 4 t_dec2`
    pub attacker_time: u128,
    /// `(n+1) t_hash + t_dec1 + 2 t_dec2`
    pub server_time: u128,
    /// `t_hash + 2 t_dec2 > t_dec2`
    pub server_advantage: bool,
}

impl RaceAnalysis {
    pub fn margin(&self) -> u128 {
        self.attacker_time - self.server_time
    }
}

pub fn mitm_race_analysis(c: RaceCosts) -> Result<RaceAnalysis, RaceError> {
    if c.t_hash == 0 || c.t_dec1 == 0 || c.t_dec2 == 0 || c.n == 0 {
        return Err(RaceError::NonPositive);
    }
    let (h, d1, d2, n) = (c.t_hash as u128, c.t_dec1 as u128, c.t_dec2 as u128, c.n as u128);
    Ok(RaceAnalysis {
        attacker_time: (n + 2) * h + d1 + 4 * d2,
        server_time: (n + 1) * h + d1 + 2 * d2,
        server_advantage: h + 2 * d2 > d2,
    })
}
