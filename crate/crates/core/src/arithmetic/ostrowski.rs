use serde::{Deserialize, Serialize};

use super::cf::RotationNumber;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OstrowskiDigits {
    pub n: u128,
    /// digits[j] multiplies q_j
    pub digits: Vec<u128>,
}

impl OstrowskiDigits {
    pub fn value(&self, rot: &RotationNumber) -> u128 {
        self.digits.iter().zip(&rot.q).map(|(a, q)| a * q).sum()
    }
}

/// Greedy expansion N = sum a_j q_j, largest denominators first.
pub fn ostrowski_expand(n: u128, rot: &RotationNumber) -> Result<OstrowskiDigits> {
    let d = rot.depth();
    if n >= rot.q[d] {
        return Err(Error::OutOfRange { what: "N must be below q_D", value: n as f64 });
    }
    let mut digits = vec![0u128; d + 1];
    let mut rest = n;
    for j in (0..d).rev() {
        let qj = rot.q[j];
        digits[j] = rest / qj;
        rest -= digits[j] * qj;
    }
    debug_assert_eq!(rest, 0);
    Ok(OstrowskiDigits { n, digits })
}
