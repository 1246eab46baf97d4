use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Block;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("power {p} outside curve domain [0, {max}]")]
pub struct OutOfDomain {
    pub p: f64,
    pub max: f64,
}

/// Piecewise-linear energy cost (producers) or value (consumers) stored as
/// consecutive marginal-price blocks starting at zero power.
///
/// The curve value at `p` is the integral of the marginal price from 0 to
/// `p`. Producer curves are convex (prices nondecreasing), consumer curves
/// concave (prices nonincreasing).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PwlCurve {
    pub blocks: Vec<Block>,
}

impl PwlCurve {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            blocks: pairs.iter().map(|&(width, price)| Block { width, price }).collect(),
        }
    }

    /// Right end of the domain `[0, total_width]`.
    pub fn total_width(&self) -> f64 {
        self.blocks.iter().map(|b| b.width).sum()
    }

    /// Curve value with linear extrapolation outside the domain, using the
    /// first block's price below zero and the last block's price above the
    /// total width. Callers that need the strict domain use [`Self::value_in_domain`].
    pub fn value(&self, p: f64) -> f64 {
        if self.blocks.is_empty() {
            return 0.0;
        }
        if p < 0.0 {
            return p * self.blocks[0].price;
        }
        let mut rem = p;
        let mut acc = 0.0;
        for b in &self.blocks {
            if rem <= 0.0 {
                break;
            }
            let take = rem.min(b.width);
            acc += take * b.price;
            rem -= take;
        }
        if rem > 0.0 {
            acc += rem * self.blocks[self.blocks.len() - 1].price;
        }
        acc
    }

    pub fn value_in_domain(&self, p: f64) -> Result<f64, OutOfDomain> {
        let max = self.total_width();
        if !(0.0..=max).contains(&p) {
            return Err(OutOfDomain { p, max });
        }
        Ok(self.value(p))
    }

    /// Marginal price of the block containing `p` (right-continuous).
    pub fn marginal(&self, p: f64) -> Option<f64> {
        let mut left = 0.0;
        for b in &self.blocks {
            if b.width > 0.0 && p < left + b.width {
                return Some(b.price);
            }
            left += b.width;
        }
        self.blocks.last().map(|b| b.price)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.blocks.windows(2).all(|w| w[0].price <= w[1].price)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.blocks.windows(2).all(|w| w[0].price >= w[1].price)
    }

    /// Blocks restricted to `[0, cap]`; zero-width blocks are dropped.
    pub fn truncated(&self, cap: f64) -> Vec<Block> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut rem = cap.max(0.0);
        for b in &self.blocks {
            if rem <= 0.0 {
                break;
            }
            let w = b.width.min(rem);
            if w > 0.0 {
                out.push(Block { width: w, price: b.price });
            }
            rem -= w;
        }
        out
    }

    /// Average price over `[0, p]`; zero when `p` is not positive.
    pub fn average_price(&self, p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            self.value(p) / p
        }
    }
}
