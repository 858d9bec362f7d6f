use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Float;
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// Blocks fade in one after another over the reveal horizon.
    #[default]
    Progressive,
    /// Every block fully on from the first iteration.
    Static,
    /// Raw coordinates only.
    None,
}

impl std::str::FromStr for EncoderMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "progressive" => Ok(Self::Progressive),
            "static" => Ok(Self::Static),
            "none" => Ok(Self::None),
            other => Err(format!("unknown encoder mode {other:?} (expected progressive, static or none)")),
        }
    }
}

/// Frequency-band positional encoding with per-block reveal masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Encoder {
    pub mode: EncoderMode,
    pub blocks: usize,
    pub reveal_iters: usize,
}

impl Default for Encoder {
    fn default() -> Self {
        Self {
            mode: EncoderMode::Progressive,
            blocks: 6,
            reveal_iters: 1000,
        }
    }
}

impl Encoder {
    pub fn width(&self) -> usize {
        match self.mode {
            EncoderMode::None => 3,
            _ => 3 + 6 * self.blocks,
        }
    }

    /// `2^j·π` for each block `j`.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.blocks).map(|j| 2f64.powi(j as i32) * std::f64::consts::PI).collect()
    }

    /// `α_j(t) = clamp((t - j·r)/r, 0, 1)` with `r = reveal_iters / blocks`.
    pub fn masks(&self, t: usize) -> Vec<f64> {
        match self.mode {
            EncoderMode::None => Vec::new(),
            EncoderMode::Static => vec![1.0; self.blocks],
            EncoderMode::Progressive => {
                let ramp = self.reveal_iters as f64 / self.blocks as f64;
                (0..self.blocks)
                    .map(|j| {
                        if ramp <= 0.0 {
                            1.0
                        } else {
                            ((t as f64 - j as f64 * ramp) / ramp).clamp(0.0, 1.0)
                        }
                    })
                    .collect()
            }
        }
    }

    /// Unmasked features for `positions`; apply masks with
    /// [`EncodedBasis::features`].
    pub fn basis<T: Float>(&self, positions: &[Vec3]) -> EncodedBasis<T> {
        let width = self.width();
        let freqs = if self.mode == EncoderMode::None { Vec::new() } else { self.frequencies() };
        let mut raw = Array2::<T>::zeros((positions.len(), width));
        for (r, p) in positions.iter().enumerate() {
            let mut row = raw.row_mut(r);
            for c in 0..3 {
                row[c] = T::from_f64(p[c]).unwrap();
            }
            for (j, f) in freqs.iter().enumerate() {
                let base = 3 + 6 * j;
                for c in 0..3 {
                    row[base + c] = T::from_f64((f * p[c]).sin()).unwrap();
                    row[base + 3 + c] = T::from_f64((f * p[c]).cos()).unwrap();
                }
            }
        }
        EncodedBasis { raw, blocks: freqs.len() }
    }

    pub fn encode<T: Float>(&self, positions: &[Vec3], t: usize) -> Array2<T> {
        self.basis(positions).features(&self.masks(t))
    }
}

/// Sin/cos features computed once per point set.
#[derive(Debug, Clone)]
pub struct EncodedBasis<T> {
    raw: Array2<T>,
    blocks: usize,
}

impl<T: Float> EncodedBasis<T> {
    pub fn len(&self) -> usize {
        self.raw.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.nrows() == 0
    }

    pub fn features(&self, masks: &[f64]) -> Array2<T> {
        let mut out = self.raw.clone();
        for j in 0..self.blocks {
            let a = T::from_f64(masks[j]).unwrap();
            if a != T::one() {
                out.slice_mut(ndarray::s![.., 3 + 6 * j..9 + 6 * j]).mapv_inplace(|v| v * a);
            }
        }
        out
    }
}
