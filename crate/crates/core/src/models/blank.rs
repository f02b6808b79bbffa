use serde::{Deserialize, Serialize};

use super::{eval, ModelError};
use crate::datasets::TensorSet;
use crate::imaging::GrayImage;
use crate::nn::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CellClass {
    Blank,
    Digit,
}

/// Classifies model-ready crops (ink-high, 32×32) as blank or digit, with the
/// winning class probability.
pub fn classify_blank(net: &mut Network, crops: &[GrayImage]) -> Result<Vec<(CellClass, f32)>, ModelError> {
    if crops.is_empty() {
        return Ok(Vec::new());
    }
    let labels = vec![0u8; crops.len()];
    let set = TensorSet::from_images(crops, &labels);
    let probs = net.infer_batched(&set.inputs, 256)?;
    Ok((0..crops.len())
        .map(|i| {
            let (c, p) = eval::argmax(probs.row(i));
            (if c == 1 { CellClass::Digit } else { CellClass::Blank }, p)
        })
        .collect())
}

/// A digit survives only if another cell of its row is also a digit.
/// Returns the indices that were demoted.
pub fn apply_row_rule(cells: &mut [CellClass]) -> Vec<usize> {
    let digits: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == CellClass::Digit).collect();
    if digits.len() == 1 {
        cells[digits[0]] = CellClass::Blank;
        return digits;
    }
    Vec::new()
}
