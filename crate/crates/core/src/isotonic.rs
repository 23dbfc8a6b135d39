//! Weighted pool-adjacent-violators for nonincreasing least squares.

#[derive(Debug, Clone, Copy)]
struct Block {
    weight: f64,
    value: f64,
    len: usize,
}

impl Block {
    fn pool(self, other: Block) -> Block {
        let weight = self.weight + other.weight;
        let value = if weight > 0.0 {
            (self.weight * self.value + other.weight * other.value) / weight
        } else {
            // Nothing in either block carries weight; any common value is optimal.
            (self.len as f64 * self.value + other.len as f64 * other.value)
                / (self.len + other.len) as f64
        };
        Block {
            weight,
            value,
            len: self.len + other.len,
        }
    }
}

/// Minimize `Σ w_j (x_j − y_j)²` subject to `x_1 ≥ x_2 ≥ … ≥ x_n`.
///
/// Weights must be nonnegative. Adjacent blocks that violate the ordering
/// are replaced by their weighted mean until none remain.
pub fn pav_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(
        values.len(),
        weights.len(),
        "values and weights differ in length"
    );
    let mut stack: Vec<Block> = Vec::with_capacity(values.len());
    for (&value, &weight) in values.iter().zip(weights) {
        debug_assert!(weight >= 0.0);
        let mut block = Block {
            weight,
            value,
            len: 1,
        };
        while let Some(&prev) = stack.last() {
            if prev.value < block.value {
                stack.pop();
                block = prev.pool(block);
            } else {
                break;
            }
        }
        stack.push(block);
    }
    stack
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.value, b.len))
        .collect()
}
