//! Attention biases and the periodic positional encoding.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Hard alignment bias: `0` on the diagonal, `-inf` everywhere else.
pub fn alignment_bias(t: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, t), |(i, j)| if i == j { 0.0 } else { f64::NEG_INFINITY })
}

/// Causal bias: `floor((i - j) * q)` for `j <= i`, `-inf` above the diagonal.
///
/// Indices are zero-based; only the difference `i - j` enters the formula, so this
/// equals the one-based definition.
pub fn causal_bias(t: usize, q: f64) -> Result<Array2<f64>> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Config(format!("causal bias period parameter must be positive, got {q}")));
    }
    Ok(Array2::from_shape_fn((t, t), |(i, j)| {
        if j <= i {
            ((i - j) as f64 * q).floor()
        } else {
            f64::NEG_INFINITY
        }
    }))
}

/// Sinusoidal encoding table `[t x d]` whose rows repeat every `period` steps.
///
/// Column `2k` is `sin(pos / 10000^(2k/d))` and `2k+1` the matching cosine, with
/// `pos = step mod period`. `period = None` gives the usual aperiodic table.
pub fn encoding_table(t: usize, d: usize, period: Option<usize>) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |(step, col)| {
        let pos = match period {
            Some(p) => (step % p) as f64,
            None => step as f64,
        };
        let k = (col / 2) as f64;
        let angle = pos / 10000f64.powf(2.0 * k / d as f64);
        if col % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Adds the periodic encoding to a `[t x d]` sequence.
pub fn ppe(s: &Array2<f64>, period: usize) -> Result<Array2<f64>> {
    if period == 0 {
        return Err(Error::Config("PPE period must be at least 1".into()));
    }
    let (t, d) = s.dim();
    Ok(s + &encoding_table(t, d, Some(period)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_bias_small_cases() {
        assert_eq!(alignment_bias(1), Array2::from_elem((1, 1), 0.0));
        let m = alignment_bias(3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[[i, j]], if i == j { 0.0 } else { f64::NEG_INFINITY });
            }
        }
    }

    #[test]
    fn causal_bias_entries() {
        // one-based (i, j) = (3, 1) is zero-based (2, 0)
        assert_eq!(causal_bias(4, 1.0).unwrap()[[2, 0]], 2.0);
        assert_eq!(causal_bias(4, 0.5).unwrap()[[3, 0]], 1.0);
        let m = causal_bias(5, 1.0).unwrap();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_eq!(m[[i, j]], f64::NEG_INFINITY);
            }
        }
        assert!(causal_bias(3, 0.0).is_err());
    }

    #[test]
    fn ppe_is_periodic_and_bounded() {
        let table = encoding_table(60, 16, Some(25));
        for t in 0..35 {
            for c in 0..16 {
                assert!((table[[t, c]] - table[[t + 25, c]]).abs() < 1e-6);
            }
        }
        assert!(table.iter().all(|v| (-1.0..=1.0).contains(v)));
        let zero = Array2::zeros((60, 16));
        assert_eq!(ppe(&zero, 25).unwrap(), table);
        assert!(ppe(&zero, 0).is_err());
    }
}
