//! Fixed-length inference windows over long sequences and their recombination.

use crate::error::{Error, Result};
use crate::moda::MotionOutput;

/// Windows of `window` frames every `stride` frames; the last one is right-aligned
/// to end at `t`. Sequences no longer than `window` get a single window.
/// `stride` is clamped to `1..=window` so consecutive windows always touch.
pub fn sliding_windows(t: usize, window: usize, stride: usize) -> Vec<(usize, usize)> {
    let window = window.max(1);
    let stride = stride.clamp(1, window);
    if t <= window {
        return vec![(0, t)];
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        if start + window >= t {
            out.push((t - window, t));
            return out;
        }
        out.push((start, start + window));
        start += stride;
    }
}

/// Stitches per-window predictions. Inside an overlap of `L` frames starting at
/// `s`, frame `f` takes weight `(f - s) / L` from the later window.
pub fn blend_windows(parts: &[MotionOutput], windows: &[(usize, usize)]) -> Result<MotionOutput> {
    let bad = |m: String| Err(Error::InconsistentWindows(m));
    if parts.len() != windows.len() || parts.is_empty() {
        return bad(format!("{} predictions for {} windows", parts.len(), windows.len()));
    }
    if windows[0].0 != 0 {
        return bad(format!("first window starts at {}", windows[0].0));
    }
    for (k, (p, &(s, e))) in parts.iter().zip(windows).enumerate() {
        if e <= s || p.frames() != e - s {
            return bad(format!("window {k} spans {s}..{e} but holds {} frames", p.frames()));
        }
        if k > 0 {
            let (ps, pe) = windows[k - 1];
            if s <= ps || e <= pe || s > pe {
                return bad(format!("window {k} ({s}..{e}) does not extend {ps}..{pe} contiguously"));
            }
        }
    }
    let total = windows.last().unwrap().1;
    let mut out = MotionOutput::zeros(total);
    let mut filled = 0;
    for (p, &(s, e)) in parts.iter().zip(windows) {
        let overlap = filled - s;
        for (dst, src) in out.streams_mut().into_iter().zip(p.streams()) {
            for f in s..e {
                let w = if f < filled { (f - s) as f64 / overlap as f64 } else { 1.0 };
                for c in 0..dst.ncols() {
                    let v = src[[f - s, c]];
                    dst[[f, c]] = if w == 1.0 { v } else { dst[[f, c]] + w * (v - dst[[f, c]]) };
                }
            }
        }
        filled = e;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_examples() {
        assert_eq!(sliding_windows(300, 300, 150), vec![(0, 300)]);
        assert_eq!(sliding_windows(450, 300, 150), vec![(0, 300), (150, 450)]);
        assert_eq!(sliding_windows(200, 300, 150), vec![(0, 200)]);
        assert_eq!(sliding_windows(500, 300, 150), vec![(0, 300), (150, 450), (200, 500)]);
    }

    fn constant(frames: usize, v: f64) -> MotionOutput {
        let mut m = MotionOutput::zeros(frames);
        for s in m.streams_mut() {
            s.fill(v);
        }
        m
    }

    #[test]
    fn single_window_is_identity() {
        let mut m = constant(7, 0.0);
        m.mouth[[3, 5]] = 2.5;
        assert_eq!(blend_windows(&[m.clone()], &[(0, 7)]).unwrap(), m);
    }

    #[test]
    fn overlap_midpoint_is_the_mean() {
        let w = sliding_windows(450, 300, 150);
        let out = blend_windows(&[constant(300, 1.0), constant(300, 3.0)], &w).unwrap();
        assert_eq!(out.pose[[0, 0]], 1.0);
        assert_eq!(out.pose[[149, 0]], 1.0);
        assert_eq!(out.pose[[150, 0]], 1.0);
        assert_eq!(out.pose[[225, 0]], 2.0);
        assert_eq!(out.pose[[300, 0]], 3.0);
        assert_eq!(out.pose[[449, 0]], 3.0);
        let same = blend_windows(&[constant(300, 1.5), constant(300, 1.5)], &w).unwrap();
        assert!(same.torso.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn inconsistent_inputs() {
        let w = sliding_windows(450, 300, 150);
        assert!(matches!(blend_windows(&[constant(300, 0.0)], &w), Err(Error::InconsistentWindows(_))));
        assert!(matches!(
            blend_windows(&[constant(300, 0.0), constant(299, 0.0)], &w),
            Err(Error::InconsistentWindows(_))
        ));
        assert!(matches!(
            blend_windows(&[constant(10, 0.0), constant(10, 0.0)], &[(0, 10), (12, 22)]),
            Err(Error::InconsistentWindows(_))
        ));
    }

    proptest! {
        #[test]
        fn windows_cover_without_gaps(t in 1usize..3000, window in 1usize..400, stride in 1usize..400) {
            let w = sliding_windows(t, window, stride);
            prop_assert_eq!(w[0].0, 0);
            prop_assert_eq!(w.last().unwrap().1, t);
            for pair in w.windows(2) {
                prop_assert!(pair[1].0 <= pair[0].1);
                prop_assert!(pair[1].0 > pair[0].0);
            }
            for &(s, e) in &w {
                prop_assert_eq!(e - s, t.min(window));
            }
        }
    }
}
