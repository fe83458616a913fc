/// Number of temporal encoding values per frame.
pub const TPE_DIM: usize = 12;

/// `(sin(t 2^i / 100), cos(t 2^i / 100))` for `i = 0..6`, interleaved.
pub fn tpe(t: u64) -> [f64; TPE_DIM] {
    let mut out = [0.0; TPE_DIM];
    for i in 0..TPE_DIM / 2 {
        let a = t as f64 * (1u64 << i) as f64 / 100.0;
        out[2 * i] = a.sin();
        out[2 * i + 1] = a.cos();
    }
    out
}
