//! Magnitudes of the zeros of the Airy function Ai.

const TABLE: [f64; 10] = [
    2.338_107_410_459_767,
    4.087_949_444_130_971,
    5.520_559_828_095_551,
    6.786_708_090_071_759,
    7.944_133_587_120_853,
    9.022_650_853_340_981,
    10.040_174_341_558_086,
    11.008_524_303_733_262,
    11.936_015_563_236_262,
    12.828_776_752_865_757,
];

/// |a_q|, the magnitude of the q-th zero of Ai (q ≥ 1).
///
/// Tabulated for q ≤ 10, asymptotic series beyond.
pub fn airy_zero(q: u32) -> f64 {
    assert!(q >= 1, "Airy zero index starts at 1");
    if (q as usize) <= TABLE.len() {
        return TABLE[q as usize - 1];
    }
    let t = 3.0 * std::f64::consts::PI / 8.0 * (4.0 * q as f64 - 1.0);
    let t2 = t.powi(-2);
    t.powf(2.0 / 3.0) * (1.0 + t2 * (5.0 / 48.0 + t2 * (-5.0 / 36.0 + t2 * 77125.0 / 82944.0)))
}
