//! Formatting helpers shared by CSV/JSON reports: deterministic float
//! rendering and human-checkable angle display.

/// Shortest round-trip decimal form; deterministic for a given binary.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Render an angle as a rational multiple of pi when it is within 1e-9 of
/// one with denominator <= 24; empty string otherwise. Examples: `0`,
/// `pi/2`, `-3pi/4`, `2pi`.
pub fn pi_multiple(angle: f64) -> String {
    use std::f64::consts::PI;
    for den in 1..=24u64 {
        let ratio = angle * den as f64 / PI;
        let num = ratio.round();
        if (ratio - num).abs() * PI / den as f64 > 1e-9 {
            continue;
        }
        let num = num as i64;
        if num == 0 {
            return "0".to_string();
        }
        let g = gcd(num.unsigned_abs(), den);
        let (n, d) = (num / g as i64, den / g);
        return match (n, d) {
            (1, 1) => "pi".to_string(),
            (-1, 1) => "-pi".to_string(),
            (n, 1) => format!("{n}pi"),
            (1, d) => format!("pi/{d}"),
            (-1, d) => format!("-pi/{d}"),
            (n, d) => format!("{n}pi/{d}"),
        };
    }
    String::new()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}
