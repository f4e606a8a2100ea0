//! Plain-text complex numbers in `re+imi` form, e.g. `0.5+0.5i`, `-1e-3i`, `2`.

use num_complex::Complex64;

/// Parses `a`, `bi`, `a+bi` or `a-bi`. A bare `i` means unit imaginary.
pub fn parse_complex(text: &str) -> Option<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };

    // Split at the last sign that is not the leading sign and not part of an exponent.
    let bytes = body.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            split = Some(k);
            break;
        }
    }
    let (re_part, im_part) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("", body),
    };
    let re = if re_part.is_empty() {
        0.0
    } else {
        re_part.parse::<f64>().ok()?
    };
    let im = match im_part {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().ok()?,
    };
    Some(Complex64::new(re, im))
}

/// Shortest round-trip representation, always in `re+imi` form.
pub fn format_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accepted_forms() {
        let cases = [
            ("0.5+0.5i", Complex64::new(0.5, 0.5)),
            ("0.5", Complex64::new(0.5, 0.0)),
            ("-2", Complex64::new(-2.0, 0.0)),
            ("i", Complex64::new(0.0, 1.0)),
            ("-i", Complex64::new(0.0, -1.0)),
            ("3i", Complex64::new(0.0, 3.0)),
            ("1-i", Complex64::new(1.0, -1.0)),
            ("1e-3-2.5e+2i", Complex64::new(1e-3, -250.0)),
            ("-1E-3+4E-5i", Complex64::new(-1e-3, 4e-5)),
            (" 0.25 - 0.75i ", Complex64::new(0.25, -0.75)),
        ];
        for (text, want) in cases {
            assert_eq!(parse_complex(text), Some(want), "{text}");
        }
    }

    #[test]
    fn rejects_garbage() {
        for text in ["", "abc", "1+2j", "1+2ii", "++1i"] {
            assert_eq!(parse_complex(text), None, "{text}");
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(re in proptest::num::f64::NORMAL | proptest::num::f64::ZERO,
                                   im in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let z = Complex64::new(re, im);
            let back = parse_complex(&format_complex(z)).unwrap();
            prop_assert_eq!(back.re.to_bits(), z.re.to_bits());
            prop_assert_eq!(back.im.to_bits(), z.im.to_bits());
        }
    }
}
