//! Bit-exact text encoding of `f64` as C99 hexadecimal float literals.

/// Formats `x` as `[-]0x1.<13 hex digits>p<exp>` (normal numbers),
/// `[-]0x0.<13 hex digits>p-1022` (subnormals), `[-]0x0p+0`, `inf`, `-inf` or `nan`.
pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    if exp == 0 {
        return format!("{sign}0x0.{frac:013x}p-1022");
    }
    let e = exp - 1023;
    let esign = if e >= 0 { "+" } else { "-" };
    format!("{sign}0x1.{frac:013x}p{esign}{}", e.abs())
}

/// Parses a hexadecimal float literal (any mantissa width that fits exactly)
/// or, as a convenience, a decimal literal.
pub fn parse_hex(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let lower = body.to_ascii_lowercase();
    let value = if lower == "inf" || lower == "infinity" {
        f64::INFINITY
    } else if lower == "nan" {
        f64::NAN
    } else if let Some(hex) = lower.strip_prefix("0x") {
        parse_hex_body(hex)?
    } else {
        return s.parse::<f64>().ok();
    };
    Some(if neg { -value } else { value })
}

fn parse_hex_body(hex: &str) -> Option<f64> {
    let (mant, exp) = match hex.find('p') {
        Some(pos) => (&hex[..pos], hex[pos + 1..].parse::<i64>().ok()?),
        None => (hex, 0),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(pos) => (&mant[..pos], &mant[pos + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    // accumulate the significand exactly as an integer
    let mut sig: u128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(16)? as u128;
        if sig >> 120 != 0 {
            return None;
        }
        sig = (sig << 4) | d;
    }
    let shift = exp - 4 * frac_part.len() as i64;
    if sig == 0 {
        return Some(0.0);
    }
    // value = sig * 2^shift; require exact representability
    let lead = 127 - sig.leading_zeros() as i64; // position of top bit
    let top_exp = lead + shift; // unbiased exponent of the value
    if top_exp > 1023 {
        return None;
    }
    let min_exp = if top_exp < -1022 { -1074 } else { top_exp - 52 };
    // lowest set bit must not fall below the representable grid
    let low = sig.trailing_zeros() as i64 + shift;
    if low < min_exp {
        return None;
    }
    let mut v = sig as f64; // exact when sig has ≤ 53 significant bits after alignment
    if sig >> 53 != 0 {
        // strip trailing zeros so the conversion is exact
        let tz = sig.trailing_zeros();
        v = (sig >> tz) as f64;
        return Some(scale_pow2(v, shift + tz as i64));
    }
    v = scale_pow2(v, shift);
    Some(v)
}

fn scale_pow2(mut v: f64, mut e: i64) -> f64 {
    // step in chunks that keep intermediate values exact
    while e > 1000 {
        v *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        v *= 2f64.powi(-1000);
        e += 1000;
        if v == 0.0 {
            break;
        }
    }
    v * 2f64.powi(e as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_literals() {
        assert_eq!(format_hex(1.0), "0x1.0000000000000p+0");
        assert_eq!(format_hex(-2.5), "-0x1.4000000000000p+1");
        assert_eq!(format_hex(0.0), "0x0p+0");
        assert_eq!(format_hex(-0.0), "-0x0p+0");
        assert_eq!(parse_hex("0x1p-1"), Some(0.5));
        assert_eq!(parse_hex("0x1.8p+1"), Some(3.0));
        assert_eq!(parse_hex("2.25"), Some(2.25));
        assert_eq!(parse_hex("0xzz"), None);
    }

    #[test]
    fn roundtrip_edge_values() {
        for x in [
            f64::MIN_POSITIVE,
            f64::MIN_POSITIVE / 8.0,
            5e-324,
            f64::MAX,
            -f64::MAX,
            1.0 / 3.0,
            -0.0,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ] {
            let back = parse_hex(&format_hex(x)).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x}");
        }
        assert!(parse_hex(&format_hex(f64::NAN)).unwrap().is_nan());
    }

    proptest::proptest! {
        #[test]
        fn roundtrip_any_finite(bits in proptest::num::u64::ANY) {
            let x = f64::from_bits(bits);
            proptest::prop_assume!(!x.is_nan());
            let back = parse_hex(&format_hex(x)).unwrap();
            proptest::prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
