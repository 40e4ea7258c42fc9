//! Byte-size and duration arguments: `4096`, `64KiB`, `2MiB`, `1GiB`;
//! `250`, `250us`, `12ms`, `3s`.

fn split(s: &str) -> (&str, &str) {
    let s = s.trim();
    let at = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    (&s[..at], s[at..].trim())
}

fn scaled(digits: &str, factor: u64, original: &str) -> Result<u64, String> {
    let n: u64 = digits
        .parse()
        .map_err(|_| format!("'{original}' does not start with a number"))?;
    n.checked_mul(factor)
        .ok_or_else(|| format!("'{original}' is too large"))
}

/// Parses a byte count with an optional binary suffix.
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let (digits, unit) = split(s);
    let factor = match unit {
        "" | "B" => 1,
        "KiB" => 1 << 10,
        "MiB" => 1 << 20,
        "GiB" => 1 << 30,
        other => {
            return Err(format!(
                "unknown size unit '{other}' (use B, KiB, MiB or GiB)"
            ))
        }
    };
    scaled(digits, factor, s)
}

/// Parses a duration into microseconds.
pub fn parse_micros(s: &str) -> Result<u64, String> {
    let (digits, unit) = split(s);
    let factor = match unit {
        "" | "us" => 1,
        "ms" => 1_000,
        "s" => 1_000_000,
        other => return Err(format!("unknown time unit '{other}' (use us, ms or s)")),
    };
    scaled(digits, factor, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_bytes("4096"), Ok(4096));
        assert_eq!(parse_bytes("64KiB"), Ok(65536));
        assert_eq!(parse_bytes("2MiB"), Ok(2 << 20));
        assert_eq!(parse_bytes("1GiB"), Ok(1 << 30));
        assert_eq!(parse_bytes("7B"), Ok(7));
        assert!(parse_bytes("3MB").is_err());
        assert!(parse_bytes("KiB").is_err());
        assert!(parse_bytes("99999999999999GiB").is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_micros("250"), Ok(250));
        assert_eq!(parse_micros("250us"), Ok(250));
        assert_eq!(parse_micros("12ms"), Ok(12_000));
        assert_eq!(parse_micros("3s"), Ok(3_000_000));
        assert!(parse_micros("1h").is_err());
    }
}
