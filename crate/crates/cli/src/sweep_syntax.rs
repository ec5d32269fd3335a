use crate::error::{CliError, Result};

/// Parses `value` or an inclusive `start:step:stop` range.
///
/// `stop` is included only when it lands on the grid (to within a
/// millionth of a step).
pub fn parse_values(flag: &str, text: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| CliError::Usage(format!("--{flag} {text:?}: {why}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad("expected a finite number"))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, s, b] => {
            let (start, step, stop) = (num(a)?, num(s)?, num(b)?);
            if !(step > 0.0) {
                return Err(bad("step must be positive"));
            }
            if stop < start {
                return Err(bad("stop is below start"));
            }
            let span = (stop - start) / step;
            let count = (span + 1e-6).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(bad("range has too many points"));
            }
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(bad("expected value or start:step:stop")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inclusive_ranges() {
        assert_eq!(parse_values("snr-db", "0:10:50").unwrap().len(), 6);
        assert_eq!(parse_values("snr-db", "0:10:55").unwrap().len(), 6);
        assert_eq!(parse_values("snr-db", "0:0.1:1").unwrap().len(), 11);
        assert_eq!(parse_values("n", "1000").unwrap(), vec![1000.0]);
        assert!(parse_values("n", "1:0:2").is_err());
        assert!(parse_values("n", "a").is_err());
    }
}
