//! Flat `key=value` configuration text.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored; whitespace around keys and values is trimmed. Later assignments
//! override earlier ones.

use crate::error::{Error, Result};

pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {l:?}", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            Ok((k.to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn parse_num<N: std::str::FromStr>(key: &str, value: &str) -> Result<N> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// Comma-separated list of numbers.
pub fn parse_list<N: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<N>> {
    value.split(',').map(|s| parse_num(key, s.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = parse_kv("# c\n a = 1 \n\nb=x=y\n").unwrap();
        assert_eq!(kv, [("a".into(), "1".into()), ("b".into(), "x=y".into())]);
        assert!(parse_kv("novalue").is_err());
        assert!(parse_kv("=3").is_err());
        assert_eq!(parse_list::<f64>("k", "0.5, 1").unwrap(), [0.5, 1.0]);
        assert!(parse_num::<usize>("k", "-1").is_err());
    }
}
