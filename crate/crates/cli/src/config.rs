//! Flat `key = value` files and `--set key=value` overrides.

use std::fmt;
use std::path::Path;

#[derive(Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Splits one `key=value` pair. Keys are trimmed and must be non-empty.
pub fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Parses a config body: one pair per line, `#` starts a comment, blank
/// lines are skipped. Order is preserved so later lines win when applied.
pub fn parse(body: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in body.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let pair = parse_pair(line).map_err(|message| ConfigError { line: i + 1, message })?;
        out.push(pair);
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: 0, message: format!("cannot read {}: {e}", path.display()) })?;
    parse(&body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks() {
        let body = "# header\nspot = 105\n\n kappa=2.5 # faster\ngrid=90,100,110\n";
        let got = parse(body).unwrap();
        assert_eq!(
            got,
            vec![
                ("spot".to_string(), "105".to_string()),
                ("kappa".to_string(), "2.5".to_string()),
                ("grid".to_string(), "90,100,110".to_string()),
            ]
        );
    }

    #[test]
    fn bad_lines_report_position() {
        let err = parse("spot=1\nnonsense\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(parse("=3").is_err());
    }

    #[test]
    fn value_may_contain_equals() {
        assert_eq!(parse_pair("out=a=b.csv").unwrap(), ("out".into(), "a=b.csv".into()));
    }
}
