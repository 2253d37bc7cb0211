//! Versioned key/value reports written next to human-readable output.

use std::fmt;
use std::fs;
use std::path::Path;

pub const REPORT_HEADER: &str = "# mtprep-report v1";

#[derive(Debug)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            entries: vec![("command".into(), command.into())],
        }
    }

    pub fn add(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_string())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{REPORT_HEADER}")?;
        for (k, v) in &self.entries {
            writeln!(f, "{k}\t{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_header_then_pairs() {
        let mut r = Report::new("split");
        r.add("seed", 42).add("valid", 5000);
        assert_eq!(
            r.to_string(),
            "# mtprep-report v1\ncommand\tsplit\nseed\t42\nvalid\t5000\n"
        );
    }
}
