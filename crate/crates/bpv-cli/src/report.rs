//! Output plumbing: every command renders its result both as text lines
//! and as one JSON document built from the same data, so the two formats
//! can never disagree on a verdict. `--out` redirects either to a file.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub struct Sink {
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Sink {
    pub fn emit(&self, text: &str, json: &serde_json::Value) -> anyhow::Result<()> {
        let rendered = match self.format {
            Format::Text => {
                let mut t = text.to_string();
                if !t.ends_with('\n') {
                    t.push('\n');
                }
                t
            }
            Format::Json => format!("{json:#}\n"),
        };
        match &self.out {
            Some(path) => fs::write(path, rendered)
                .with_context(|| format!("writing report to {}", path.display())),
            None => {
                print!("{rendered}");
                Ok(())
            }
        }
    }
}
