//! Reproducibility manifest written alongside every run's primary output.

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub config: C,
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(subcommand: &'static str, config: C) -> Self {
        RunManifest {
            tool: "pirate",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            config,
        }
    }

    pub fn input(mut self, path: Option<&Path>) -> Self {
        if let Some(p) = path {
            self.inputs.push(p.display().to_string());
        }
        self
    }

    pub fn output(mut self, path: Option<&Path>) -> Self {
        if let Some(p) = path {
            self.outputs.push(p.display().to_string());
        }
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Writes `<out>.manifest.json` next to the primary output, or logs the
    /// manifest to stderr when output goes to stdout.
    pub fn write(&self, primary_out: Option<&Path>) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        match primary_out {
            Some(p) => {
                let mut path = PathBuf::from(p);
                let name = path
                    .file_name()
                    .map(|n| format!("{}.manifest.json", n.to_string_lossy()))
                    .unwrap_or_else(|| "run.manifest.json".into());
                path.set_file_name(name);
                std::fs::write(path, text)?;
            }
            None => eprintln!("manifest: {text}"),
        }
        Ok(())
    }
}
