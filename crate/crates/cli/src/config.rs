use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use namegraph::corpus::SynthConfig;
use namegraph::pipeline::RunConfig;
use serde::{Deserialize, Serialize};

pub const OUT_ENV: &str = "NAMEGRAPH_OUT";
pub const DEFAULT_OUT: &str = "namegraph-out";

/// The declarative run file: input paths plus every algorithmic setting.
///
/// `output_dir` is read but never written back, so effective configs of
/// two runs that differ only in where they wrote are identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub run: RunConfig,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Reads a TOML file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.corpus = cfg.corpus.map(|p| resolve(base, p));
        cfg.embeddings = cfg.embeddings.map(|p| resolve(base, p));
        cfg.output_dir = cfg.output_dir.map(|p| resolve(base, p));
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        match &self.corpus {
            Some(p) => Ok(p),
            None => bail!("no corpus given (use --corpus or `corpus = ...` in the config)"),
        }
    }

    pub fn embeddings_path(&self) -> Result<&Path> {
        match &self.embeddings {
            Some(p) => Ok(p),
            None => bail!("no embeddings given (use --embeddings or `embeddings = ...` in the config)"),
        }
    }

    /// Resolved copy with the global seed applied, as TOML.
    pub fn effective_toml(&self) -> Result<String> {
        let eff = PipelineConfig { run: self.run.resolved(), ..self.clone() };
        Ok(toml::to_string(&eff)?)
    }
}

/// `--out`, then `NAMEGRAPH_OUT` (both via clap), then the config, then a
/// fixed default.
pub fn output_dir(flag: Option<PathBuf>, cfg: Option<&PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.cloned()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn load_synth_config(path: Option<&Path>) -> Result<SynthConfig> {
    match path {
        None => Ok(SynthConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_config_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.corpus = Some("/data/c.jsonl".into());
        cfg.run.seed = 17;
        cfg.run.graph.threshold = Some(0.25);
        let text = cfg.effective_toml().unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.run, cfg.run.resolved());
        assert_eq!(back.corpus, cfg.corpus);
        assert_eq!(back.effective_toml().unwrap(), text);
    }

    #[test]
    fn output_dir_is_not_written() {
        let cfg = PipelineConfig { output_dir: Some("/tmp/x".into()), ..Default::default() };
        assert!(!cfg.effective_toml().unwrap().contains("/tmp/x"));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "corpus = \"c.jsonl\"\nseed = 3\n[graph]\nmethod = \"knn\"\nk = 7\n").unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!(cfg.corpus.unwrap(), dir.path().join("c.jsonl"));
        assert_eq!(cfg.run.graph.k, 7);
        assert_eq!(cfg.run.seed, 3);
    }
}
