use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fearsource_core::scores::DisentangleMode;
use fearsource_core::Grouping;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Pipeline settings, read from TOML. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub survey: Option<PathBuf>,
    pub surveillance: Option<PathBuf>,
    pub elections: Option<PathBuf>,
    pub grouping: Grouping,
    pub window: u32,
    pub recovery_days: u32,
    pub disentangle_mode: DisentangleMode,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub alpha: f64,
    pub bonferroni: bool,
    pub standardize: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            survey: None,
            surveillance: None,
            elections: None,
            grouping: Grouping::ByAge,
            window: fearsource_core::epi::DEFAULT_SMOOTHING_WINDOW,
            recovery_days: fearsource_core::epi::DEFAULT_RECOVERY_DAYS,
            disentangle_mode: DisentangleMode::Verbatim,
            k_min: 2,
            k_max: 10,
            seed: 0,
            alpha: 0.05,
            bonferroni: false,
            standardize: false,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub survey: Option<PathBuf>,
    pub surveillance: Option<PathBuf>,
    pub elections: Option<PathBuf>,
    pub grouping: Option<Grouping>,
    pub window: Option<u32>,
    pub disentangle_mode: Option<DisentangleMode>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub bonferroni: bool,
    pub standardize: bool,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid pipeline config: {}", e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.survey);
        resolve(base, &mut cfg.surveillance);
        resolve(base, &mut cfg.elections);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field {
                    self.$field = v.into();
                }
            )*};
        }
        take!(grouping, window, disentangle_mode, k_min, k_max, seed, out);
        if o.survey.is_some() {
            self.survey = o.survey;
        }
        if o.surveillance.is_some() {
            self.surveillance = o.surveillance;
        }
        if o.elections.is_some() {
            self.elections = o.elections;
        }
        self.bonferroni |= o.bonferroni;
        self.standardize |= o.standardize;
    }

    pub fn validate(&self) -> Result<()> {
        match &self.survey {
            None => bail!("config error in `survey`: no survey panel given"),
            Some(p) if !p.is_file() => bail!("config error in `survey`: {} does not exist", p.display()),
            _ => {}
        }
        if self.window == 0 || self.window % 2 == 0 {
            bail!("config error in `window`: must be odd and positive, got {}", self.window);
        }
        if self.recovery_days == 0 {
            bail!("config error in `recovery_days`: must be at least 1");
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            bail!("config error in `k_min`/`k_max`: need 2 <= k_min <= k_max, got {}..={}", self.k_min, self.k_max);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("config error in `alpha`: must lie in (0, 1), got {}", self.alpha);
        }
        Ok(())
    }

    /// Optional inputs that were named but are not on disk.
    pub fn missing_optional(&self) -> Vec<(&'static str, &Path)> {
        [("surveillance", &self.surveillance), ("elections", &self.elections)]
            .into_iter()
            .filter_map(|(name, p)| p.as_deref().filter(|p| !p.is_file()).map(|p| (name, p)))
            .collect()
    }

    /// Digest of the analysis settings and the bytes of every input, so it
    /// does not depend on where the files or the output live.
    pub fn digest(&self) -> Result<String> {
        let mut settings = self.clone();
        settings.survey = None;
        settings.surveillance = None;
        settings.elections = None;
        settings.out = PathBuf::new();
        let mut h = Sha256::new();
        h.update(toml::to_string(&settings)?.as_bytes());
        for (name, path) in [("survey", &self.survey), ("surveillance", &self.surveillance), ("elections", &self.elections)] {
            h.update(name.as_bytes());
            match path {
                Some(p) if p.is_file() => {
                    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                    h.update(Sha256::digest(&bytes));
                }
                _ => h.update(b"-"),
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_is_named() {
        let err = PipelineConfig::from_toml("survey = \"a.csv\"\nwindw = 3\n").unwrap_err();
        assert!(err.to_string().contains("windw"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let mut cfg = PipelineConfig::from_toml("grouping = \"edu\"\nseed = 4\n").unwrap();
        assert_eq!(cfg.grouping, Grouping::ByEducation);
        cfg.apply(Overrides {
            seed: Some(9),
            grouping: Some(Grouping::Ungrouped),
            ..Overrides::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.grouping, Grouping::Ungrouped);
    }

    #[test]
    fn validation_messages_name_fields() {
        let dir = tempfile::tempdir().unwrap();
        let survey = dir.path().join("panel.csv");
        fs::write(&survey, "x").unwrap();
        let mut cfg = PipelineConfig {
            survey: Some(survey),
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.window = 60;
        assert!(cfg.validate().unwrap_err().to_string().contains("`window`"));
        cfg.window = 61;
        cfg.survey = Some(dir.path().join("nope.csv"));
        assert!(cfg.validate().unwrap_err().to_string().contains("`survey`"));
    }

    #[test]
    fn digest_ignores_locations() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            fs::write(d.path().join("panel.csv"), "same").unwrap();
        }
        let cfg = |d: &tempfile::TempDir| PipelineConfig {
            survey: Some(d.path().join("panel.csv")),
            out: d.path().join("out"),
            ..PipelineConfig::default()
        };
        assert_eq!(cfg(&a).digest().unwrap(), cfg(&b).digest().unwrap());
        let mut other = cfg(&a);
        other.seed = 1;
        assert_ne!(cfg(&a).digest().unwrap(), other.digest().unwrap());
    }
}
