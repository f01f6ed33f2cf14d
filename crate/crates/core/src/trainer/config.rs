use std::fmt;
use std::str::FromStr;

use crate::align::Direction;
use crate::corpus::TagScheme;
use crate::tagger::ModelConfig;
use crate::{Error, Result};

/// Model variants, from plain monolingual training to augmented fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Native source embeddings; the target is tagged in its own space.
    SourceMono,
    /// Mapped embeddings, no character encoder.
    CrossWordNoChar,
    /// Mapped embeddings with characters.
    CrossWord,
    /// As `CrossWord` with forward and backward cells tied.
    CrossShared,
    /// Adds a target encoder and fine-tunes on pseudo-labels.
    CrossAugmented,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SourceMono,
        Variant::CrossWordNoChar,
        Variant::CrossWord,
        Variant::CrossShared,
        Variant::CrossAugmented,
    ];

    pub fn uses_chars(self) -> bool {
        self != Variant::CrossWordNoChar
    }

    pub fn tied(self) -> bool {
        self == Variant::CrossShared
    }

    pub fn uses_mapping(self) -> bool {
        self != Variant::SourceMono
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::SourceMono => "source_mono",
            Variant::CrossWordNoChar => "cross_word_nochar",
            Variant::CrossWord => "cross_word",
            Variant::CrossShared => "cross_shared",
            Variant::CrossAugmented => "cross_augmented",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::usage(format!("unknown variant `{s}`")))
    }
}

/// Split used to pick the retained checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    SrcDev,
    TgtDev,
    TgtTest,
}

impl Selection {
    pub const ALL: [Selection; 3] = [Selection::SrcDev, Selection::TgtDev, Selection::TgtTest];
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::SrcDev => "src_dev",
            Selection::TgtDev => "tgt_dev",
            Selection::TgtTest => "tgt_test",
        })
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "src_dev" => Ok(Selection::SrcDev),
            "tgt_dev" => Ok(Selection::TgtDev),
            "tgt_test" => Ok(Selection::TgtTest),
            _ => Err(Error::usage(format!("unknown selection mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr0: f64,
    pub decay: f64,
    pub lr_floor: f64,
    pub clip: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Batches between evaluations.
    pub eval_every: usize,
    pub max_len: usize,
    /// Fine-tuning steps per round; `None` means one pass over the source data.
    pub n_steps: Option<usize>,
    /// Hard cap on fine-tuning rounds.
    pub rounds: usize,
    pub patience: usize,
    pub variant: Variant,
    pub direction: Direction,
    pub selection: Selection,
    pub scheme: TagScheme,
    pub seed: u64,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub word_hidden: usize,
    pub dense_dim: usize,
    pub constrained: bool,
    /// Fine-tuning terms; switching one off is an ablation.
    pub use_source_term: bool,
    pub use_target_via_source: bool,
    pub use_target_via_target: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr0: 0.1,
            decay: 0.01,
            lr_floor: 1e-4,
            clip: 5.0,
            dropout: 0.5,
            epochs: 30,
            batch_size: 16,
            eval_every: 150,
            max_len: 250,
            n_steps: None,
            rounds: 20,
            patience: 5,
            variant: Variant::CrossWord,
            direction: Direction::SourceToTarget,
            selection: Selection::SrcDev,
            scheme: TagScheme::Iobes,
            seed: 1,
            char_dim: 25,
            char_hidden: 25,
            word_hidden: 100,
            dense_dim: 100,
            constrained: false,
            use_source_term: true,
            use_target_via_source: true,
            use_target_via_target: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::usage(format!("bad value `{value}` for `{key}`")))
}

/// `max(lr0 / (1 + decay * epoch), floor)`.
pub fn lr_at(cfg: &TrainingConfig, epoch: usize) -> f64 {
    (cfg.lr0 / (1.0 + cfg.decay * epoch as f64)).max(cfg.lr_floor)
}

impl TrainingConfig {
    pub fn model_config(&self, emb_dim: usize) -> ModelConfig {
        ModelConfig {
            char_dim: self.char_dim,
            char_hidden: self.char_hidden,
            word_hidden: self.word_hidden,
            dense_dim: self.dense_dim,
            emb_dim,
            use_chars: self.variant.uses_chars(),
            tied: self.variant.tied(),
            dropout: self.dropout,
            constrained: self.constrained,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("lr_floor", self.lr_floor),
            ("clip", self.clip),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("`{k}` must be positive")));
            }
        }
        if self.decay < 0.0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::usage("decay must be non-negative and dropout in [0, 1)"));
        }
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("max_len", self.max_len),
            ("char_dim", self.char_dim),
            ("char_hidden", self.char_hidden),
            ("word_hidden", self.word_hidden),
            ("dense_dim", self.dense_dim),
        ] {
            if v == 0 {
                return Err(Error::usage(format!("`{k}` must be positive")));
            }
        }
        if self.n_steps == Some(0) {
            return Err(Error::usage("`n_steps` must be positive"));
        }
        Ok(())
    }

    /// Sets one `key=value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr0" => self.lr0 = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "lr_floor" => self.lr_floor = parse(key, value)?,
            "clip" => self.clip = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "n_steps" => {
                self.n_steps = match value.trim() {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "rounds" => self.rounds = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "variant" => self.variant = value.trim().parse()?,
            "direction" => self.direction = value.trim().parse()?,
            "selection" => self.selection = value.trim().parse()?,
            "scheme" => self.scheme = value.trim().parse()?,
            "seed" => self.seed = parse(key, value)?,
            "char_dim" => self.char_dim = parse(key, value)?,
            "char_hidden" => self.char_hidden = parse(key, value)?,
            "word_hidden" => self.word_hidden = parse(key, value)?,
            "dense_dim" => self.dense_dim = parse(key, value)?,
            "constrained" => self.constrained = parse(key, value)?,
            "use_source_term" => self.use_source_term = parse(key, value)?,
            "use_target_via_source" => self.use_target_via_source = parse(key, value)?,
            "use_target_via_target" => self.use_target_via_target = parse(key, value)?,
            _ => return Err(Error::usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        let v: Vec<(&str, String)> = vec![
            ("lr0", self.lr0.to_string()),
            ("decay", self.decay.to_string()),
            ("lr_floor", self.lr_floor.to_string()),
            ("clip", self.clip.to_string()),
            ("dropout", self.dropout.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("max_len", self.max_len.to_string()),
            ("n_steps", self.n_steps.map_or("auto".to_string(), |n| n.to_string())),
            ("rounds", self.rounds.to_string()),
            ("patience", self.patience.to_string()),
            ("variant", self.variant.to_string()),
            ("direction", self.direction.to_string()),
            ("selection", self.selection.to_string()),
            ("scheme", self.scheme.to_string()),
            ("seed", self.seed.to_string()),
            ("char_dim", self.char_dim.to_string()),
            ("char_hidden", self.char_hidden.to_string()),
            ("word_hidden", self.word_hidden.to_string()),
            ("dense_dim", self.dense_dim.to_string()),
            ("constrained", self.constrained.to_string()),
            ("use_source_term", self.use_source_term.to_string()),
            ("use_target_via_source", self.use_target_via_source.to_string()),
            ("use_target_via_target", self.use_target_via_target.to_string()),
        ];
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Applies a flat `key=value` text, ignoring blank lines and `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(no + 1, format!("expected key=value, found `{line}`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let cfg = TrainingConfig::default();
        assert_eq!(lr_at(&cfg, 0), 0.1);
        assert_eq!(lr_at(&cfg, 10), 0.1 / 1.1);
        assert_eq!(lr_at(&cfg, 1_000_000), 1e-4);
        let mut prev = f64::INFINITY;
        for e in 0..5000 {
            let lr = lr_at(&cfg, e);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainingConfig::default();
        cfg.apply_text("# comment\nvariant = cross_shared\nn_steps=7\nselection=tgt_dev\n\nlr0=0.05\n").unwrap();
        assert_eq!(cfg.variant, Variant::CrossShared);
        assert_eq!(cfg.n_steps, Some(7));
        let mut back = TrainingConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_entries() {
        let mut cfg = TrainingConfig::default();
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("epochs", "-1").is_err());
        assert!(matches!(cfg.apply_text("x\n"), Err(Error::Parse { line: 1, .. })));
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_flags() {
        assert!(!Variant::CrossWordNoChar.uses_chars());
        assert!(Variant::CrossShared.tied());
        assert!(!Variant::CrossWord.tied());
        assert!(!Variant::SourceMono.uses_mapping());
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
    }
}
