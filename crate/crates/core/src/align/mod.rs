//! Unsupervised alignment of two monolingual embedding spaces.
//!
//! A linear mapper `W` is first trained adversarially against a small
//! discriminator, then refined by alternating CSLS dictionary induction
//! with the orthogonal Procrustes solution. Model selection uses the mean
//! CSLS score of the top-1 matches, which needs no dictionary.
//!
//! Throughout, the *anchor* space is the one `W` maps into and the *moving*
//! space is the one `W` is applied to: source and target respectively for
//! [`Direction::TargetToSource`], the other way round for
//! [`Direction::SourceToTarget`].

mod adversarial;
mod csls;
mod discriminator;
mod procrustes;
mod refine;

pub use adversarial::{adversarial_train, orthogonalize_step, AdversarialConfig, AdversarialReport};
pub use csls::{csls, csls_precision_at_1, CslsIndex};
pub use discriminator::{adversary_loss, discriminator_loss, Discriminator};
pub use procrustes::{procrustes, procrustes_mapper};
pub use refine::{induce_dictionary, refine, refine_with_report, unsupervised_criterion, RefineReport};

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::embeddings::EmbeddingTable;
use crate::numeric::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    TargetToSource,
    SourceToTarget,
}

impl Direction {
    /// Default per target language: source-to-target everywhere except
    /// Arabic and Finnish.
    pub fn default_for(target_language: &str) -> Direction {
        match target_language {
            "ar" | "fi" => Direction::TargetToSource,
            _ => Direction::SourceToTarget,
        }
    }

    /// `(anchor, moving)` for a source/target pair.
    pub fn sides<'a>(&self, source: &'a EmbeddingTable, target: &'a EmbeddingTable) -> (&'a EmbeddingTable, &'a EmbeddingTable) {
        match self {
            Direction::TargetToSource => (source, target),
            Direction::SourceToTarget => (target, source),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TargetToSource => "t_to_s",
            Direction::SourceToTarget => "s_to_t",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t_to_s" | "t2s" => Ok(Direction::TargetToSource),
            "s_to_t" | "s2t" => Ok(Direction::SourceToTarget),
            _ => Err(Error::usage(format!("unknown mapping direction `{s}`"))),
        }
    }
}

/// A `d x d` map applied as `W y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapper {
    pub w: Matrix,
    pub direction: Direction,
}

impl LinearMapper {
    pub fn identity(d: usize, direction: Direction) -> Self {
        LinearMapper {
            w: Matrix::identity(d),
            direction,
        }
    }

    pub fn new(w: Matrix, direction: Direction) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::usage("mapper must be square"));
        }
        Ok(LinearMapper { w, direction })
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        self.w.orthogonality_defect()
    }

    /// Source and target tables expressed in the common (anchor) space.
    pub fn common_space(&self, source: &EmbeddingTable, target: &EmbeddingTable) -> Result<(EmbeddingTable, EmbeddingTable)> {
        Ok(match self.direction {
            Direction::TargetToSource => (source.clone(), target.apply_mapper(self)?),
            Direction::SourceToTarget => (source.apply_mapper(self)?, target.clone()),
        })
    }
}

/// Induced word pairs as `(target row, source row)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedDictionary {
    pub pairs: Vec<(usize, usize)>,
}

impl SeedDictionary {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }

    /// Writes `target_word source_word` lines.
    pub fn write<W: Write>(&self, mut w: W, source: &EmbeddingTable, target: &EmbeddingTable) -> Result<()> {
        for &(t, s) in &self.pairs {
            writeln!(w, "{} {}", target.words()[t], source.words()[s])?;
        }
        Ok(())
    }

    /// Reads `target_word source_word` lines, skipping pairs with a word
    /// missing from either table.
    pub fn read<R: BufRead>(r: R, source: &EmbeddingTable, target: &EmbeddingTable) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            let (t, s) = match (it.next(), it.next(), it.next()) {
                (None, ..) => continue,
                (Some(t), Some(s), None) => (t, s),
                _ => return Err(Error::parse(i + 1, "expected `target_word source_word`")),
            };
            if let (Some(t), Some(s)) = (target.index_of(t), source.index_of(s)) {
                pairs.push((t, s));
            }
        }
        Ok(SeedDictionary { pairs })
    }
}

/// CSLS precision@1 of translating the moving side into the anchor side
/// under `mapper`, scored against `(target row, source row)` gold pairs.
pub fn precision_at_1(
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    mapper: &LinearMapper,
    k: usize,
    gold: &SeedDictionary,
) -> Result<f64> {
    let (src, tgt) = mapper.common_space(source, target)?;
    match mapper.direction {
        Direction::TargetToSource => csls_precision_at_1(tgt.vectors(), src.vectors(), k, &gold.pairs),
        Direction::SourceToTarget => {
            let flipped: Vec<_> = gold.pairs.iter().map(|&(t, s)| (s, t)).collect();
            csls_precision_at_1(src.vectors(), tgt.vectors(), k, &flipped)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::rotation_fixture;

    #[test]
    fn dictionary_round_trip() {
        let fx = rotation_fixture(10, 3, 0.0, 1).unwrap();
        let d = SeedDictionary {
            pairs: vec![(0, 0), (3, 7), (9, 2)],
        };
        let mut buf = Vec::new();
        d.write(&mut buf, &fx.source, &fx.target).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().next(), Some("t0 s0"));
        let text = format!("{}\nnope s1\n\n", String::from_utf8(buf).unwrap());
        assert_eq!(SeedDictionary::read(text.as_bytes(), &fx.source, &fx.target).unwrap(), d);
        assert!(SeedDictionary::read("a b c\n".as_bytes(), &fx.source, &fx.target).is_err());
    }

    #[test]
    fn precision_under_the_true_rotation() {
        let fx = rotation_fixture(50, 16, 0.0, 2).unwrap();
        let gold = SeedDictionary { pairs: fx.gold_pairs() };
        let t2s = LinearMapper::new(fx.rotation.clone(), Direction::TargetToSource).unwrap();
        assert_eq!(precision_at_1(&fx.source, &fx.target, &t2s, 10, &gold).unwrap(), 1.0);
        let s2t = LinearMapper::new(fx.rotation.transpose(), Direction::SourceToTarget).unwrap();
        assert_eq!(precision_at_1(&fx.source, &fx.target, &s2t, 10, &gold).unwrap(), 1.0);
        let id = LinearMapper::identity(16, Direction::TargetToSource);
        assert!(precision_at_1(&fx.source, &fx.target, &id, 10, &gold).unwrap() < 0.5);
    }
}
