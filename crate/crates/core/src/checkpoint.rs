//! Binary container for models and mappers.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ZRXN" | u16 version | u32 len, config text | u32 tensor count
//! per tensor: u32 len, name | u32 rank | u32 dims[rank] | u8 dtype | values
//! u64 FNV-1a hash of every preceding byte
//! ```
//!
//! The config text is `key=value` lines. Values are stored as `f64` unless
//! the checkpoint asks for `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::align::{Direction, LinearMapper};
use crate::corpus::{CharIndex, TagScheme};
use crate::numeric::{Matrix, RNG_ALGORITHM};
use crate::tagger::{ModelConfig, Tagger};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZRXN";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }
}

pub type ConfigMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ConfigMap,
    pub tensors: Vec<(String, Matrix)>,
    pub dtype: DType,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Artifact(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Artifact("checkpoint is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Artifact("invalid UTF-8 in checkpoint".into()))
    }
}

impl Checkpoint {
    pub fn new(config: ConfigMap) -> Self {
        Checkpoint {
            config,
            tensors: Vec::new(),
            dtype: DType::F64,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Artifact(format!("checkpoint lacks `{key}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let mut text = String::new();
        for (k, v) in &self.config {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::usage(format!("config entry `{k}` cannot be stored")));
            }
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        put_u32(&mut out, text.len())?;
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.tensors.len())?;
        for (name, m) in &self.tensors {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, 2)?;
            put_u32(&mut out, m.rows())?;
            put_u32(&mut out, m.cols())?;
            out.push(self.dtype.tag());
            for &v in m.data() {
                match self.dtype {
                    DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
        }
        let h = fnv1a64(&out);
        out.extend_from_slice(&h.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() + 2 + 8 || &buf[..4] != MAGIC {
            return Err(Error::Artifact("not a checkpoint (bad magic)".into()));
        }
        let (body, tail) = buf.split_at(buf.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored {
            return Err(Error::Artifact("checkpoint checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Artifact(format!(
                "checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let mut config = ConfigMap::new();
        for line in r.string()?.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Artifact(format!("malformed config line `{line}`")))?;
            config.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count);
        let mut dtype = DType::F64;
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()?;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let (rows, cols) = match dims[..] {
                [n] => (n, 1),
                [a, b] => (a, b),
                _ => return Err(Error::Artifact(format!("tensor `{name}` has unsupported rank {rank}"))),
            };
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Artifact("tensor too large".into()))?;
            let data: Vec<f64> = match r.take(1)?[0] {
                1 => r.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
                0 => {
                    dtype = DType::F32;
                    r.take(n * 4)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                        .collect()
                }
                t => return Err(Error::Artifact(format!("unknown dtype tag {t}"))),
            };
            tensors.push((name, Matrix::new(rows, cols, data)?));
        }
        if r.pos != body.len() {
            return Err(Error::Artifact("trailing bytes after tensor section".into()));
        }
        Ok(Checkpoint { config, tensors, dtype })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Model checkpoint with its full configuration and every tensor.
pub fn tagger_to_checkpoint(t: &Tagger, extra: &ConfigMap) -> Checkpoint {
    let mut config = extra.clone();
    config.insert("kind".into(), "tagger".into());
    config.insert("rng".into(), RNG_ALGORITHM.into());
    config.extend(t.config.to_pairs());
    config.insert("model.has_target".into(), t.has_target_encoder().to_string());
    config.insert("tags".into(), t.tags.join(" "));
    config.insert("scheme".into(), t.scheme.to_string());
    config.insert("chars".into(), t.chars.chars().iter().collect());
    let mut ck = Checkpoint::new(config);
    ck.tensors = t
        .params
        .named_tensors()
        .into_iter()
        .map(|(n, m)| (n, m.clone()))
        .collect();
    ck
}

pub fn tagger_from_checkpoint(ck: &Checkpoint) -> Result<Tagger> {
    if ck.get("kind")? != "tagger" {
        return Err(Error::Artifact("checkpoint does not hold a tagger".into()));
    }
    let config = ModelConfig::from_map(&ck.config)?;
    let tags: Vec<String> = ck.get("tags")?.split(' ').map(str::to_string).collect();
    let scheme: TagScheme = ck.get("scheme")?.parse().map_err(|_| Error::Artifact("bad scheme".into()))?;
    let chars = CharIndex::from_chars(ck.get("chars")?.chars());
    let has_target: bool = ck
        .get("model.has_target")?
        .parse()
        .map_err(|_| Error::Artifact("bad model.has_target".into()))?;
    // build the layout with a throwaway generator, then overwrite every tensor
    let mut t = Tagger::new(config, tags, scheme, chars, &mut crate::numeric::Rng::new(0))?;
    if has_target {
        t.add_target_encoder();
    }
    t.params.load_named(&ck.tensors)?;
    Ok(t)
}

pub fn mapper_to_checkpoint(m: &LinearMapper, extra: &ConfigMap) -> Checkpoint {
    let mut config = extra.clone();
    config.insert("kind".into(), "mapper".into());
    config.insert("direction".into(), m.direction.to_string());
    let mut ck = Checkpoint::new(config);
    ck.tensors.push(("w".into(), m.w.clone()));
    ck
}

pub fn mapper_from_checkpoint(ck: &Checkpoint) -> Result<LinearMapper> {
    if ck.get("kind")? != "mapper" {
        return Err(Error::Artifact("checkpoint does not hold a mapper".into()));
    }
    let direction: Direction = ck.get("direction")?.parse().map_err(|_| Error::Artifact("bad direction".into()))?;
    let w = ck
        .tensor("w")
        .ok_or_else(|| Error::Artifact("mapper checkpoint lacks `w`".into()))?;
    LinearMapper::new(w.clone(), direction).map_err(|e| Error::Artifact(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gaussian_init, Rng};
    use proptest::prelude::*;

    fn sample_tagger(tied: bool, chars: bool, target: bool) -> Tagger {
        let cfg = ModelConfig {
            char_dim: 3,
            char_hidden: 2,
            word_hidden: 3,
            dense_dim: 4,
            emb_dim: 5,
            use_chars: chars,
            tied,
            dropout: 0.5,
            constrained: false,
        };
        let tags = ["O", "B-PER", "I-PER", "E-PER", "S-PER"].iter().map(|s| s.to_string()).collect();
        let mut t = Tagger::new(cfg, tags, TagScheme::Iobes, CharIndex::from_chars("héllo=wörld".chars()), &mut Rng::new(5)).unwrap();
        if target {
            t.add_target_encoder();
            t.params.target.as_mut().unwrap().word_lstm.fwd.w.scale(0.5);
        }
        t
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tagger_round_trip_is_bit_exact() {
        for (tied, chars, target) in [(false, true, false), (true, true, true), (false, false, true)] {
            let t = sample_tagger(tied, chars, target);
            let mut extra = ConfigMap::new();
            extra.insert("train.seed".into(), "17".into());
            let bytes = tagger_to_checkpoint(&t, &extra).to_bytes().unwrap();
            let ck = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(ck.get("train.seed").unwrap(), "17");
            assert_eq!(ck.get("rng").unwrap(), "chacha8");
            let back = tagger_from_checkpoint(&ck).unwrap();
            assert_eq!(back, t);
            for ((_, a), (_, b)) in back.params.named_tensors().iter().zip(t.params.named_tensors()) {
                assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            assert_eq!(tagger_to_checkpoint(&back, &extra).to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let t = sample_tagger(false, true, false);
        let mut bytes = tagger_to_checkpoint(&t, &ConfigMap::new()).to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Artifact(_))));
        assert!(matches!(Checkpoint::from_bytes(b"nope"), Err(Error::Artifact(_))));
    }

    #[test]
    fn version_mismatch_is_an_artifact_error() {
        let ck = Checkpoint::new(ConfigMap::new());
        let mut bytes = ck.to_bytes().unwrap();
        bytes[4] = 9;
        let body = bytes.len() - 8;
        let h = fnv1a64(&bytes[..body]).to_le_bytes();
        bytes[body..].copy_from_slice(&h);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 9"));
    }

    #[test]
    fn f32_tensors_load_as_rounded_values() {
        let mut ck = Checkpoint::new(ConfigMap::new());
        ck.dtype = DType::F32;
        ck.tensors.push(("x".into(), Matrix::from_rows(&[[0.1, 2.5]]).unwrap()));
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back.dtype, DType::F32);
        assert_eq!(back.tensor("x").unwrap().data(), &[0.1f32 as f64, 2.5]);
    }

    #[test]
    fn mapper_round_trip() {
        let w = gaussian_init(&mut Rng::new(1), 4, 4, 1.0).unwrap();
        let m = LinearMapper::new(w, Direction::SourceToTarget).unwrap();
        let ck = Checkpoint::from_bytes(&mapper_to_checkpoint(&m, &ConfigMap::new()).to_bytes().unwrap()).unwrap();
        assert_eq!(mapper_from_checkpoint(&ck).unwrap(), m);
        assert!(tagger_from_checkpoint(&ck).is_err());
    }

    #[test]
    fn unstorable_config_is_rejected() {
        let mut c = ConfigMap::new();
        c.insert("a".into(), "two\nlines".into());
        assert!(Checkpoint::new(c).to_bytes().is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_content_round_trips(
            entries in proptest::collection::btree_map("[a-z.]{1,8}", "[ -~]{0,12}", 0..6),
            rows in 0usize..4, cols in 0usize..4, seed in 0u64..1000,
        ) {
            let mut ck = Checkpoint::new(entries.into_iter().filter(|(k, _)| !k.contains('=')).collect());
            let mut rng = Rng::new(seed);
            let m = Matrix::from_fn(rows, cols, |_, _| rng.normal() * 1e3);
            ck.tensors.push(("t".into(), m));
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, ck);
        }
    }
}
