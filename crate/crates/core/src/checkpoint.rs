//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "UGPIG1" | version u32 | flags u32
//! dim, intents, layers, entities, relations, items: u32
//! entity, relation and item names: u32 length + UTF-8 bytes each
//! entity, relation, item, intent weight matrices and fusion vector: f32
//! bin count u32, then per bin: name, rule, resolved edges
//! CRC-32 of every preceding byte: u32
//! ```
//!
//! Parameters are stored as `f32`, so saving rounds each value to the
//! nearest `f32`. Loading restores those values exactly, and saving a loaded
//! checkpoint reproduces the original bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{BinRule, BinSet, Bins};
use crate::model::{Fusion, Matrix, ModelParams, ModelShape};

pub const MAGIC: &[u8; 6] = b"UGPIG1";
pub const VERSION: u32 = 1;

const FLAG_SELF: u32 = 1;
const FLAG_ATTENTION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub items: Vec<String>,
    pub bins: BinSet,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let p = &self.params;
        let s = &p.shape;
        let dims = [
            s.dim,
            s.num_intents,
            s.num_layers,
            p.entity.rows(),
            p.relation.rows(),
            p.item.rows(),
        ];
        let shapes_ok = self.entities.len() == dims[3]
            && self.relations.len() == dims[4]
            && self.items.len() == dims[5]
            && [&p.entity, &p.relation, &p.item].iter().all(|m| m.cols() == s.dim)
            && p.intent_weights.rows() == dims[4]
            && p.intent_weights.cols() == s.num_intents
            && p.fusion.len() == s.dim;
        if !shapes_ok {
            return Err(Error::Input("checkpoint vocabularies do not match parameter shapes".into()));
        }

        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        let mut flags = 0;
        if s.include_self {
            flags |= FLAG_SELF;
        }
        if s.fusion == Fusion::Attention {
            flags |= FLAG_ATTENTION;
        }
        put_u32(&mut w, flags);
        for d in dims {
            put_u32(&mut w, to_u32(d)?);
        }
        for name in self.entities.iter().chain(&self.relations).chain(&self.items) {
            put_str(&mut w, name)?;
        }
        for t in p.tensors() {
            for &x in t {
                w.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        put_u32(&mut w, to_u32(self.bins.len())?);
        for b in self.bins.iter() {
            put_str(&mut w, &b.feature)?;
            match &b.rule {
                BinRule::Edges(e) => {
                    w.push(0);
                    put_f64s(&mut w, e)?;
                }
                BinRule::Quantile(n) => {
                    w.push(1);
                    put_u32(&mut w, to_u32(*n)?);
                }
            }
            put_f64s(&mut w, b.edges())?;
        }
        let crc = crc32fast::hash(&w);
        put_u32(&mut w, crc);
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let mut r = Reader { bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        if bytes.len() < r.pos + 4 {
            return Err(r.fail("truncated"));
        }
        let body = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&bytes[..body]);
        if stored != computed {
            return Err(Error::Integrity {
                offset: body,
                stored,
                computed,
            });
        }
        let mut r = Reader {
            bytes: &bytes[..body],
            pos: r.pos,
        };

        let flags = r.u32()?;
        if flags & !(FLAG_SELF | FLAG_ATTENTION) != 0 {
            return Err(r.fail(&format!("unknown flags {flags:#x}")));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [dim, intents, layers, ne, nr, ni] = dims;
        if dim == 0 || intents == 0 || layers == 0 {
            return Err(r.fail("zero model dimension"));
        }
        let entities = r.strings(ne)?;
        let relations = r.strings(nr)?;
        let items = r.strings(ni)?;
        let shape = ModelShape {
            dim,
            num_intents: intents,
            num_layers: layers,
            include_self: flags & FLAG_SELF != 0,
            fusion: if flags & FLAG_ATTENTION != 0 {
                Fusion::Attention
            } else {
                Fusion::Sum
            },
        };
        let entity = r.matrix(ne, dim)?;
        let relation = r.matrix(nr, dim)?;
        let item = r.matrix(ni, dim)?;
        let intent_weights = r.matrix(nr, intents)?;
        let fusion = r.matrix(1, dim)?.as_slice().to_vec();

        let mut bins = BinSet::new();
        let count = r.u32()?;
        for _ in 0..count {
            let feature = r.string()?;
            let at = r.pos;
            let rule = match r.u8()? {
                0 => BinRule::Edges(r.f64s()?),
                1 => BinRule::Quantile(r.u32()? as usize),
                tag => return Err(Error::Format {
                    offset: at,
                    reason: format!("unknown bin rule tag {tag}"),
                }),
            };
            let at = r.pos;
            let edges = r.f64s()?;
            let b = Bins::new(feature, rule, edges).map_err(|e| Error::Format {
                offset: at,
                reason: e.to_string(),
            })?;
            bins.insert(b);
        }
        if r.pos != body {
            return Err(r.fail("trailing bytes before checksum"));
        }
        Ok(Self {
            params: ModelParams {
                shape,
                entity,
                relation,
                item,
                intent_weights,
                fusion,
            },
            entities,
            relations,
            items,
            bins,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Input(format!("{n} does not fit the checkpoint format")))
}

fn put_u32(w: &mut Vec<u8>, x: u32) {
    w.extend_from_slice(&x.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(w, to_u32(s.len())?);
    w.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_f64s(w: &mut Vec<u8>, xs: &[f64]) -> Result<()> {
    put_u32(w, to_u32(xs.len())?);
    for x in xs {
        w.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: &str) -> Error {
        Error::Format {
            offset: self.pos,
            reason: reason.to_owned(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.bytes.len() => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => Err(self.fail("unexpected end of data")),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: at,
            reason: "invalid UTF-8 name".into(),
        })
    }

    fn strings(&mut self, n: usize) -> Result<Vec<String>> {
        (0..n).map(|_| self.string()).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| self.fail("matrix size overflow"))?;
        let raw = self.take(n)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.fail("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64) -> Checkpoint {
        let shape = ModelShape {
            dim: 4,
            num_intents: 2,
            num_layers: 3,
            include_self: false,
            fusion: Fusion::Attention,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::init(shape, 3, 2, 2, &mut rng);
        params.intent_weights.set(1, 0, 0.123456789);
        params.fusion[2] = -1.0 / 3.0;
        let mut bins = BinSet::new();
        bins.insert(Bins::with_edges("Area.GDP", vec![1.0, 3.5]).unwrap());
        bins.insert(Bins::new("Area.AAA", BinRule::Quantile(4), vec![0.1, 0.2, 0.7]).unwrap());
        Checkpoint {
            params,
            entities: vec!["u0".into(), "u1".into(), "Area.GDP:L1".into()],
            relations: vec!["Area.GDP".into(), "Area.AAA".into()],
            items: vec!["a".into(), "b".into()],
            bins,
        }
    }

    fn quantized(c: &Checkpoint) -> Checkpoint {
        let mut q = c.clone();
        for t in q.params.tensors_mut() {
            for x in t {
                *x = *x as f32 as f64;
            }
        }
        q
    }

    #[test]
    fn roundtrip_is_exact_at_f32() {
        let c = sample(1);
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, quantized(&c));
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(Checkpoint::from_bytes(&back.to_bytes().unwrap()).unwrap(), back);
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let bytes = sample(2).to_bytes().unwrap();
        for pos in [12, 40, bytes.len() / 2, bytes.len() - 5] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Integrity { .. })), "{pos}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample(3).to_bytes().unwrap();
        let mut wrong = bytes.clone();
        wrong[..6].copy_from_slice(b"XXXXXX");
        assert!(matches!(Checkpoint::from_bytes(&wrong), Err(Error::Format { offset: 0, .. })));
        bytes[6..10].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version { found: 2, expected: 1 })
        ));
        assert!(Checkpoint::from_bytes(b"UGP").is_err());
        assert!(Checkpoint::from_bytes(b"UGPIG1\x01\x00\x00\x00").is_err());
    }

    #[test]
    fn truncated_with_valid_checksum_is_format_error() {
        let bytes = sample(4).to_bytes().unwrap();
        let mut cut = bytes[..bytes.len() - 30].to_vec();
        let crc = crc32fast::hash(&cut);
        cut.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&cut), Err(Error::Format { .. })));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let c = sample(5);
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), quantized(&c));
    }

    #[test]
    fn mismatched_vocabulary_rejected() {
        let mut c = sample(6);
        c.items.pop();
        assert!(c.to_bytes().is_err());
    }
}
