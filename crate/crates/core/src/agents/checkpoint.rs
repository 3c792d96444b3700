//! Versioned binary policy checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "MMBCKPT\0"
//! version    u32
//! descriptor u32 length + UTF-8 architecture string
//! controller u32 length + UTF-8 controller kind
//! iteration  u64
//! env_steps  u64
//! n          u64 parameter count
//! params     n × f64
//! adam       u8 flag; when 1: step u64, first moments n × f64, second moments n × f64
//! checksum   u64 FNV-1a over every preceding byte
//! ```

use crate::agents::{ControllerKind, Network, NetworkConfig, PolicyParams};
use crate::error::{Error, Result};
use std::path::Path;

const MAGIC: &[u8; 8] = b"MMBCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub controller: ControllerKind,
    pub iteration: u64,
    pub env_steps: u64,
    pub params: PolicyParams,
    pub adam: Option<AdamState>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for s in [self.descriptor.as_str(), self.controller.name()] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.env_steps.to_le_bytes());
        let n = self.params.values.len();
        out.extend_from_slice(&(n as u64).to_le_bytes());
        let put = |xs: &[f64], out: &mut Vec<u8>| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(&self.params.values, &mut out);
        match &self.adam {
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.step.to_le_bytes());
                put(&a.m, &mut out);
                put(&a.v, &mut out);
            }
            None => out.push(0),
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a policy checkpoint".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let descriptor = r.string()?;
        let controller = r.string()?.parse()?;
        let iteration = r.u64()?;
        let env_steps = r.u64()?;
        let n = r.u64()? as usize;
        let params = PolicyParams { values: r.f64s(n)? };
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let m = r.f64s(n)?;
                let v = r.f64s(n)?;
                Some(AdamState { step, m, v })
            }
            f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            descriptor,
            controller,
            iteration,
            env_steps,
            params,
            adam,
        })
    }

    /// Refuses checkpoints whose architecture differs from `network`.
    pub fn check_compatible(&self, network: &Network) -> Result<()> {
        let want = network.config.descriptor();
        if self.descriptor != want {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint has '{}', expected '{want}'",
                self.descriptor
            )));
        }
        if self.params.values.len() != network.param_count() {
            return Err(Error::Checkpoint("parameter count does not match architecture".into()));
        }
        Ok(())
    }

    /// Network described by the checkpoint, verified against its parameters.
    pub fn network(&self) -> Result<Network> {
        let network = Network::new(NetworkConfig::from_descriptor(&self.descriptor)?)?;
        self.check_compatible(&network)?;
        Ok(network)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
