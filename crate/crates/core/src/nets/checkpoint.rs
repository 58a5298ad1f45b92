//! Versioned little-endian snapshot of one network and its optimizer.
//!
//! ```text
//! "CEG1"            4 bytes
//! version           u16
//! layer count       u32, then one u32 per layer size
//! hidden, output    u8 activation codes (0 identity, 1 relu, 2 tanh)
//! parameter count   u64, then that many f64
//! adam step count   u64, then first and second moments (parameter count f64 each)
//! ```

use std::fs;
use std::path::Path;

use super::{Activation, AdamState, MlpSpec, NetError, ParamVector};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CEG1";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub adam: AdamState,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.pos + n > self.buf.len() {
            return Err(NetError::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more of {})",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NetError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| NetError::Checkpoint("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn activation(code: u8) -> Result<Activation, NetError> {
    Activation::from_code(code).ok_or_else(|| NetError::Checkpoint(format!("unknown activation code {code}")))
}

impl Checkpoint {
    pub fn new(spec: MlpSpec, params: ParamVector, adam: AdamState) -> Result<Self, NetError> {
        spec.validate()?;
        params.check_len(&spec)?;
        if adam.len() != params.len() || adam.second_moment.len() != params.len() {
            return Err(NetError::LengthMismatch { what: "adam state", expected: params.len(), got: adam.len() });
        }
        Ok(Self { spec, params, adam })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.params.len();
        let mut out = Vec::with_capacity(32 + 4 * self.spec.layer_sizes.len() + 24 * n);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.spec.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.spec.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.push(self.spec.hidden_activation.code());
        out.push(self.spec.output_activation.code());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.params.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.adam.step_count.to_le_bytes());
        for v in self.adam.first_moment.iter().chain(&self.adam.second_moment) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(NetError::Checkpoint(format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}")));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!(
                "unsupported version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let layers = r.u32()? as usize;
        let layer_sizes = (0..layers).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let hidden = activation(r.u8()?)?;
        let output = activation(r.u8()?)?;
        let spec = MlpSpec::new(layer_sizes, hidden, output)?;
        let n = r.u64()? as usize;
        if n != spec.param_count() {
            return Err(NetError::Checkpoint(format!(
                "parameter count {n} does not match spec ({})",
                spec.param_count()
            )));
        }
        let params = ParamVector::from_vec(r.f64s(n)?);
        let step_count = r.u64()?;
        let first_moment = r.f64s(n)?;
        let second_moment = r.f64s(n)?;
        if r.pos != bytes.len() {
            return Err(NetError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { spec, params, adam: AdamState { first_moment, second_moment, step_count } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
