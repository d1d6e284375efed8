use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::{AutodiffError, Scalar, Tensor};

const MAGIC: &[u8; 8] = b"COTACKPT";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Buffers such as running statistics are stored but never optimized.
    pub trainable: bool,
}

/// Named parameter table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T = f64> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        self.insert(name, value, false)
    }

    fn insert(&mut self, name: &str, value: Tensor<T>, trainable: bool) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter name {name}");
        let id = ParamId(self.params.len());
        self.params.push(Param { name: name.to_string(), value, trainable });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Glorot-uniform initialized matrix of shape `[fan_in, fan_out]`.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let data = (0..fan_in * fan_out).map(|_| T::of(dist.sample(rng))).collect();
        self.add(name, Tensor::matrix(fan_in, fan_out, data).expect("shape"))
    }

    pub fn add_uniform<R: Rng>(&mut self, name: &str, shape: &[usize], scale: f64, rng: &mut R) -> ParamId {
        let dist = Uniform::new_inclusive(-scale, scale).expect("finite bounds");
        let data = (0..shape.iter().product()).map(|_| T::of(dist.sample(rng))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), AutodiffError> {
        let cur = &mut self.params[id.0].value;
        if cur.shape() != value.shape() {
            return Err(AutodiffError::Shape { op: "set_param", left: cur.shape().to_vec(), right: value.shape().to_vec() });
        }
        *cur = value;
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        buf.push(T::BYTES);
        buf.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            buf.extend_from_slice(p.name.as_bytes());
            buf.push(p.trainable as u8);
            buf.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
            for &d in p.value.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in p.value.data() {
                v.write_le(&mut buf);
            }
        }
        w.write_all(&buf)
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, AutodiffError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(AutodiffError::Format("not a checkpoint file".into()));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(AutodiffError::Format(format!("unsupported checkpoint version {version}")));
        }
        let width = cur.take(1)?[0];
        if width != T::BYTES {
            return Err(AutodiffError::Format(format!(
                "checkpoint stores {width}-byte floats, expected {}",
                T::BYTES
            )));
        }
        let count = cur.u32()? as usize;
        let mut store = Self::new();
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| AutodiffError::Format("parameter name is not UTF-8".into()))?
                .to_string();
            let trainable = cur.take(1)?[0] != 0;
            let ndim = cur.u32()? as usize;
            let shape = (0..ndim).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = cur.take(n * width as usize)?;
            let data = raw.chunks_exact(width as usize).map(T::read_le).collect();
            if store.by_name.contains_key(&name) {
                return Err(AutodiffError::Format(format!("duplicate parameter {name}")));
            }
            store.insert(&name, Tensor::new(shape, data)?, trainable);
        }
        Ok(store)
    }

    /// Copies every parameter of `other` with a matching name and shape.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<(), AutodiffError> {
        for p in &mut self.params {
            let src = other
                .id(&p.name)
                .ok_or_else(|| AutodiffError::Format(format!("checkpoint lacks parameter {}", p.name)))?;
            let v = &other.params[src.0].value;
            if v.shape() != p.value.shape() {
                return Err(AutodiffError::Shape { op: "load_from", left: p.value.shape().to_vec(), right: v.shape().to_vec() });
            }
            p.value = v.clone();
        }
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AutodiffError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AutodiffError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, AutodiffError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
