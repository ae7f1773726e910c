use std::collections::HashMap;
use std::fmt;
use std::hash::Hasher;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::range_expr::{Env, Expr, ExprError};
use crate::sym::Sym;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemKind {
    F64,
    I64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessMode {
    Read,
    Write,
}

/// Array declaration; extents are expressions over the kernel parameters.
#[derive(Debug, Clone)]
pub struct ArrayDecl {
    pub name: Sym,
    pub kind: ElemKind,
    pub dims: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("out-of-bounds access {array}{index:?} (extents {dims:?})")]
    OutOfBounds {
        array: Sym,
        index: Vec<i64>,
        dims: Vec<usize>,
    },
    #[error("array `{0}` accessed with the wrong element type")]
    KindMismatch(Sym),
    #[error("array `{name}` has invalid extent: {reason}")]
    BadExtent { name: Sym, reason: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// One recorded access, produced when recording is enabled.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Access {
    pub array: ArrayId,
    pub index: Vec<i64>,
    pub mode: AccessMode,
}

pub struct Array {
    pub name: Sym,
    pub kind: ElemKind,
    pub dims: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<AtomicU64>,
}

impl Array {
    #[inline]
    fn offset(&self, index: &[i64]) -> Result<usize, StoreError> {
        let mut off = 0usize;
        if index.len() == self.dims.len() {
            let mut ok = true;
            for ((&i, &d), &s) in index.iter().zip(&self.dims).zip(&self.strides) {
                if i < 0 || i as usize >= d {
                    ok = false;
                    break;
                }
                off += i as usize * s;
            }
            if ok {
                return Ok(off);
            }
        }
        Err(StoreError::OutOfBounds {
            array: self.name,
            index: index.to_vec(),
            dims: self.dims.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn bits(&self) -> Vec<u64> {
        self.data.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    fn unflatten(&self, mut off: usize) -> Vec<i64> {
        self.strides
            .iter()
            .map(|&s| {
                let i = off / s;
                off %= s;
                i as i64
            })
            .collect()
    }
}

/// Dense named arrays shared by all workers.
///
/// Cells are relaxed atomics holding raw bits, so concurrent tasks can touch
/// the store without `unsafe`; ordering between tasks comes from the
/// runtime's completion table, not from the store.
pub struct ArrayStore {
    arrays: Vec<Array>,
    by_name: HashMap<Sym, ArrayId>,
    recorder: Option<Mutex<Vec<Access>>>,
}

impl fmt::Debug for ArrayStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ArrayStore")
            .field("arrays", &self.arrays.iter().map(|a| (a.name, a.dims.clone())).collect::<Vec<_>>())
            .finish()
    }
}

impl ArrayStore {
    /// Allocates zero-filled arrays with extents evaluated at `params`.
    pub fn allocate(decls: &[ArrayDecl], params: &Env) -> Result<ArrayStore, StoreError> {
        let mut arrays = Vec::with_capacity(decls.len());
        let mut by_name = HashMap::new();
        for (k, d) in decls.iter().enumerate() {
            let mut dims = Vec::with_capacity(d.dims.len());
            for e in &d.dims {
                let v = e.eval(params)?;
                if v < 0 {
                    return Err(StoreError::BadExtent {
                        name: d.name,
                        reason: format!("negative extent {v}"),
                    });
                }
                dims.push(v as usize);
            }
            let mut strides = vec![1usize; dims.len()];
            for i in (0..dims.len().saturating_sub(1)).rev() {
                strides[i] = strides[i + 1] * dims[i + 1].max(1);
            }
            let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let total = match total {
                Some(t) if t <= (1 << 31) => t,
                _ => {
                    return Err(StoreError::BadExtent {
                        name: d.name,
                        reason: format!("extents {dims:?} are too large"),
                    })
                }
            };
            let data = (0..total).map(|_| AtomicU64::new(0)).collect();
            by_name.insert(d.name, ArrayId(k as u32));
            arrays.push(Array {
                name: d.name,
                kind: d.kind,
                dims,
                strides,
                data,
            });
        }
        Ok(ArrayStore {
            arrays,
            by_name,
            recorder: None,
        })
    }

    /// Fills every cell from a seeded generator: floats in [0, 1), integers in [0, 1000).
    pub fn fill_random(&self, seed: u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        for a in &self.arrays {
            for c in &a.data {
                let bits = match a.kind {
                    ElemKind::F64 => rng.gen::<f64>().to_bits(),
                    ElemKind::I64 => rng.gen_range(0i64..1000) as u64,
                };
                c.store(bits, Ordering::Relaxed);
            }
        }
    }

    pub fn enable_recording(&mut self) {
        self.recorder = Some(Mutex::new(Vec::new()));
    }

    pub fn take_recorded(&self) -> Vec<Access> {
        match &self.recorder {
            Some(r) => std::mem::take(&mut *r.lock().unwrap()),
            None => Vec::new(),
        }
    }

    #[inline]
    fn record(&self, array: ArrayId, index: &[i64], mode: AccessMode) {
        if let Some(r) = &self.recorder {
            r.lock().unwrap().push(Access {
                array,
                index: index.to_vec(),
                mode,
            });
        }
    }

    pub fn id(&self, name: Sym) -> Option<ArrayId> {
        self.by_name.get(&name).copied()
    }

    pub fn array(&self, id: ArrayId) -> &Array {
        &self.arrays[id.0 as usize]
    }

    pub fn arrays(&self) -> &[Array] {
        &self.arrays
    }

    #[inline]
    fn cell(&self, id: ArrayId, index: &[i64], kind: ElemKind) -> Result<&AtomicU64, StoreError> {
        let a = &self.arrays[id.0 as usize];
        if a.kind != kind {
            return Err(StoreError::KindMismatch(a.name));
        }
        let off = a.offset(index)?;
        Ok(&a.data[off])
    }

    #[inline]
    pub fn read_f64(&self, id: ArrayId, index: &[i64]) -> Result<f64, StoreError> {
        let c = self.cell(id, index, ElemKind::F64)?;
        self.record(id, index, AccessMode::Read);
        Ok(f64::from_bits(c.load(Ordering::Relaxed)))
    }

    #[inline]
    pub fn write_f64(&self, id: ArrayId, index: &[i64], v: f64) -> Result<(), StoreError> {
        let c = self.cell(id, index, ElemKind::F64)?;
        self.record(id, index, AccessMode::Write);
        c.store(v.to_bits(), Ordering::Relaxed);
        Ok(())
    }

    #[inline]
    pub fn read_i64(&self, id: ArrayId, index: &[i64]) -> Result<i64, StoreError> {
        let c = self.cell(id, index, ElemKind::I64)?;
        self.record(id, index, AccessMode::Read);
        Ok(c.load(Ordering::Relaxed) as i64)
    }

    #[inline]
    pub fn write_i64(&self, id: ArrayId, index: &[i64], v: i64) -> Result<(), StoreError> {
        let c = self.cell(id, index, ElemKind::I64)?;
        self.record(id, index, AccessMode::Write);
        c.store(v as u64, Ordering::Relaxed);
        Ok(())
    }

    /// Bitwise equality of every array.
    pub fn bits_eq(&self, other: &ArrayStore) -> bool {
        self.first_difference(other).is_none()
    }

    /// First cell whose bits differ, as (array, index, ours, theirs).
    pub fn first_difference(&self, other: &ArrayStore) -> Option<(Sym, Vec<i64>, u64, u64)> {
        if self.arrays.len() != other.arrays.len() {
            return Some((Sym::new("<layout>"), Vec::new(), 0, 0));
        }
        for (a, b) in self.arrays.iter().zip(&other.arrays) {
            if a.name != b.name || a.dims != b.dims {
                return Some((a.name, Vec::new(), 0, 0));
            }
            for (off, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
                let (x, y) = (x.load(Ordering::Relaxed), y.load(Ordering::Relaxed));
                if x != y {
                    return Some((a.name, a.unflatten(off), x, y));
                }
            }
        }
        None
    }

    /// Order-sensitive FNV-1a hash over all cell bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv(0xcbf29ce484222325);
        for a in &self.arrays {
            for c in &a.data {
                h.write_u64(c.load(Ordering::Relaxed));
            }
        }
        h.finish()
    }

    pub fn deep_clone(&self) -> ArrayStore {
        ArrayStore {
            arrays: self
                .arrays
                .iter()
                .map(|a| Array {
                    name: a.name,
                    kind: a.kind,
                    dims: a.dims.clone(),
                    strides: a.strides.clone(),
                    data: a.data.iter().map(|c| AtomicU64::new(c.load(Ordering::Relaxed))).collect(),
                })
                .collect(),
            by_name: self.by_name.clone(),
            recorder: None,
        }
    }
}

struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
}
