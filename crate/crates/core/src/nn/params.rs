use rand::Rng;
use serde::{Deserialize, Serialize};

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named tensors laid out back to back in a flat buffer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let offset = self.total();
        self.entries.push(ParamEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn total(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn range(&self, id: ParamId) -> std::ops::Range<usize> {
        let e = self.entry(id);
        e.offset..e.offset + e.len()
    }

    pub fn slice<'a>(&self, buf: &'a [f64], id: ParamId) -> &'a [f64] {
        &buf[self.range(id)]
    }

    pub fn slice_mut<'a>(&self, buf: &'a mut [f64], id: ParamId) -> &'a mut [f64] {
        &mut buf[self.range(id)]
    }

    pub fn vec<'a>(&self, buf: &'a [f64], id: ParamId) -> ArrayView1<'a, f64> {
        ArrayView1::from(self.slice(buf, id))
    }

    pub fn vec_mut<'a>(&self, buf: &'a mut [f64], id: ParamId) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(self.slice_mut(buf, id))
    }

    /// Matrix view; the entry must be two-dimensional.
    pub fn mat<'a>(&self, buf: &'a [f64], id: ParamId) -> ArrayView2<'a, f64> {
        let (r, c) = self.dims2(id);
        ArrayView2::from_shape((r, c), self.slice(buf, id)).expect("layout shape")
    }

    pub fn mat_mut<'a>(&self, buf: &'a mut [f64], id: ParamId) -> ArrayViewMut2<'a, f64> {
        let (r, c) = self.dims2(id);
        ArrayViewMut2::from_shape((r, c), self.slice_mut(buf, id)).expect("layout shape")
    }

    /// Disjoint mutable slices for entries given in increasing offset order.
    pub fn slices_mut<'a, const N: usize>(&self, buf: &'a mut [f64], ids: [ParamId; N]) -> [&'a mut [f64]; N] {
        let mut rest: &'a mut [f64] = buf;
        let mut consumed = 0;
        let mut out: [Option<&'a mut [f64]>; N] = std::array::from_fn(|_| None);
        for (k, id) in ids.iter().enumerate() {
            let r = self.range(*id);
            assert!(r.start >= consumed, "slices_mut ids must be increasing");
            let (_, tail) = std::mem::take(&mut rest).split_at_mut(r.start - consumed);
            let (mine, tail) = tail.split_at_mut(r.len());
            out[k] = Some(mine);
            rest = tail;
            consumed = r.end;
        }
        out.map(|s| s.expect("filled"))
    }

    pub fn dims2(&self, id: ParamId) -> (usize, usize) {
        match self.entry(id).shape[..] {
            [r, c] => (r, c),
            _ => panic!("parameter {} is not a matrix", self.entry(id).name),
        }
    }

    /// Checks that `other` describes the same tensors, e.g. when restoring a
    /// checkpoint into a freshly configured model.
    pub fn ensure_same(&self, other: &ParamLayout) -> Result<()> {
        if self != other {
            return Err(Error::Checkpoint(
                "parameter layout differs from the configured model".into(),
            ));
        }
        Ok(())
    }

    pub fn fill_uniform<R: Rng>(&self, buf: &mut [f64], id: ParamId, bound: f64, rng: &mut R) {
        for v in self.slice_mut(buf, id) {
            *v = rng.random_range(-bound..=bound);
        }
    }
}
