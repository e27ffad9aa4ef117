use std::ops::Deref;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use super::{Neighbor, NeighborSource};
use crate::{Addr, Result};

/// Wraps a [`NeighborSource`] and tracks how many lists handed out are alive
/// at the same time, plus the high-water mark.
pub struct ResidencyMeter<S> {
    inner: S,
    resident: AtomicUsize,
    peak: AtomicUsize,
    served: AtomicU64,
}

impl<S> ResidencyMeter<S> {
    pub fn new(inner: S) -> Self {
        ResidencyMeter {
            inner,
            resident: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            served: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn resident(&self) -> usize {
        self.resident.load(Ordering::SeqCst)
    }

    pub fn peak_resident(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn lists_served(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }
}

/// A list on loan from a [`ResidencyMeter`]; releasing it decrements the count.
pub struct Resident<'a, L> {
    list: L,
    counter: &'a AtomicUsize,
}

impl<L: Deref<Target = [Neighbor]>> Deref for Resident<'_, L> {
    type Target = [Neighbor];

    fn deref(&self) -> &[Neighbor] {
        &self.list
    }
}

impl<L> Drop for Resident<'_, L> {
    fn drop(&mut self) {
        self.counter.fetch_sub(1, Ordering::SeqCst);
    }
}

impl<S: NeighborSource> NeighborSource for ResidencyMeter<S> {
    type List<'a>
        = Resident<'a, S::List<'a>>
    where
        S: 'a;

    fn neighbors(&self, node: &str) -> Result<Option<Self::List<'_>>> {
        let list = self.inner.neighbors(node)?;
        Ok(list.map(|list| {
            let now = self.resident.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            self.served.fetch_add(1, Ordering::SeqCst);
            Resident {
                list,
                counter: &self.resident,
            }
        }))
    }

    fn nodes(&self) -> Result<Vec<Addr>> {
        self.inner.nodes()
    }
}
