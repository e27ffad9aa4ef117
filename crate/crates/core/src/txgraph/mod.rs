//! Transaction ingestion, cumulative snapshots, top-K neighbor stores and
//! delta-node computation.
//!
//! The walk graph is undirected: a pair's interaction count is the number of
//! transfers between the two addresses in either direction.

use std::ops::Deref;

use crate::{Addr, Result};

mod disk;
mod edgelog;
mod instrument;
mod record;
mod store;

pub use disk::DiskNeighborStore;
pub use edgelog::{
    delta_nodes_in_window, write_atomically, DeltaNodeSet, EdgeLog, GraphSnapshot, IngestReport, RejectedRow,
};
pub use instrument::{ResidencyMeter, Resident};
pub use record::{read_edge_csv, write_edge_csv, Asset, ParsedRow, TransactionRecord, EDGE_CSV_HEADER};
pub use store::{
    build_neighbor_store, format_line, parse_line, partition_file_name, read_meta, sort_neighbors,
    store_dir, Neighbor, NeighborStore, StoreMeta, DEFAULT_PARTITIONS, DEFAULT_TOP_K, STORE_META_FILE,
};

/// Read access to per-node neighbor lists.
///
/// Implemented by the in-memory [`NeighborStore`] and by the partition-file
/// backed [`DiskNeighborStore`], which only materializes the lists it is asked for.
pub trait NeighborSource: Sync {
    type List<'a>: Deref<Target = [Neighbor]>
    where
        Self: 'a;

    /// `Ok(None)` when the node is unknown to the store.
    fn neighbors(&self, node: &str) -> Result<Option<Self::List<'_>>>;

    /// All nodes, ascending by address.
    fn nodes(&self) -> Result<Vec<Addr>>;
}
