//! Temporal interaction log, immutable graph snapshots, and the replay
//! schedule.
//!
//! The log keeps every raw interaction in timestamp order. Graphs are
//! *binary*: a (user, item) or (user, user) pair enters a snapshot at its
//! earliest occurrence and repeats are no-ops. Node ids are dense per
//! kind, assigned in first-appearance order of the time-sorted log, so
//! the set of items present at any cutoff is (modulo exclusions) a prefix
//! of the item index range.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

// ---------------------------------------------------------------------
// Nodes and edges
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Item,
}

/// Kind-scoped dense index. Users and items have independent index
/// spaces; the same external id string may name both a user and an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub fn user(index: usize) -> Self {
        Self { kind: NodeKind::User, index }
    }

    pub fn item(index: usize) -> Self {
        Self { kind: NodeKind::Item, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// user -> item interaction
    UserItem,
    /// user -> user (social) tie, treated as undirected
    UserUser,
}

/// One interaction. `src` is always a user; `dst` is an item for
/// interaction edges and a user for social edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub timestamp: i64,
}

impl EdgeRecord {
    pub fn kind(&self) -> EdgeKind {
        match self.dst.kind {
            NodeKind::Item => EdgeKind::UserItem,
            NodeKind::User => EdgeKind::UserUser,
        }
    }
}

// ---------------------------------------------------------------------
// Interaction log
// ---------------------------------------------------------------------

/// Timestamped edge log with dense per-kind ids.
///
/// Invariants: edges sorted by timestamp (stable on input order), every
/// `src` is a user, no user-user self loops, ids in bounds.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    edges: Vec<EdgeRecord>,
    /// Parallel to `edges`: true for the earliest occurrence of each
    /// binary pair (user-user pairs are unordered).
    first_occurrence: Vec<bool>,
    num_users: usize,
    num_items: usize,
    user_names: Vec<String>,
    item_names: Vec<String>,
    user_ids: HashMap<String, usize>,
    item_ids: HashMap<String, usize>,
}

impl InteractionLog {
    /// Build a log from `(src, dst, kind, timestamp)` rows. Rows may be in
    /// any time order; `line_of(i)` is used in error messages (pass the
    /// identity for synthetic input).
    pub fn from_rows(rows: Vec<(String, String, EdgeKind, i64)>) -> Result<Self> {
        let lines: Vec<usize> = (1..=rows.len()).collect();
        Self::from_rows_with_lines(rows, &lines)
    }

    fn from_rows_with_lines(
        rows: Vec<(String, String, EdgeKind, i64)>,
        lines: &[usize],
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&i| rows[i].3);

        let mut log = InteractionLog {
            edges: Vec::with_capacity(rows.len()),
            first_occurrence: Vec::with_capacity(rows.len()),
            num_users: 0,
            num_items: 0,
            user_names: Vec::new(),
            item_names: Vec::new(),
            user_ids: HashMap::new(),
            item_ids: HashMap::new(),
        };
        let mut seen_ui: HashSet<(usize, usize)> = HashSet::new();
        let mut seen_uu: HashSet<(usize, usize)> = HashSet::new();

        for &i in &order {
            let (src, dst, kind, ts) = &rows[i];
            let s = log.intern_user(src);
            match kind {
                EdgeKind::UserItem => {
                    let d = log.intern_item(dst);
                    log.edges.push(EdgeRecord {
                        src: NodeId::user(s),
                        dst: NodeId::item(d),
                        timestamp: *ts,
                    });
                    log.first_occurrence.push(seen_ui.insert((s, d)));
                }
                EdgeKind::UserUser => {
                    let d = log.intern_user(dst);
                    if s == d {
                        return Err(CoreError::Parse {
                            line: lines[i],
                            msg: format!("user-user self loop on '{src}'"),
                        });
                    }
                    log.edges.push(EdgeRecord {
                        src: NodeId::user(s),
                        dst: NodeId::user(d),
                        timestamp: *ts,
                    });
                    log.first_occurrence.push(seen_uu.insert((s.min(d), s.max(d))));
                }
            }
        }
        Ok(log)
    }

    fn intern_user(&mut self, name: &str) -> usize {
        if let Some(&i) = self.user_ids.get(name) {
            return i;
        }
        let i = self.num_users;
        self.num_users += 1;
        self.user_names.push(name.to_string());
        self.user_ids.insert(name.to_string(), i);
        i
    }

    fn intern_item(&mut self, name: &str) -> usize {
        if let Some(&i) = self.item_ids.get(name) {
            return i;
        }
        let i = self.num_items;
        self.num_items += 1;
        self.item_names.push(name.to_string());
        self.item_ids.insert(name.to_string(), i);
        i
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn is_first_occurrence(&self, edge_index: usize) -> bool {
        self.first_occurrence[edge_index]
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn user_name(&self, i: usize) -> &str {
        &self.user_names[i]
    }

    pub fn item_name(&self, i: usize) -> &str {
        &self.item_names[i]
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn user_index(&self, name: &str) -> Option<usize> {
        self.user_ids.get(name).copied()
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.item_ids.get(name).copied()
    }

    /// (min, max) timestamp, None for an empty log.
    pub fn span(&self) -> Option<(i64, i64)> {
        match (self.edges.first(), self.edges.last()) {
            (Some(a), Some(b)) => Some((a.timestamp, b.timestamp)),
            _ => None,
        }
    }

    /// Timestamp of each item's earliest interaction.
    pub fn item_first_interaction(&self) -> Vec<i64> {
        let mut out = vec![i64::MAX; self.num_items];
        for e in &self.edges {
            if e.dst.kind == NodeKind::Item {
                let w = e.dst.index;
                if out[w] == i64::MAX {
                    out[w] = e.timestamp;
                }
            }
        }
        out
    }

    /// Iterative degree filter: repeatedly drop nodes whose distinct-
    /// neighbor degree is below `k` until a fixpoint, then re-densify the
    /// surviving edges (original timestamps and external ids kept).
    /// `k <= 1` is the identity. An empty result is valid.
    pub fn k_core_filter(&self, k: usize) -> InteractionLog {
        if k <= 1 {
            return self.clone();
        }
        let mut alive_u = vec![true; self.num_users];
        let mut alive_w = vec![true; self.num_items];
        loop {
            let mut deg_u = vec![0usize; self.num_users];
            let mut deg_w = vec![0usize; self.num_items];
            for (i, e) in self.edges.iter().enumerate() {
                if !self.first_occurrence[i] {
                    continue;
                }
                let s = e.src.index;
                match e.dst.kind {
                    NodeKind::Item => {
                        if alive_u[s] && alive_w[e.dst.index] {
                            deg_u[s] += 1;
                            deg_w[e.dst.index] += 1;
                        }
                    }
                    NodeKind::User => {
                        if alive_u[s] && alive_u[e.dst.index] {
                            deg_u[s] += 1;
                            deg_u[e.dst.index] += 1;
                        }
                    }
                }
            }
            let mut changed = false;
            for u in 0..self.num_users {
                if alive_u[u] && deg_u[u] < k {
                    alive_u[u] = false;
                    changed = true;
                }
            }
            for w in 0..self.num_items {
                if alive_w[w] && deg_w[w] < k {
                    alive_w[w] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let rows: Vec<(String, String, EdgeKind, i64)> = self
            .edges
            .iter()
            .filter(|e| {
                alive_u[e.src.index]
                    && match e.dst.kind {
                        NodeKind::Item => alive_w[e.dst.index],
                        NodeKind::User => alive_u[e.dst.index],
                    }
            })
            .map(|e| {
                let src = self.user_names[e.src.index].clone();
                let (dst, kind) = match e.dst.kind {
                    NodeKind::Item => (self.item_names[e.dst.index].clone(), EdgeKind::UserItem),
                    NodeKind::User => (self.user_names[e.dst.index].clone(), EdgeKind::UserUser),
                };
                (src, dst, kind, e.timestamp)
            })
            .collect();
        InteractionLog::from_rows(rows).expect("surviving edges are structurally valid")
    }
}

/// Load a log from tab-separated `src \t dst \t edge_type \t timestamp`
/// lines, where `edge_type` is `ui` or `uu` and the timestamp is integer
/// seconds. Blank lines are skipped.
pub fn load_edge_log(path: &Path) -> Result<InteractionLog> {
    let file = std::fs::File::open(path)?;
    parse_edge_log(std::io::BufReader::new(file))
}

pub fn parse_edge_log<R: BufRead>(reader: R) -> Result<InteractionLog> {
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CoreError::Parse {
                line: line_no,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let kind = match fields[2] {
            "ui" => EdgeKind::UserItem,
            "uu" => EdgeKind::UserUser,
            "ii" | "iu" => {
                return Err(CoreError::Parse {
                    line: line_no,
                    msg: format!("edge type '{}': item-sourced edges are not supported", fields[2]),
                })
            }
            other => {
                return Err(CoreError::Parse {
                    line: line_no,
                    msg: format!("unknown edge type '{other}' (expected 'ui' or 'uu')"),
                })
            }
        };
        let ts: i64 = fields[3].trim().parse().map_err(|_| CoreError::Parse {
            line: line_no,
            msg: format!("invalid timestamp '{}'", fields[3]),
        })?;
        rows.push((fields[0].to_string(), fields[1].to_string(), kind, ts));
        lines.push(line_no);
    }
    InteractionLog::from_rows_with_lines(rows, &lines)
}

// ---------------------------------------------------------------------
// CSR and snapshots
// ---------------------------------------------------------------------

/// Compressed sparse rows with sorted target lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    pub fn from_pairs(num_rows: usize, pairs: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0usize; num_rows + 1];
        for &(r, _) in pairs {
            offsets[r + 1] += 1;
        }
        for i in 0..num_rows {
            offsets[i + 1] += offsets[i];
        }
        let mut targets = vec![0usize; pairs.len()];
        let mut cursor = offsets.clone();
        for &(r, c) in pairs {
            targets[cursor[r]] = c;
            cursor[r] += 1;
        }
        for r in 0..num_rows {
            targets[offsets[r]..offsets[r + 1]].sort_unstable();
            debug_assert!(
                targets[offsets[r]..offsets[r + 1]].windows(2).all(|w| w[0] < w[1]),
                "duplicate pair in CSR row"
            );
        }
        Csr { offsets, targets }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.targets[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r < self.num_rows() && self.row(r).binary_search(&c).is_ok()
    }

    pub fn num_entries(&self) -> usize {
        self.targets.len()
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_rows()).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }
}

/// Immutable binary graph as of some cutoff time.
///
/// One node kind (`inductive_kind`) may gain nodes through
/// [`GraphSnapshot::merge_increment`]; the other kind is fixed at
/// construction and edges referencing unallocated nodes of that kind are
/// rejected. `user_users` is symmetric.
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    cutoff: i64,
    num_users: usize,
    num_items: usize,
    inductive_kind: NodeKind,
    user_items: Csr,
    item_users: Csr,
    user_users: Csr,
}

/// Build the binary snapshot of all pairs whose earliest occurrence is at
/// or before `cutoff`, minus edges whose log index is in `exclude`.
/// Excluding a pair's earliest occurrence removes the pair even when a
/// repeat falls inside the cutoff (held-out pairs must not leak back in).
pub fn snapshot_at(log: &InteractionLog, cutoff: i64, exclude: &[usize]) -> GraphSnapshot {
    snapshot_at_inductive(log, cutoff, exclude, NodeKind::Item)
}

pub fn snapshot_at_inductive(
    log: &InteractionLog,
    cutoff: i64,
    exclude: &[usize],
    inductive_kind: NodeKind,
) -> GraphSnapshot {
    let excluded: HashSet<usize> = exclude.iter().copied().collect();
    let indices: Vec<usize> = log
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, e)| {
            log.is_first_occurrence(*i) && e.timestamp <= cutoff && !excluded.contains(i)
        })
        .map(|(i, _)| i)
        .collect();
    build_snapshot(log, &indices, cutoff, inductive_kind)
}

/// Build a snapshot from an explicit set of log edges (deduplicated here;
/// the subset is its own universe, so within-subset earliest occurrences
/// win). Used for offline graphs that keep all social edges regardless of
/// timestamp, and for probe buckets.
pub fn snapshot_from_edges(
    log: &InteractionLog,
    edge_indices: &[usize],
    cutoff: i64,
    inductive_kind: NodeKind,
) -> GraphSnapshot {
    build_snapshot(log, edge_indices, cutoff, inductive_kind)
}

fn build_snapshot(
    log: &InteractionLog,
    edge_indices: &[usize],
    cutoff: i64,
    inductive_kind: NodeKind,
) -> GraphSnapshot {
    let mut ui: HashSet<(usize, usize)> = HashSet::new();
    let mut uu: HashSet<(usize, usize)> = HashSet::new();
    let mut max_user = 0usize;
    let mut max_item = 0usize;
    for &i in edge_indices {
        let e = &log.edges()[i];
        let s = e.src.index;
        max_user = max_user.max(s + 1);
        match e.dst.kind {
            NodeKind::Item => {
                max_item = max_item.max(e.dst.index + 1);
                ui.insert((s, e.dst.index));
            }
            NodeKind::User => {
                max_user = max_user.max(e.dst.index + 1);
                uu.insert((s.min(e.dst.index), s.max(e.dst.index)));
            }
        }
    }
    let (num_users, num_items) = match inductive_kind {
        NodeKind::Item => (log.num_users(), max_item),
        NodeKind::User => (max_user, log.num_items()),
    };
    let mut ui: Vec<(usize, usize)> = ui.into_iter().collect();
    ui.sort_unstable();
    let mut uu: Vec<(usize, usize)> = uu.into_iter().collect();
    uu.sort_unstable();
    GraphSnapshot::from_pair_lists(num_users, num_items, &ui, &uu, cutoff, inductive_kind)
}

impl GraphSnapshot {
    /// `ui` holds (user, item) pairs, `uu` unordered (user, user) pairs;
    /// both must be duplicate-free.
    pub fn from_pair_lists(
        num_users: usize,
        num_items: usize,
        ui: &[(usize, usize)],
        uu: &[(usize, usize)],
        cutoff: i64,
        inductive_kind: NodeKind,
    ) -> GraphSnapshot {
        debug_assert!(ui.iter().all(|&(u, w)| u < num_users && w < num_items));
        debug_assert!(uu.iter().all(|&(a, b)| a < num_users && b < num_users && a != b));
        let iu: Vec<(usize, usize)> = ui.iter().map(|&(u, w)| (w, u)).collect();
        let mut uu_sym: Vec<(usize, usize)> = Vec::with_capacity(uu.len() * 2);
        for &(a, b) in uu {
            uu_sym.push((a, b));
            uu_sym.push((b, a));
        }
        GraphSnapshot {
            cutoff,
            num_users,
            num_items,
            inductive_kind,
            user_items: Csr::from_pairs(num_users, ui),
            item_users: Csr::from_pairs(num_items, &iu),
            user_users: Csr::from_pairs(num_users, &uu_sym),
        }
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn inductive_kind(&self) -> NodeKind {
        self.inductive_kind
    }

    /// Items interacted with by `user`, sorted.
    pub fn items_of(&self, user: usize) -> &[usize] {
        self.user_items.row(user)
    }

    /// Users who interacted with `item`, sorted.
    pub fn users_of(&self, item: usize) -> &[usize] {
        self.item_users.row(item)
    }

    /// Social neighbors of `user`, sorted.
    pub fn social_of(&self, user: usize) -> &[usize] {
        self.user_users.row(user)
    }

    /// Total undirected degree: items + social ties for users.
    pub fn user_degree(&self, user: usize) -> usize {
        self.user_items.row_len(user) + self.user_users.row_len(user)
    }

    pub fn item_degree(&self, item: usize) -> usize {
        self.item_users.row_len(item)
    }

    pub fn contains_ui(&self, user: usize, item: usize) -> bool {
        self.user_items.contains(user, item)
    }

    pub fn num_ui_edges(&self) -> usize {
        self.user_items.num_entries()
    }

    pub fn num_uu_edges(&self) -> usize {
        self.user_users.num_entries() / 2
    }

    pub fn ui_pairs(&self) -> Vec<(usize, usize)> {
        self.user_items.iter_pairs().collect()
    }

    /// Unordered user-user pairs with the smaller index first.
    pub fn uu_pairs(&self) -> Vec<(usize, usize)> {
        self.user_users.iter_pairs().filter(|&(a, b)| a < b).collect()
    }

    /// Same edge sets and node allocation; `cutoff` is metadata and is
    /// not compared.
    pub fn same_edges(&self, other: &GraphSnapshot) -> bool {
        self.num_users == other.num_users
            && self.num_items == other.num_items
            && self.user_items == other.user_items
            && self.user_users == other.user_users
    }

    /// Extend the snapshot with later edges. Nodes of the inductive kind
    /// may be new; an edge referencing an unallocated node of the fixed
    /// kind is an inductive violation. Pairs already present are no-ops.
    pub fn merge_increment(&self, chunk: &[EdgeRecord]) -> Result<GraphSnapshot> {
        let mut num_users = self.num_users;
        let mut num_items = self.num_items;
        let mut cutoff = self.cutoff;
        for e in chunk {
            if e.src.kind != NodeKind::User {
                return Err(CoreError::Config("edge with item source in increment".into()));
            }
            cutoff = cutoff.max(e.timestamp);
            match (e.dst.kind, self.inductive_kind) {
                (NodeKind::Item, NodeKind::Item) => {
                    if e.src.index >= self.num_users {
                        return Err(CoreError::InductiveViolation(format!(
                            "user {} not present in the base snapshot (users are the explicit kind)",
                            e.src.index
                        )));
                    }
                    num_items = num_items.max(e.dst.index + 1);
                }
                (NodeKind::Item, NodeKind::User) => {
                    if e.dst.index >= self.num_items {
                        return Err(CoreError::InductiveViolation(format!(
                            "item {} not present in the base snapshot (items are the explicit kind)",
                            e.dst.index
                        )));
                    }
                    num_users = num_users.max(e.src.index + 1);
                }
                (NodeKind::User, NodeKind::Item) => {
                    if e.src.index >= self.num_users || e.dst.index >= self.num_users {
                        return Err(CoreError::InductiveViolation(format!(
                            "social edge ({}, {}) references a user not present in the base snapshot",
                            e.src.index, e.dst.index
                        )));
                    }
                }
                (NodeKind::User, NodeKind::User) => {
                    num_users = num_users.max(e.src.index.max(e.dst.index) + 1);
                }
            }
            if e.dst.kind == NodeKind::User && e.src.index == e.dst.index {
                return Err(CoreError::Config(format!(
                    "user-user self loop on user {} in increment",
                    e.src.index
                )));
            }
        }

        let mut ui: HashSet<(usize, usize)> = self.user_items.iter_pairs().collect();
        let mut uu: HashSet<(usize, usize)> =
            self.user_users.iter_pairs().filter(|&(a, b)| a < b).collect();
        for e in chunk {
            match e.dst.kind {
                NodeKind::Item => {
                    ui.insert((e.src.index, e.dst.index));
                }
                NodeKind::User => {
                    let (a, b) = (e.src.index.min(e.dst.index), e.src.index.max(e.dst.index));
                    uu.insert((a, b));
                }
            }
        }
        let mut ui: Vec<(usize, usize)> = ui.into_iter().collect();
        ui.sort_unstable();
        let mut uu: Vec<(usize, usize)> = uu.into_iter().collect();
        uu.sort_unstable();
        Ok(GraphSnapshot::from_pair_lists(
            num_users,
            num_items,
            &ui,
            &uu,
            cutoff,
            self.inductive_kind,
        ))
    }

    /// Copy of the snapshot with the given (user, item) pairs removed.
    /// Social edges and node allocation are untouched.
    pub fn without_ui_pairs(&self, remove: &HashSet<(usize, usize)>) -> GraphSnapshot {
        let ui: Vec<(usize, usize)> =
            self.user_items.iter_pairs().filter(|p| !remove.contains(p)).collect();
        let uu = self.uu_pairs();
        GraphSnapshot::from_pair_lists(
            self.num_users,
            self.num_items,
            &ui,
            &uu,
            self.cutoff,
            self.inductive_kind,
        )
    }

    /// Copy with the node allocation grown to at least the given counts
    /// (isolated trailing nodes). Lets graphs built from edge subsets
    /// share one allocation so embedding tables line up.
    pub fn grow_to(&self, num_users: usize, num_items: usize) -> GraphSnapshot {
        let ui = self.ui_pairs();
        let uu = self.uu_pairs();
        GraphSnapshot::from_pair_lists(
            self.num_users.max(num_users),
            self.num_items.max(num_items),
            &ui,
            &uu,
            self.cutoff,
            self.inductive_kind,
        )
    }

    /// Diagnostic dump: `node_kind \t index \t degree` per node.
    pub fn write_degree_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for u in 0..self.num_users {
            writeln!(w, "user\t{}\t{}", u, self.user_degree(u))?;
        }
        for i in 0..self.num_items {
            writeln!(w, "item\t{}\t{}", i, self.item_degree(i))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Replay schedule
// ---------------------------------------------------------------------

pub const SECONDS_PER_MONTH: i64 = 30 * 86_400;

/// Window durations in seconds laid out from the log's first timestamp:
/// offline, then `num_chunks` equal streaming chunks, then test. The
/// validation set is the trailing fraction of offline interaction edges
/// by timestamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleWindows {
    pub offline: i64,
    pub streaming: i64,
    pub test: i64,
    pub num_chunks: usize,
    pub validation_fraction: f64,
}

impl ScheduleWindows {
    pub fn months(offline: i64, streaming: i64, test: i64, num_chunks: usize) -> Self {
        ScheduleWindows {
            offline: offline * SECONDS_PER_MONTH,
            streaming: streaming * SECONDS_PER_MONTH,
            test: test * SECONDS_PER_MONTH,
            num_chunks,
            validation_fraction: 0.1,
        }
    }
}

/// Materialized data splits. All edge index lists point into the source
/// log, contain only earliest-occurrence interaction edges (social edges
/// appear once, in `train_edges`, regardless of timestamp: social ties
/// are treated as known up front), and are ascending.
#[derive(Debug, Clone)]
pub struct ReplaySchedule {
    pub offline_end: i64,
    /// Inclusive end time of each streaming chunk; the last equals the
    /// streaming window end.
    pub chunk_ends: Vec<i64>,
    pub test_end: i64,
    /// Offline interaction edges minus the validation tail, plus all
    /// social edges.
    pub train_edges: Vec<usize>,
    /// Trailing fraction of offline interaction edges.
    pub val_edges: Vec<usize>,
    /// Interaction edges per streaming chunk.
    pub chunks: Vec<Vec<usize>>,
    /// Interaction edges in the test window.
    pub test_edges: Vec<usize>,
}

/// Lay the windows over the log. Errors if the offline (or offline +
/// streaming) window already covers the whole span, which would leave no
/// streaming or test data. A test window extending past the last
/// timestamp is clipped by the data; trailing edges past `test_end` are
/// unused.
pub fn build_replay_schedule(
    log: &InteractionLog,
    windows: &ScheduleWindows,
) -> Result<ReplaySchedule> {
    if windows.offline <= 0 || windows.streaming <= 0 || windows.test <= 0 {
        return Err(CoreError::Schedule("window durations must be positive".into()));
    }
    if windows.num_chunks == 0 {
        return Err(CoreError::Schedule("need at least one streaming chunk".into()));
    }
    if !(0.0..1.0).contains(&windows.validation_fraction) {
        return Err(CoreError::Config(format!(
            "validation fraction {} outside [0, 1)",
            windows.validation_fraction
        )));
    }
    let (start, end) = log
        .span()
        .ok_or_else(|| CoreError::Schedule("cannot schedule over an empty log".into()))?;
    let offline_end = start + windows.offline;
    if offline_end >= end {
        return Err(CoreError::Schedule(format!(
            "offline window [{start}, {offline_end}] covers the whole log span (last timestamp {end})"
        )));
    }
    let stream_end = offline_end + windows.streaming;
    if stream_end >= end {
        return Err(CoreError::Schedule(format!(
            "offline + streaming windows end at {stream_end}, at or past the last timestamp {end}: empty test window"
        )));
    }
    let k = windows.num_chunks as i64;
    let chunk_dur = windows.streaming / k;
    if chunk_dur == 0 {
        return Err(CoreError::Schedule(format!(
            "streaming window of {}s cannot be divided into {k} chunks",
            windows.streaming
        )));
    }
    let chunk_ends: Vec<i64> = (1..=k)
        .map(|i| if i == k { stream_end } else { offline_end + i * chunk_dur })
        .collect();
    let test_end = stream_end + windows.test;

    let mut offline_ui = Vec::new();
    let mut social = Vec::new();
    let mut chunks: Vec<Vec<usize>> = vec![Vec::new(); windows.num_chunks];
    let mut test_edges = Vec::new();
    for (i, e) in log.edges().iter().enumerate() {
        if !log.is_first_occurrence(i) {
            continue;
        }
        if e.dst.kind == NodeKind::User {
            social.push(i);
            continue;
        }
        let ts = e.timestamp;
        if ts <= offline_end {
            offline_ui.push(i);
        } else if ts <= stream_end {
            let c = chunk_ends.partition_point(|&end| end < ts);
            chunks[c].push(i);
        } else if ts <= test_end {
            test_edges.push(i);
        }
    }
    if offline_ui.is_empty() {
        return Err(CoreError::Schedule("no interaction edges in the offline window".into()));
    }
    let n_val = (offline_ui.len() as f64 * windows.validation_fraction).floor() as usize;
    let val_edges = offline_ui.split_off(offline_ui.len() - n_val);
    let mut train_edges = offline_ui;
    train_edges.extend_from_slice(&social);
    train_edges.sort_unstable();
    Ok(ReplaySchedule { offline_end, chunk_ends, test_end, train_edges, val_edges, chunks, test_edges })
}

impl ReplaySchedule {
    /// Offline graph with the validation tail held out; what models are
    /// fitted on.
    pub fn train_graph(&self, log: &InteractionLog) -> GraphSnapshot {
        snapshot_from_edges(log, &self.train_edges, self.offline_end, NodeKind::Item)
    }

    /// Full offline graph (validation edges included); the step-0 state
    /// of the replay.
    pub fn offline_graph(&self, log: &InteractionLog) -> GraphSnapshot {
        let mut all = self.train_edges.clone();
        all.extend_from_slice(&self.val_edges);
        all.sort_unstable();
        snapshot_from_edges(log, &all, self.offline_end, NodeKind::Item)
    }

    pub fn chunk_records(&self, log: &InteractionLog, chunk: usize) -> Vec<EdgeRecord> {
        self.chunks[chunk].iter().map(|&i| log.edges()[i]).collect()
    }

    fn items_by_user(log: &InteractionLog, indices: &[usize]) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in indices {
            let e = &log.edges()[i];
            debug_assert_eq!(e.dst.kind, NodeKind::Item);
            out.entry(e.src.index).or_default().push(e.dst.index);
        }
        for v in out.values_mut() {
            v.sort_unstable();
        }
        out
    }

    pub fn validation_items_by_user(&self, log: &InteractionLog) -> BTreeMap<usize, Vec<usize>> {
        Self::items_by_user(log, &self.val_edges)
    }

    pub fn test_items_by_user(&self, log: &InteractionLog) -> BTreeMap<usize, Vec<usize>> {
        Self::items_by_user(log, &self.test_edges)
    }

    /// Items whose earliest interaction falls inside the streaming window.
    pub fn cold_items(&self, log: &InteractionLog) -> HashSet<usize> {
        let stream_end = *self.chunk_ends.last().expect("schedule has at least one chunk");
        log.item_first_interaction()
            .iter()
            .enumerate()
            .filter(|&(_, &ts)| ts > self.offline_end && ts <= stream_end)
            .map(|(w, _)| w)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, d: &str, k: EdgeKind, ts: i64) -> (String, String, EdgeKind, i64) {
        (s.into(), d.into(), k, ts)
    }

    #[test]
    fn load_assigns_dense_ids_in_time_order() {
        let input = "u1\tw1\tui\t100\nu2\tw1\tui\t50\nu1\tu3\tuu\t10\n";
        let log = parse_edge_log(std::io::Cursor::new(input)).unwrap();
        assert_eq!(log.num_users(), 3);
        assert_eq!(log.num_items(), 1);
        assert_eq!(log.edges().len(), 3);
        // Sorted by timestamp; ids in first-appearance order of that sort.
        assert_eq!(log.edges()[0].timestamp, 10);
        assert_eq!(log.user_index("u1"), Some(0));
        assert_eq!(log.user_index("u3"), Some(1));
        assert_eq!(log.user_index("u2"), Some(2));
        assert_eq!(log.item_index("w1"), Some(0));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse_edge_log(std::io::Cursor::new("u1\tw1\tui\t1\nbad line\n")).unwrap_err();
        match err {
            CoreError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let err =
            parse_edge_log(std::io::Cursor::new("u1\tw1\tii\t1\n")).unwrap_err();
        match err {
            CoreError::Parse { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("item-sourced"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let err = parse_edge_log(std::io::Cursor::new("u1\tu1\tuu\t1\n")).unwrap_err();
        assert!(matches!(err, CoreError::Parse { line: 1, .. }));
    }

    #[test]
    fn duplicate_pairs_collapse_to_earliest() {
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 5),
            row("u1", "w1", EdgeKind::UserItem, 100),
            row("u2", "w1", EdgeKind::UserItem, 50),
        ])
        .unwrap();
        assert_eq!(log.edges().len(), 3);
        assert!(log.is_first_occurrence(0));
        assert!(!log.is_first_occurrence(2)); // the ts=100 repeat sorts last
        let g = snapshot_at(&log, 60, &[]);
        assert_eq!(g.num_ui_edges(), 2);
        assert!(g.contains_ui(0, 0));
        // The repeat at ts=100 does not re-introduce the pair later.
        let g2 = snapshot_at(&log, 200, &[]);
        assert_eq!(g2.num_ui_edges(), 2);
    }

    #[test]
    fn k_core_peels_chain_to_empty() {
        // u1 - w1 - u2 - w2 chain: every node ends below degree 2.
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u2", "w1", EdgeKind::UserItem, 2),
            row("u2", "w2", EdgeKind::UserItem, 3),
        ])
        .unwrap();
        let filtered = log.k_core_filter(2);
        assert_eq!(filtered.edges().len(), 0);
        assert_eq!(filtered.num_users(), 0);
        // k=1 keeps everything.
        let same = log.k_core_filter(1);
        assert_eq!(same.edges().len(), 3);
    }

    #[test]
    fn k_core_keeps_dense_block_and_redensifies() {
        // 2 users x 2 items complete bipartite block survives k=2; the
        // pendant (u3, w3) does not.
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u1", "w2", EdgeKind::UserItem, 2),
            row("u2", "w1", EdgeKind::UserItem, 3),
            row("u2", "w2", EdgeKind::UserItem, 4),
            row("u3", "w3", EdgeKind::UserItem, 5),
        ])
        .unwrap();
        let f = log.k_core_filter(2);
        assert_eq!(f.num_users(), 2);
        assert_eq!(f.num_items(), 2);
        assert_eq!(f.edges().len(), 4);
        assert_eq!(f.user_index("u3"), None);
        // Ids re-densified but order preserved.
        assert_eq!(f.user_index("u1"), Some(0));
        assert_eq!(f.user_index("u2"), Some(1));
    }

    #[test]
    fn snapshot_cutoff_and_exclusions() {
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u1", "w2", EdgeKind::UserItem, 2),
            row("u2", "w1", EdgeKind::UserItem, 3),
            row("u2", "w2", EdgeKind::UserItem, 4),
            row("u1", "w3", EdgeKind::UserItem, 5),
        ])
        .unwrap();
        let g = snapshot_at(&log, 3, &[1]);
        assert_eq!(g.num_ui_edges(), 2);
        assert!(g.contains_ui(0, 0));
        assert!(!g.contains_ui(0, 1)); // excluded
        assert!(g.contains_ui(1, 0));
        // w2's only edge inside the cutoff is excluded, so w2 stays
        // unallocated: the item watermark counts included edges only.
        assert_eq!(g.num_items(), 1);
        assert_eq!(g.num_users(), log.num_users());
    }

    #[test]
    fn snapshot_social_edges_are_symmetric() {
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u2", "u1", EdgeKind::UserUser, 2),
        ])
        .unwrap();
        let g = snapshot_at(&log, 10, &[]);
        let u1 = log.user_index("u1").unwrap();
        let u2 = log.user_index("u2").unwrap();
        assert_eq!(g.social_of(u1), &[u2]);
        assert_eq!(g.social_of(u2), &[u1]);
        assert_eq!(g.user_degree(u1), 2);
        assert_eq!(g.user_degree(u2), 1);
        assert_eq!(g.num_uu_edges(), 1);
    }

    #[test]
    fn merge_increment_matches_later_snapshot() {
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u2", "w1", EdgeKind::UserItem, 2),
            row("u1", "w2", EdgeKind::UserItem, 5),
            row("u2", "w2", EdgeKind::UserItem, 6),
            row("u1", "w3", EdgeKind::UserItem, 7),
            row("u2", "u1", EdgeKind::UserUser, 8),
        ])
        .unwrap();
        let base = snapshot_at(&log, 2, &[]);
        let chunk: Vec<EdgeRecord> = log
            .edges()
            .iter()
            .filter(|e| e.timestamp > 2 && e.timestamp <= 8)
            .copied()
            .collect();
        let merged = base.merge_increment(&chunk).unwrap();
        let scratch = snapshot_at(&log, 8, &[]);
        assert!(merged.same_edges(&scratch));
        assert_eq!(merged.num_items(), 3);
    }

    #[test]
    fn merge_rejects_new_explicit_nodes() {
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u2", "w2", EdgeKind::UserItem, 5),
        ])
        .unwrap();
        let base = snapshot_at(&log, 1, &[]);
        assert_eq!(base.num_users(), 2); // users allocated up front
        // A user index beyond the log is an inductive violation.
        let bad = EdgeRecord { src: NodeId::user(9), dst: NodeId::item(0), timestamp: 6 };
        assert!(matches!(
            base.merge_increment(&[bad]),
            Err(CoreError::InductiveViolation(_))
        ));
        // Flipped direction: items fixed, users may grow.
        let flipped = snapshot_at_inductive(&log, 1, &[], NodeKind::User);
        assert_eq!(flipped.num_items(), log.num_items());
        assert_eq!(flipped.num_users(), 1);
        let ok = EdgeRecord { src: NodeId::user(5), dst: NodeId::item(1), timestamp: 6 };
        let grown = flipped.merge_increment(&[ok]).unwrap();
        assert_eq!(grown.num_users(), 6);
        let bad_item = EdgeRecord { src: NodeId::user(0), dst: NodeId::item(7), timestamp: 6 };
        assert!(matches!(
            flipped.merge_increment(&[bad_item]),
            Err(CoreError::InductiveViolation(_))
        ));
    }

    fn uniform_log(n: usize, step: i64) -> InteractionLog {
        // n interaction edges at timestamps step, 2*step, ...
        let rows: Vec<_> = (0..n)
            .map(|i| {
                row(
                    &format!("u{}", i % 10),
                    &format!("w{i}"),
                    EdgeKind::UserItem,
                    (i as i64 + 1) * step,
                )
            })
            .collect();
        InteractionLog::from_rows(rows).unwrap()
    }

    #[test]
    fn schedule_validation_is_last_tenth_of_offline() {
        // 200 edges at 1..=200; offline window ends at 100 -> 100 offline
        // edges, validation = last 10.
        let log = uniform_log(200, 1);
        let w = ScheduleWindows {
            offline: 99,
            streaming: 60,
            test: 40,
            num_chunks: 3,
            validation_fraction: 0.1,
        };
        let s = build_replay_schedule(&log, &w).unwrap();
        assert_eq!(s.offline_end, 100);
        assert_eq!(s.val_edges.len(), 10);
        assert_eq!(s.train_edges.len(), 90);
        let val_ts: Vec<i64> = s.val_edges.iter().map(|&i| log.edges()[i].timestamp).collect();
        assert_eq!(val_ts, (91..=100).collect::<Vec<i64>>());
        // Chunks of 20 edges each (60s window / 3).
        assert_eq!(s.chunk_ends, vec![120, 140, 160]);
        assert_eq!(s.chunks.iter().map(Vec::len).collect::<Vec<_>>(), vec![20, 20, 20]);
        assert_eq!(s.test_edges.len(), 40);
    }

    #[test]
    fn schedule_rejects_windows_past_the_span() {
        let log = uniform_log(50, 1);
        let w = ScheduleWindows {
            offline: 100,
            streaming: 10,
            test: 10,
            num_chunks: 2,
            validation_fraction: 0.1,
        };
        assert!(matches!(build_replay_schedule(&log, &w), Err(CoreError::Schedule(_))));
        let w2 = ScheduleWindows {
            offline: 30,
            streaming: 30,
            test: 10,
            num_chunks: 2,
            validation_fraction: 0.1,
        };
        assert!(matches!(build_replay_schedule(&log, &w2), Err(CoreError::Schedule(_))));
    }

    #[test]
    fn schedule_keeps_social_edges_in_training() {
        let mut rows = vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u2", "w1", EdgeKind::UserItem, 2),
            row("u1", "w2", EdgeKind::UserItem, 3),
            row("u2", "w3", EdgeKind::UserItem, 12),
            row("u1", "w4", EdgeKind::UserItem, 22),
        ];
        // Social tie with a late timestamp still lands in training.
        rows.push(row("u1", "u2", EdgeKind::UserUser, 20));
        let log = InteractionLog::from_rows(rows).unwrap();
        let w = ScheduleWindows {
            offline: 9,
            streaming: 8,
            test: 10,
            num_chunks: 2,
            validation_fraction: 0.0,
        };
        let s = build_replay_schedule(&log, &w).unwrap();
        let train = s.train_graph(&log);
        assert_eq!(train.num_uu_edges(), 1);
        assert_eq!(train.num_ui_edges(), 3);
        // Only w3 first appears inside the streaming window (10, 18].
        let cold = s.cold_items(&log);
        assert!(cold.contains(&log.item_index("w3").unwrap()));
        assert!(!cold.contains(&log.item_index("w1").unwrap()));
        assert!(!cold.contains(&log.item_index("w2").unwrap()));
        assert!(!cold.contains(&log.item_index("w4").unwrap()));
    }

    #[test]
    fn degree_tsv_lists_every_node() {
        let log = InteractionLog::from_rows(vec![
            row("u1", "w1", EdgeKind::UserItem, 1),
            row("u2", "w1", EdgeKind::UserItem, 2),
        ])
        .unwrap();
        let g = snapshot_at(&log, 10, &[]);
        let mut buf = Vec::new();
        g.write_degree_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "user\t0\t1\nuser\t1\t1\nitem\t0\t2\n");
    }
}
