//! The hybrid-TableTrie: a `2^b` master table indexing RT-tries whose
//! entries are bit-packed into a TAlloc arena.

use std::collections::BTreeMap;

use super::arena::Arena;
use super::layout::{append_nb, pack_entry, peek_route, peek_type, unpack_entry, EntryType, Layout, RtEntry, NB_EMPTY};
use crate::code::{BitCode, Scv};
use crate::error::{Error, Result};

/// Splits `tau = 1 . prefix(b) . rest` into the master index and
/// `tau^{b+} = 1 . rest`.
pub fn split_code(tau: BitCode, b: u32) -> Result<(u32, BitCode)> {
    if tau.len() <= b + 1 {
        return Err(Error::CodeTooShort { code: tau.to_string(), b });
    }
    let rest = tau.len() - 1 - b;
    let payload = tau.payload();
    let master = (payload >> rest) as u32;
    let suffix = BitCode::with_leading_one(payload & ((1u64 << rest) - 1), rest)?;
    Ok((master, suffix))
}

/// Inverse of [`split_code`].
pub fn join_code(master: u32, b: u32, suffix: BitCode) -> Result<BitCode> {
    let rest = suffix.len() - 1;
    BitCode::with_leading_one(((master as u64) << rest) | suffix.payload(), b + rest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// A new entry was created or the neighbor was added to an entry.
    Inserted,
    /// An entry on the path already routes this code to the neighbor.
    AlreadyKnown,
    /// The exact entry's NB slots were full; the neighbor was dropped.
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertResult {
    pub outcome: InsertOutcome,
    /// Union of NB over every A/M entry on the path (bit `i` = neighbor `i`).
    pub fnset: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SummarizeStats {
    pub removed: usize,
    pub bytes_reclaimed: usize,
    /// Neighbor ids moved up into a parent.
    pub moved: usize,
}

/// A read-only view of one stored entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryView {
    pub slot: u32,
    pub code: BitCode,
    /// Code below the master prefix, with its own leading 1.
    pub suffix: BitCode,
    pub ty: EntryType,
    pub scv: Option<Scv>,
    pub nb: Vec<u8>,
    pub children: Vec<Option<u32>>,
}

#[derive(Debug, Clone)]
pub struct HybridTableTrie {
    layout: Layout,
    /// Slot + 1 of each RT-trie root; 0 = empty.
    master: Vec<u16>,
    arena: Arena,
    entry_count: usize,
    dropped: u64,
    size_bound: Option<(usize, f64)>,
}

/// One step of a root-to-entry walk.
#[derive(Debug, Clone)]
struct Step {
    slot: u32,
    tau: BitCode,
    entry: RtEntry,
}

pub fn mask_of(nb: &[u8]) -> u32 {
    nb.iter().fold(0, |m, &n| m | (1 << n))
}

impl HybridTableTrie {
    pub fn new(layout: Layout) -> Self {
        HybridTableTrie {
            master: vec![0; 1 << layout.b],
            arena: Arena::new(&layout),
            layout,
            entry_count: 0,
            dropped: 0,
            size_bound: None,
        }
    }

    /// Summarize the whole table with coverage `cov` whenever an insert
    /// leaves more than `max_entries` entries.
    pub fn set_size_bound(&mut self, max_entries: usize, cov: f64) {
        self.size_bound = Some((max_entries, cov));
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn master(&self) -> &[u16] {
        &self.master
    }

    pub fn entry_count(&self) -> usize {
        self.entry_count
    }

    pub fn dropped_neighbors(&self) -> u64 {
        self.dropped
    }

    pub fn is_empty(&self) -> bool {
        self.entry_count == 0
    }

    /// Entry bytes plus the master table.
    pub fn bytes(&self) -> usize {
        self.entry_bytes() + 2 * self.master.len()
    }

    pub fn entry_bytes(&self) -> usize {
        self.arena.used_cells() as usize * 8
    }

    fn c(&self) -> u32 {
        self.layout.c
    }

    fn is_ze(&self, tau: BitCode) -> bool {
        !tau.is_root() && tau.last_digit(self.c()) == 0
    }

    fn read(&self, slot: u32, tau: BitCode) -> Result<RtEntry> {
        let ty = peek_type(self.arena.cell(slot));
        let n = self.layout.cells_for(ty) as usize;
        let mut buf = [0u64; 8];
        if n <= buf.len() {
            for (i, cell) in buf.iter_mut().take(n).enumerate() {
                *cell = self.arena.cell(slot + i as u32);
            }
            unpack_entry(&buf[..n], &self.layout, Some(tau))
        } else {
            unpack_entry(&self.arena.read(slot, n as u32), &self.layout, Some(tau))
        }
    }

    fn size_of(&self, slot: u32) -> u32 {
        self.layout.cells_for(peek_type(self.arena.cell(slot)))
    }

    /// Writes `entry`, reallocating when its size changed. Returns the slot.
    fn store(&mut self, slot: Option<u32>, tau: BitCode, entry: &RtEntry) -> Result<u32> {
        let cells = pack_entry(entry, &self.layout)?;
        let want = cells.len() as u32;
        let slot = match slot {
            Some(s) if self.size_of(s) == want => s,
            Some(s) => {
                // allocate before freeing so a full arena leaves the old entry intact
                let n = self.size_of(s);
                let fresh = self.arena.talloc(self.is_ze(tau), want)?;
                self.arena.free(s, n);
                fresh
            }
            None => self.arena.talloc(self.is_ze(tau), want)?,
        };
        self.arena.write(slot, &cells);
        Ok(slot)
    }

    fn release(&mut self, slot: u32) {
        let n = self.size_of(slot);
        self.arena.free(slot, n);
        self.entry_count -= 1;
    }

    /// Points the parent of the last step at `new_slot` (or the master
    /// table when the path is just the root).
    fn relink(&mut self, master_idx: u32, path: &mut [Step], new_slot: Option<u32>) -> Result<()> {
        if path.len() < 2 {
            self.master[master_idx as usize] = new_slot.map_or(0, |s| s as u16 + 1);
            return Ok(());
        }
        let (parents, last) = path.split_at_mut(path.len() - 1);
        let child_tau = last[0].tau;
        let parent = parents.last_mut().unwrap();
        let j = child_tau.last_digit(self.layout.c) as usize;
        parent.entry.children[j] = new_slot;
        let cells = pack_entry(&parent.entry, &self.layout)?;
        self.arena.write(parent.slot, &cells);
        Ok(())
    }

    fn root_step(&self, master_idx: u32) -> Result<Option<Step>> {
        match self.master[master_idx as usize] {
            0 => Ok(None),
            p => {
                let slot = p as u32 - 1;
                Ok(Some(Step { slot, tau: BitCode::ROOT, entry: self.read(slot, BitCode::ROOT)? }))
            }
        }
    }

    /// Walks as deep as `suffix` allows. The returned path starts at the
    /// RT-trie root.
    fn walk(&self, master_idx: u32, suffix: BitCode) -> Result<Vec<Step>> {
        let Some(root) = self.root_step(master_idx)? else { return Ok(Vec::new()) };
        let c = self.c();
        let mut path = vec![root];
        for lvl in 0..suffix.depth(c) {
            let cur = path.last().unwrap();
            let digit = suffix.digit(c, lvl) as usize;
            let Some(Some(child)) = cur.entry.children.get(digit).copied() else { break };
            let tau = cur.tau.child(c, digit as u64)?;
            let entry = self.read(child, tau)?;
            path.push(Step { slot: child, tau, entry });
        }
        Ok(path)
    }

    /// One pass down the path of `suffix`: the NB union and the last two
    /// `(slot, tau)` pairs reached (the ones `relink` touches).
    fn trace(&self, mi: u32, suffix: BitCode) -> (u32, [(u32, BitCode); 2], usize) {
        let mut slot = match self.master[mi as usize] {
            0 => return (0, [(0, BitCode::ROOT); 2], 0),
            p => p as u32 - 1,
        };
        let c = self.c();
        let depth = suffix.depth(c);
        let mut trail = [(slot, BitCode::ROOT); 2];
        let mut len = 1;
        let mut mask = 0;
        for lvl in 0..=depth {
            let digit = (lvl < depth).then(|| suffix.digit(c, lvl) as usize);
            let (m, child) = self.route_at(slot, digit);
            mask |= m;
            let Some(ch) = child else { break };
            // digits below `depth` always extend a valid code
            let tau = trail[1].1.child(c, digit.unwrap() as u64).expect("digit within fanout");
            slot = ch;
            trail = [trail[1], (slot, tau)];
            len += 1;
        }
        (mask, trail, len)
    }

    fn route_at(&self, slot: u32, digit: Option<usize>) -> (u32, Option<u32>) {
        let n = self.size_of(slot) as usize;
        let mut buf = [0u64; 8];
        if n <= buf.len() {
            for (i, cell) in buf.iter_mut().take(n).enumerate() {
                *cell = self.arena.cell(slot + i as u32);
            }
            peek_route(&buf[..n], &self.layout, digit)
        } else {
            peek_route(&self.arena.read(slot, n as u32), &self.layout, digit)
        }
    }

    /// NB union along the path of `suffix` under master slot `mi`.
    fn path_mask(&self, mi: u32, suffix: BitCode) -> u32 {
        self.trace(mi, suffix).0
    }

    /// Union of NB over every A/M entry on the path of `tau`.
    pub fn lookup(&self, tau: BitCode) -> u32 {
        match split_code(tau, self.layout.b) {
            Ok((mi, suffix)) => self.path_mask(mi, suffix),
            Err(_) => 0,
        }
    }

    /// NB of the entry whose code is exactly `tau`, if stored.
    pub fn exact(&self, tau: BitCode) -> Option<Vec<u8>> {
        let (mi, suffix) = split_code(tau, self.layout.b).ok()?;
        let path = self.walk(mi, suffix).ok()?;
        let last = path.last()?;
        (last.tau == suffix).then(|| last.entry.nb.clone())
    }

    /// Records that `tau` is reachable through `neighbor`.
    pub fn insert(&mut self, tau: BitCode, neighbor: u8, scv: &Scv) -> Result<InsertResult> {
        if neighbor >= NB_EMPTY {
            return Err(Error::NeighborId(neighbor));
        }
        let c = self.c();
        let (mi, suffix) = split_code(tau, self.layout.b)?;
        let levels = suffix.depth(c);
        let scv_b = scv.suffix((self.layout.b / c) as usize);
        if scv_b.len_fields() as u32 != levels || scv.width() != c {
            return Err(Error::InvalidConfig(format!("scv {scv} does not fit code {tau}")));
        }
        let (fnset, trail, len) = self.trace(mi, suffix);
        if fnset & (1 << neighbor) != 0 {
            return Ok(InsertResult { outcome: InsertOutcome::AlreadyKnown, fnset });
        }
        if len > 0 && trail[1].1 == suffix && self.append_in_place(trail[1].0, neighbor) {
            self.enforce_bound()?;
            return Ok(InsertResult { outcome: InsertOutcome::Inserted, fnset });
        }
        // only the last two steps are unpacked; `relink` needs no more
        let mut path = trail[2 - len.min(2)..]
            .iter()
            .map(|&(slot, tau)| Ok(Step { slot, tau, entry: self.read(slot, tau)? }))
            .collect::<Result<Vec<_>>>()?;
        if let Some(last) = path.last() {
            if last.tau == suffix && last.entry.nb.len() >= self.layout.nb_slots as usize {
                self.dropped += 1;
                return Ok(InsertResult { outcome: InsertOutcome::Dropped, fnset });
            }
        }
        let mut fresh = Vec::new();
        match self.insert_inner(mi, suffix, neighbor, scv_b, &mut path, &mut fresh) {
            Ok(()) => {}
            Err(e) => {
                // undo partial allocations so the table stays consistent
                let root = self.master[mi as usize];
                if root != 0 && fresh.contains(&(root as u32 - 1)) {
                    self.master[mi as usize] = 0;
                }
                for slot in fresh {
                    self.release(slot);
                }
                return Err(e);
            }
        }
        self.enforce_bound()?;
        Ok(InsertResult { outcome: InsertOutcome::Inserted, fnset })
    }

    fn enforce_bound(&mut self) -> Result<()> {
        if let Some((bound, cov)) = self.size_bound {
            if self.entry_count > bound {
                self.summarize_table(cov)?;
            }
        }
        Ok(())
    }

    /// Adds `neighbor` to the NB field of the entry at `slot` without
    /// unpacking it. False when the entry has no NB field or no room.
    fn append_in_place(&mut self, slot: u32, neighbor: u8) -> bool {
        let n = self.size_of(slot) as usize;
        let mut buf = [0u64; 8];
        if n > buf.len() {
            return false;
        }
        for (i, cell) in buf.iter_mut().take(n).enumerate() {
            *cell = self.arena.cell(slot + i as u32);
        }
        if !append_nb(&mut buf[..n], &self.layout, neighbor) {
            return false;
        }
        self.arena.write(slot, &buf[..n]);
        true
    }

    fn insert_inner(
        &mut self,
        mi: u32,
        suffix: BitCode,
        neighbor: u8,
        scv_b: Scv,
        path: &mut Vec<Step>,
        fresh: &mut Vec<u32>,
    ) -> Result<()> {
        let c = self.c();
        let levels = suffix.depth(c);
        if path.is_empty() {
            let root = RtEntry::p(BitCode::ROOT, self.layout.fanout());
            let slot = self.store(None, BitCode::ROOT, &root)?;
            self.entry_count += 1;
            fresh.push(slot);
            self.master[mi as usize] = slot as u16 + 1;
            path.push(Step { slot, tau: BitCode::ROOT, entry: root });
        }
        let depth = path.last().unwrap().tau.depth(c);
        let mut last = path.last().unwrap().clone();
        if depth == levels {
            last.entry.nb.push(neighbor);
            if last.entry.scv.is_none() {
                last.entry.scv = Some(scv_b);
            }
            last.entry.tau = Some(suffix);
        } else {
            // build the missing chain bottom-up: A leaf, then P links
            let leaf = RtEntry::a(suffix, scv_b, vec![neighbor]);
            let mut child_slot = self.store(None, suffix, &leaf)?;
            self.entry_count += 1;
            fresh.push(child_slot);
            let mut child_tau = suffix;
            while child_tau.depth(c) > depth + 1 {
                let tau_p = child_tau.parent(c)?;
                let mut p = RtEntry::p(tau_p, self.layout.fanout());
                p.children[child_tau.last_digit(c) as usize] = Some(child_slot);
                child_slot = self.store(None, tau_p, &p)?;
                self.entry_count += 1;
                fresh.push(child_slot);
                child_tau = tau_p;
            }
            if last.entry.ty == EntryType::A {
                last.entry.children = vec![None; self.layout.fanout()];
            }
            last.entry.children[child_tau.last_digit(c) as usize] = Some(child_slot);
        }
        last.entry.retype(self.layout.fanout());
        let new_slot = self.store(Some(last.slot), last.tau, &last.entry)?;
        // committed: the last entry now references the fresh chain
        fresh.clear();
        *path.last_mut().unwrap() = Step { slot: new_slot, ..last.clone() };
        if new_slot != last.slot {
            self.relink(mi, path, Some(new_slot))?;
        }
        Ok(())
    }

    /// Summarizes the children of the entry whose code is `parent` into it.
    pub fn summarize(&mut self, parent: BitCode, cov: f64) -> Result<SummarizeStats> {
        let (mi, suffix) = split_code(parent, self.layout.b)?;
        if suffix.is_root() {
            return Err(Error::NotSummarizable(format!("{parent} is an RT-trie root")));
        }
        let mut path = self.walk(mi, suffix)?;
        let last = path.last().ok_or_else(|| Error::UnknownCode(parent.to_string()))?;
        if last.tau != suffix {
            return Err(Error::UnknownCode(parent.to_string()));
        }
        let mut stats = SummarizeStats::default();
        let mut entry = last.entry.clone();
        let before = self.arena.used_cells();
        if !self.summarize_at(suffix, &mut entry, cov, &mut stats, true)? {
            return Ok(stats);
        }
        let slot = self.store(Some(last.slot), suffix, &entry)?;
        if slot != last.slot {
            path.last_mut().unwrap().slot = slot;
            self.relink(mi, &mut path, Some(slot))?;
        }
        stats.bytes_reclaimed = (before.saturating_sub(self.arena.used_cells())) as usize * 8;
        Ok(stats)
    }

    /// Summarizes the children of `entry` into it. Children are rewritten
    /// in place (or freed); `entry` itself is left for the caller to store.
    /// Returns whether anything changed.
    fn summarize_at(
        &mut self,
        tau: BitCode,
        entry: &mut RtEntry,
        cov: f64,
        stats: &mut SummarizeStats,
        strict: bool,
    ) -> Result<bool> {
        let c = self.c();
        if !entry.ty.has_children() || !entry.has_any_child() {
            return if strict { Err(Error::NotSummarizable(format!("{tau} has no children"))) } else { Ok(false) };
        }
        let mut kids = Vec::new();
        for (j, slot) in entry.children.iter().enumerate() {
            if let Some(s) = *slot {
                let t = tau.child(c, j as u64)?;
                kids.push((j, s, t, self.read(s, t)?));
            }
        }
        let has_p = kids.iter().any(|k| !k.3.ty.has_nb());
        let has_a = kids.iter().any(|k| k.3.ty == EntryType::A);
        if has_p || !has_a {
            return if strict {
                Err(Error::NotSummarizable(format!("{tau} has a link child or no type-A child")))
            } else {
                Ok(false)
            };
        }
        let nc = kids.iter().filter_map(|k| k.3.scv.as_ref().and_then(|s| s.last())).max().unwrap_or(0) as f64 + 1.0;
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for k in &kids {
            for &n in &k.3.nb {
                *counts.entry(n).or_default() += 1;
            }
        }
        let room = self.layout.nb_slots as usize - entry.nb.len();
        let sum_nb: Vec<u8> = counts
            .into_iter()
            .filter(|&(n, cnt)| cnt as f64 >= nc * cov - 1e-9 && !entry.nb.contains(&n))
            .map(|(n, _)| n)
            .take(room)
            .collect();
        if sum_nb.is_empty() {
            return Ok(false);
        }
        if entry.scv.is_none() {
            let donor = kids.iter().find(|k| k.3.ty == EntryType::A).unwrap();
            entry.scv = Some(donor.3.scv.as_ref().unwrap().parent());
        }
        entry.tau = Some(tau);
        entry.nb.extend(&sum_nb);
        stats.moved += sum_nb.len();
        for (j, slot, t, mut kid) in kids {
            let before = kid.nb.len();
            kid.nb.retain(|n| !sum_nb.contains(n));
            if kid.nb.len() == before {
                continue;
            }
            if kid.nb.is_empty() && kid.ty == EntryType::A {
                self.release(slot);
                entry.children[j] = None;
                stats.removed += 1;
                continue;
            }
            if kid.nb.is_empty() {
                kid.scv = None;
            }
            kid.retype(self.layout.fanout());
            let s = self.store(Some(slot), t, &kid)?;
            entry.children[j] = Some(s);
        }
        entry.retype(self.layout.fanout());
        Ok(true)
    }

    /// Post-order summarization of every RT-trie, repeated to a fixpoint.
    pub fn summarize_table(&mut self, cov: f64) -> Result<SummarizeStats> {
        let mut total = SummarizeStats::default();
        let before = self.arena.used_cells();
        loop {
            let mut pass = SummarizeStats::default();
            for mi in 0..self.master.len() as u32 {
                let Some(root) = self.root_step(mi)? else { continue };
                let slot = self.compact(root.slot, BitCode::ROOT, root.entry, cov, &mut pass)?;
                self.master[mi as usize] = slot as u16 + 1;
            }
            total.removed += pass.removed;
            total.moved += pass.moved;
            if pass.moved == 0 {
                break;
            }
        }
        total.bytes_reclaimed = before.saturating_sub(self.arena.used_cells()) as usize * 8;
        Ok(total)
    }

    fn compact(&mut self, slot: u32, tau: BitCode, mut entry: RtEntry, cov: f64, stats: &mut SummarizeStats) -> Result<u32> {
        let c = self.c();
        let mut changed = false;
        for j in 0..entry.children.len() {
            if let Some(child) = entry.children[j] {
                let t = tau.child(c, j as u64)?;
                let e = self.read(child, t)?;
                if e.ty == EntryType::A {
                    continue;
                }
                let s = self.compact(child, t, e, cov, stats)?;
                if s != child {
                    entry.children[j] = Some(s);
                    changed = true;
                }
            }
        }
        if !tau.is_root() && self.summarize_at(tau, &mut entry, cov, stats, false)? {
            changed = true;
        }
        if changed {
            self.store(Some(slot), tau, &entry)
        } else {
            Ok(slot)
        }
    }

    /// Removes the entry for `tau` entirely (its NB if it has children),
    /// reclaiming link entries left without children. Returns entries freed.
    pub fn evict(&mut self, tau: BitCode) -> Result<usize> {
        let (mi, suffix) = split_code(tau, self.layout.b)?;
        let mut path = self.walk(mi, suffix)?;
        if path.last().is_none_or(|s| s.tau != suffix) {
            return Ok(0);
        }
        let mut freed = 0;
        let last = path.last_mut().unwrap();
        if last.entry.has_any_child() {
            last.entry.nb.clear();
            last.entry.scv = None;
            last.entry.retype(self.layout.fanout());
            let l = last.clone();
            let s = self.store(Some(l.slot), l.tau, &l.entry)?;
            if s != l.slot {
                path.last_mut().unwrap().slot = s;
                self.relink(mi, &mut path, Some(s))?;
            }
            return Ok(0);
        }
        // drop the leaf and any childless link entries above it
        while let Some(last) = path.last() {
            if last.entry.has_any_child() || (!last.entry.nb.is_empty() && last.tau != suffix) {
                break;
            }
            let slot = last.slot;
            self.release(slot);
            freed += 1;
            self.relink(mi, &mut path, None)?;
            path.pop();
        }
        // an M entry that lost its last child becomes A
        if let Some(last) = path.last_mut() {
            if last.entry.ty == EntryType::M && !last.entry.has_any_child() {
                last.entry.retype(self.layout.fanout());
                let l = last.clone();
                let s = self.store(Some(l.slot), l.tau, &l.entry)?;
                if s != l.slot {
                    path.last_mut().unwrap().slot = s;
                    self.relink(mi, &mut path, Some(s))?;
                }
            }
        }
        Ok(freed)
    }

    /// Every stored entry in depth-first order.
    pub fn entries(&self) -> Result<Vec<EntryView>> {
        let mut out = Vec::with_capacity(self.entry_count);
        for mi in 0..self.master.len() as u32 {
            let Some(root) = self.root_step(mi)? else { continue };
            let mut stack = vec![(root.slot, root.tau)];
            while let Some((slot, tau)) = stack.pop() {
                let e = self.read(slot, tau)?;
                let ty = peek_type(self.arena.cell(slot));
                for j in (0..e.children.len()).rev() {
                    if let Some(s) = e.children[j] {
                        stack.push((s, tau.child(self.c(), j as u64)?));
                    }
                }
                out.push(EntryView { slot, code: join_code(mi, self.layout.b, tau)?, suffix: tau, ty, scv: e.scv, nb: e.nb, children: e.children });
            }
        }
        Ok(out)
    }

    /// Re-parses every reachable entry and checks the structural rules.
    pub fn validate(&self) -> Result<()> {
        let entries = self.entries()?;
        if entries.len() != self.entry_count {
            return Err(Error::Invariant(format!("{} reachable entries, count says {}", entries.len(), self.entry_count)));
        }
        let mut seen = std::collections::HashSet::new();
        let cap = self.layout.capacity;
        let q = self.layout.quarter();
        for e in &entries {
            if !seen.insert(e.slot) {
                return Err(Error::Invariant(format!("slot {} reachable twice", e.slot)));
            }
            let suffix = e.suffix;
            if suffix.is_root() && e.ty.has_nb() {
                return Err(Error::Invariant(format!("RT-trie root {} carries NB", e.code)));
            }
            if matches!(e.ty, EntryType::P | EntryType::PPrime) && !e.children.iter().any(|c| c.is_some()) && !suffix.is_root() {
                return Err(Error::Invariant(format!("link entry {} without children", e.code)));
            }
            if let Some(Some(first)) = e.children.first() {
                let ok = match e.ty {
                    EntryType::P => *first < q,
                    EntryType::PPrime => *first >= cap - q,
                    _ => true,
                };
                if !ok {
                    return Err(Error::Invariant(format!("first child {first} of {} breaks the 14-bit rule", e.code)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bc(s: &str) -> BitCode {
        BitCode::parse(s).unwrap()
    }

    #[test]
    fn split_fig6_code() {
        let (mi, suf) = split_code(bc("1000010010001"), 6).unwrap();
        assert_eq!(mi, 0b000010);
        assert_eq!(suf.to_string(), "1010001");
        assert_eq!(join_code(mi, 6, suf).unwrap(), bc("1000010010001"));
        let (mi, suf) = split_code(bc("1011"), 0).unwrap();
        assert_eq!((mi, suf), (0, bc("1011")));
        assert!(split_code(bc("1000010"), 6).is_err());
    }

    #[test]
    fn insert_then_lookup() {
        let mut t = HybridTableTrie::new(Layout::new(2, 6, 13).unwrap());
        assert_eq!(t.lookup(bc("1000010010001")), 0);
        let r = t.insert(bc("1000010010001"), 1, &Scv::parse(2, "101011101110").unwrap()).unwrap();
        assert_eq!(r.outcome, InsertOutcome::Inserted);
        assert_eq!(t.entry_count(), 4);
        assert_eq!(t.lookup(bc("1000010010001")), 0b10);
        let again = t.insert(bc("1000010010001"), 1, &Scv::parse(2, "101011101110").unwrap()).unwrap();
        assert_eq!(again.outcome, InsertOutcome::AlreadyKnown);
        t.validate().unwrap();
    }

    #[test]
    fn evict_reclaims_link_chain() {
        let mut t = HybridTableTrie::new(Layout::new(2, 6, 13).unwrap());
        let scv = Scv::parse(2, "000000000000").unwrap();
        t.insert(bc("1000010010001"), 1, &scv).unwrap();
        t.insert(bc("1000010010010"), 2, &scv).unwrap();
        assert_eq!(t.entry_count(), 5);
        assert_eq!(t.evict(bc("1000010010010")).unwrap(), 1);
        assert_eq!(t.evict(bc("1000010010001")).unwrap(), 4);
        assert_eq!(t.entry_count(), 0);
        assert_eq!(t.arena().used_cells(), 0);
        assert!(t.master().iter().all(|&m| m == 0));
    }
}
