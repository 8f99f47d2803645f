//! Bit-exact packing of routing entries into 64-bit cells.
//!
//! Fields are written most-significant-bit first: the entry type occupies
//! the top two bits of the first cell, and NB slot 0 precedes slot 1.

use crate::code::{BitCode, Scv};
use crate::error::{Error, Result};

pub const NB_BITS: u32 = 5;
/// Marks an empty NB slot, so neighbor ids run 0..=30.
pub const NB_EMPTY: u8 = 31;
pub const PTR_BITS: u32 = 16;
pub const FIRST_PTR_BITS: u32 = 14;
/// Highest slot index reachable with a 14-bit first pointer (stored +1).
pub const FIRST_PTR_LIMIT: u32 = (1 << FIRST_PTR_BITS) - 1;
pub const MAX_ARENA: u32 = (1 << PTR_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryType {
    A = 0,
    P = 1,
    M = 2,
    PPrime = 3,
}

impl EntryType {
    pub fn from_bits(bits: u64) -> Self {
        match bits & 3 {
            0 => EntryType::A,
            1 => EntryType::P,
            2 => EntryType::M,
            _ => EntryType::PPrime,
        }
    }

    pub fn has_nb(self) -> bool {
        matches!(self, EntryType::A | EntryType::M)
    }

    pub fn has_children(self) -> bool {
        !matches!(self, EntryType::A)
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryType::A => "A",
            EntryType::P => "P",
            EntryType::M => "M",
            EntryType::PPrime => "P'",
        }
    }
}

/// Field widths and cell counts for one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub c: u32,
    pub b: u32,
    /// Whether type-A halves carry their own trie code (it is implied by
    /// the path, so dropping it frees room for NB slots).
    pub keep_tau: bool,
    pub tau_w: u32,
    pub scv_w: u32,
    pub nb_slots: u32,
    /// Arena capacity in cells.
    pub capacity: u32,
}

impl Layout {
    /// The default profile: 11-bit code, 11-bit scv, 8 NB slots, widened
    /// only if `max_code_len` needs more room.
    pub fn new(c: u32, b: u32, max_code_len: u32) -> Result<Self> {
        Self::build(c, b, max_code_len, true, 8, MAX_ARENA - 3)
    }

    /// Profile with at least `min_nb` NB slots, dropping the stored code
    /// first if that keeps the A half in one cell.
    pub fn with_nb(c: u32, b: u32, max_code_len: u32, min_nb: u32) -> Result<Self> {
        let base = Self::new(c, b, max_code_len)?;
        if min_nb <= base.nb_slots {
            return Ok(base);
        }
        let free = 64 - 2 - base.scv_w;
        let nb = (free / NB_BITS).max(min_nb);
        Self::build(c, b, max_code_len, false, nb, MAX_ARENA - 3)
    }

    pub fn with_capacity(mut self, capacity: u32) -> Result<Self> {
        if !(8..=MAX_ARENA).contains(&capacity) {
            return Err(Error::InvalidConfig(format!("arena capacity {capacity} outside 8..={MAX_ARENA}")));
        }
        self.capacity = capacity;
        Ok(self)
    }

    fn build(c: u32, b: u32, max_code_len: u32, keep_tau: bool, nb_slots: u32, capacity: u32) -> Result<Self> {
        if c == 0 || c > 8 || b % c != 0 {
            return Err(Error::InvalidConfig(format!("layout needs 1 <= c <= 8 and c | b (c={c}, b={b})")));
        }
        if nb_slots > 31 {
            return Err(Error::InvalidConfig("at most 31 NB slots".into()));
        }
        let suffix = max_code_len.saturating_sub(b + 1);
        let tau_w = 11.max(suffix + 1);
        let scv_w = 11.max(suffix);
        if tau_w > 64 || scv_w > 64 {
            return Err(Error::InvalidConfig("code too long for the layout".into()));
        }
        Ok(Layout { c, b, keep_tau, tau_w, scv_w, nb_slots, capacity })
    }

    pub fn a_bits(&self) -> u32 {
        2 + if self.keep_tau { self.tau_w } else { 0 } + self.scv_w + NB_BITS * self.nb_slots
    }

    pub fn a_cells(&self) -> u32 {
        self.a_bits().div_ceil(64)
    }

    pub fn p_cells(&self) -> u32 {
        (2 + FIRST_PTR_BITS + PTR_BITS * ((1 << self.c) - 1)).div_ceil(64)
    }

    pub fn m_cells(&self) -> u32 {
        self.a_cells() + (PTR_BITS << self.c).div_ceil(64)
    }

    pub fn cells_for(&self, ty: EntryType) -> u32 {
        match ty {
            EntryType::A => self.a_cells(),
            EntryType::P | EntryType::PPrime => self.p_cells(),
            EntryType::M => self.m_cells(),
        }
    }

    pub fn fanout(&self) -> usize {
        1 << self.c
    }

    /// Cells in each of the top and bottom quarters.
    pub fn quarter(&self) -> u32 {
        (self.capacity / 4).min(FIRST_PTR_LIMIT)
    }
}

/// An unpacked routing entry. `children[j]` is the slot of the child whose
/// last digit is `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtEntry {
    pub ty: EntryType,
    pub tau: Option<BitCode>,
    pub scv: Option<Scv>,
    pub nb: Vec<u8>,
    pub children: Vec<Option<u32>>,
}

impl RtEntry {
    pub fn a(tau: BitCode, scv: Scv, nb: Vec<u8>) -> Self {
        RtEntry { ty: EntryType::A, tau: Some(tau), scv: Some(scv), nb, children: Vec::new() }
    }

    pub fn p(tau: BitCode, fanout: usize) -> Self {
        RtEntry { ty: EntryType::P, tau: Some(tau), scv: None, nb: Vec::new(), children: vec![None; fanout] }
    }

    pub fn has_any_child(&self) -> bool {
        self.children.iter().any(|c| c.is_some())
    }

    /// Re-derives the type from contents: NB and children make M, NB only
    /// makes A, children only makes P (P' is chosen at pack time).
    pub fn retype(&mut self, fanout: usize) {
        let kids = self.has_any_child();
        self.ty = match (self.nb.is_empty(), kids) {
            (false, true) => EntryType::M,
            (false, false) => EntryType::A,
            _ => EntryType::P,
        };
        if self.ty != EntryType::A && self.children.len() != fanout {
            self.children.resize(fanout, None);
        }
        if self.ty == EntryType::A {
            self.children.clear();
        }
    }

    pub fn nb_mask(&self) -> u32 {
        self.nb.iter().fold(0, |m, &n| m | (1 << n))
    }
}

struct BitWriter<'a> {
    cells: &'a mut [u64],
    pos: u32,
}

impl BitWriter<'_> {
    fn put(&mut self, width: u32, value: u64) {
        if width == 0 {
            return;
        }
        let value = if width == 64 { value } else { value & ((1u64 << width) - 1) };
        let (cell, off) = ((self.pos / 64) as usize, self.pos % 64);
        let avail = 64 - off;
        if width <= avail {
            self.cells[cell] |= value << (avail - width);
        } else {
            let spill = width - avail;
            self.cells[cell] |= value >> spill;
            self.cells[cell + 1] |= value << (64 - spill);
        }
        self.pos += width;
    }

    /// Like `put`, but overwrites whatever the field held.
    fn set(&mut self, width: u32, value: u64) {
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        let (cell, off) = ((self.pos / 64) as usize, self.pos % 64);
        let avail = 64 - off;
        if width <= avail {
            self.cells[cell] &= !(mask << (avail - width));
        } else {
            let spill = width - avail;
            self.cells[cell] &= !(mask >> spill);
            self.cells[cell + 1] &= !(mask << (64 - spill));
        }
        self.put(width, value);
    }
}

struct BitReader<'a> {
    cells: &'a [u64],
    pos: u32,
}

impl BitReader<'_> {
    fn get(&mut self, width: u32) -> u64 {
        if width == 0 {
            return 0;
        }
        let (cell, off) = ((self.pos / 64) as usize, self.pos % 64);
        let avail = 64 - off;
        let head = self.cells[cell] << off;
        let v = if width <= avail {
            head >> (64 - width)
        } else {
            let spill = width - avail;
            (head >> off << spill) | (self.cells[cell + 1] >> (64 - spill))
        };
        self.pos += width;
        v
    }
}

/// Packs an entry. Link entries whose first child sits in the bottom
/// quarter become `P'`; `P` vs `P'` in `e.ty` is ignored.
pub fn pack_entry(e: &RtEntry, layout: &Layout) -> Result<Vec<u64>> {
    let mut ty = e.ty;
    if ty == EntryType::PPrime {
        ty = EntryType::P;
    }
    if e.nb.len() > layout.nb_slots as usize || e.nb.iter().any(|&n| n >= NB_EMPTY) {
        return Err(Error::MalformedCell(format!("NB list {:?}", e.nb)));
    }
    let mut first_ptr = 0u64;
    if ty == EntryType::P {
        if let Some(idx) = e.children.first().copied().flatten() {
            if idx < FIRST_PTR_LIMIT.min(layout.quarter()) {
                first_ptr = idx as u64 + 1;
            } else if idx >= layout.capacity - layout.quarter() {
                ty = EntryType::PPrime;
                first_ptr = (layout.capacity - 1 - idx) as u64 + 1;
            } else {
                return Err(Error::MalformedCell(format!("first child {idx} not addressable in 14 bits")));
            }
        }
    }
    let n = layout.cells_for(ty) as usize;
    let mut cells = vec![0u64; n];
    let mut w = BitWriter { cells: &mut cells, pos: 0 };
    w.put(2, ty as u64);
    if ty.has_nb() {
        let tau = e.tau.ok_or_else(|| Error::MalformedCell("A half without code".into()))?;
        let scv = e.scv.as_ref().ok_or_else(|| Error::MalformedCell("A half without scv".into()))?;
        if layout.keep_tau {
            if tau.len() > layout.tau_w {
                return Err(Error::MalformedCell(format!("code {tau} wider than {} bits", layout.tau_w)));
            }
            w.put(layout.tau_w, tau.value());
        }
        if scv.bit_len() > layout.scv_w {
            return Err(Error::MalformedCell(format!("scv {scv} wider than {} bits", layout.scv_w)));
        }
        w.put(layout.scv_w, scv.to_u64());
        for i in 0..layout.nb_slots as usize {
            w.put(NB_BITS, e.nb.get(i).copied().unwrap_or(NB_EMPTY) as u64);
        }
    }
    let ptr = |j: usize| -> u64 { e.children.get(j).copied().flatten().map_or(0, |i| i as u64 + 1) };
    match ty {
        EntryType::A => {}
        EntryType::P | EntryType::PPrime => {
            w.put(FIRST_PTR_BITS, first_ptr);
            for j in 1..layout.fanout() {
                w.put(PTR_BITS, ptr(j));
            }
        }
        EntryType::M => {
            w.pos = layout.a_cells() * 64;
            for j in 0..layout.fanout() {
                w.put(PTR_BITS, ptr(j));
            }
        }
    }
    Ok(cells)
}

/// Type of the entry starting at `cell`.
pub fn peek_type(cell: u64) -> EntryType {
    EntryType::from_bits(cell >> 62)
}

/// NB mask of the entry in `cells` and, when `digit` is given, the slot of
/// that child. Reads the packed bits directly without validation.
pub fn peek_route(cells: &[u64], layout: &Layout, digit: Option<usize>) -> (u32, Option<u32>) {
    let ty = peek_type(cells[0]);
    let mut r = BitReader { cells, pos: 2 };
    let mut mask = 0u32;
    if ty.has_nb() {
        r.pos += if layout.keep_tau { layout.tau_w } else { 0 } + layout.scv_w;
        for _ in 0..layout.nb_slots {
            let v = r.get(NB_BITS) as u8;
            if v == NB_EMPTY {
                break;
            }
            mask |= 1 << v;
        }
    }
    let Some(j) = digit else { return (mask, None) };
    let child = match ty {
        EntryType::A => None,
        EntryType::P | EntryType::PPrime if j == 0 => {
            r.pos = 2;
            match r.get(FIRST_PTR_BITS) as u32 {
                0 => None,
                v if ty == EntryType::P => Some(v - 1),
                v => Some(layout.capacity - v),
            }
        }
        EntryType::P | EntryType::PPrime => {
            r.pos = 2 + FIRST_PTR_BITS + PTR_BITS * (j as u32 - 1);
            (r.get(PTR_BITS) as u32).checked_sub(1)
        }
        EntryType::M => {
            r.pos = layout.a_cells() * 64 + PTR_BITS * j as u32;
            (r.get(PTR_BITS) as u32).checked_sub(1)
        }
    };
    (mask, child)
}

/// Writes `nb` into the first free NB slot of the A or M entry in `cells`.
/// Returns false (leaving `cells` untouched) when there is no free slot or
/// the entry carries no NB field.
pub fn append_nb(cells: &mut [u64], layout: &Layout, nb: u8) -> bool {
    if !peek_type(cells[0]).has_nb() {
        return false;
    }
    let start = 2 + if layout.keep_tau { layout.tau_w } else { 0 } + layout.scv_w;
    for i in 0..layout.nb_slots {
        let pos = start + i * NB_BITS;
        if (BitReader { cells, pos }).get(NB_BITS) as u8 == NB_EMPTY {
            BitWriter { cells, pos }.set(NB_BITS, nb as u64);
            return true;
        }
    }
    false
}

/// Unpacks an entry. `tau` supplies the code when the layout does not
/// store it (and is checked against the stored one when it does).
pub fn unpack_entry(cells: &[u64], layout: &Layout, tau: Option<BitCode>) -> Result<RtEntry> {
    let first = *cells.first().ok_or_else(|| Error::MalformedCell("no cells".into()))?;
    let ty = peek_type(first);
    let need = layout.cells_for(ty) as usize;
    if cells.len() < need {
        return Err(Error::MalformedCell(format!("{} needs {need} cells, got {}", ty.name(), cells.len())));
    }
    let mut r = BitReader { cells, pos: 2 };
    let mut e = RtEntry { ty, tau, scv: None, nb: Vec::new(), children: Vec::new() };
    if ty.has_nb() {
        if layout.keep_tau {
            let stored = BitCode::from_value(r.get(layout.tau_w))
                .map_err(|_| Error::MalformedCell("zero code in A half".into()))?;
            if tau.is_some_and(|t| t != stored) {
                return Err(Error::MalformedCell(format!("stored code {stored} != path code {}", tau.unwrap())));
            }
            e.tau = Some(stored);
        }
        let tau = e.tau.ok_or_else(|| Error::MalformedCell("code unknown".into()))?;
        let fields = ((tau.len() - 1) / layout.c) as usize;
        let raw = r.get(layout.scv_w);
        if fields as u32 * layout.c < 64 && raw >> (fields as u32 * layout.c) != 0 {
            return Err(Error::MalformedCell(format!("scv bits beyond {fields} fields")));
        }
        e.scv = Some(Scv::from_u64(layout.c, fields, raw));
        let mut seen_empty = false;
        for _ in 0..layout.nb_slots {
            let v = r.get(NB_BITS) as u8;
            if v == NB_EMPTY {
                seen_empty = true;
            } else if seen_empty {
                return Err(Error::MalformedCell("NB slot after an empty slot".into()));
            } else {
                e.nb.push(v);
            }
        }
        if e.nb.is_empty() {
            return Err(Error::MalformedCell(format!("{} entry with empty NB", ty.name())));
        }
    }
    match ty {
        EntryType::A => {}
        EntryType::P | EntryType::PPrime => {
            let raw = r.get(FIRST_PTR_BITS) as u32;
            let first = match (raw, ty) {
                (0, EntryType::PPrime) => return Err(Error::MalformedCell("P' without first child".into())),
                (0, _) => None,
                (v, EntryType::P) => Some(v - 1),
                (v, _) => Some(layout.capacity - v),
            };
            e.children.push(first);
            for _ in 1..layout.fanout() {
                let v = r.get(PTR_BITS) as u32;
                e.children.push(v.checked_sub(1));
            }
        }
        EntryType::M => {
            r.pos = layout.a_cells() * 64;
            for _ in 0..layout.fanout() {
                let v = r.get(PTR_BITS) as u32;
                e.children.push(v.checked_sub(1));
            }
        }
    }
    if ty.has_children() && e.children.iter().any(|c| c.is_some_and(|i| i >= layout.capacity)) {
        return Err(Error::MalformedCell("child pointer beyond the arena".into()));
    }
    Ok(e)
}
