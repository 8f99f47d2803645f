//! Top-bottom slot allocation ("TAlloc").
//!
//! Zero entries (codes ending in `c` zero bits) are the targets of 14-bit
//! first-child pointers, so they live in the top quarter of the arena, or
//! in the bottom quarter once the top is used up. Everything else grows
//! outward from the middle. Storage is materialized lazily per region so a
//! mostly-empty 64K-cell arena costs almost nothing.

use std::collections::BTreeMap;

use super::layout::Layout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Top,
    Bottom,
    Middle,
}

#[derive(Debug, Clone)]
pub struct Arena {
    capacity: u32,
    quarter: u32,
    mid: u32,
    /// Cells `[0, top.len())`.
    top: Vec<u64>,
    /// Cells `[mid - mid_up.len(), mid)`, stored nearest-to-mid first.
    mid_up: Vec<u64>,
    /// Cells `[mid, mid + mid_down.len())`.
    mid_down: Vec<u64>,
    /// Cells `(capacity - 1 - bottom.len(), capacity)`, stored last-cell first.
    bottom: Vec<u64>,
    free: BTreeMap<(Region, u32), Vec<u32>>,
    used_cells: u32,
}

impl Arena {
    pub fn new(layout: &Layout) -> Self {
        Arena {
            capacity: layout.capacity,
            quarter: layout.quarter(),
            mid: layout.capacity / 2,
            top: Vec::new(),
            mid_up: Vec::new(),
            mid_down: Vec::new(),
            bottom: Vec::new(),
            free: BTreeMap::new(),
            used_cells: 0,
        }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn quarter(&self) -> u32 {
        self.quarter
    }

    /// Cells currently handed out.
    pub fn used_cells(&self) -> u32 {
        self.used_cells
    }

    fn top_end(&self) -> u32 {
        self.top.len() as u32
    }

    fn mid_lo(&self) -> u32 {
        self.mid - self.mid_up.len() as u32
    }

    fn mid_hi(&self) -> u32 {
        self.mid + self.mid_down.len() as u32
    }

    fn bottom_start(&self) -> u32 {
        self.capacity - self.bottom.len() as u32
    }

    pub fn region_of(&self, idx: u32) -> Region {
        if idx < self.top_end() {
            Region::Top
        } else if idx >= self.bottom_start() {
            Region::Bottom
        } else {
            Region::Middle
        }
    }

    /// Allocates `n` contiguous cells.
    pub fn talloc(&mut self, is_ze: bool, n: u32) -> Result<u32> {
        let idx = if is_ze { self.alloc_ze(n)? } else { self.alloc_mid(n)? };
        self.used_cells += n;
        Ok(idx)
    }

    fn pop_free(&mut self, region: Region, n: u32) -> Option<u32> {
        let list = self.free.get_mut(&(region, n))?;
        let idx = list.pop();
        if list.is_empty() {
            self.free.remove(&(region, n));
        }
        idx
    }

    fn alloc_ze(&mut self, n: u32) -> Result<u32> {
        if let Some(i) = self.pop_free(Region::Top, n) {
            return Ok(i);
        }
        let t = self.top_end();
        if t + n <= self.quarter && t + n <= self.mid_lo() {
            self.top.resize((t + n) as usize, 0);
            return Ok(t);
        }
        if let Some(i) = self.pop_free(Region::Bottom, n) {
            return Ok(i);
        }
        let b = self.bottom_start();
        if b >= n && b - n >= self.capacity - self.quarter && b - n >= self.mid_hi() {
            self.bottom.resize(self.bottom.len() + n as usize, 0);
            return Ok(b - n);
        }
        Err(Error::ArenaFull)
    }

    fn alloc_mid(&mut self, n: u32) -> Result<u32> {
        if let Some(i) = self.pop_free(Region::Middle, n) {
            return Ok(i);
        }
        // grow downward until the bottom quarter, then upward until the top
        // quarter, then into whatever the quarters left unused
        let down_limit = self.bottom_start().min(self.capacity - self.quarter);
        let up_limit = self.top_end().max(self.quarter);
        let (hi, lo) = (self.mid_hi(), self.mid_lo());
        if hi + n <= down_limit {
            self.mid_down.resize(self.mid_down.len() + n as usize, 0);
            Ok(hi)
        } else if lo >= up_limit + n {
            self.mid_up.resize(self.mid_up.len() + n as usize, 0);
            Ok(lo - n)
        } else if hi + n <= self.bottom_start() {
            self.mid_down.resize(self.mid_down.len() + n as usize, 0);
            Ok(hi)
        } else if lo >= self.top_end() + n {
            self.mid_up.resize(self.mid_up.len() + n as usize, 0);
            Ok(lo - n)
        } else {
            Err(Error::ArenaFull)
        }
    }

    pub fn free(&mut self, idx: u32, n: u32) {
        let region = self.region_of(idx);
        self.free.entry((region, n)).or_default().push(idx);
        for i in idx..idx + n {
            *self.cell_mut(i) = 0;
        }
        self.used_cells -= n;
    }

    pub fn cell(&self, idx: u32) -> u64 {
        if idx < self.top_end() {
            self.top[idx as usize]
        } else if idx >= self.bottom_start() {
            self.bottom[(self.capacity - 1 - idx) as usize]
        } else if idx >= self.mid && idx < self.mid_hi() {
            self.mid_down[(idx - self.mid) as usize]
        } else if idx < self.mid && idx >= self.mid_lo() {
            self.mid_up[(self.mid - 1 - idx) as usize]
        } else {
            0
        }
    }

    pub fn cell_mut(&mut self, idx: u32) -> &mut u64 {
        if idx < self.top_end() {
            &mut self.top[idx as usize]
        } else if idx >= self.bottom_start() {
            &mut self.bottom[(self.capacity - 1 - idx) as usize]
        } else if idx >= self.mid && idx < self.mid_hi() {
            &mut self.mid_down[(idx - self.mid) as usize]
        } else if idx < self.mid && idx >= self.mid_lo() {
            &mut self.mid_up[(self.mid - 1 - idx) as usize]
        } else {
            panic!("cell {idx} was never allocated")
        }
    }

    pub fn read(&self, idx: u32, n: u32) -> Vec<u64> {
        (idx..idx + n).map(|i| self.cell(i)).collect()
    }

    pub fn write(&mut self, idx: u32, cells: &[u64]) {
        for (i, &c) in cells.iter().enumerate() {
            *self.cell_mut(idx + i as u32) = c;
        }
    }

    /// Every materialized cell index, ascending.
    pub fn materialized(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.top_end())
            .chain(self.mid_lo()..self.mid_hi())
            .chain(self.bottom_start()..self.capacity)
    }
}
