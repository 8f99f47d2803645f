//! Binary and human-readable table dumps.

use std::fmt::Write as _;
use std::io::{self, Read, Write};

use super::htt::HybridTableTrie;
use super::layout::EntryType;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"hTT\0";
pub const VERSION: u16 = 1;

/// Header fields of a binary dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u16,
    pub b: u8,
    pub c: u8,
    pub keep_tau: bool,
    pub tau_w: u8,
    pub scv_w: u8,
    pub nb_slots: u8,
    pub capacity: u32,
    pub entry_count: u32,
}

/// A decoded binary dump: header, master table and `(slot, cell)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dump {
    pub header: DumpHeader,
    pub master: Vec<u16>,
    pub cells: Vec<(u32, u64)>,
}

/// Writes magic, header, master table, then every materialized arena
/// cell as `(u32 slot, u64 cell)`; all little-endian.
pub fn write_binary<W: Write>(t: &HybridTableTrie, mut w: W) -> io::Result<()> {
    let l = t.layout();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[l.b as u8, l.c as u8, l.keep_tau as u8, l.tau_w as u8, l.scv_w as u8, l.nb_slots as u8])?;
    w.write_all(&l.capacity.to_le_bytes())?;
    w.write_all(&(t.entry_count() as u32).to_le_bytes())?;
    for m in t.master() {
        w.write_all(&m.to_le_bytes())?;
    }
    let cells: Vec<u32> = t.arena().materialized().collect();
    w.write_all(&(cells.len() as u32).to_le_bytes())?;
    for idx in cells {
        w.write_all(&idx.to_le_bytes())?;
        w.write_all(&t.arena().cell(idx).to_le_bytes())?;
    }
    Ok(())
}

pub fn to_bytes(t: &HybridTableTrie) -> Vec<u8> {
    let mut v = Vec::new();
    write_binary(t, &mut v).expect("writing to a Vec");
    v
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Dump> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Parse { line: 0, msg: m.to_string() };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated dump"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad("unsupported version"));
    }
    let f = take(6)?.to_vec();
    let capacity = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let entry_count = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let header = DumpHeader {
        version,
        b: f[0],
        c: f[1],
        keep_tau: f[2] != 0,
        tau_w: f[3],
        scv_w: f[4],
        nb_slots: f[5],
        capacity,
        entry_count,
    };
    if header.b > 16 {
        return Err(bad("master prefix too wide"));
    }
    let mut master = Vec::with_capacity(1 << header.b);
    for _ in 0..1usize << header.b {
        master.push(u16::from_le_bytes(take(2)?.try_into().unwrap()));
    }
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut cells = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let idx = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let cell = u64::from_le_bytes(take(8)?.try_into().unwrap());
        cells.push((idx, cell));
    }
    Ok(Dump { header, master, cells })
}

/// One line per entry: `slot type code scv nb children`.
pub fn to_text(t: &HybridTableTrie) -> Result<String> {
    let mut out = String::new();
    let l = t.layout();
    writeln!(out, "# b={} c={} entries={} bytes={}", l.b, l.c, t.entry_count(), t.bytes()).unwrap();
    for e in t.entries()? {
        let scv = e.scv.as_ref().map_or("-".to_string(), |s| if s.len_fields() == 0 { "e".into() } else { s.to_string() });
        let nb = if e.ty.has_nb() {
            e.nb.iter().map(|n| format!("D{n}")).collect::<Vec<_>>().join(",")
        } else {
            "-".into()
        };
        let kids = if e.ty == EntryType::A {
            "-".into()
        } else {
            e.children.iter().map(|c| c.map_or("_".into(), |s| s.to_string())).collect::<Vec<_>>().join(",")
        };
        writeln!(out, "{:>5} {:<2} {} {} {} {}", e.slot, e.ty.name(), e.code, scv, nb, kids).unwrap();
    }
    Ok(out)
}
