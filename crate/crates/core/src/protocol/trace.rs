//! One-line-per-message trace records.

use std::fmt;
use std::io::Write;

use crate::error::Result;

use super::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgKind {
    Adv,
    Qry,
    Rsp,
}

impl MsgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::Adv => "ADV",
            MsgKind::Qry => "QRY",
            MsgKind::Rsp => "RSP",
        }
    }
}

/// `id` is the stream index for ADV and the query id otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceLine {
    pub tick: u64,
    pub kind: MsgKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub id: u64,
    pub hops_remaining: u32,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hops = if self.hops_remaining == u32::MAX { "inf".to_string() } else { self.hops_remaining.to_string() };
        write!(f, "{}\t{}\t{}\t{}\t{}\t{}", self.tick, self.kind.as_str(), self.src, self.dst, self.id, hops)
    }
}

/// Destination for trace lines; `None` discards them.
pub struct Tracer<'a> {
    sink: Option<&'a mut dyn Write>,
    pub lines: u64,
}

impl<'a> Tracer<'a> {
    pub fn new(sink: Option<&'a mut dyn Write>) -> Self {
        Tracer { sink, lines: 0 }
    }

    pub fn off() -> Self {
        Tracer { sink: None, lines: 0 }
    }

    pub fn enabled(&self) -> bool {
        self.sink.is_some()
    }

    pub fn emit(&mut self, line: TraceLine) -> Result<()> {
        if let Some(w) = self.sink.as_mut() {
            writeln!(w, "{line}")?;
            self.lines += 1;
        }
        Ok(())
    }
}
