//! Routing tables: the hybrid-TableTrie for bit codes and a character trie
//! for alphabetical codes.

pub mod alph;
pub mod arena;
pub mod dump;
pub mod example;
pub mod htt;
pub mod layout;

pub use alph::{AlphEntryView, AlphTrie};
pub use arena::{Arena, Region};
pub use htt::{join_code, split_code, EntryView, HybridTableTrie, InsertOutcome, InsertResult, SummarizeStats};
pub use layout::{pack_entry, unpack_entry, EntryType, Layout, RtEntry, NB_EMPTY};
