//! On-disk cache for the template set.
//!
//! Text format: a JSON header line followed by one postfix template per
//! line (`h0 c1 add`). A header that does not match the requested
//! configuration makes the cache stale.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::enumerate::{enumerate_hole_exprs, GrammarConfig, HoleSet, PruningConfig};
use super::expr::BinOp;

const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
    #[error("cache header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("cache line {line}: {msg}")]
    Body { line: usize, msg: String },
}

#[derive(Serialize, Deserialize, PartialEq)]
struct Header {
    version: u32,
    grammar: GrammarConfig,
    pruning: PruningConfig,
    count: usize,
}

fn op_word(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "add",
        BinOp::Sub => "sub",
        BinOp::Mul => "mul",
        BinOp::Div => "div",
        BinOp::Min => "min",
        BinOp::Max => "max",
        BinOp::Mod => "mod",
    }
}

pub fn save(set: &HoleSet, path: &Path) -> Result<(), CacheError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(fs::File::create(&tmp)?);
    let header = Header {
        version: VERSION,
        grammar: set.grammar().clone(),
        pruning: set.pruning().clone(),
        count: set.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for tokens in set.raw_tokens() {
        let words: Vec<String> = tokens
            .iter()
            .map(|&t| match t {
                0..=15 => format!("h{t}"),
                16..=31 => format!("c{}", t - 16),
                _ => op_word(BinOp::from_index(t - 32)).to_string(),
            })
            .collect();
        writeln!(w, "{}", words.join(" "))?;
    }
    w.flush()?;
    drop(w);
    fs::rename(tmp, path)?;
    Ok(())
}

/// Loads a cached set; `Ok(None)` when the file is missing or was built
/// with a different configuration.
pub fn load(
    path: &Path,
    grammar: &GrammarConfig,
    pruning: &PruningConfig,
) -> Result<Option<HoleSet>, CacheError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut lines = io::BufReader::new(file).lines();
    let Some(first) = lines.next() else {
        return Ok(None);
    };
    let header: Header = match serde_json::from_str(&first?) {
        Ok(h) => h,
        Err(_) => return Ok(None),
    };
    if header.version != VERSION || &header.grammar != grammar || &header.pruning != pruning {
        return Ok(None);
    }
    let mut templates = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let bad = |msg: String| CacheError::Body { line: i + 2, msg };
        let mut t = Vec::new();
        for w in line.split_whitespace() {
            let tok = if let Some(h) = w.strip_prefix('h') {
                h.parse::<u8>().ok().filter(|&h| h < 16)
            } else if let Some(c) = w.strip_prefix('c') {
                c.parse::<u8>().ok().filter(|&c| (c as usize) < grammar.constants.len()).map(|c| c + 16)
            } else {
                BinOp::ALL.iter().find(|op| op_word(**op) == w).map(|op| 32 + op.index())
            };
            t.push(tok.ok_or_else(|| bad(format!("bad token `{w}`")))?);
        }
        templates.push(t);
    }
    if templates.len() != header.count {
        return Err(CacheError::Body {
            line: templates.len() + 1,
            msg: format!("expected {} templates", header.count),
        });
    }
    HoleSet::from_templates(grammar.clone(), pruning.clone(), templates)
        .map(Some)
        .map_err(|msg| CacheError::Body { line: 0, msg })
}

/// Returns the cached set when valid, otherwise enumerates and stores it.
pub fn load_or_build(
    path: &Path,
    grammar: &GrammarConfig,
    pruning: &PruningConfig,
) -> Result<HoleSet, CacheError> {
    if let Some(set) = load(path, grammar, pruning)? {
        return Ok(set);
    }
    let set = enumerate_hole_exprs(grammar, pruning);
    save(&set, path)?;
    Ok(set)
}
