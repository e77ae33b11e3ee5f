use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: Option<u64>,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: Option<u64>) -> Self {
        Interaction {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

pub type RawInteractions = Vec<Interaction>;

/// Parse an interactions file: one `user, item[, timestamp]` record per
/// line, tab or comma separated, with an optional `user` header line.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<RawInteractions> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text)
}

pub(crate) fn parse_interactions(text: &str) -> Result<RawInteractions> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        if idx == 0 && fields[0].eq_ignore_ascii_case("user") {
            continue;
        }
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 2 or 3 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty user or item token".into(),
            });
        }
        let timestamp = match fields.get(2) {
            None => None,
            Some(&"") => None,
            Some(t) => Some(t.parse::<u64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad timestamp {t:?}: {e}"),
            })?),
        };
        out.push(Interaction::new(fields[0], fields[1], timestamp));
    }
    Ok(out)
}

pub fn write_interactions(path: impl AsRef<Path>, records: &[Interaction]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(records.len() * 16);
    for r in records {
        match r.timestamp {
            Some(t) => writeln!(buf, "{}\t{}\t{t}", r.user, r.item),
            None => writeln!(buf, "{}\t{}", r.user, r.item),
        }
        .expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Drop repeated `(user, item)` pairs, keeping the first occurrence, and
/// give every record without a timestamp a pseudo-timestamp drawn
/// uniformly from `[0, 2^32)`.
pub fn canonicalize(raw: RawInteractions, seed: u64) -> RawInteractions {
    let mut seen: HashSet<(String, String)> = HashSet::with_capacity(raw.len());
    let mut stamps = rng::stream(seed, Stream::Timestamps, 0, 0);
    let mut out = Vec::with_capacity(raw.len());
    for mut rec in raw {
        if !seen.insert((rec.user.clone(), rec.item.clone())) {
            continue;
        }
        if rec.timestamp.is_none() {
            rec.timestamp = Some(u64::from(stamps.random::<u32>()));
        }
        out.push(rec);
    }
    out
}
