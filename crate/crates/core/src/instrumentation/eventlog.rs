//! Newline-delimited JSON event logs for offline replay.
//!
//! One object per line, tagged by `"type"`:
//!
//! ```text
//! {"type":"update","worker":0,"rank":1,"snapshot_order":4,"update_order":5,
//!  "block_id":0,"block":{"start":0,"end":64},"lr":0.01,"flops":128,
//!  "backward_flops":64,"provenance":[{"index":3,"update_order":2}],
//!  "snapshot":[...] | null,"gradient":[...] | null}
//! {"type":"round","round":1,"worker":0,"update_order":17,"snapshot_order":16,
//!  "minor_count":16,"snapshot":null,"mean":[...] | null,"delta":null}
//! ```
//!
//! Field meanings follow [`UpdateRecord`] and [`AveragingRound`]. Floats
//! round-trip exactly.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{AveragingRound, UpdateRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LoggedEvent {
    Update(UpdateRecord),
    Round(AveragingRound),
}

/// Writes updates then rounds, one JSON object per line.
pub fn write_events<W: Write>(out: W, updates: &[UpdateRecord], rounds: &[AveragingRound]) -> Result<()> {
    let mut w = BufWriter::new(out);
    let events = updates
        .iter()
        .cloned()
        .map(LoggedEvent::Update)
        .chain(rounds.iter().cloned().map(LoggedEvent::Round));
    for e in events {
        serde_json::to_writer(&mut w, &e).map_err(|e| Error::Run(format!("event log: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a log written by [`write_events`]; blank lines are skipped.
pub fn read_events<R: Read>(input: R) -> Result<(Vec<UpdateRecord>, Vec<AveragingRound>)> {
    let mut updates = Vec::new();
    let mut rounds = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LoggedEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match event {
            LoggedEvent::Update(u) => updates.push(u),
            LoggedEvent::Round(r) => rounds.push(r),
        }
    }
    Ok((updates, rounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrumentation::tests::{round, update};
    use crate::paramstore::Provenance;

    #[test]
    fn round_trip() {
        let mut u = update(1, 7, vec![Provenance { index: 2, update_order: 5 }]);
        u.snapshot = Some(vec![0.1, 1.0 / 3.0]);
        u.gradient = Some(vec![-2.5e-300, 7.0]);
        let mut r = round(1, 2, 8, 3);
        r.mean = Some(vec![std::f64::consts::PI]);
        let mut buf = Vec::new();
        write_events(&mut buf, &[u.clone()], &[r.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"type\":\"update\""));
        let (us, rs) = read_events(&buf[..]).unwrap();
        assert_eq!(us, vec![u]);
        assert_eq!(rs, vec![r]);
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "\n{\"type\":\"round\"}\n";
        assert!(matches!(read_events(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
