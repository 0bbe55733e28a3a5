//! Raw per-run CSV logs. Times are written in seconds with six decimals.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::autonomic::CycleRecord;
use crate::error::{Error, Result};
use crate::metrics::{LookupRecord, TrafficSample};

use super::RunOutput;

pub const LOOKUPS_CSV: &str = "lookups.csv";
pub const TRAFFIC_CSV: &str = "traffic.csv";
pub const MANAGER_CSV: &str = "manager.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lookups(path: &Path, rows: &[LookupRecord]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "time_start,time_end,key,success,error_kind").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{:.6},{:.6},{},{},{}",
            r.start,
            r.end,
            r.key,
            u8::from(r.success),
            r.error_kind.as_deref().unwrap_or("")
        )
        .map_err(io)?;
    }
    finish(path, w)
}

pub fn write_traffic(path: &Path, rows: &[TrafficSample]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "time,node,bytes").map_err(io)?;
    for s in rows {
        writeln!(w, "{:.6},{},{}", s.time, s.node, s.bytes).map_err(io)?;
    }
    finish(path, w)
}

pub fn write_manager(path: &Path, rows: &[CycleRecord]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "time,node,wmc,ec,interval_before,interval_after,immediate").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{:.6},{},{},{},{:.6},{:.6},{}",
            r.time,
            r.node,
            r.wmc,
            r.ec,
            r.interval_before,
            r.interval_after,
            u8::from(r.immediate)
        )
        .map_err(io)?;
    }
    finish(path, w)
}

/// Writes the three raw logs of `out` into `dir`, which must exist.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    write_lookups(&dir.join(LOOKUPS_CSV), &out.lookups)?;
    write_traffic(&dir.join(TRAFFIC_CSV), &out.traffic)?;
    write_manager(&dir.join(MANAGER_CSV), &out.manager)
}
