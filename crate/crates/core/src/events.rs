//! Per-herald click records stored as JSON Lines.
//!
//! The first line is an [`EventHeader`]; every following line is one herald
//! `{"shot": 17, "phase_idx": 0, "clicks": ["A", "C"]}`. Heralds without any
//! click are omitted unless the writer was asked to keep them, so the shot
//! counts per setting come from the header schedule.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EVENT_FORMAT: &str = "pathtomo-events/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub phases: Vec<f64>,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventHeader {
    pub format: String,
    pub config_digest: String,
    pub seed: u64,
    pub channels: Vec<String>,
    pub schedule: Vec<ScheduleEntry>,
    pub signal_blocked: bool,
    /// First global shot index of the file.
    #[serde(default)]
    pub first_shot: u64,
}

impl EventHeader {
    pub fn total_shots(&self) -> u64 {
        self.schedule.iter().map(|s| s.shots).sum()
    }

    /// Global shot range `[start, end)` of each schedule entry.
    pub fn shot_ranges(&self) -> Vec<(u64, u64)> {
        let mut start = self.first_shot;
        self.schedule
            .iter()
            .map(|s| {
                let r = (start, start + s.shots);
                start += s.shots;
                r
            })
            .collect()
    }

    /// Bitmask of a channel name.
    pub fn channel_bit(&self, name: &str) -> Option<u32> {
        self.channels.iter().position(|c| c == name).map(|i| 1 << i)
    }

    pub fn mask_names(&self, mask: u32) -> Vec<String> {
        mask_names(&self.channels, mask)
    }
}

pub fn mask_names(channels: &[String], mask: u32) -> Vec<String> {
    channels
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, c)| c.clone())
        .collect()
}

/// Default channel names `A`, `B`, `C`, ...
pub fn default_channel_names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub shot: u64,
    pub phase_idx: usize,
    pub mask: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventLine {
    shot: u64,
    phase_idx: usize,
    clicks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    pub header: EventHeader,
    pub events: Vec<Event>,
}

impl EventFile {
    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            let line = EventLine { shot: e.shot, phase_idx: e.phase_idx, clicks: self.header.mask_names(e.mask) };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(buf)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn read_jsonl<R: Read>(reader: R) -> Result<EventFile> {
        let mut stream = EventStream::new(reader)?;
        let mut events = Vec::new();
        for e in &mut stream {
            events.push(e?);
        }
        Ok(EventFile { header: stream.header, events })
    }

    pub fn read_path(path: &Path) -> Result<EventFile> {
        EventFile::read_jsonl(open_maybe_gzip(path)?)
    }
}

/// Opens a file, decompressing it when it starts with the gzip magic bytes.
pub fn open_maybe_gzip(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = BufReader::new(File::open(path)?);
    let is_gzip = file.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if is_gzip {
        Ok(Box::new(MultiGzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Streaming reader that validates records as it goes.
pub struct EventStream<R: Read> {
    pub header: EventHeader,
    lines: std::io::Lines<BufReader<R>>,
    line_no: usize,
    ranges: Vec<(u64, u64)>,
    last_shot: Option<u64>,
}

impl<R: Read> EventStream<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let first = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::MalformedRecord { line: 1, msg: "missing header".into() }),
        };
        let header: EventHeader = serde_json::from_str(&first)
            .map_err(|e| Error::MalformedRecord { line: 1, msg: format!("bad header: {e}") })?;
        if header.format != EVENT_FORMAT {
            return Err(Error::MalformedRecord { line: 1, msg: format!("unknown format {:?}", header.format) });
        }
        if header.channels.len() > 31 {
            return Err(Error::MalformedRecord { line: 1, msg: "too many channels".into() });
        }
        let ranges = header.shot_ranges();
        Ok(EventStream { header, lines, line_no: 1, ranges, last_shot: None })
    }

    fn parse(&mut self, text: &str) -> Result<Event> {
        let bad = |msg: String| Error::MalformedRecord { line: self.line_no, msg };
        let line: EventLine = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let Some(&(start, end)) = self.ranges.get(line.phase_idx) else {
            return Err(bad(format!("phase_idx {} not in schedule", line.phase_idx)));
        };
        if line.shot < start || line.shot >= end {
            return Err(bad(format!("shot {} outside the range of phase_idx {}", line.shot, line.phase_idx)));
        }
        if self.last_shot.is_some_and(|s| line.shot <= s) {
            return Err(bad(format!("shot {} is not increasing", line.shot)));
        }
        let mut mask = 0;
        for c in &line.clicks {
            let bit = self.header.channel_bit(c).ok_or_else(|| bad(format!("unknown channel {c:?}")))?;
            if mask & bit != 0 {
                return Err(bad(format!("channel {c:?} listed twice")));
            }
            mask |= bit;
        }
        self.last_shot = Some(line.shot);
        Ok(Event { shot: line.shot, phase_idx: line.phase_idx, mask })
    }
}

impl<R: Read> Iterator for EventStream<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> EventHeader {
        EventHeader {
            format: EVENT_FORMAT.into(),
            config_digest: "00".into(),
            seed: 1,
            channels: default_channel_names(3),
            schedule: vec![ScheduleEntry { phases: vec![], shots: 3 }],
            signal_blocked: false,
            first_shot: 0,
        }
    }

    #[test]
    fn round_trip() {
        let file = EventFile {
            header: header(),
            events: vec![Event { shot: 0, phase_idx: 0, mask: 0b101 }, Event { shot: 2, phase_idx: 0, mask: 0b010 }],
        };
        let bytes = file.to_jsonl_bytes().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(r#""clicks":["A","C"]"#));
        assert_eq!(EventFile::read_jsonl(&bytes[..]).unwrap(), file);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let head = serde_json::to_string(&header()).unwrap();
        let cases = [
            (r#"{"shot":0,"phase_idx":0,"clicks":["D"]}"#, 2),
            (r#"{"shot":5,"phase_idx":0,"clicks":[]}"#, 2),
            (r#"not json"#, 2),
        ];
        for (line, at) in cases {
            let text = format!("{head}\n{line}\n");
            match EventFile::read_jsonl(text.as_bytes()) {
                Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, at),
                other => panic!("expected malformed record, got {other:?}"),
            }
        }
        let text = format!("{head}\n{}\n{}\n", r#"{"shot":1,"phase_idx":0,"clicks":[]}"#, r#"{"shot":1,"phase_idx":0,"clicks":[]}"#);
        assert!(matches!(EventFile::read_jsonl(text.as_bytes()), Err(Error::MalformedRecord { line: 3, .. })));
    }
}
