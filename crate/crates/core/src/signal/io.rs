use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_monotonic, EmgFrame, SignalError, CHANNELS};

const HEADER: [&str; CHANNELS + 1] = ["t_us", "ch1", "ch2", "ch3", "ch4", "ch5", "ch6", "ch7", "ch8"];

/// Writes frames as `t_us,ch1..ch8` CSV with LF line endings.
pub fn write_recording<W: Write>(out: W, frames: &[EmgFrame]) -> Result<(), SignalError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HEADER)?;
    for f in frames {
        let mut row = Vec::with_capacity(CHANNELS + 1);
        row.push(f.timestamp_us.to_string());
        row.extend(f.channels.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_recording<R: Read>(input: R) -> Result<Vec<EmgFrame>, SignalError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(SignalError::Format(format!("expected header {}", HEADER.join(","))));
    }
    let mut frames = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str, SignalError> {
            rec.get(i).ok_or_else(|| SignalError::Format(format!("row {}: missing column {}", line + 2, HEADER[i])))
        };
        let timestamp_us =
            field(0)?.trim().parse::<i64>().map_err(|e| SignalError::Format(format!("row {}: t_us: {e}", line + 2)))?;
        let mut channels = [0.0; CHANNELS];
        for (c, x) in channels.iter_mut().enumerate() {
            *x = field(c + 1)?
                .trim()
                .parse::<f64>()
                .map_err(|e| SignalError::Format(format!("row {}: {}: {e}", line + 2, HEADER[c + 1])))?;
        }
        frames.push(EmgFrame { timestamp_us, channels });
    }
    check_monotonic(&frames)?;
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub gesture: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), SignalError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, SignalError> {
    let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if let Some(e) = manifest.entries.iter().find(|e| e.gesture as usize >= super::GestureLabel::COUNT) {
        return Err(SignalError::Format(format!("{}: gesture code {} out of range", e.file, e.gesture)));
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let frames = vec![
            EmgFrame { timestamp_us: 0, channels: [0.5; CHANNELS] },
            EmgFrame { timestamp_us: 5000, channels: [-0.25; CHANNELS] },
        ];
        let mut buf = Vec::new();
        write_recording(&mut buf, &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_us,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8\n0,0.5,"));
        assert!(!text.contains('\r'));
        assert_eq!(read_recording(buf.as_slice()).unwrap(), frames);
    }

    #[test]
    fn bad_header_rejected() {
        let text = "t,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8\n0,0,0,0,0,0,0,0,0\n";
        assert!(matches!(read_recording(text.as_bytes()), Err(SignalError::Format(_))));
    }

    #[test]
    fn bad_cell_reports_row() {
        let text = "t_us,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8\n0,0,0,x,0,0,0,0,0\n";
        let err = read_recording(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("ch3"), "{err}");
    }
}
