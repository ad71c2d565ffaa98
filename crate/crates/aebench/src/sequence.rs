//! Sequence directories: `frames.csv`, `images/*.pgm`, `crf.csv` and
//! `groundtruth.txt`.
use std::path::{Path, PathBuf};

use aebench_core::emulation::BracketCycle;
use aebench_core::photometry::ResponseCurve;
use aebench_core::synth::{FrameRecord, SequenceManifest};
use aebench_core::trajectory::{Intrinsics, Trajectory};
use aebench_core::RawImage;

use crate::error::{FormatError, FormatResult};
use crate::{crf_file, fsutil, pgm, trajectory_file};

pub const FRAMES_FILE: &str = "frames.csv";
pub const CRF_FILE: &str = "crf.csv";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const CAMERA_FILE: &str = "camera.toml";
pub const FRAMES_HEADER: [&str; 5] = ["frame_index", "cycle_index", "exposure_us", "timestamp_ns", "filename"];

/// A loaded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub cycles: Vec<BracketCycle>,
    pub groundtruth: Trajectory,
    pub crf: ResponseCurve,
}

/// Accepts a sequence directory or the path of its `frames.csv`.
pub fn sequence_dir(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|n| n == FRAMES_FILE) {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

pub fn encode_frames(records: &[FrameRecord]) -> FormatResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| FormatError::MalformedCsv {
        path: PathBuf::from(FRAMES_FILE),
        line: None,
        message: e.to_string(),
    };
    w.write_record(FRAMES_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.frame_index.to_string(),
            r.cycle_index.to_string(),
            r.exposure_us.to_string(),
            r.timestamp_ns.to_string(),
            r.filename.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| FormatError::Io {
        path: PathBuf::from(FRAMES_FILE),
        source: e.into_error(),
    })
}

pub fn decode_frames(path: &Path, bytes: &[u8]) -> FormatResult<Vec<FrameRecord>> {
    let malformed = |line: Option<u64>, message: String| FormatError::MalformedCsv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| malformed(Some(1), e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != FRAMES_HEADER {
        return Err(malformed(
            Some(1),
            format!("expected header {}", FRAMES_HEADER.join(",")),
        ));
    }
    let mut out: Vec<FrameRecord> = Vec::new();
    for row in reader.deserialize::<FrameRecord>() {
        let r = row.map_err(|e| malformed(e.position().map(|p| p.line()), e.to_string()))?;
        let line = Some(out.len() as u64 + 2);
        if !(r.exposure_us > 0.0 && r.exposure_us.is_finite()) {
            return Err(malformed(
                line,
                format!("exposure must be positive, got {}", r.exposure_us),
            ));
        }
        if let Some(prev) = out.last() {
            if r.timestamp_ns <= prev.timestamp_ns {
                return Err(malformed(
                    line,
                    "records must be sorted by strictly increasing timestamp".into(),
                ));
            }
            if r.cycle_index < prev.cycle_index {
                return Err(malformed(line, "cycle indices must not decrease".into()));
            }
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(malformed(None, "no frame records".into()));
    }
    Ok(out)
}

/// Reads `frames.csv` and every image it references.
pub fn load_frames(dir: &Path) -> FormatResult<(Vec<FrameRecord>, Vec<RawImage>)> {
    let dir = sequence_dir(dir);
    let frames_path = dir.join(FRAMES_FILE);
    let records = decode_frames(&frames_path, &fsutil::read(&frames_path)?)?;
    let images = records
        .iter()
        .map(|r| {
            let img = pgm::read(&dir.join(&r.filename), r.exposure_us)?;
            Ok(img.with_timing(r.timestamp_ns, r.frame_index))
        })
        .collect::<FormatResult<Vec<_>>>()?;
    Ok((records, images))
}

/// Groups frames into cycles by `cycle_index`.
pub fn group_cycles(records: &[FrameRecord], images: Vec<RawImage>) -> FormatResult<Vec<BracketCycle>> {
    let mut cycles = Vec::new();
    let mut current: Vec<RawImage> = Vec::new();
    let mut current_index = None;
    for (r, img) in records.iter().zip(images) {
        if current_index.is_some_and(|c| c != r.cycle_index) {
            cycles.push(BracketCycle::new(std::mem::take(&mut current), current_index.unwrap())?);
        }
        current_index = Some(r.cycle_index);
        current.push(img);
    }
    if let Some(c) = current_index {
        cycles.push(BracketCycle::new(current, c)?);
    }
    Ok(cycles)
}

pub fn load_sequence(path: &Path) -> FormatResult<Sequence> {
    let dir = sequence_dir(path);
    let (records, images) = load_frames(&dir)?;
    let cycles = group_cycles(&records, images)?;
    let crf = crf_file::read(&dir.join(CRF_FILE))?;
    let groundtruth = trajectory_file::read(&dir.join(GROUNDTRUTH_FILE))?;
    Ok(Sequence {
        cycles,
        groundtruth,
        crf,
    })
}

/// Writes every artifact of `seq` under `dir` and returns the manifest.
pub fn save_sequence(dir: &Path, seq: &Sequence) -> FormatResult<SequenceManifest> {
    let manifest = SequenceManifest::from_cycles(&seq.cycles);
    let images = seq.cycles.iter().flat_map(|c| c.images());
    for (record, img) in manifest.frames.iter().zip(images) {
        pgm::write(&dir.join(&record.filename), img)?;
    }
    crf_file::write(&dir.join(&manifest.crf_file), &seq.crf)?;
    trajectory_file::write(&dir.join(&manifest.groundtruth_file), &seq.groundtruth)?;
    fsutil::write_atomic(&dir.join(FRAMES_FILE), &encode_frames(&manifest.frames)?)?;
    Ok(manifest)
}

pub fn save_intrinsics(dir: &Path, intrinsics: &Intrinsics) -> FormatResult<()> {
    let text = toml::to_string(intrinsics).expect("intrinsics are always representable in TOML");
    fsutil::write_atomic(&dir.join(CAMERA_FILE), text.as_bytes())
}

/// Reads `camera.toml` if the sequence has one.
pub fn load_intrinsics(path: &Path) -> FormatResult<Option<Intrinsics>> {
    let file = sequence_dir(path).join(CAMERA_FILE);
    if !file.exists() {
        return Ok(None);
    }
    let text = fsutil::read_to_string(&file)?;
    toml::from_str(&text).map(Some).map_err(|e| FormatError::Manifest {
        path: file,
        message: e.to_string(),
    })
}
