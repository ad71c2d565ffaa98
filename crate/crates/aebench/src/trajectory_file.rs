//! Whitespace-separated trajectories: `timestamp_s tx ty tz qx qy qz qw`.
use std::fmt::Write as _;
use std::path::Path;

use aebench_core::nalgebra::{Quaternion, UnitQuaternion, Vector3};
use aebench_core::trajectory::{PoseSE3, Trajectory};

use crate::error::{FormatError, FormatResult};
use crate::fsutil;

/// Exact decimal rendering of a nanosecond timestamp in seconds.
pub fn format_timestamp(ns: i64) -> String {
    let sign = if ns < 0 { "-" } else { "" };
    let abs = ns.unsigned_abs();
    format!("{sign}{}.{:09}", abs / 1_000_000_000, abs % 1_000_000_000)
}

/// Parses decimal seconds into nanoseconds without going through floats.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 9 {
        return None;
    }
    let secs: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut nanos: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    nanos *= 10i64.pow(9 - frac.len() as u32);
    let total = secs.checked_mul(1_000_000_000)?.checked_add(nanos)?;
    Some(if neg { -total } else { total })
}

pub fn encode(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp_s tx ty tz qx qy qz qw\n");
    for p in traj.poses() {
        let q = p.rotation.quaternion();
        let t = p.translation;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            format_timestamp(p.timestamp_ns),
            t.x,
            t.y,
            t.z,
            q.i,
            q.j,
            q.k,
            q.w
        );
    }
    out
}

pub fn decode(path: &Path, text: &str) -> FormatResult<Trajectory> {
    let err = |line: usize, message: String| FormatError::Trajectory {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(i + 1, format!("expected 8 fields, found {}", fields.len())));
        }
        let ts = parse_timestamp(fields[0]).ok_or_else(|| err(i + 1, format!("bad timestamp {:?}", fields[0])))?;
        let mut v = [0.0f64; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| err(i + 1, format!("bad number {f:?}")))?;
        }
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        let norm = q.norm();
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else if (norm - 1.0).abs() <= 1e-3 {
            UnitQuaternion::new_normalize(q)
        } else {
            return Err(err(i + 1, format!("quaternion norm {norm} is not 1")));
        };
        poses.push(PoseSE3::new(rotation, Vector3::new(v[0], v[1], v[2]), ts));
    }
    Trajectory::new(poses).map_err(|e| err(0, e.to_string()))
}

pub fn write(path: &Path, traj: &Trajectory) -> FormatResult<()> {
    fsutil::write_atomic(path, encode(traj).as_bytes())
}

pub fn read(path: &Path) -> FormatResult<Trajectory> {
    decode(path, &fsutil::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_are_exact() {
        for ns in [0, 1, 45_454_545, 1_305_031_102_175_304_000, -2_500_000_000] {
            assert_eq!(parse_timestamp(&format_timestamp(ns)), Some(ns));
        }
        assert_eq!(parse_timestamp("1305031102.175304"), Some(1_305_031_102_175_304_000));
        assert_eq!(parse_timestamp("12"), Some(12_000_000_000));
        assert_eq!(parse_timestamp("1.0000000001"), None);
        assert_eq!(parse_timestamp("abc"), None);
    }

    #[test]
    fn rejects_bad_lines() {
        let p = Path::new("gt.txt");
        assert!(decode(p, "0.0 1 2 3 0 0 0\n").is_err());
        assert!(decode(p, "0.0 1 2 3 0 0 0 2\n1.0 1 2 3 0 0 0 1\n").is_err());
        assert!(decode(p, "0.0 1 2 3 0 0 0 1\n").is_err());
        assert!(decode(p, "# c\n0.0 1 2 3 0 0 0 1\n\n1.0 1 2 3 0 0 0 1\n").is_ok());
    }
}
