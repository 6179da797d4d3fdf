//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lrp::sim::{Segment, RANGE_MAX};

pub fn programs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("programs")
}

pub fn program_text(name: &str) -> String {
    std::fs::read_to_string(programs_dir().join(name)).expect("bundled program")
}

/// Copies the bundled programs into a scratch directory so tests can edit them.
pub fn scratch_programs() -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    for entry in std::fs::read_dir(programs_dir()).expect("programs dir") {
        let entry = entry.expect("entry");
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).expect("copy");
    }
    dir
}

/// Ray/segment distance via the implicit line `a·x + b·y = c`, checking that
/// the hit lies between the endpoints by projection.
pub fn analytic_raycast(seg: &Segment, origin: (f64, f64), angle: f64) -> f64 {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (a, b) = (seg.y2 - seg.y1, seg.x1 - seg.x2);
    let c = a * seg.x1 + b * seg.y1;
    let denom = a * dx + b * dy;
    if denom.abs() < 1e-15 {
        return RANGE_MAX;
    }
    let t = (c - a * origin.0 - b * origin.1) / denom;
    if t < 0.0 {
        return RANGE_MAX;
    }
    let (hx, hy) = (origin.0 + t * dx, origin.1 + t * dy);
    let (ex, ey) = (seg.x2 - seg.x1, seg.y2 - seg.y1);
    let s = ((hx - seg.x1) * ex + (hy - seg.y1) * ey) / (ex * ex + ey * ey);
    if (-1e-12..=1.0 + 1e-12).contains(&s) {
        t.min(RANGE_MAX)
    } else {
        RANGE_MAX
    }
}

/// Brute force: sample the segment densely, find where it crosses the ray's
/// line ahead of the origin, then bisect the crossing.
pub fn sampled_raycast(seg: &Segment, origin: (f64, f64), angle: f64) -> f64 {
    const SAMPLES: usize = 4096;
    let (dx, dy) = (angle.cos(), angle.sin());
    let point = |s: f64| {
        (
            seg.x1 + s * (seg.x2 - seg.x1),
            seg.y1 + s * (seg.y2 - seg.y1),
        )
    };
    let side = |s: f64| {
        let (px, py) = point(s);
        dx * (py - origin.1) - dy * (px - origin.0)
    };
    let ahead = |s: f64| {
        let (px, py) = point(s);
        (px - origin.0) * dx + (py - origin.1) * dy
    };
    let mut best = RANGE_MAX;
    let mut prev = (0.0, side(0.0));
    for i in 1..=SAMPLES {
        let s = i as f64 / SAMPLES as f64;
        let cur = (s, side(s));
        if prev.1 * cur.1 <= 0.0 {
            let (mut lo, mut hi) = (prev.0, cur.0);
            let lo_sign = prev.1;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if side(mid) * lo_sign > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = ahead(0.5 * (lo + hi));
            if t >= 0.0 {
                best = best.min(t);
            }
        }
        prev = cur;
    }
    best
}

/// Rotates a point about the origin.
pub fn rotate(p: (f64, f64), phi: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    (c * p.0 - s * p.1, s * p.0 + c * p.1)
}

pub fn rotate_segment(seg: &Segment, phi: f64) -> Segment {
    let a = rotate((seg.x1, seg.y1), phi);
    let b = rotate((seg.x2, seg.y2), phi);
    Segment::new(a.0, a.1, b.0, b.1)
}
