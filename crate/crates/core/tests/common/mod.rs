//! Deliberately naive reimplementation of the relation and transition scores,
//! written from the formulas alone for cross-checking the library.

#![allow(dead_code)]

use dsrkit::trajectory::{DsrType, Trajectory};

/// Relation as a letter: 'L', 'R' or 'T'.
fn relation_letters(t: DsrType) -> (char, char) {
    match t {
        DsrType::A => ('L', 'T'),
        DsrType::B => ('T', 'L'),
        DsrType::C => ('R', 'T'),
        DsrType::D => ('L', 'R'),
        DsrType::E => ('T', 'R'),
        DsrType::F => ('R', 'L'),
    }
}

/// Per-frame score from raw corner coordinates `[x0, y0, x1, y1]`.
pub fn naive_ssr(a: [f64; 4], o: [f64; 4], rel: char) -> f64 {
    let acx = (a[0] + a[2]) * 0.5;
    let acy = (a[1] + a[3]) * 0.5;
    let ocx = (o[0] + o[2]) * 0.5;
    let ocy = (o[1] + o[3]) * 0.5;
    let (ux, uy, horizontal) = match rel {
        'L' => (-1.0, 0.0, true),
        'R' => (1.0, 0.0, true),
        'T' => (0.0, -1.0, false),
        _ => unreachable!(),
    };
    let (gap, size) = if horizontal {
        (acx - ocx, ((a[2] - a[0]) + (o[2] - o[0])) * 0.5)
    } else {
        (acy - ocy, ((a[3] - a[1]) + (o[3] - o[1])) * 0.5)
    };
    let mut dc = gap.abs() / size;
    if dc > 1.0 {
        dc = 1.0;
    }
    let vx = acx - ocx;
    let vy = acy - ocy;
    let len = (vx * vx + vy * vy).sqrt();
    let cos = if len == 0.0 { 0.0 } else { (vx * ux + vy * uy) / len };
    dc * cos.clamp(-1.0, 1.0)
}

fn corners(b: &dsrkit::geometry::BBox) -> [f64; 4] {
    [b.x0(), b.y0(), b.x1(), b.y1()]
}

/// Transition score over frames with exactly one box of each entity, or
/// `None` with fewer than two such frames.
pub fn oracle_score(traj: &Trajectory, m: usize) -> Option<f64> {
    let mut pairs = Vec::new();
    for f in traj.frames() {
        if f.animal_count == 1 && f.object_count == 1 {
            if let (Some(a), Some(o)) = (f.animal, f.object) {
                pairs.push((corners(&a), corners(&o)));
            }
        }
    }
    let k = pairs.len();
    if k < 2 {
        return None;
    }
    let (ri, rf) = relation_letters(traj.dsr_type());
    let si: Vec<f64> = pairs.iter().map(|(a, o)| naive_ssr(*a, *o, ri)).collect();
    let sf: Vec<f64> = pairs.iter().map(|(a, o)| naive_ssr(*a, *o, rf)).collect();
    let w = if k < 2 * m { k / 2 } else { m };
    let mut r_init = 0.0;
    for v in si.iter().take(w) {
        r_init += v;
    }
    r_init /= w as f64;
    let mut r_f = 0.0;
    for v in sf.iter().skip(k - w) {
        r_f += v;
    }
    r_f /= w as f64;
    let g_init = si[0] - si[k - 1];
    let g_f = sf[k - 1] - sf[0];
    let raw = 0.125 * (r_init + r_f + g_init + g_f) + 0.5;
    Some(raw.clamp(0.0, 1.0))
}

/// Runs simulate, score, curate, pairs and curve in `dir` and returns the
/// bytes of every artifact in a fixed order.
pub fn run_pipeline(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_dsrkit");
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate", "--type", "A,B,C,D,E,F", "--path", "linear,arc,hold,reversed", "--frames", "40",
             "--jitter", "3", "--dropout", "0.05", "--samples", "3", "--seed", "11", "--out", &p("traj.jsonl")],
        vec!["score", "--in", &p("traj.jsonl"), "--out", &p("scores.jsonl")],
        vec!["curate", "--in", &p("scores.jsonl"), "--out", &p("curation.json")],
        vec!["pairs", "--in", &p("scores.jsonl"), "--strategy", "random_k", "--cap", "4", "--seed", "5",
             "--out", &p("pairs.jsonl")],
        vec!["curve", "--in", &p("scores.jsonl"), "--grid", "0:1:0.05", "--out", &p("curve.csv")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in steps {
        let out = std::process::Command::new(bin).args(&args).output().expect("binary runs");
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    ["traj.jsonl", "scores.jsonl", "curation.json", "pairs.jsonl", "curve.csv", "curve.json"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).expect("artifact written")))
        .collect()
}
