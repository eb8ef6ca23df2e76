//! File formats: line-delimited JSON records for bulk data, single JSON
//! documents for summaries and configs, and small CSV tables.
//!
//! The path `-` reads stdin or writes stdout. Relative output paths are placed
//! under `$DSRKIT_OUT_DIR` when that variable is set.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::curation::{PairStrategy, DEFAULT_PAIR_CAP, DEFAULT_TAU_TRAIN};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, NoiseBatch};
use crate::metrics::{threshold_grid, EmbeddingSequence};
use crate::trajectory::{ScoringConfig, Trajectory};

pub const OUT_DIR_ENV: &str = "DSRKIT_OUT_DIR";

/// Serializes a score with exactly six decimals.
pub fn fixed6<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::Error as _;
    if !x.is_finite() {
        return Err(S::Error::custom(format!("cannot serialize non-finite value {x}")));
    }
    let raw = RawValue::from_string(format!("{x:.6}")).map_err(S::Error::custom)?;
    raw.serialize(s)
}

pub fn fixed6_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => fixed6(v, s),
        None => s.serialize_none(),
    }
}

/// Accepts the informational type name as an optional string.
pub fn deserialize_type_name<'de, D: Deserializer<'de>>(
    de: D,
) -> std::result::Result<Option<String>, D::Error> {
    Option::<String>::deserialize(de)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| io_err(path, e))?;
        return Ok(buf);
    }
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Parses one record per non-blank line. Zero records is an error.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("no {what} records")));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    parse_jsonl(&read_text(path)?, what)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyInput(format!("{} is empty", path.display())));
    }
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    read_jsonl(path, "trajectory")
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Final location of an output path after the directory override.
pub fn resolve_output(path: &Path) -> PathBuf {
    if path == Path::new("-") || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    let target = resolve_output(path);
    if target == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| io_err(&target, e))?;
        return Ok(target);
    }
    if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(&target, text).map_err(|e| io_err(&target, e))?;
    Ok(target)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<PathBuf> {
    write_text(path, &to_jsonl(records)?)
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<PathBuf> {
    write_text(path, &to_json(doc)?)
}

/// Renders a header and rows as CSV.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Six-decimal text form used in CSV cells.
pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Per-sample crop embeddings for identity consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub embeddings: EmbeddingSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdConsistencyRecord {
    pub sample_id: String,
    pub frames: usize,
    #[serde(serialize_with = "fixed6")]
    pub id_consistency: f64,
}

/// A yes/no answer given either as a boolean or as the words `yes` / `no`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Answer(pub bool);

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bool(bool),
            Word(String),
        }
        match Raw::deserialize(de)? {
            Raw::Bool(b) => Ok(Answer(b)),
            Raw::Word(w) => match w.to_ascii_lowercase().as_str() {
                "yes" => Ok(Answer(true)),
                "no" => Ok(Answer(false)),
                _ => Err(D::Error::custom(format!("answer must be yes or no, got {w:?}"))),
            },
        }
    }
}

/// One judged sample: relation score and the judge's yes/no answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub score: f64,
    pub answer: Answer,
}

/// Winner and loser noise batches for the `loss` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchPair {
    pub winner: NoiseBatch,
    pub loser: NoiseBatch,
}

/// Optional defaults for every subcommand; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub m: Option<usize>,
    pub min_frames: Option<usize>,
    pub tau_train: Option<f64>,
    /// Threshold grid as `lo:hi:step`.
    pub tau_grid: Option<String>,
    pub pair_strategy: Option<PairStrategy>,
    pub pair_cap: Option<usize>,
    pub loss: Option<LossConfig>,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ScoringConfig::new(self.window(), self.min_frames())?;
        let tau = self.tau_train();
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidConfig(format!("tau_train {tau} outside [0, 1]")));
        }
        if let Some(g) = &self.tau_grid {
            parse_grid(g)?;
        }
        if self.pair_cap == Some(0) {
            return Err(Error::InvalidConfig("pair_cap must be >= 1".into()));
        }
        if let Some(l) = &self.loss {
            l.validate()?;
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        self.m.unwrap_or(ScoringConfig::default().window)
    }

    pub fn min_frames(&self) -> usize {
        self.min_frames.unwrap_or(ScoringConfig::default().min_frames)
    }

    pub fn tau_train(&self) -> f64 {
        self.tau_train.unwrap_or(DEFAULT_TAU_TRAIN)
    }

    pub fn pair_cap(&self) -> usize {
        self.pair_cap.unwrap_or(DEFAULT_PAIR_CAP)
    }
}

/// Parses `lo:hi:step` into a threshold grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(Error::InvalidConfig(format!("grid {spec:?} is not lo:hi:step")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidConfig(format!("grid {spec:?}: {s:?} is not a number")))
    };
    threshold_grid(num(lo)?, num(hi)?, num(step)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::DsrType;

    #[derive(Serialize)]
    struct Scored {
        #[serde(serialize_with = "fixed6")]
        v: f64,
    }

    #[test]
    fn fixed_decimals() {
        let s = serde_json::to_string(&Scored { v: 1.0 }).unwrap();
        assert_eq!(s, r#"{"v":1.000000}"#);
        let s = serde_json::to_string(&Scored { v: 0.123_456_789 }).unwrap();
        assert_eq!(s, r#"{"v":0.123457}"#);
    }

    const CANONICAL: &str = r#"{"sample_id":"s0","prompt_id":"p0","dsr_type":"D","frames":[{"index":0,"animal":{"x0":0,"y0":40,"x1":20,"y1":60},"object":{"x0":40,"y0":40,"x1":60,"y1":60},"animal_count":1,"object_count":1},{"index":1,"animal":{"x0":20,"y0":40,"x1":40,"y1":60},"object":{"x0":40,"y0":40,"x1":60,"y1":60},"animal_count":1,"object_count":1}]}"#;

    #[test]
    fn trajectory_line_parses() {
        let t: Vec<Trajectory> = parse_jsonl(CANONICAL, "trajectory").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].dsr_type(), DsrType::D);
        assert_eq!(t[0].frame_count(), 2);
        let again: Vec<Trajectory> = parse_jsonl(&to_jsonl(&t).unwrap(), "trajectory").unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn bad_lines_report_line_numbers() {
        let bad_box = CANONICAL.replacen(r#""x0":0,"y0":40,"x1":20"#, r#""x0":30,"y0":40,"x1":20"#, 1);
        let text = format!("{CANONICAL}\n\n{bad_box}\n");
        match parse_jsonl::<Trajectory>(&text, "trajectory") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("x0"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_type = CANONICAL.replace(r#""dsr_type":"D""#, r#""dsr_type":"G""#);
        assert!(matches!(
            parse_jsonl::<Trajectory>(&bad_type, "trajectory"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_jsonl::<Trajectory>("\n  \n", "trajectory"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn answers_accept_words_and_bools() {
        let rs: Vec<AnswerRecord> = parse_jsonl(
            "{\"score\":0.5,\"answer\":\"yes\"}\n{\"score\":-0.5,\"answer\":false}\n",
            "answer",
        )
        .unwrap();
        assert_eq!(rs[0].answer, Answer(true));
        assert_eq!(rs[1].answer, Answer(false));
        assert!(parse_jsonl::<AnswerRecord>("{\"score\":0.1,\"answer\":\"maybe\"}", "answer").is_err());
    }

    #[test]
    fn grid_and_config() {
        let g = parse_grid("0:1:0.25").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_grid("0:1").is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"m": 4, "tau_train": 0.5}"#).unwrap();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.window(), 4);
        assert_eq!(cfg.min_frames(), 20);
        let bad: RunConfig = serde_json::from_str(r#"{"pair_cap": 0}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn csv_rendering() {
        let s = to_csv(&["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        assert_eq!(s, "a,b\n1,\"x,y\"\n");
    }
}
