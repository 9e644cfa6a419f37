//! Trace-replay token models: record once, replay deterministically.
//!
//! A trace file is line-delimited JSON, one record per position:
//! `{"position":N,"topk":[[token,prob],...]}` with probabilities written at
//! ten significant digits. A sidecar manifest (`<stem>.manifest.json`)
//! carries the vocabulary size and, for generated pairs, realized agreement
//! statistics.
//!
//! Replay never fabricates model behavior: a trace model is defined only for
//! contexts whose tokens all appear in the recorded top-k at their position.
//! Anything else raises [`Error::TraceDiverged`]; queries past the last
//! record raise [`Error::TraceExhausted`].

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Distribution, TokenId};

use super::TokenModel;

/// Sidecar metadata written next to a generated trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub vocab_size: u32,
    pub records: usize,
    pub seed: u64,
    pub p_top1: f64,
    pub p_top2: f64,
    pub burst_len: f64,
    /// Realized top-1 agreement between the paired traces.
    pub measured_top1: f64,
    /// Realized rank-two recovery rate among disagreeing positions.
    pub measured_top2: f64,
    pub eos: u32,
    /// How head probabilities were normalized by the producer.
    pub norm_mode: String,
}

/// Agreement bookkeeping accumulated while recording a pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairStats {
    pub positions: usize,
    pub top1_matches: usize,
    pub disagreements: usize,
    /// Disagreeing positions where the target token sat at draft rank two.
    pub rank2_recoveries: usize,
}

impl PairStats {
    pub fn realized_top1(&self) -> f64 {
        if self.positions == 0 {
            0.0
        } else {
            self.top1_matches as f64 / self.positions as f64
        }
    }

    pub fn realized_top2(&self) -> f64 {
        if self.disagreements == 0 {
            0.0
        } else {
            self.rank2_recoveries as f64 / self.disagreements as f64
        }
    }
}

/// Replays recorded per-position distributions.
pub struct TraceModel {
    records: Vec<Distribution>,
    vocab_size: u32,
}

impl TraceModel {
    pub fn new(records: Vec<Distribution>, vocab_size: u32) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::TraceParse {
                line: 0,
                reason: "trace holds no records".into(),
            });
        }
        Ok(Self {
            records,
            vocab_size,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Distribution] {
        &self.records
    }

    pub fn record(&self, position: usize) -> Option<&Distribution> {
        self.records.get(position)
    }

    /// The trace's end-of-sequence token: the final record's argmax.
    pub fn eos_token(&self) -> TokenId {
        self.records
            .last()
            .expect("trace holds at least one record")
            .argmax()
    }
}

impl TokenModel for TraceModel {
    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    fn top_k(&self) -> usize {
        self.records.iter().map(Distribution::len).min().unwrap_or(1)
    }

    fn query(&self, context: &[TokenId]) -> Result<Distribution> {
        for (i, t) in context.iter().enumerate() {
            let Some(rec) = self.records.get(i) else {
                return Err(Error::TraceExhausted { position: i });
            };
            if rec.rank_of(*t).is_none() {
                return Err(Error::TraceDiverged { position: i });
            }
        }
        let p = context.len();
        match self.records.get(p) {
            Some(rec) => Ok(rec.clone()),
            None => Err(Error::TraceExhausted { position: p }),
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    position: usize,
    topk: Vec<(u32, f64)>,
}

/// Sidecar path for a trace file: `target.jsonl` → `target.manifest.json`.
pub fn manifest_path(trace: &Path) -> PathBuf {
    trace.with_extension("manifest.json")
}

/// Loads a trace file, taking `vocab_size` from the sidecar manifest when
/// present and inferring it from the tokens otherwise.
pub fn load_trace(path: &Path) -> Result<TraceModel> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            return Err(Error::TraceParse {
                line: line_no,
                reason: "blank line inside trace".into(),
            });
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::TraceParse {
            line: line_no,
            reason: e.to_string(),
        })?;
        if raw.position != idx {
            return Err(Error::TraceParse {
                line: line_no,
                reason: format!("position {} out of order (expected {idx})", raw.position),
            });
        }
        let entries = raw
            .topk
            .into_iter()
            .map(|(t, p)| crate::types::DistEntry {
                token: TokenId(t),
                prob: p,
            })
            .collect();
        let dist = Distribution::new(entries).map_err(|e| Error::TraceParse {
            line: line_no,
            reason: e.to_string(),
        })?;
        records.push(dist);
    }
    if records.is_empty() {
        return Err(Error::TraceParse {
            line: 0,
            reason: "trace holds no records".into(),
        });
    }
    let vocab_size = match fs::read_to_string(manifest_path(path)) {
        Ok(m) => {
            let manifest: TraceManifest = serde_json::from_str(&m).map_err(|e| Error::TraceParse {
                line: 0,
                reason: format!("bad manifest: {e}"),
            })?;
            manifest.vocab_size
        }
        Err(_) => records
            .iter()
            .flat_map(|d| d.entries().iter().map(|e| e.token.0 + 1))
            .max()
            .unwrap_or(4)
            .max(4),
    };
    TraceModel::new(records, vocab_size)
}

/// Writes a trace file; byte-identical for identical records.
pub fn write_trace(path: &Path, records: &[Distribution]) -> Result<()> {
    let mut out = Vec::new();
    for (i, d) in records.iter().enumerate() {
        let pairs: Vec<String> = d
            .entries()
            .iter()
            .map(|e| format!("[{},{:.9e}]", e.token.0, e.prob))
            .collect();
        writeln!(out, "{{\"position\":{i},\"topk\":[{}]}}", pairs.join(","))?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the sidecar manifest next to `trace_path`.
pub fn write_manifest(trace_path: &Path, manifest: &TraceManifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(manifest_path(trace_path), body + "\n")?;
    Ok(())
}

/// Walks `len` greedy steps of `target`, recording both models' distributions
/// at every position along that path, plus realized agreement statistics.
pub fn record_pair(
    target: &dyn TokenModel,
    draft: &dyn TokenModel,
    len: usize,
) -> Result<(Vec<Distribution>, Vec<Distribution>, PairStats)> {
    let mut ctx: Vec<TokenId> = Vec::with_capacity(len);
    let mut target_records = Vec::with_capacity(len);
    let mut draft_records = Vec::with_capacity(len);
    let mut stats = PairStats::default();
    for _ in 0..len {
        let t = target.query(&ctx)?;
        let d = draft.query(&ctx)?;
        stats.positions += 1;
        if d.argmax() == t.argmax() {
            stats.top1_matches += 1;
        } else {
            stats.disagreements += 1;
            if d.rank_of(t.argmax()) == Some(1) {
                stats.rank2_recoveries += 1;
            }
        }
        ctx.push(t.argmax());
        target_records.push(t);
        draft_records.push(d);
    }
    Ok((target_records, draft_records, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DistEntry;

    fn dist(pairs: &[(u32, f64)]) -> Distribution {
        Distribution::new(
            pairs
                .iter()
                .map(|&(t, p)| DistEntry {
                    token: TokenId(t),
                    prob: p,
                })
                .collect(),
        )
        .unwrap()
    }

    fn three_record_model() -> TraceModel {
        TraceModel::new(
            vec![
                dist(&[(10, 0.7), (11, 0.2)]),
                dist(&[(20, 0.6), (21, 0.3)]),
                dist(&[(30, 0.8), (31, 0.1)]),
            ],
            64,
        )
        .unwrap()
    }

    #[test]
    fn replays_greedy_path() {
        let m = three_record_model();
        let mut ctx = Vec::new();
        let mut out = Vec::new();
        for _ in 0..3 {
            let d = m.query(&ctx).unwrap();
            out.push(d.argmax());
            ctx.push(d.argmax());
        }
        assert_eq!(out, vec![TokenId(10), TokenId(20), TokenId(30)]);
        assert_eq!(m.eos_token(), TokenId(30));
    }

    #[test]
    fn recorded_alternatives_stay_queryable() {
        let m = three_record_model();
        // Rank-two token at position 0 is on a recorded path.
        assert_eq!(
            m.query(&[TokenId(11)]).unwrap().argmax(),
            TokenId(20)
        );
    }

    #[test]
    fn off_path_and_past_end_queries_fail() {
        let m = three_record_model();
        assert!(matches!(
            m.query(&[TokenId(99)]),
            Err(Error::TraceDiverged { position: 0 })
        ));
        assert!(matches!(
            m.query(&[TokenId(10), TokenId(20), TokenId(30)]),
            Err(Error::TraceExhausted { position: 3 })
        ));
    }

    #[test]
    fn rejects_empty_and_malformed_files() {
        let dir = std::env::temp_dir().join(format!("specasr-trace-ut-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();

        let empty = dir.join("empty.jsonl");
        fs::write(&empty, "").unwrap();
        assert!(matches!(load_trace(&empty), Err(Error::TraceParse { .. })));

        let garbled = dir.join("garbled.jsonl");
        fs::write(&garbled, "{\"position\":0,\"topk\":[[1,0.5]]}\nnot json\n").unwrap();
        assert!(matches!(
            load_trace(&garbled),
            Err(Error::TraceParse { line: 2, .. })
        ));

        let skipped = dir.join("skipped.jsonl");
        fs::write(
            &skipped,
            "{\"position\":0,\"topk\":[[1,0.5]]}\n{\"position\":2,\"topk\":[[1,0.5]]}\n",
        )
        .unwrap();
        assert!(matches!(
            load_trace(&skipped),
            Err(Error::TraceParse { line: 2, .. })
        ));

        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn write_then_load_preserves_order_and_argmax() {
        let dir = std::env::temp_dir().join(format!("specasr-trace-rt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.jsonl");
        let records = vec![
            dist(&[(10, 0.7), (11, 0.2), (12, 0.05)]),
            dist(&[(20, 0.6), (21, 0.3)]),
        ];
        write_trace(&path, &records).unwrap();
        let m = load_trace(&path).unwrap();
        assert_eq!(m.len(), 2);
        for (i, rec) in records.iter().enumerate() {
            let got = m.record(i).unwrap();
            assert_eq!(got.len(), rec.len());
            for (a, b) in got.entries().iter().zip(rec.entries()) {
                assert_eq!(a.token, b.token);
                assert!((a.prob - b.prob).abs() < 1e-9);
            }
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn manifest_sidecar_round_trips() {
        let dir = std::env::temp_dir().join(format!("specasr-trace-mf-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pair.target.jsonl");
        let manifest = TraceManifest {
            vocab_size: 256,
            records: 2,
            seed: 7,
            p_top1: 0.9,
            p_top2: 0.7,
            burst_len: 2.0,
            measured_top1: 0.905,
            measured_top2: 0.69,
            eos: 30,
            norm_mode: "softmax_full_vocab".into(),
        };
        write_trace(&path, &[dist(&[(10, 0.7)]), dist(&[(30, 0.8)])]).unwrap();
        write_manifest(&path, &manifest).unwrap();
        let m = load_trace(&path).unwrap();
        assert_eq!(m.vocab_size(), 256);
        let read_back: TraceManifest =
            serde_json::from_str(&fs::read_to_string(manifest_path(&path)).unwrap()).unwrap();
        assert_eq!(read_back, manifest);
        let _ = fs::remove_dir_all(&dir);
    }
}
