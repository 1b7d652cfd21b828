//! Offline interaction logs: one record per step, JSON lines with a header.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Simulator;
use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub env: String,
    pub seed: u64,
    pub policy: String,
    pub n_sessions: usize,
    pub n_items: usize,
    pub slate_size: usize,
    pub observation_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub session: usize,
    pub step: usize,
    /// Full-state observation the slate was shown against.
    pub observation: Vec<f64>,
    pub slate: Vec<usize>,
    /// 1-based rank of each slate position.
    pub ranks: Vec<usize>,
    pub clicks: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(LogHeader),
    Row(LogRow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    pub header: LogHeader,
    pub rows: Vec<LogRow>,
}

impl InteractionLog {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn n_clicks(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.clicks.iter().filter(|&&c| c).count())
            .sum()
    }

    /// Click-through rate per rank, in rank order.
    pub fn ctr_by_rank(&self) -> Vec<f64> {
        let s = self.header.slate_size;
        let mut clicks = vec![0usize; s];
        for row in &self.rows {
            for (&r, &c) in row.ranks.iter().zip(&row.clicks) {
                clicks[r - 1] += usize::from(c);
            }
        }
        let n = self.rows.len().max(1) as f64;
        clicks.into_iter().map(|c| c as f64 / n).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &Record::Header(self.header.clone()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
        for row in &self.rows {
            serde_json::to_writer(&mut out, &Record::Row(row.clone()))?;
            out.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut header = None;
        let mut rows = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            match (rec, &header) {
                (Record::Header(h), None) => header = Some(h),
                (Record::Header(_), Some(_)) => {
                    return Err(Error::Parse { line: n + 1, message: "second header".into() })
                }
                (Record::Row(_), None) => {
                    return Err(Error::Parse { line: n + 1, message: "row before header".into() })
                }
                (Record::Row(r), Some(h)) => {
                    check_row(&r, h).map_err(|message| Error::Parse { line: n + 1, message })?;
                    rows.push(r);
                }
            }
        }
        let header = header.ok_or(Error::Parse { line: 0, message: "missing header".into() })?;
        Ok(InteractionLog { header, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(file))
    }
}

fn check_row(row: &LogRow, h: &LogHeader) -> std::result::Result<(), String> {
    let s = h.slate_size;
    if row.slate.len() != s || row.ranks.len() != s || row.clicks.len() != s {
        return Err(format!("row lengths differ from slate size {s}"));
    }
    if row.observation.len() != h.observation_len {
        return Err("observation length differs from header".into());
    }
    let mut seen = vec![false; s];
    for &r in &row.ranks {
        if r == 0 || r > s || std::mem::replace(&mut seen[r - 1], true) {
            return Err("ranks are not a permutation of 1..=S".into());
        }
    }
    if row.slate.iter().any(|&i| i >= h.n_items) {
        return Err("item id outside catalog".into());
    }
    Ok(())
}

/// Runs `n_sessions` full episodes of `policy` and records every step.
///
/// Session `k` resets with `derive_seed(seed, "session", k)`; policy noise
/// comes from a stream derived from `seed`. Snapshots are full-state
/// observations even in partially observable environments.
pub fn generate_log(
    env: &mut Simulator,
    env_name: &str,
    policy: &dyn Policy,
    n_sessions: usize,
    seed: u64,
) -> Result<InteractionLog> {
    let cfg = env.config().clone();
    let mut rng = seeded(derive_seed(seed, "log-policy", 0));
    let mut rows = Vec::with_capacity(n_sessions * cfg.session_length);
    let ranks: Vec<usize> = (1..=cfg.slate_size).collect();
    for session in 0..n_sessions {
        let mut obs = env.reset(Some(derive_seed(seed, "session", session as u64)));
        loop {
            let snapshot = env.full_observation();
            let slate = policy.select(env, &obs, &mut rng);
            let out = env.step(&slate)?;
            rows.push(LogRow {
                session,
                step: env.state().step_index,
                observation: snapshot.0,
                slate,
                ranks: ranks.clone(),
                clicks: out.info.clicks,
            });
            obs = out.observation;
            if out.terminated {
                break;
            }
        }
    }
    Ok(InteractionLog {
        header: LogHeader {
            env: env_name.to_string(),
            seed,
            policy: policy.name().to_string(),
            n_sessions,
            n_items: cfg.n_items,
            slate_size: cfg.slate_size,
            observation_len: 3 * cfg.n_topics,
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::policies::RandomPolicy;

    #[test]
    fn empty_log_keeps_header() {
        let mut env = make_env("SlateRerank-Static", 1, None).unwrap();
        let log = generate_log(&mut env, "SlateRerank-Static", &RandomPolicy, 0, 5).unwrap();
        assert!(log.is_empty());
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let back = InteractionLog::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn jsonl_round_trip_and_replay() {
        let mut env = make_env("SlateRerank-Bored", 2, None).unwrap();
        let log = generate_log(&mut env, "SlateRerank-Bored", &RandomPolicy, 3, 9).unwrap();
        assert_eq!(log.len(), 30);
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        assert_eq!(InteractionLog::read_jsonl(buf.as_slice()).unwrap(), log);

        let mut env2 = make_env("SlateRerank-Bored", 2, None).unwrap();
        let again = generate_log(&mut env2, "SlateRerank-Bored", &RandomPolicy, 3, 9).unwrap();
        assert_eq!(again, log);
    }

    #[test]
    fn rejects_bad_ranks() {
        let text = concat!(
            r#"{"record":"header","env":"x","seed":0,"policy":"p","n_sessions":1,"n_items":3,"slate_size":2,"observation_len":1}"#,
            "\n",
            r#"{"record":"row","session":0,"step":1,"observation":[0.0],"slate":[0,1],"ranks":[1,1],"clicks":[true,false]}"#,
        );
        assert!(matches!(
            InteractionLog::read_jsonl(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
