//! Average precision over ranked shot lists and mean AP over query sets.
//!
//! For a ranking `ρ` cut at `N`, relevant set `R`, and `ρ^k` the top-`k` prefix:
//!
//! ```text
//! AP(ρ) = 1/|R ∩ ρ^N| · Σ_{k=1..N} |R ∩ ρ^k| / k · [ρ_k ∈ R]
//! ```
//!
//! The sum is normalized by the number of relevant shots actually retrieved
//! in the top `N`, not by `|R|`. A ranking that retrieves none scores 0.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::{QueryKind, RankedEntry, RankedResult, ShotId};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mean AP of an empty query set is undefined")]
    NoQueries,
    #[error("cutoff N must be at least 1")]
    ZeroCutoff,
}

/// Ground truth for one query: the set of relevant shots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceJudgments {
    pub query_id: String,
    pub relevant: HashSet<ShotId>,
}

/// AP of the top-`n` prefix of `ranking`. Rankings shorter than `n` are used as-is.
pub fn average_precision(ranking: &[ShotId], relevant: &HashSet<ShotId>, n: usize) -> f64 {
    let mut retrieved_relevant = 0usize;
    let mut sum = 0.0;
    for (k, shot) in ranking.iter().take(n).enumerate() {
        if relevant.contains(shot) {
            retrieved_relevant += 1;
            sum += retrieved_relevant as f64 / (k + 1) as f64;
        }
    }
    if retrieved_relevant == 0 {
        0.0
    } else {
        sum / retrieved_relevant as f64
    }
}

/// Arithmetic mean of per-query APs.
pub fn mean_ap(aps: &[f64]) -> Result<f64, EvalError> {
    if aps.is_empty() {
        return Err(EvalError::NoQueries);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cutoff: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean_ap: f64,
}

/// Scores every `(ranking, judgments)` pair at cutoff `n`.
pub fn evaluate_run(queries: &[(RankedResult, RelevanceJudgments)], n: usize) -> Result<EvalReport, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    let per_query: BTreeMap<String, f64> = queries
        .iter()
        .map(|(ranking, judgments)| {
            let shots: Vec<ShotId> = ranking.shots().cloned().collect();
            (
                judgments.query_id.clone(),
                average_precision(&shots, &judgments.relevant, n),
            )
        })
        .collect();
    let aps: Vec<f64> = per_query.values().copied().collect();
    Ok(EvalReport {
        cutoff: n,
        mean_ap: mean_ap(&aps)?,
        per_query,
    })
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })
}

fn lines(input: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    input.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        (!line.trim().is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split('\t').collect()))
    })
}

fn shot_field(line: usize, video: &str, index: &str) -> Result<ShotId, EvalError> {
    if video.is_empty() {
        return Err(EvalError::Parse {
            line,
            message: "empty video id".into(),
        });
    }
    let index = index.trim().parse().map_err(|_| EvalError::Parse {
        line,
        message: format!("invalid shot_index {index:?}"),
    })?;
    Ok(ShotId::new(video, index))
}

/// Parses `query_id, video_id, shot_index` judgment lines.
pub fn parse_judgments(input: &str) -> Result<BTreeMap<String, RelevanceJudgments>, EvalError> {
    let mut out: BTreeMap<String, RelevanceJudgments> = BTreeMap::new();
    for (line, f) in lines(input) {
        if f.len() != 3 {
            return Err(EvalError::Parse {
                line,
                message: format!("judgment needs 3 tab-separated fields, found {}", f.len()),
            });
        }
        let shot = shot_field(line, f[1], f[2])?;
        out.entry(f[0].to_owned())
            .or_insert_with(|| RelevanceJudgments {
                query_id: f[0].to_owned(),
                relevant: HashSet::new(),
            })
            .relevant
            .insert(shot);
    }
    Ok(out)
}

pub fn load_judgments(path: &Path) -> Result<BTreeMap<String, RelevanceJudgments>, EvalError> {
    parse_judgments(&read(path)?)
}

/// Parses `query_id, video_id, shot_index, score` run lines. Each query's
/// ranking is sorted by descending score, keeping file order among ties.
pub fn parse_run(input: &str) -> Result<BTreeMap<String, RankedResult>, EvalError> {
    let mut rows: BTreeMap<String, Vec<RankedEntry>> = BTreeMap::new();
    let mut seen: HashMap<(String, ShotId), usize> = HashMap::new();
    for (line, f) in lines(input) {
        if f.len() != 4 {
            return Err(EvalError::Parse {
                line,
                message: format!("run line needs 4 tab-separated fields, found {}", f.len()),
            });
        }
        let shot = shot_field(line, f[1], f[2])?;
        let score: f64 = f[3]
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| !s.is_nan())
            .ok_or_else(|| EvalError::Parse {
                line,
                message: format!("invalid score {:?}", f[3]),
            })?;
        if let Some(first) = seen.insert((f[0].to_owned(), shot.clone()), line) {
            return Err(EvalError::Parse {
                line,
                message: format!("shot {shot} already listed for query {} on line {first}", f[0]),
            });
        }
        rows.entry(f[0].to_owned())
            .or_default()
            .push(RankedEntry { shot, score });
    }
    Ok(rows
        .into_iter()
        .map(|(q, mut entries)| {
            entries.sort_by(|a, b| b.score.total_cmp(&a.score));
            (q, RankedResult::new(QueryKind::Similarity, entries))
        })
        .collect())
}

pub fn load_run(path: &Path) -> Result<BTreeMap<String, RankedResult>, EvalError> {
    parse_run(&read(path)?)
}

/// Renders a ranking as run lines for `query_id`.
pub fn write_run(query_id: &str, ranking: &RankedResult) -> String {
    let mut out = String::new();
    for e in &ranking.entries {
        let _ = writeln!(
            out,
            "{query_id}\t{}\t{}\t{}",
            e.shot.video_id, e.shot.shot_index, e.score
        );
    }
    out
}

/// Pairs each judged query with its ranking; judged queries absent from the
/// run get an empty ranking. Run queries without judgments are not scored.
pub fn pair_run(
    run: &BTreeMap<String, RankedResult>,
    judgments: &BTreeMap<String, RelevanceJudgments>,
) -> Vec<(RankedResult, RelevanceJudgments)> {
    judgments
        .iter()
        .map(|(q, j)| {
            let ranking = run
                .get(q)
                .cloned()
                .unwrap_or_else(|| RankedResult::new(QueryKind::Similarity, Vec::new()));
            (ranking, j.clone())
        })
        .collect()
}

/// Human-readable table, one column per cutoff.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let width = reports
        .iter()
        .flat_map(|r| r.per_query.keys())
        .map(|q| q.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let _ = write!(out, "{:<width$}", "query");
    for r in reports {
        let _ = write!(out, "  {:>8}", format!("AP@{}", r.cutoff));
    }
    out.push('\n');
    if let Some(first) = reports.first() {
        for q in first.per_query.keys() {
            let _ = write!(out, "{q:<width$}");
            for r in reports {
                let _ = write!(out, "  {:>8.4}", r.per_query.get(q).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
    }
    let _ = write!(out, "{:<width$}", "mAP");
    for r in reports {
        let _ = write!(out, "  {:>8.4}", r.mean_ap);
    }
    out.push('\n');
    out
}

#[derive(Serialize)]
struct ReportLine<'a> {
    query_id: &'a str,
    cutoff: usize,
    ap: f64,
}

#[derive(Serialize)]
struct SummaryLine {
    cutoff: usize,
    queries: usize,
    mean_ap: f64,
}

/// One JSON record per (query, cutoff) plus one summary record per cutoff.
pub fn format_json_lines(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for r in reports {
        for (q, &ap) in &r.per_query {
            let line = ReportLine {
                query_id: q,
                cutoff: r.cutoff,
                ap,
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        let summary = SummaryLine {
            cutoff: r.cutoff,
            queries: r.per_query.len(),
            mean_ap: r.mean_ap,
        };
        out.push_str(&serde_json::to_string(&summary).expect("serializable"));
        out.push('\n');
    }
    out
}
