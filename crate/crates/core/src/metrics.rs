//! Per-release process metrics from exported repository event logs: CI service
//! classification, merge-conflict detection, bug classification and monthly
//! aggregation into the seven analysis variables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{DatasetTable, StatsError};

pub const WINDOW_DAYS: i64 = 30;
pub const WINDOWS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bundle has no meta record")]
    MissingMeta,
    #[error("bundle has more than one meta record")]
    DuplicateMeta,
    #[error("duplicate commit sha `{0}`")]
    DuplicateSha(String),
    #[error("duplicate issue id `{0}`")]
    DuplicateIssue(String),
    #[error("CI adoption {adopted} precedes repository creation {created}")]
    AdoptionBeforeCreation { created: DateTime<Utc>, adopted: DateTime<Utc> },
    #[error("alignment start {start} precedes repository creation {created}")]
    StartBeforeCreation { created: DateTime<Utc>, start: DateTime<Utc> },
    #[error("history ends {last}, before the 12th window starting {needed}")]
    ShortHistory { last: DateTime<Utc>, needed: DateTime<Utc> },
    #[error("duplicate release {release} for project `{project}`")]
    DuplicateRelease { project: String, release: usize },
    #[error("no release rows")]
    Empty,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub lines_added: u64,
    pub lines_removed: u64,
    pub is_test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub sha: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub pull_request: Option<String>,
    #[serde(default)]
    pub files: Vec<FileChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRequestRecord {
    pub id: String,
    pub opened_at: DateTime<Utc>,
    pub comments: u64,
    pub review_comments: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RepoEventLog {
    #[serde(default)]
    pub project: String,
    pub repo_created_at: DateTime<Utc>,
    pub ci_adopted_at: Option<DateTime<Utc>>,
    pub commits: Vec<CommitRecord>,
    pub pull_requests: Vec<PullRequestRecord>,
    pub issues: Vec<IssueRecord>,
    /// Merge-commit sha to the diff text between its first two parents.
    pub conflict_probe: BTreeMap<String, String>,
    /// Parent shas not present in the log.
    #[serde(default)]
    pub dangling_parents: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum BundleRecord {
    Meta {
        #[serde(default)]
        project: String,
        repo_created_at: DateTime<Utc>,
        #[serde(default)]
        ci_adopted_at: Option<DateTime<Utc>>,
    },
    Commit(CommitRecord),
    PullRequest(PullRequestRecord),
    Issue(IssueRecord),
    ConflictProbe { sha: String, text: String },
}

impl RepoEventLog {
    /// Reads a JSONL bundle: one record per line, tagged by a `type` field.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut meta = None;
        let mut log = RepoEventLog::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| MetricsError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: BundleRecord = serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            match rec {
                BundleRecord::Meta {
                    project,
                    repo_created_at,
                    ci_adopted_at,
                } => {
                    if meta.replace((project, repo_created_at, ci_adopted_at)).is_some() {
                        return Err(MetricsError::DuplicateMeta);
                    }
                }
                BundleRecord::Commit(c) => log.commits.push(c),
                BundleRecord::PullRequest(p) => log.pull_requests.push(p),
                BundleRecord::Issue(is) => log.issues.push(is),
                BundleRecord::ConflictProbe { sha, text } => {
                    log.conflict_probe.insert(sha, text);
                }
            }
        }
        let (project, created, adopted) = meta.ok_or(MetricsError::MissingMeta)?;
        log.project = project;
        log.repo_created_at = created;
        log.ci_adopted_at = adopted;
        log.validate()?;
        Ok(log)
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self, MetricsError> {
        Self::from_jsonl(text.as_bytes())
    }

    /// Checks identifier uniqueness and adoption order; records dangling parents.
    pub fn validate(&mut self) -> Result<(), MetricsError> {
        if let Some(adopted) = self.ci_adopted_at {
            if adopted < self.repo_created_at {
                return Err(MetricsError::AdoptionBeforeCreation {
                    created: self.repo_created_at,
                    adopted,
                });
            }
        }
        let mut shas = BTreeSet::new();
        for c in &self.commits {
            if !shas.insert(c.sha.as_str()) {
                return Err(MetricsError::DuplicateSha(c.sha.clone()));
            }
        }
        let mut ids = BTreeSet::new();
        for is in &self.issues {
            if !ids.insert(is.id.as_str()) {
                return Err(MetricsError::DuplicateIssue(is.id.clone()));
            }
        }
        let dangling: BTreeSet<String> = self
            .commits
            .iter()
            .flat_map(|c| c.parents.iter())
            .filter(|p| !shas.contains(p.as_str()))
            .cloned()
            .collect();
        self.dangling_parents = dangling.into_iter().collect();
        Ok(())
    }

    fn last_event(&self) -> Option<DateTime<Utc>> {
        self.commits
            .iter()
            .map(|c| c.timestamp)
            .chain(self.pull_requests.iter().map(|p| p.opened_at))
            .chain(self.issues.iter().map(|i| i.created_at))
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConflictScan {
    /// Flagged merge commits in timestamp order.
    pub flagged: Vec<String>,
    /// Merge commits without probe text.
    pub unscanned: Vec<String>,
}

/// Flags a commit iff it has more than one parent and its probe text contains
/// both `<<<<<<< HEAD` and `<<<<<<<`.
pub fn detect_merge_conflicts(log: &RepoEventLog) -> ConflictScan {
    let mut commits: Vec<&CommitRecord> = log.commits.iter().collect();
    commits.sort_by(|a, b| (a.timestamp, &a.sha).cmp(&(b.timestamp, &b.sha)));
    let mut scan = ConflictScan::default();
    for c in commits {
        if c.parents.len() <= 1 {
            continue;
        }
        match log.conflict_probe.get(&c.sha) {
            Some(text) if text.contains("<<<<<<< HEAD") && text.contains("<<<<<<<") => {
                scan.flagged.push(c.sha.clone())
            }
            Some(_) => {}
            None => scan.unscanned.push(c.sha.clone()),
        }
    }
    scan
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiService {
    Travis,
    GithubActions,
    Circle,
    Jenkins,
    AppVeyor,
    Wercker,
}

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

fn normalize(path: &str) -> &str {
    path.trim_start_matches("./").trim_start_matches('/')
}

/// First service whose rule matches, in the fixed precedence order
/// Travis, GitHub Actions, Circle, Jenkins, AppVeyor, Wercker.
pub fn classify_ci_service(files: &[&str], api_presence: &BTreeMap<CiService, bool>) -> Option<CiService> {
    let api = |s: CiService| api_presence.get(&s).copied().unwrap_or(false);
    let any = |pred: &dyn Fn(&str) -> bool| files.iter().map(|f| normalize(f)).any(pred);
    if api(CiService::Travis) || any(&|p| file_name(p) == ".travis.yml") {
        return Some(CiService::Travis);
    }
    if any(&|p| {
        p.strip_prefix(".github/workflows/")
            .is_some_and(|rest| !rest.contains('/') && rest.ends_with(".yml"))
    }) {
        return Some(CiService::GithubActions);
    }
    if api(CiService::Circle) || any(&|p| p == ".circleci/config.yml") {
        return Some(CiService::Circle);
    }
    if any(&|p| file_name(p) == "Jenkinsfile") {
        return Some(CiService::Jenkins);
    }
    if any(&|p| file_name(p) == "appveyor.yml") {
        return Some(CiService::AppVeyor);
    }
    if api(CiService::Wercker) {
        return Some(CiService::Wercker);
    }
    None
}

/// Ids of bug issues: any label mapped true, or for unlabeled issues with the
/// fallback on, "bug" or "fix" anywhere in title or body, ignoring case.
pub fn classify_bugs(issues: &[IssueRecord], label_map: &BTreeMap<String, bool>, fallback: bool) -> BTreeSet<String> {
    issues
        .iter()
        .filter(|is| {
            if is.labels.is_empty() {
                if !fallback {
                    return false;
                }
                let text = format!("{}\n{}", is.title, is.body).to_lowercase();
                text.contains("bug") || text.contains("fix")
            } else {
                is.labels
                    .iter()
                    .any(|l| label_map.get(&l.to_lowercase()).copied().unwrap_or(false))
            }
        })
        .map(|is| is.id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ReleaseMetrics {
    pub release_index: usize,
    pub CI: u8,
    pub Age: i64,
    pub CommitFrequency: u64,
    pub Communication: f64,
    pub MergeConflicts: u64,
    pub TestsVolume: f64,
    pub BugReport: u64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Twelve consecutive 30-day windows from `alignment_start`, each `[start, end)`.
pub fn compute_release_metrics(
    log: &RepoEventLog,
    bug_ids: &BTreeSet<String>,
    conflict_shas: &[String],
    is_ci_project: bool,
    alignment_start: DateTime<Utc>,
) -> Result<Vec<ReleaseMetrics>, MetricsError> {
    if alignment_start < log.repo_created_at {
        return Err(MetricsError::StartBeforeCreation {
            created: log.repo_created_at,
            start: alignment_start,
        });
    }
    let window = Duration::days(WINDOW_DAYS);
    let last_start = alignment_start + window * (WINDOWS as i32 - 1);
    match log.last_event() {
        Some(last) if last >= last_start => {}
        last => {
            return Err(MetricsError::ShortHistory {
                last: last.unwrap_or(log.repo_created_at),
                needed: last_start,
            })
        }
    }
    let index_of = |t: DateTime<Utc>| -> Option<usize> {
        if t < alignment_start {
            return None;
        }
        let k = ((t - alignment_start).num_seconds() / window.num_seconds()) as usize;
        (k < WINDOWS).then_some(k)
    };
    let conflicts: BTreeSet<&str> = conflict_shas.iter().map(String::as_str).collect();
    let mut commit_freq = [0u64; WINDOWS];
    let mut merge_conflicts = [0u64; WINDOWS];
    let mut volumes: Vec<Vec<f64>> = vec![Vec::new(); WINDOWS];
    for c in &log.commits {
        let Some(k) = index_of(c.timestamp) else { continue };
        if c.pull_request.is_some() {
            commit_freq[k] += 1;
        }
        if conflicts.contains(c.sha.as_str()) {
            merge_conflicts[k] += 1;
        }
        let total: u64 = c.files.iter().map(|f| f.lines_added + f.lines_removed).sum();
        if total > 0 {
            let test: u64 = c
                .files
                .iter()
                .filter(|f| f.is_test)
                .map(|f| f.lines_added + f.lines_removed)
                .sum();
            volumes[k].push(test as f64 / total as f64);
        }
    }
    let mut comm: Vec<Vec<f64>> = vec![Vec::new(); WINDOWS];
    for p in &log.pull_requests {
        if let Some(k) = index_of(p.opened_at) {
            comm[k].push((p.comments + p.review_comments) as f64);
        }
    }
    let mut bugs = [0u64; WINDOWS];
    for is in &log.issues {
        if bug_ids.contains(&is.id) {
            if let Some(k) = index_of(is.created_at) {
                bugs[k] += 1;
            }
        }
    }
    Ok((0..WINDOWS)
        .map(|k| {
            let end = alignment_start + window * (k as i32 + 1);
            let communication = if comm[k].is_empty() {
                0.0
            } else {
                comm[k].iter().sum::<f64>() / comm[k].len() as f64
            };
            ReleaseMetrics {
                release_index: k + 1,
                CI: is_ci_project as u8,
                Age: (end - log.repo_created_at).num_days(),
                CommitFrequency: commit_freq[k],
                Communication: communication,
                MergeConflicts: merge_conflicts[k],
                TestsVolume: median(std::mem::take(&mut volumes[k])),
                BugReport: bugs[k],
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReleases {
    pub project: String,
    pub releases: Vec<ReleaseMetrics>,
}

/// One row per (project, release), columns named as the DAG variables.
pub fn build_dataset(rows: &[ProjectReleases]) -> Result<DatasetTable, MetricsError> {
    let mut seen = BTreeSet::new();
    let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for p in rows {
        for r in &p.releases {
            if !seen.insert((p.project.as_str(), r.release_index)) {
                return Err(MetricsError::DuplicateRelease {
                    project: p.project.clone(),
                    release: r.release_index,
                });
            }
            let vals = [
                ("Age", r.Age as f64),
                ("BugReport", r.BugReport as f64),
                ("CI", r.CI as f64),
                ("CommitFrequency", r.CommitFrequency as f64),
                ("Communication", r.Communication),
                ("MergeConflicts", r.MergeConflicts as f64),
                ("TestsVolume", r.TestsVolume),
            ];
            for (k, v) in vals {
                cols.entry(k).or_default().push(v);
            }
        }
    }
    if seen.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(DatasetTable::from_columns(
        cols.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    )?)
}

/// Options for turning one event log into release rows.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub label_map: BTreeMap<String, bool>,
    pub keyword_fallback: bool,
    /// Start for projects without CI; CI projects start at adoption.
    pub no_ci_start: Option<DateTime<Utc>>,
}

/// Full per-project pipeline: conflicts, bugs, then windows.
pub fn ingest_log(log: &RepoEventLog, options: &IngestOptions) -> Result<ProjectReleases, MetricsError> {
    let scan = detect_merge_conflicts(log);
    let bugs = classify_bugs(&log.issues, &options.label_map, options.keyword_fallback);
    let (is_ci, start) = match (log.ci_adopted_at, options.no_ci_start) {
        (Some(a), _) => (true, a),
        (None, Some(s)) => (false, s),
        (None, None) => (false, log.repo_created_at),
    };
    Ok(ProjectReleases {
        project: log.project.clone(),
        releases: compute_release_metrics(log, &bugs, &scan.flagged, is_ci, start)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn commit(sha: &str, parents: &[&str], ts: &str) -> CommitRecord {
        CommitRecord {
            sha: sha.into(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            timestamp: t(ts),
            pull_request: None,
            files: Vec::new(),
        }
    }

    #[test]
    fn single_parent_never_flagged() {
        let mut log = RepoEventLog {
            commits: vec![commit("a", &[], "2020-01-01T00:00:00Z"), commit("b", &["a"], "2020-01-02T00:00:00Z")],
            ..Default::default()
        };
        log.conflict_probe.insert("b".into(), "<<<<<<< HEAD\n=======\n>>>>>>> x".into());
        assert!(detect_merge_conflicts(&log).flagged.is_empty());
    }

    #[test]
    fn merge_with_markers_flagged_and_missing_probe_reported() {
        let mut log = RepoEventLog {
            commits: vec![
                commit("a", &[], "2020-01-01T00:00:00Z"),
                commit("b", &["a"], "2020-01-02T00:00:00Z"),
                commit("c", &["a"], "2020-01-02T00:00:00Z"),
                commit("m2", &["b", "c"], "2020-01-04T00:00:00Z"),
                commit("m1", &["b", "c"], "2020-01-03T00:00:00Z"),
                commit("m3", &["b", "c"], "2020-01-05T00:00:00Z"),
            ],
            ..Default::default()
        };
        log.conflict_probe.insert("m1".into(), "x\n<<<<<<< HEAD\ny".into());
        log.conflict_probe.insert("m2".into(), "-a\n+b\n".into());
        let scan = detect_merge_conflicts(&log);
        assert_eq!(scan.flagged, vec!["m1"]);
        assert_eq!(scan.unscanned, vec!["m3"]);
    }

    #[test]
    fn ci_service_rules() {
        let none = BTreeMap::new();
        assert_eq!(classify_ci_service(&[".travis.yml"], &none), Some(CiService::Travis));
        assert_eq!(
            classify_ci_service(&[".github/workflows/ci.yml"], &none),
            Some(CiService::GithubActions)
        );
        assert_eq!(classify_ci_service(&[], &none), None);
        assert_eq!(
            classify_ci_service(&["Jenkinsfile", ".circleci/config.yml"], &none),
            Some(CiService::Circle)
        );
        assert_eq!(
            classify_ci_service(&["appveyor.yml", ".github/workflows/a.yml", ".travis.yml"], &none),
            Some(CiService::Travis)
        );
        let api = BTreeMap::from([(CiService::Wercker, true)]);
        assert_eq!(classify_ci_service(&["README.md"], &api), Some(CiService::Wercker));
        assert_eq!(classify_ci_service(&[".github/workflows/notes.txt"], &none), None);
    }

    fn issue(id: &str, labels: &[&str], title: &str, body: &str) -> IssueRecord {
        IssueRecord {
            id: id.into(),
            created_at: t("2020-01-01T00:00:00Z"),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            title: title.into(),
            body: body.into(),
        }
    }

    #[test]
    fn bug_rules() {
        let map = BTreeMap::from([("bug".to_string(), true), ("docs".to_string(), false)]);
        let issues = vec![
            issue("1", &["bug"], "", ""),
            issue("2", &[], "crash", "quick fix for crash"),
            issue("3", &[], "improve docs", ""),
            issue("4", &["docs"], "fix typo", ""),
            issue("5", &["Bug"], "", ""),
            issue("6", &[], "DEBUGGING notes", ""),
        ];
        let bugs = classify_bugs(&issues, &map, true);
        assert_eq!(bugs, ["1", "2", "5", "6"].iter().map(|s| s.to_string()).collect());
        let strict = classify_bugs(&issues, &map, false);
        assert_eq!(strict, ["1", "5"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn windows_and_errors() {
        let created = t("2020-01-01T00:00:00Z");
        let mut log = RepoEventLog {
            repo_created_at: created,
            commits: vec![commit("z", &[], "2020-12-30T00:00:00Z")],
            ..Default::default()
        };
        log.pull_requests.push(PullRequestRecord {
            id: "p1".into(),
            opened_at: t("2020-01-05T00:00:00Z"),
            comments: 2,
            review_comments: 1,
        });
        log.pull_requests.push(PullRequestRecord {
            id: "p2".into(),
            opened_at: t("2020-01-06T00:00:00Z"),
            comments: 1,
            review_comments: 0,
        });
        let rows = compute_release_metrics(&log, &BTreeSet::new(), &[], true, created).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].Age, 30);
        assert_eq!(rows[0].Communication, 2.0);
        assert_eq!(rows[1].Communication, 0.0);
        assert_eq!(rows[1].CommitFrequency, 0);
        assert_eq!(rows[11].Age, 360);
        assert!(matches!(
            compute_release_metrics(&log, &BTreeSet::new(), &[], true, t("2019-12-31T00:00:00Z")),
            Err(MetricsError::StartBeforeCreation { .. })
        ));
        assert!(matches!(
            compute_release_metrics(&log, &BTreeSet::new(), &[], true, t("2020-03-01T00:00:00Z")),
            Err(MetricsError::ShortHistory { .. })
        ));
    }

    #[test]
    fn jsonl_bundle() {
        let text = r#"{"type":"meta","project":"p","repo_created_at":"2020-01-01T00:00:00Z","ci_adopted_at":"2020-02-01T00:00:00Z"}
{"type":"commit","sha":"a","parents":[],"timestamp":"2020-02-02T00:00:00Z","pull_request":"1","files":[{"path":"src/x.rs","lines_added":3,"lines_removed":1,"is_test":false}]}
{"type":"commit","sha":"b","parents":["a","ghost"],"timestamp":"2020-02-03T00:00:00Z"}
{"type":"pull_request","id":"1","opened_at":"2020-02-02T00:00:00Z","comments":1,"review_comments":2}
{"type":"issue","id":"7","created_at":"2020-02-02T00:00:00Z","labels":["bug"],"title":"t","body":""}
{"type":"conflict_probe","sha":"b","text":"<<<<<<< HEAD"}
"#;
        let log = RepoEventLog::from_jsonl_str(text).unwrap();
        assert_eq!(log.project, "p");
        assert_eq!(log.commits.len(), 2);
        assert_eq!(log.dangling_parents, vec!["ghost"]);
        assert_eq!(detect_merge_conflicts(&log).flagged, vec!["b"]);
        assert!(matches!(
            RepoEventLog::from_jsonl_str("{\"type\":\"commit\"}"),
            Err(MetricsError::Parse { line: 1, .. })
        ));
        assert!(matches!(RepoEventLog::from_jsonl_str(""), Err(MetricsError::MissingMeta)));
    }

    #[test]
    fn dataset_shape() {
        let r = |i| ReleaseMetrics {
            release_index: i,
            CI: 1,
            Age: 30 * i as i64,
            CommitFrequency: 1,
            Communication: 0.5,
            MergeConflicts: 0,
            TestsVolume: 0.25,
            BugReport: 2,
        };
        let p = |name: &str| ProjectReleases {
            project: name.into(),
            releases: (1..=12).map(r).collect(),
        };
        let t = build_dataset(&[p("a"), p("b")]).unwrap();
        assert_eq!(t.row_count(), 24);
        assert_eq!(t.names().len(), 7);
        assert!(matches!(build_dataset(&[p("a"), p("a")]), Err(MetricsError::DuplicateRelease { .. })));
        assert!(matches!(build_dataset(&[]), Err(MetricsError::Empty)));
    }
}
