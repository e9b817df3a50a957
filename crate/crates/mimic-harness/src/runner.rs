use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use mimic_core::datasets::Manifest;
use mimic_core::seed::fnv1a64;
use serde::Serialize;

use crate::client::{build_payload, send_once, ImageResolver, SendOutcome};
use crate::{
    EndpointConfig, ErrorClass, HarnessError, RunRecord, CONFIG_FILE, RECORDS_FILE, SUMMARY_FILE,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub total: usize,
    pub requested: usize,
    pub skipped_resume: usize,
    /// Record counts by error class, including "none".
    pub by_error: BTreeMap<String, usize>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Query ids already recorded in an interrupted run. A truncated final
/// line (crash mid-append) is tolerated; corruption elsewhere is not.
fn completed_ids(path: &Path) -> Result<BTreeSet<String>, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let mut ids = BTreeSet::new();
    let last = lines.len().saturating_sub(1);
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(record) => {
                ids.insert(record.query_id);
            }
            Err(e) if idx == last => {
                eprintln!("note: dropping truncated final record line: {e}");
            }
            Err(e) => {
                return Err(HarnessError::Startup(format!(
                    "corrupt record at {}:{}: {e}",
                    path.display(),
                    idx + 1
                )));
            }
        }
    }
    Ok(ids)
}

/// Run every query of a manifest against the endpoint.
///
/// Responses are appended to `records.jsonl` as they complete, so a
/// crashed run can resume: with `resume` set, query ids that already
/// have a record are skipped. At most `max_concurrent` requests are in
/// flight at any moment. Per-query failures are recorded and the run
/// continues; only configuration problems abort.
pub fn run_eval(
    manifest: &Manifest,
    images_root: Option<&Path>,
    endpoint: &EndpointConfig,
    out_dir: &Path,
    resume: bool,
) -> Result<RunSummary, HarnessError> {
    endpoint.validate()?;
    let auth_token = match &endpoint.auth_env {
        Some(var) => Some(std::env::var(var).map_err(|_| {
            HarnessError::Startup(format!("auth environment variable '{var}' is not set"))
        })?),
        None => None,
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let records_path = out_dir.join(RECORDS_FILE);
    let done: BTreeSet<String> = if records_path.exists() {
        if !resume {
            return Err(HarnessError::Startup(format!(
                "{} already holds records; pass resume to continue it",
                records_path.display()
            )));
        }
        completed_ids(&records_path)?
    } else {
        BTreeSet::new()
    };

    let config_path = out_dir.join(CONFIG_FILE);
    let snapshot = serde_json::json!({
        "endpoint": endpoint,
        "manifest_seed": manifest.header.seed,
        "manifest_queries": manifest.queries.len(),
    });
    std::fs::write(&config_path, serde_json::to_string_pretty(&snapshot).unwrap())
        .map_err(io_err(&config_path))?;

    let jobs: Vec<usize> = manifest
        .queries
        .iter()
        .enumerate()
        .filter(|(_, q)| !done.contains(&q.query_id))
        .map(|(i, _)| i)
        .collect();
    let requested = jobs.len();
    let skipped_resume = manifest.queries.len() - requested;

    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records_path)
        .map_err(io_err(&records_path))?;
    let writer = Arc::new(Mutex::new(BufWriter::new(file)));
    let queue = Arc::new(Mutex::new(VecDeque::from(jobs)));
    let resolver = ImageResolver::new(images_root, endpoint.timeout);
    let http = reqwest::blocking::Client::builder()
        .timeout(endpoint.timeout)
        .build()
        .map_err(|e| HarnessError::Startup(format!("http client: {e}")))?;
    let by_error: Arc<Mutex<BTreeMap<String, usize>>> = Arc::new(Mutex::new(BTreeMap::new()));
    let io_failure: Arc<Mutex<Option<String>>> = Arc::new(Mutex::new(None));

    let workers = endpoint.max_concurrent.min(requested.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let queue = Arc::clone(&queue);
            let writer = Arc::clone(&writer);
            let by_error = Arc::clone(&by_error);
            let io_failure = Arc::clone(&io_failure);
            let resolver = &resolver;
            let http = &http;
            let auth_token = auth_token.as_deref();
            scope.spawn(move || loop {
                let Some(index) = queue.lock().unwrap().pop_front() else {
                    return;
                };
                let query = &manifest.queries[index];
                let record = process_query(
                    query,
                    &manifest.header.images,
                    resolver,
                    http,
                    endpoint,
                    auth_token,
                );
                *by_error
                    .lock()
                    .unwrap()
                    .entry(record.error.name().to_string())
                    .or_insert(0) += 1;
                let line = serde_json::to_string(&record).expect("record serializes");
                let mut w = writer.lock().unwrap();
                if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                    *io_failure.lock().unwrap() = Some(e.to_string());
                    queue.lock().unwrap().clear();
                    return;
                }
            });
        }
    });
    if let Some(message) = io_failure.lock().unwrap().take() {
        return Err(HarnessError::Startup(format!(
            "record append failed: {message}"
        )));
    }

    let by_error = Arc::try_unwrap(by_error)
        .expect("workers joined")
        .into_inner()
        .unwrap();
    let summary = RunSummary {
        total: manifest.queries.len(),
        requested,
        skipped_resume,
        by_error,
    };
    let summary_path = out_dir.join(SUMMARY_FILE);
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(io_err(&summary_path))?;
    Ok(summary)
}

fn process_query(
    query: &mimic_core::taskgen::QueryInstance,
    image_table: &BTreeMap<String, String>,
    resolver: &ImageResolver,
    http: &reqwest::blocking::Client,
    endpoint: &EndpointConfig,
    auth_token: Option<&str>,
) -> RunRecord {
    let started = Instant::now();
    let payload = match build_payload(query, image_table, resolver, endpoint) {
        Ok(p) => p,
        Err(reason) => {
            // Unbuildable request (missing/unreadable image).
            return RunRecord {
                query_id: query.query_id.clone(),
                digest: String::new(),
                response: reason,
                latency_ms: started.elapsed().as_millis() as u64,
                attempts: 0,
                error: ErrorClass::Malformed,
            };
        }
    };
    let digest = format!("{:016x}", fnv1a64(payload.to_string().as_bytes()));
    let mut attempts = 0;
    let mut last_error = ErrorClass::Server;
    while attempts < endpoint.retry.max_attempts {
        attempts += 1;
        match send_once(http, endpoint, auth_token, &payload) {
            SendOutcome::Ok(text) => {
                return RunRecord {
                    query_id: query.query_id.clone(),
                    digest,
                    response: text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts,
                    error: ErrorClass::None,
                };
            }
            SendOutcome::Failed(class) => {
                last_error = class;
                if !class.retryable() || attempts == endpoint.retry.max_attempts {
                    break;
                }
                let backoff = endpoint.retry.backoff_base * 2u32.pow(attempts - 1);
                std::thread::sleep(backoff);
            }
        }
    }
    RunRecord {
        query_id: query.query_id.clone(),
        digest,
        response: String::new(),
        latency_ms: started.elapsed().as_millis() as u64,
        attempts,
        error: last_error,
    }
}

/// Read every record of a run directory (the scorer's input).
pub fn read_records(out_dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let path = out_dir.join(RECORDS_FILE);
    let file = std::fs::File::open(&path).map_err(io_err(&path))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| {
            HarnessError::Startup(format!("corrupt record at {}:{}: {e}", path.display(), idx + 1))
        })?);
    }
    Ok(records)
}
