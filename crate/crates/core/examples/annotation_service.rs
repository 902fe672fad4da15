//! The side-by-side annotation service on an ephemeral port, driven by a
//! plain HTTP client acting as two raters.
//!
//! ```text
//! cargo run --example annotation_service
//! ```
//!
//! `finegrain serve-annotation --plan plan.json --log log.jsonl` runs the
//! same service from the command line.

use finegrain::sxs::{
    build_annotation_plan, ingest_sxs, read_sxs_log, report_to_string, select_from_scores, AnnotationService,
    AssignmentView, Choice, DisagreementMode, Progress, ScoredItem,
};
use finegrain::Error;

fn scored(prompt: usize, img: usize, a: f64, b: f64) -> ScoredItem {
    ScoredItem {
        example_id: format!("e{prompt}{img}"),
        prompt_id: format!("p{prompt}"),
        score_a: a,
        score_b: b,
    }
}

fn http(e: reqwest::Error) -> Error {
    Error::io("http client", std::io::Error::other(e))
}

pub fn run_example() -> finegrain::Result<()> {
    let items = vec![
        scored(0, 0, 0.9, 0.2),
        scored(0, 1, 0.1, 0.8),
        scored(1, 0, 0.6, 0.5),
        scored(1, 1, 0.4, 0.7),
    ];
    let pairs = select_from_scores(&items, 2, DisagreementMode::DualArgmax)?.pairs;
    let plan = build_annotation_plan(&pairs, &["aggregate".to_string()], 2, 5)?;
    let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let log = dir.path().join("sxs.jsonl");
    let service = AnnotationService::open(plan.clone(), &log)?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    let online = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(|e| Error::io("bind", e))?;
        let base = format!("http://{}", listener.local_addr().map_err(|e| Error::io("bind", e))?);
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(service.clone().serve(listener, None, async {
            let _ = stopped.await;
        }));

        let client = reqwest::Client::new();
        for rater in ["ana", "ben"] {
            loop {
                let resp = client
                    .get(format!("{base}/api/assignment?rater={rater}"))
                    .send()
                    .await
                    .map_err(http)?;
                if resp.status() == reqwest::StatusCode::NO_CONTENT {
                    break;
                }
                let view: AssignmentView = resp.json().await.map_err(http)?;
                let choice = if rater == "ana" { Choice::Left } else { Choice::Unsure };
                let body = serde_json::json!({
                    "pair_id": view.pair_id, "task": view.task, "rater_id": rater,
                    "choice": choice, "response_ms": 12_500,
                });
                let status = client
                    .post(format!("{base}/api/response"))
                    .json(&body)
                    .send()
                    .await
                    .map_err(http)?
                    .status();
                println!("{rater} answered {} -> {status}", view.assignment_id);

                // A retried submission is rejected rather than double counted.
                let retry = client
                    .post(format!("{base}/api/response"))
                    .json(&body)
                    .send()
                    .await
                    .map_err(http)?
                    .status();
                println!("{rater} retried {} -> {retry}", view.assignment_id);
            }
        }
        let progress: Progress = client
            .get(format!("{base}/api/progress"))
            .send()
            .await
            .map_err(http)?
            .json()
            .await
            .map_err(http)?;
        println!("progress: {}/{} complete", progress.completed, progress.total);
        let report = client
            .get(format!("{base}/api/report"))
            .send()
            .await
            .map_err(http)?
            .text()
            .await
            .map_err(http)?;
        let _ = stop.send(());
        server.await.map_err(|e| Error::io("server task", std::io::Error::other(e)))??;
        Ok::<_, Error>(report)
    })?;

    let offline = report_to_string(&ingest_sxs(&read_sxs_log(&log)?, &plan)?)?;
    print!("{online}");
    println!("online report equals offline ingest: {}", online == offline);
    Ok(())
}

fn main() -> finegrain::Result<()> {
    run_example()
}
