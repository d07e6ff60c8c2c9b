//! Start the service in-process, train a session over HTTP and steer the
//! cursor to a point over the websocket stream.

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(neurotrack::service::serve(listener));

    let http = reqwest::Client::new();
    let created: Value = http
        .post(format!("http://{addr}/sessions"))
        .json(&json!({ "step_interval_ms": 100 }))
        .send()
        .await?
        .json()
        .await?;
    let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
    let summary: Value = http
        .post(format!("http://{addr}/sessions/{id}/train"))
        .send()
        .await?
        .json()
        .await?;
    println!("trained: eigenvalues {}", summary["eigenvalues"]);

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream")).await?;
    let point = json!({ "x": -150.0, "y": 180.0 });
    ws.send(Message::Text(json!({ "type": "gaze", "x": point["x"], "y": point["y"] }).to_string().into()))
        .await?;
    ws.send(Message::Text(
        json!({ "type": "command", "name": "set_target", "x": point["x"], "y": point["y"] }).to_string().into(),
    ))
    .await?;
    http.post(format!("http://{addr}/sessions/{id}/tasks"))
        .json(&json!({ "task": "tracking" }))
        .send()
        .await?;

    while let Some(msg) = ws.next().await {
        let Message::Text(text) = msg? else { continue };
        let v: Value = serde_json::from_str(&text)?;
        match v["type"].as_str() {
            Some("frame") if v["frame_index"] == 59 => println!("step {:>2}: cursor {}", v["step_index"], v["cursor"]),
            Some("trial_event") if v["event"] == "hit" => {
                println!("hit after {:.2} s", v["time_s"].as_f64().unwrap_or(f64::NAN));
                break;
            }
            _ => {}
        }
    }
    Ok(())
}
