//! Start the live service on a free port, look at the cup, intend a
//! cylindrical grip and print the broadcasts as they change.

use futures_util::{SinkExt, StreamExt};
use neuromanip::harness::serve::{ServeContext, ServeOptions, Server};
use neuromanip::harness::RunConfig;
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let scene = cfg.scene()?;
    let (u, v) = scene.camera.project(scene.object(1).expect("cup").aabb.center()).expect("visible");
    let ctx = ServeContext { scene, library: cfg.library()?, pipeline: None, cfg };
    let opts = ServeOptions { addr: "127.0.0.1:0".parse()?, ..ServeOptions::default() };
    let server = Server::bind(ctx, opts).await?;
    let addr = server.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let task = tokio::spawn(server.run(async {
        let _ = stopped.await;
    }));

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await?;
    ws.send(Message::text(format!(r#"{{"type":"gaze","x":{u},"y":{v}}}"#))).await?;
    let mut last = String::new();
    let mut sent_intent = false;
    while let Some(msg) = ws.next().await {
        let v: serde_json::Value = serde_json::from_str(msg?.to_text()?)?;
        if v["type"] != "state" {
            continue;
        }
        let state = v["controller"]["state"].as_str().unwrap_or_default().to_owned();
        if state != last {
            println!("t={:>6} ms  {state:<10} candidates {}", v["t_ms"], v["candidates"]);
            last = state.clone();
        }
        if state == "Armed" && !sent_intent {
            ws.send(Message::text(r#"{"type":"emg_intent","gesture":1}"#)).await?;
            sent_intent = true;
        }
        if state == "Holding" {
            println!("setpoints {}", v["setpoints"]);
            break;
        }
    }
    let _ = stop.send(());
    task.await??;
    Ok(())
}
