//! Runs the annotation service in-process on a free port, drives one
//! session over HTTP with a bare TCP client, then shuts down.
//!
//! The same routes are served by `differentia serve --config service.toml`.

use std::io::{Read, Write};
use std::net::TcpStream;

use differentia::campaign::{serve, AppState, ServiceConfig};

fn request(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).expect("connect");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: demo\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_owned())
        .unwrap_or(response)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("differentia-demo-{}", std::process::id()));
    let state = AppState::open(&ServiceConfig::new(&dir))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, state, async {
        let _ = stopped.await;
    }));

    let client = tokio::task::spawn_blocking(move || {
        let images = r#"[{"image_id":"photo","uri":"photo.jpg","width":640,"height":480}]"#;
        println!(
            "{}",
            request(
                addr,
                "POST",
                "/campaigns",
                &format!(r#"{{"campaign_id":"demo","images":{images}}}"#)
            )
        );
        request(addr, "POST", "/campaigns/demo/open", "");
        let started = request(
            addr,
            "POST",
            "/sessions",
            r#"{"task_id":"photo","annotator_id":"ann1"}"#,
        );
        let v: serde_json::Value = serde_json::from_str(&started).unwrap();
        let id = v["session"]["session"]["session_id"]
            .as_str()
            .unwrap()
            .to_owned();
        for answer in ["yes", "no", "yes"] {
            let reply = request(
                addr,
                "POST",
                &format!("/sessions/{id}/answer"),
                &format!(r#"{{"value":"{answer}"}}"#),
            );
            let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
            println!("{answer:>3} -> {}", v["prompt"]);
        }
        println!("{}", request(addr, "GET", "/campaigns/demo/stats", ""));
    });
    client.await?;
    let _ = stop.send(());
    server.await??;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
