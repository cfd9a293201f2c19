use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use telementor::codec::{encode_frame, split_ifp, Quality};
use telementor::geometry::CameraIntrinsics;
use telementor::mentor::{decode_gateway_frame, run_mentor_client, MentorConfig, RetryPolicy};
use telementor::stereo::{gen_synthetic_scene, peg_scene};
use telementor::transport::{
    session_handshake, FeedbackMessage, FramePayload, Incoming, Role, SessionConfig,
};
use tungstenite::{Message, WebSocket};

fn free_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

/// Streams the 640x512 reference frame at about 30 Hz until `done`, and
/// forwards every feedback message it receives.
fn operation_streamer(
    listener: TcpListener,
    done: Arc<AtomicBool>,
    feedback: mpsc::Sender<FeedbackMessage>,
) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let intr = CameraIntrinsics::centered(640, 512, 500.0, 0.005).unwrap();
        let pair = gen_synthetic_scene(&peg_scene(intr, 7)).unwrap();
        let enc = encode_frame(
            &pair.left,
            &split_ifp(&pair.disparity).unwrap(),
            Quality::Lossy(90),
        )
        .unwrap();
        let (stream, _) = listener.accept().unwrap();
        let session = session_handshake(
            stream,
            Role::Operation,
            Some(&intr),
            &SessionConfig::default(),
        )
        .unwrap();
        let clock = session.clock();
        let (mut tx, mut rx) = session.split().unwrap();
        let reader = thread::spawn(move || {
            while let Ok(msg) = rx.recv() {
                match msg {
                    Incoming::Feedback { message, .. } => {
                        let _ = feedback.send(message);
                    }
                    Incoming::Bye => break,
                    _ => {}
                }
            }
        });
        let started = Instant::now();
        while !done.load(Ordering::SeqCst) && started.elapsed() < Duration::from_secs(20) {
            let payload = FramePayload {
                capture_timestamp_us: clock.now_us(),
                disparity_stage_us: 0,
                encode_stage_us: 0,
                rgb: enc.rgb_payload.clone(),
                ifp: enc.ifp_payload.clone(),
            };
            tx.send_frame(&payload).unwrap();
            thread::sleep(Duration::from_millis(33));
        }
        tx.send_bye().unwrap();
        let _ = reader.join();
    })
}

fn connect_console(addr: &str) -> WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>> {
    for _ in 0..200 {
        if let Ok((ws, _)) = tungstenite::connect(format!("ws://{addr}")) {
            return ws;
        }
        thread::sleep(Duration::from_millis(20));
    }
    panic!("gateway did not come up");
}

/// Reads until the next text reply, counting frame pushes on the way.
fn next_reply(
    ws: &mut WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>,
    pushes: &mut u32,
) -> serde_json::Value {
    loop {
        match ws.read().unwrap() {
            Message::Binary(_) => *pushes += 1,
            Message::Text(t) => {
                let v: serde_json::Value = serde_json::from_str(t.as_str()).unwrap();
                if v.get("type").is_none() {
                    return v;
                }
            }
            _ => {}
        }
    }
}

#[test]
fn console_feedback_reaches_the_operation_side_unchanged() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let op_addr = listener.local_addr().unwrap().to_string();
    let done = Arc::new(AtomicBool::new(false));
    let (fb_tx, fb_rx) = mpsc::channel();
    let streamer = operation_streamer(listener, Arc::clone(&done), fb_tx);

    let gw_addr = free_port();
    let config = MentorConfig {
        gateway: Some(gw_addr.clone()),
        retry: RetryPolicy {
            attempts: 50,
            initial_backoff: Duration::from_millis(10),
            max_backoff: Duration::from_millis(50),
        },
        ..MentorConfig::new(op_addr)
    };
    let mentor = thread::spawn(move || run_mentor_client(config, None).unwrap());

    let mut ws = connect_console(&gw_addr);
    // Calibration arrives first, then frames.
    let meta = loop {
        if let Message::Text(t) = ws.read().unwrap() {
            break serde_json::from_str::<serde_json::Value>(t.as_str()).unwrap();
        }
    };
    assert_eq!(meta["type"], "meta");
    assert_eq!(
        (meta["width"].as_u64(), meta["height"].as_u64()),
        (Some(640), Some(512))
    );
    let first = loop {
        if let Message::Binary(b) = ws.read().unwrap() {
            break decode_gateway_frame(&b).unwrap();
        }
    };
    assert_eq!((first.width, first.height), (640, 512));
    assert!(first.disparity.iter().any(|&d| d != 0));
    assert_eq!(&first.rgb[..2], &[0xFF, 0xD8]);

    let mut pushes = 0u32;
    let pointer =
        r#"{"m":1,"i":0,"stroke_id":0,"yaw":0,"pitch":0,"roll":0,"x":0.01,"y":-0.02,"z":0.1}"#;
    ws.send(Message::text(pointer)).unwrap();
    let reply = next_reply(&mut ws, &mut pushes);
    assert_eq!(reply["ok"], true, "{reply}");
    let based_on = reply["based_on_seq"].as_u64().unwrap();

    let missing = r#"{"m":1,"i":0,"yaw":0,"pitch":0,"roll":0,"x":0,"y":0,"z":0.1}"#;
    ws.send(Message::text(missing)).unwrap();
    let reply = next_reply(&mut ws, &mut pushes);
    assert_eq!(reply["ok"], false);
    assert!(
        reply["error"].as_str().unwrap().contains("stroke_id"),
        "{reply}"
    );

    // Still connected: a needle document goes through after the rejection.
    let needle =
        r#"{"m":1,"i":1,"stroke_id":0,"yaw":0.5,"pitch":-0.25,"roll":1.0,"x":0,"y":0,"z":0.09}"#;
    ws.send(Message::text(needle)).unwrap();
    assert_eq!(next_reply(&mut ws, &mut pushes)["ok"], true);

    let got = fb_rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!(
        got,
        FeedbackMessage {
            m: 1,
            i: 0,
            stroke_id: 0,
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
            x: 0.01,
            y: -0.02,
            z: 0.1,
            based_on_seq: based_on
        }
    );
    let got = fb_rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!(
        (got.i, got.yaw, got.pitch, got.roll, got.z),
        (1, 0.5, -0.25, 1.0, 0.09)
    );
    assert!(
        fb_rx.try_recv().is_err(),
        "rejected document must not be forwarded"
    );

    // Push rate over a steady window.
    let start = Instant::now();
    let mut window = 0u32;
    while start.elapsed() < Duration::from_secs(2) {
        if let Message::Binary(_) = ws.read().unwrap() {
            window += 1;
        }
    }
    let rate = window as f64 / start.elapsed().as_secs_f64();
    println!("gateway push rate at 640x512: {rate:.1} Hz");
    assert!(rate >= 10.0, "{rate}");

    done.store(true, Ordering::SeqCst);
    let _ = ws.close(None);
    streamer.join().unwrap();
    let summary = mentor.join().unwrap();
    assert!(summary.gateway_pushed >= window as u64);
    assert_eq!(summary.feedback_sent, 2);
}
