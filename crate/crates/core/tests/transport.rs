use std::io::Cursor;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use telementor::codec::{encode_frame, split_ifp, Quality};
use telementor::geometry::CameraIntrinsics;
use telementor::stereo::{gen_synthetic_scene, peg_scene};
use telementor::transport::*;

fn hex(s: &str) -> Vec<u8> {
    let s: String = s.split_whitespace().collect();
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 0.005, 320.0, 256.0, 640, 512).unwrap()
}

#[test]
fn golden_feedback_pointer_at_origin() {
    let fb = FeedbackMessage {
        m: 1,
        i: 0,
        based_on_seq: 7,
        ..Default::default()
    };
    let msg = WireMessage::new(MsgType::Feedback, 3, 0x0102_0304_0506_0708, fb.encode());
    let expected = hex("53524d31 03 0300000000000000 0807060504030201 24000000
         01 00 0000 00000000 00000000 00000000 00000000 00000000 00000000
         0700000000000000");
    let mut out = Vec::new();
    assert_eq!(write_message(&msg, &mut out).unwrap(), 61);
    assert_eq!(out, expected);
    let back = read_message(&expected[..], DEFAULT_MAX_PAYLOAD).unwrap();
    assert_eq!(FeedbackMessage::decode(&back.payload).unwrap(), fb);
}

#[test]
fn golden_feedback_needle() {
    let fb = FeedbackMessage {
        m: 1,
        i: 1,
        stroke_id: 0x0102,
        yaw: 1.0,
        pitch: -0.5,
        roll: 0.25,
        x: 0.01,
        y: -0.02,
        z: 0.1,
        based_on_seq: 0x1122,
    };
    let expected =
        hex("01 01 0201 0000803f 000000bf 0000803e 0ad7233c 0ad7a3bc cdcccc3d 2211000000000000");
    assert_eq!(fb.encode(), expected);
}

#[test]
fn golden_bye() {
    let msg = WireMessage::new(MsgType::Bye, 42, 1_000_000, vec![]);
    assert_eq!(
        msg.to_bytes(),
        hex("53524d31 04 2a00000000000000 40420f0000000000 00000000")
    );
}

#[test]
fn golden_hello() {
    let hello = HelloPayload::new(1, Role::Operation, &intrinsics(), 1.0);
    let msg = WireMessage::new(MsgType::Hello, 0, 5, hello.encode());
    let expected = hex("53524d31 01 0000000000000000 0500000000000000 1b000000
         0100 00 8002 0002 0000fa43 0ad7a33b 0000a043 00008043 0000803f");
    assert_eq!(msg.to_bytes(), expected);
}

#[test]
fn golden_frame() {
    let frame = FramePayload {
        capture_timestamp_us: 0x10,
        disparity_stage_us: 0x20,
        encode_stage_us: 0x30,
        rgb: vec![0xaa, 0xbb],
        ifp: vec![0xcc],
    };
    let msg = WireMessage::new(MsgType::Frame, 1, 2, frame.encode());
    let expected = hex("53524d31 02 0100000000000000 0200000000000000 1b000000
         1000000000000000 20000000 30000000 02000000 aabb 01000000 cc");
    assert_eq!(msg.to_bytes(), expected);
}

fn msg_type() -> impl Strategy<Value = MsgType> {
    prop_oneof![
        Just(MsgType::Hello),
        Just(MsgType::Frame),
        Just(MsgType::Feedback),
        Just(MsgType::Bye)
    ]
}

proptest! {
    #[test]
    fn wire_round_trip_is_byte_exact(
        t in msg_type(),
        seq in any::<u64>(),
        ts in any::<u64>(),
        payload in proptest::collection::vec(any::<u8>(), 0..2048),
    ) {
        let msg = WireMessage::new(t, seq, ts, payload);
        let bytes = msg.to_bytes();
        prop_assert_eq!(bytes.len(), 25 + msg.payload.len());
        let back = read_message(&bytes[..], DEFAULT_MAX_PAYLOAD).unwrap();
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn feedback_round_trip(
        m in 0u8..2, i in 0u8..3, stroke in any::<u16>(),
        pose in proptest::array::uniform6(-10.0f32..10.0),
        based in any::<u64>(),
    ) {
        let fb = if m == 0 {
            FeedbackMessage::clear(based)
        } else {
            FeedbackMessage {
                m, i, stroke_id: stroke,
                yaw: pose[0], pitch: pose[1], roll: pose[2], x: pose[3], y: pose[4], z: pose[5],
                based_on_seq: based,
            }
        };
        let back = FeedbackMessage::decode(&fb.encode()).unwrap();
        prop_assert_eq!(back, fb);
        prop_assert_eq!(back.encode(), fb.encode());
    }
}

#[test]
fn random_bytes_never_crash_the_reader() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut buf = Vec::with_capacity(128);
    let mut valid = 0usize;
    for case in 0..1_000_000u32 {
        buf.clear();
        let len = rng.random_range(0..96);
        buf.extend((0..len).map(|_| rng.random::<u8>()));
        // Most cases get a real magic so the parser goes past the first check.
        if case % 4 != 0 && buf.len() >= 5 {
            buf[..4].copy_from_slice(&MAGIC);
            buf[4] = rng.random_range(0..6);
            if case % 2 == 0 && buf.len() >= 25 {
                let plen = rng.random_range(0..80u32);
                buf[21..25].copy_from_slice(&plen.to_le_bytes());
            }
        }
        if let Ok(msg) = read_message(&buf[..], 64) {
            valid += 1;
            assert_eq!(msg.to_bytes(), buf[..msg.encoded_len()]);
            let _ = FeedbackMessage::decode(&msg.payload);
            let _ = FramePayload::decode(&msg.payload);
            let _ = HelloPayload::decode(&msg.payload);
        }
    }
    assert!(valid > 0);
}

#[test]
fn reference_frame_parses_into_frame_payload() {
    let intr = intrinsics();
    let pair = gen_synthetic_scene(&peg_scene(intr, 7)).unwrap();
    let ifp = split_ifp(&pair.disparity).unwrap();
    let encoded = encode_frame(&pair.left, &ifp, Quality::Lossy(90)).unwrap();
    let frame = FramePayload {
        capture_timestamp_us: 1,
        disparity_stage_us: 2,
        encode_stage_us: 3,
        rgb: encoded.rgb_payload.clone(),
        ifp: encoded.ifp_payload.clone(),
    };
    let wire = WireMessage::new(MsgType::Frame, 1, 4, frame.encode()).to_bytes();
    let msg = read_message(&wire[..], DEFAULT_MAX_PAYLOAD).unwrap();
    let back = FramePayload::decode(&msg.payload).unwrap();
    assert_eq!(back.rgb.len(), encoded.rgb_payload.len());
    assert_eq!(back.ifp.len(), encoded.ifp_payload.len());
    assert_eq!(msg.payload.len(), 24 + encoded.total_bytes());
    assert_eq!(back, frame);
}

fn pair() -> (TcpStream, TcpStream) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let client = thread::spawn(move || TcpStream::connect(addr).unwrap());
    let (server, _) = listener.accept().unwrap();
    (server, client.join().unwrap())
}

fn handshake_both(
    op_cfg: SessionConfig,
    mentor_cfg: SessionConfig,
) -> (
    Result<Session, TransportError>,
    Result<Session, TransportError>,
) {
    let (op_stream, mentor_stream) = pair();
    let mentor =
        thread::spawn(move || session_handshake(mentor_stream, Role::Mentor, None, &mentor_cfg));
    let op = session_handshake(op_stream, Role::Operation, Some(&intrinsics()), &op_cfg);
    (op, mentor.join().unwrap())
}

#[test]
fn handshake_matched_versions() {
    let (op, mentor) = handshake_both(SessionConfig::default(), SessionConfig::default());
    let (op, mentor) = (op.unwrap(), mentor.unwrap());
    assert_eq!(mentor.intrinsics().f, 500.0);
    assert!((mentor.intrinsics().b - 0.005).abs() < 1e-9);
    assert_eq!(mentor.intrinsics().width, 640);
    assert!(op.handshake_rtt().is_some());
    assert_eq!(op.peer_hello().role, Role::Mentor);
}

#[test]
fn handshake_version_mismatch_fails_on_both_sides() {
    let v2 = SessionConfig {
        version: 2,
        ..SessionConfig::default()
    };
    let (op, mentor) = handshake_both(SessionConfig::default(), v2);
    assert!(matches!(
        op,
        Err(TransportError::VersionMismatch { local: 1, peer: 2 })
    ));
    assert!(matches!(
        mentor,
        Err(TransportError::VersionMismatch { local: 2, peer: 1 })
    ));
}

#[test]
fn handshake_two_operations_collide() {
    let (a, b) = pair();
    let other = thread::spawn(move || {
        session_handshake(
            b,
            Role::Operation,
            Some(&intrinsics()),
            &SessionConfig::default(),
        )
    });
    let mine = session_handshake(
        a,
        Role::Operation,
        Some(&intrinsics()),
        &SessionConfig::default(),
    );
    assert!(matches!(
        mine,
        Err(TransportError::RoleCollision(Role::Operation))
    ));
    assert!(matches!(
        other.join().unwrap(),
        Err(TransportError::RoleCollision(_))
    ));
}

#[test]
fn handshake_times_out_without_hello() {
    assert_eq!(
        SessionConfig::default().handshake_timeout,
        Duration::from_secs(5)
    );
    let (_silent, mentor_stream) = pair();
    let cfg = SessionConfig {
        handshake_timeout: Duration::from_millis(150),
        ..SessionConfig::default()
    };
    let started = std::time::Instant::now();
    let result = session_handshake(mentor_stream, Role::Mentor, None, &cfg);
    assert!(matches!(result, Err(TransportError::Timeout)), "{result:?}");
    assert!(started.elapsed() >= Duration::from_millis(150));
}

#[test]
fn session_streams_frames_and_feedback() {
    let (op, mentor) = handshake_both(SessionConfig::default(), SessionConfig::default());
    let (mut op_tx, mut op_rx) = op.unwrap().split().unwrap();
    let (mut m_tx, mut m_rx) = mentor.unwrap().split().unwrap();

    let frame = FramePayload {
        capture_timestamp_us: 9,
        disparity_stage_us: 1,
        encode_stage_us: 2,
        rgb: vec![1; 100],
        ifp: vec![2; 50],
    };
    assert_eq!(op_tx.send_frame(&frame).unwrap(), 1);
    assert_eq!(op_tx.send_frame(&frame).unwrap(), 2);
    for expected_seq in [1, 2] {
        match m_rx.recv().unwrap() {
            Incoming::Frame(env) => {
                assert_eq!(env.seq, expected_seq);
                assert_eq!(env.payload, frame);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    let fb = FeedbackMessage::pointer(telementor::geometry::Point3::new(0.02, 0.02, 0.1), 2);
    m_tx.send_feedback(&fb).unwrap();
    match op_rx.recv().unwrap() {
        Incoming::Feedback { message, seq, .. } => {
            assert_eq!(seq, 1);
            assert_eq!(message, fb);
        }
        other => panic!("unexpected {other:?}"),
    }
    m_tx.send_bye().unwrap();
    assert!(matches!(op_rx.recv().unwrap(), Incoming::Bye));
    op_tx.shutdown();
    assert!(matches!(m_rx.recv(), Err(TransportError::Closed)));
}

#[test]
fn stale_frames_are_dropped_and_counted() {
    let (mut raw, mentor_stream) = pair();
    let mentor = thread::spawn(move || {
        let s = session_handshake(mentor_stream, Role::Mentor, None, &SessionConfig::default())
            .unwrap();
        let (_tx, mut rx) = s.split().unwrap();
        let mut seqs = Vec::new();
        loop {
            match rx.recv().unwrap() {
                Incoming::Frame(env) => seqs.push(env.seq),
                Incoming::Bye => break,
                _ => {}
            }
        }
        (seqs, rx.dropped_frames())
    });
    let hello = HelloPayload::new(1, Role::Operation, &intrinsics(), 1.0);
    write_message(
        &WireMessage::new(MsgType::Hello, 0, 0, hello.encode()),
        &mut raw,
    )
    .unwrap();
    read_message(&mut raw, DEFAULT_MAX_PAYLOAD).unwrap();
    let payload = FramePayload {
        capture_timestamp_us: 0,
        disparity_stage_us: 0,
        encode_stage_us: 0,
        rgb: vec![],
        ifp: vec![],
    }
    .encode();
    for seq in [1u64, 2, 2, 1, 5, 3, 6] {
        write_message(
            &WireMessage::new(MsgType::Frame, seq, 0, payload.clone()),
            &mut raw,
        )
        .unwrap();
    }
    write_message(&WireMessage::new(MsgType::Bye, 7, 0, vec![]), &mut raw).unwrap();
    let (seqs, dropped) = mentor.join().unwrap();
    assert_eq!(seqs, vec![1, 2, 5, 6]);
    assert_eq!(dropped, 3);
}

#[test]
fn malformed_payload_keeps_stream_in_sync() {
    let mut bytes = WireMessage::new(MsgType::Feedback, 1, 0, vec![9; 36]).to_bytes();
    bytes.extend(WireMessage::new(MsgType::Bye, 2, 0, vec![]).to_bytes());
    let mut cur = Cursor::new(bytes);
    let first = read_message(&mut cur, DEFAULT_MAX_PAYLOAD).unwrap();
    assert!(FeedbackMessage::decode(&first.payload).is_err());
    assert_eq!(
        read_message(&mut cur, DEFAULT_MAX_PAYLOAD)
            .unwrap()
            .msg_type,
        MsgType::Bye
    );
}
