use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use telementor::codec::{decode_disparity, encode_frame, merge_ifp, split_ifp, Quality};
use telementor::geometry::cloud_from_frame;
use telementor::mentor::ViewState;
use telementor::stereo::{block_match_disparity, BlockMatchParams};
use telementor::transport::{
    read_message, FeedbackMessage, FramePayload, MsgType, WireMessage, DEFAULT_MAX_PAYLOAD,
};
use telementor_bench::fixture;

const SIZES: [(u32, u32); 3] = [(320, 240), (640, 512), (1280, 720)];

fn codec(c: &mut Criterion) {
    let mut g = c.benchmark_group("codec");
    g.sample_size(20);
    for (w, h) in SIZES {
        let f = fixture(w, h);
        let id = format!("{w}x{h}");
        g.throughput(Throughput::Elements(u64::from(w * h)));
        g.bench_function(BenchmarkId::new("split_ifp", &id), |b| {
            b.iter(|| split_ifp(black_box(&f.pair.disparity)))
        });
        g.bench_function(BenchmarkId::new("merge_ifp", &id), |b| {
            b.iter(|| merge_ifp(black_box(&f.ifp)))
        });
        g.bench_function(BenchmarkId::new("encode_q90", &id), |b| {
            b.iter(|| encode_frame(black_box(&f.pair.left), &f.ifp, Quality::Lossy(90)))
        });
        g.bench_function(BenchmarkId::new("decode_q90", &id), |b| {
            b.iter(|| decode_disparity(black_box(&f.lossy)))
        });
        g.bench_function(BenchmarkId::new("decode_lossless", &id), |b| {
            b.iter(|| decode_disparity(black_box(&f.lossless)))
        });
    }
    g.finish();
}

fn stereo(c: &mut Criterion) {
    let mut g = c.benchmark_group("block_match");
    g.sample_size(10);
    for (w, h) in SIZES {
        let f = fixture(w, h);
        let params = BlockMatchParams::for_min_depth(&f.intrinsics, 0.08).unwrap();
        g.throughput(Throughput::Elements(u64::from(w * h)));
        g.bench_function(
            BenchmarkId::from_parameter(format!("{w}x{h}_d{}", params.max_disparity)),
            |b| b.iter(|| block_match_disparity(black_box(&f.pair.left), &f.pair.right, params)),
        );
    }
    g.finish();
}

fn cloud(c: &mut Criterion) {
    let mut g = c.benchmark_group("cloud");
    g.sample_size(20);
    for (w, h) in SIZES {
        let f = fixture(w, h);
        let cloud = cloud_from_frame(&f.intrinsics, &f.pair.disparity, &f.pair.left).unwrap();
        let view = ViewState::centered_on(&cloud).orbited(0.3, -0.2, 0.4);
        let id = format!("{w}x{h}");
        g.throughput(Throughput::Elements(cloud.len() as u64));
        g.bench_function(BenchmarkId::new("build", &id), |b| {
            b.iter(|| cloud_from_frame(&f.intrinsics, black_box(&f.pair.disparity), &f.pair.left))
        });
        g.bench_function(BenchmarkId::new("view_transform", &id), |b| {
            b.iter(|| view.transform_cloud(black_box(&cloud)))
        });
    }
    g.finish();
}

fn wire(c: &mut Criterion) {
    let mut g = c.benchmark_group("wire");
    let f = fixture(640, 512);
    let frame = FramePayload {
        capture_timestamp_us: 1,
        disparity_stage_us: 2,
        encode_stage_us: 3,
        rgb: f.lossy.rgb_payload.clone(),
        ifp: f.lossy.ifp_payload.clone(),
    };
    let frame_bytes = WireMessage::new(MsgType::Frame, 1, 1, frame.encode()).to_bytes();
    g.throughput(Throughput::Bytes(frame_bytes.len() as u64));
    g.bench_function("frame_encode", |b| {
        b.iter(|| WireMessage::new(MsgType::Frame, 1, 1, black_box(&frame).encode()).to_bytes())
    });
    g.bench_function("frame_decode", |b| {
        b.iter(|| {
            let msg = read_message(black_box(&frame_bytes[..]), DEFAULT_MAX_PAYLOAD).unwrap();
            FramePayload::decode(&msg.payload).unwrap()
        })
    });
    let fb = FeedbackMessage {
        m: 1,
        i: 1,
        yaw: 0.3,
        z: 0.1,
        based_on_seq: 9,
        ..Default::default()
    };
    let fb_bytes = WireMessage::new(MsgType::Feedback, 2, 2, fb.encode()).to_bytes();
    g.throughput(Throughput::Bytes(fb_bytes.len() as u64));
    g.bench_function("feedback_round_trip", |b| {
        b.iter(|| {
            let bytes =
                WireMessage::new(MsgType::Feedback, 2, 2, black_box(&fb).encode()).to_bytes();
            let msg = read_message(&bytes[..], DEFAULT_MAX_PAYLOAD).unwrap();
            FeedbackMessage::decode(&msg.payload).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, codec, stereo, cloud, wire);
criterion_main!(benches);
