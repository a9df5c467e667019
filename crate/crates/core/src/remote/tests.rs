use std::net::TcpListener;
use std::time::{Duration, Instant};

use super::*;
use crate::costmodel::activation_cycles;

const T: Duration = Duration::from_secs(10);

fn setup(devices: u64) -> (ServerHandle, Vec<DeviceSpec>) {
    setup_with(devices, |_| {})
}

fn setup_with(devices: u64, tweak: impl FnOnce(&mut ServerOptions)) -> (ServerHandle, Vec<DeviceSpec>) {
    let cfg = ProtocolConfig::coma2();
    let mut reg = Registry::in_memory();
    let specs = (0..devices).map(|i| enroll_device(&cfg, &mut reg, &format!("dev-{i}"), 100 + i).unwrap()).collect();
    let mut opts = ServerOptions::new(cfg, 1);
    tweak(&mut opts);
    let server = AuthServer::new(reg, opts);
    let handle = server.spawn(TcpListener::bind("127.0.0.1:0").unwrap()).unwrap();
    (handle, specs)
}

#[test]
fn loopback_activation() {
    let (h, specs) = setup(1);
    let cfg = ProtocolConfig::coma2();
    let mut dev = specs[0].build(&cfg).unwrap();
    let start = Instant::now();
    let r = device_run(&mut dev, "dev-0", h.addr(), T).unwrap();
    assert!(start.elapsed() < Duration::from_secs(1));
    assert!(r.success);
    assert_eq!(r.cycles_spent, activation_cycles(&cfg.cost, 128));
    assert!(dev.circuit().self_check());
    assert_eq!(h.server().registry().read().unwrap().get("dev-0").unwrap().activation_count, 1);
}

#[test]
fn unknown_device_rejected() {
    let (h, specs) = setup(1);
    let mut dev = specs[0].build(&ProtocolConfig::coma2()).unwrap();
    let err = device_run(&mut dev, "nobody", h.addr(), T).unwrap_err();
    assert!(matches!(err, RemoteError::Protocol(ProtocolError::UnknownDevice(_))), "{err}");
    assert_eq!(h.server().registry().read().unwrap().get("dev-0").unwrap().activation_count, 0);
}

#[test]
fn wrong_puf_fails_authentication() {
    let (h, _) = setup(2);
    let cfg = ProtocolConfig::coma2();
    let mut imposter = DeviceSpec { device_id: "dev-0".into(), seed: 101, challenge: "0".into() }.build(&cfg).unwrap();
    let err = device_run(&mut imposter, "dev-0", h.addr(), T).unwrap_err();
    assert!(matches!(err, RemoteError::Protocol(ProtocolError::AuthFailure(_))), "{err}");
    assert!(!imposter.circuit().key_loaded());
}

#[test]
fn replayed_transcript_fails() {
    let (h, specs) = setup(1);
    let mut dev = specs[0].build(&ProtocolConfig::coma2()).unwrap();
    let mut link = Link::new();
    device_run_recorded(&mut dev, "dev-0", h.addr(), T, &mut link).unwrap();
    let sent: Vec<Frame> = link
        .transcript
        .iter()
        .filter(|e| matches!(e, crate::protocol::TranscriptEntry::Frame { dir: Dir::ToTrusted, .. }))
        .map(|e| e.to_frame().unwrap())
        .collect();
    let mut s = TcpStream::connect(h.addr()).unwrap();
    s.set_read_timeout(Some(T)).unwrap();
    sent[0].write_to(&mut s).unwrap();
    let challenge = Frame::read_from(&mut s).unwrap();
    assert_eq!(challenge.ftype, FrameType::Challenge);
    sent[1].write_to(&mut s).unwrap();
    let reply = Frame::read_from(&mut s).unwrap();
    assert_eq!(reply.ftype, FrameType::Error);
    assert_eq!(reply.payload[0], ErrorCode::AuthFailure as u8);
}

#[test]
fn server_dropping_mid_stream_leaves_device_locked() {
    let (h, specs) = setup_with(1, |o| o.drop_after_frames = Some(2));
    let mut dev = specs[0].build(&ProtocolConfig::coma2()).unwrap();
    let err = device_run(&mut dev, "dev-0", h.addr(), T).unwrap_err();
    assert!(matches!(err, RemoteError::Network(_)), "{err}");
    assert!(!dev.circuit().key_loaded());
}

#[test]
fn concurrent_devices_get_distinct_trns() {
    let (h, specs) = setup(10);
    let addr = h.addr();
    let threads: Vec<_> = specs
        .into_iter()
        .map(|spec| {
            std::thread::spawn(move || {
                let mut dev = spec.build(&ProtocolConfig::coma2()).unwrap();
                device_run(&mut dev, &spec.device_id, addr, T).map(|r| r.success)
            })
        })
        .collect();
    for t in threads {
        assert!(t.join().unwrap().unwrap());
    }
    let deadline = Instant::now() + T;
    while h.server().log().len() < 10 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    let log = h.server().log();
    let trns: std::collections::HashSet<_> = log.iter().filter_map(|l| l.trn.clone()).collect();
    assert_eq!(log.len(), 10);
    assert_eq!(trns.len(), 10);
}

#[test]
fn malformed_frame_gets_error() {
    use std::io::Write;
    let (h, _) = setup(0);
    let mut s = TcpStream::connect(h.addr()).unwrap();
    s.set_read_timeout(Some(T)).unwrap();
    s.write_all(&[0, 0, 0, 3, 42, 0, 0]).unwrap();
    let reply = Frame::read_from(&mut s).unwrap();
    assert_eq!((reply.ftype, reply.payload[0]), (FrameType::Error, ErrorCode::Malformed as u8));
}

