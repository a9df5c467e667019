use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::costmodel::{activation_cycles, dcc_message_cycles, lcc_init_cycles, lcc_message_cycles};
use crate::puf;

fn pair(seed: u64) -> (TrustedChip, UntrustedChip) {
    provision_pair(&ProtocolConfig::coma2(), seed).unwrap()
}

#[test]
fn honest_activation_unlocks() {
    let (mut t, mut u) = pair(1);
    assert!(!u.circuit().self_check());
    let r = activate(&mut t, &mut u).unwrap();
    assert!(r.success);
    assert!(u.circuit().self_check());
    assert_eq!(t.activations(), 1);
}

#[test]
fn unlocked_circuit_matches_reference() {
    let cfg = ProtocolConfig::coma2();
    let (reference, ok) = ObfuscatedCircuit::default_payload(7);
    let (mut t, mut u) = provision_pair(&cfg, 7).unwrap();
    activate(&mut t, &mut u).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let x = rng.gen::<u64>() & 0xffff_ffff;
        assert_eq!(u.circuit().eval(x), Some(reference.eval_with(&ok, x)));
    }
}

#[test]
fn activation_cycles_match_closed_form() {
    for cfg in [ProtocolConfig::coma1(), ProtocolConfig::coma2()] {
        let (mut t, mut u) = provision_pair(&cfg, 3).unwrap();
        let r = activate(&mut t, &mut u).unwrap();
        assert_eq!(r.cycles_spent, activation_cycles(&cfg.cost, 128));
    }
}

#[test]
fn enrollment_is_one_time_and_stable() {
    let cfg = ProtocolConfig::coma2();
    let (circuit, _) = ObfuscatedCircuit::default_payload(2);
    let mut dev = UntrustedChip::new(cfg, 99, circuit).unwrap();
    let mut ea = EnrollmentAuthority::new(5);
    let rec = ea.enroll(&mut dev, "d").unwrap();
    let base = rec.challenge_value().unwrap();
    assert_eq!(dev.challenge(), Some(base));
    for _ in 0..100 {
        assert_eq!(puf::derive_key(dev.puf_mut(), base).unwrap(), rec.sk_bytes().unwrap());
    }
    assert!(matches!(ea.enroll(&mut dev, "d"), Err(ProtocolError::Puf(PufError::ReadoutDisabled))));
}

#[test]
fn every_tampered_frame_is_rejected() {
    let (mut t, mut u) = pair(4);
    let frames = 1 + 1 + 2 + 1;
    for seq in 0..frames {
        let mut link = Link::with_tamper(seq);
        let err = activate_over(&mut t, &mut u, &mut link).unwrap_err();
        assert!(matches!(err, ProtocolError::AuthFailure(_)), "frame {seq}: {err}");
        if seq < frames - 1 {
            assert!(!u.circuit().self_check());
        }
    }
}

#[test]
fn replayed_dal_fails_under_fresh_trn() {
    let (mut t, mut u) = pair(5);
    activate(&mut t, &mut u).unwrap();
    let dal = u.captured_dal().to_vec();
    assert_eq!(dal, t.last_dal());
    for _ in 0..20 {
        u.reset();
        assert!(matches!(replay_dal(&mut t, &mut u, &dal), Err(ProtocolError::UnlockFailure)));
        assert!(!u.circuit().self_check());
    }
}

#[test]
fn dal_is_bound_to_its_trn() {
    let cfg = ProtocolConfig::coma2();
    let topo = cfg.topology().unwrap();
    let (circuit, ok) = ObfuscatedCircuit::default_payload(8);
    let mut u = UntrustedChip::new(cfg, 8, circuit).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let dal_for = |trn: &Trn| -> Vec<Bits> {
        ok.chunks(64).map(|pok| crate::switchnet::csn_forward(&topo, trn, pok).unwrap()).collect()
    };
    let t1 = Trn::random(&topo, &mut rng);
    u.unlock_from_dal(&t1, &dal_for(&t1)).unwrap();
    for _ in 0..100 {
        let t2 = Trn::random(&topo, &mut rng);
        assert!(matches!(u.unlock_from_dal(&t2, &dal_for(&t1)), Err(ProtocolError::UnlockFailure)));
    }
}

#[test]
fn reset_clears_keys() {
    let (mut t, mut u) = pair(6);
    activate(&mut t, &mut u).unwrap();
    u.reset();
    assert!(!u.circuit().key_loaded());
    assert!(!u.circuit().self_check());
    assert!(u.current_trn().is_none());
    activate(&mut t, &mut u).unwrap();
    assert!(u.circuit().self_check());
}

#[test]
fn trns_are_fresh_per_activation() {
    let (mut t, mut u) = pair(9);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..50 {
        activate(&mut t, &mut u).unwrap();
        assert!(seen.insert(t.current_trn().unwrap().to_hex()));
    }
}

fn deliver_dcc(frames: Vec<Frame>, u: &mut UntrustedChip) -> Option<Vec<u8>> {
    let mut out = None;
    for f in frames {
        if let Some(m) = u.dcc_recv(&f).unwrap() {
            out = Some(m);
        }
    }
    out
}

#[test]
fn dcc_roundtrip_both_directions() {
    let (mut t, mut u) = pair(10);
    activate(&mut t, &mut u).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut msg = vec![0u8; 1024];
    rng.fill(&mut msg[..]);
    let frames = t.dcc_send(&msg).unwrap();
    assert_eq!(deliver_dcc(frames, &mut u).unwrap(), msg);
    assert_eq!(u.epoch(), t.epoch());
    let reply = b"status ok".to_vec();
    let mut got = None;
    for f in u.dcc_send(&reply).unwrap() {
        got = t.dcc_recv(&f).unwrap();
    }
    assert_eq!(got.unwrap(), reply);
}

#[test]
fn dcc_update_period_counts_blocks() {
    let cfg = ProtocolConfig::for_profile(crate::costmodel::CostParams::coma2().with_u(8)).unwrap();
    let (mut t, mut u) = provision_pair(&cfg, 11).unwrap();
    activate(&mut t, &mut u).unwrap();
    deliver_dcc(vec![t.refresh_trn().unwrap()], &mut u);
    let before = t.meter().total();
    let frames = t.dcc_send(&[0x5a; 160]).unwrap();
    assert_eq!(t.meter().total() - before, dcc_message_cycles(&cfg.cost, 160));
    let updates = frames.iter().filter(|f| f.ftype == FrameType::TrnUpdate).count();
    assert_eq!(updates, 2);
    let kinds: Vec<_> = frames.iter().map(|f| f.ftype).collect();
    use FrameType::*;
    assert_eq!(kinds, [DataDcc, TrnUpdate, DataDcc, TrnUpdate, DataDcc]);
    assert_eq!(deliver_dcc(frames, &mut u).unwrap(), vec![0x5a; 160]);
}

#[test]
fn dcc_cycles_match_closed_form() {
    for cfg in [ProtocolConfig::coma1(), ProtocolConfig::coma2()] {
        let (mut t, mut u) = provision_pair(&cfg, 12).unwrap();
        activate(&mut t, &mut u).unwrap();
        for bytes in [1usize, 8, 100, 504, 505, 4096] {
            deliver_dcc(vec![t.refresh_trn().unwrap()], &mut u);
            let before = t.meter().total();
            let frames = t.dcc_send(&vec![1; bytes]).unwrap();
            assert_eq!(t.meter().total() - before, dcc_message_cycles(&cfg.cost, bytes as u64), "{bytes} B");
            deliver_dcc(frames, &mut u).unwrap();
        }
    }
}

#[test]
fn dcc_stale_epoch_is_rejected() {
    let cfg = ProtocolConfig::for_profile(crate::costmodel::CostParams::coma2().with_u(4)).unwrap();
    let (mut t, mut u) = provision_pair(&cfg, 13).unwrap();
    activate(&mut t, &mut u).unwrap();
    let frames = t.dcc_send(&[7; 64]).unwrap();
    let mut saw = false;
    for f in frames.into_iter().filter(|f| f.ftype != FrameType::TrnUpdate) {
        if let Err(e) = u.dcc_recv(&f) {
            assert!(matches!(e, ProtocolError::EpochMismatch { .. }), "{e}");
            saw = true;
            break;
        }
    }
    assert!(saw);
}

#[test]
fn lcc_init_and_streaming() {
    for cfg in [ProtocolConfig::coma1(), ProtocolConfig::coma2()] {
        let (mut t, mut u) = provision_pair(&cfg, 14).unwrap();
        activate(&mut t, &mut u).unwrap();
        let before = t.meter().total();
        let seed = t.lcc_init().unwrap();
        assert_eq!(t.meter().total() - before, lcc_init_cycles(&cfg.cost));
        u.lcc_accept(&seed).unwrap();

        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let mut msg = vec![0u8; 64 * 1024];
        rng.fill(&mut msg[..]);
        let (t0, u0) = (t.meter().total(), u.meter().total());
        let frames = t.lcc_send(&msg).unwrap();
        assert_eq!(t.meter().total() - t0, lcc_message_cycles(&cfg.cost, msg.len() as u64));
        let mut got = None;
        for f in &frames {
            got = u.lcc_recv(f).unwrap();
        }
        assert_eq!(got.unwrap(), msg);
        assert_eq!(u.meter().total() - u0, t.meter().total() - t0);
    }
}

#[test]
fn lcc_rejects_long_update_period() {
    let cfg = ProtocolConfig::for_profile(crate::costmodel::CostParams::coma2().with_u(64)).unwrap();
    let (mut t, mut u) = provision_pair(&cfg, 15).unwrap();
    activate(&mut t, &mut u).unwrap();
    assert!(matches!(t.lcc_init(), Err(ProtocolError::Config(_))));
}

#[test]
fn lcc_dropped_frame_desyncs() {
    let (mut t, mut u) = pair(16);
    activate(&mut t, &mut u).unwrap();
    let seed = t.lcc_init().unwrap();
    u.lcc_accept(&seed).unwrap();
    let _lost = t.lcc_send(b"first").unwrap();
    let next = t.lcc_send(b"second").unwrap();
    assert!(matches!(u.lcc_recv(&next[0]), Err(ProtocolError::Desync { expected: 0, got: 1 })));
}

#[test]
fn transcript_roundtrips_as_jsonl() {
    let (mut t, mut u) = pair(17);
    let mut link = Link::new();
    activate_over(&mut t, &mut u, &mut link).unwrap();
    let mut entries = link.transcript.clone();
    entries.push(dal_entry(u.current_trn().unwrap(), u.captured_dal()));
    let text = transcript_jsonl(&entries);
    let back = parse_transcript(&text).unwrap();
    assert_eq!(back, entries);
    assert_eq!(back[0].to_frame().unwrap().ftype, FrameType::Hello);
    assert_eq!(transcript_dal(&back, 64).unwrap(), u.captured_dal());
}

#[test]
fn blocking_network_also_activates() {
    let mut cfg = ProtocolConfig::coma2();
    cfg.blocking = true;
    let (mut t, mut u) = provision_pair(&cfg, 18).unwrap();
    assert!(activate(&mut t, &mut u).unwrap().success);
}
