//! Sends the same message over DCC and LCC and compares measured cycles
//! with the closed forms.
//!
//! cargo run --release --example dcc_lcc -- [bytes]

use coma::costmodel::{dcc_message_cycles, lcc_init_cycles, lcc_message_cycles};
use coma::protocol::{activate, provision_pair, ProtocolConfig};

fn main() {
    let bytes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4096);
    let msg: Vec<u8> = (0..bytes).map(|i| (i * 7) as u8).collect();
    for cfg in [ProtocolConfig::coma1(), ProtocolConfig::coma2()] {
        let name = cfg.cost.profile.clone();
        let (mut t, mut u) = provision_pair(&cfg, 3).unwrap();
        activate(&mut t, &mut u).unwrap();

        u.dcc_recv(&t.refresh_trn().unwrap()).unwrap();
        let before = t.meter().total();
        let frames = t.dcc_send(&msg).unwrap();
        let dcc = t.meter().total() - before;
        let mut got = None;
        for f in &frames {
            got = u.dcc_recv(f).unwrap().or(got);
        }
        assert_eq!(got.as_deref(), Some(&msg[..]));
        println!("{name} dcc: {} frames, {dcc} cycles (closed form {})", frames.len(), dcc_message_cycles(&cfg.cost, bytes as u64));

        let before = t.meter().total();
        u.lcc_accept(&t.lcc_init().unwrap()).unwrap();
        let init = t.meter().total() - before;
        let before = t.meter().total();
        let frames = t.lcc_send(&msg).unwrap();
        let lcc = t.meter().total() - before;
        for f in &frames {
            got = u.lcc_recv(f).unwrap().or(got);
        }
        assert_eq!(got.as_deref(), Some(&msg[..]));
        println!(
            "{name} lcc: init {init} (closed form {}), message {lcc} (closed form {}), stall {}",
            lcc_init_cycles(&cfg.cost),
            lcc_message_cycles(&cfg.cost, bytes as u64),
            t.meter().stall
        );
    }
}
