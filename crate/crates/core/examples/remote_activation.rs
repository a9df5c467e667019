//! Authentication server and devices over loopback TCP.

use std::net::TcpListener;
use std::time::Duration;

use coma::protocol::ProtocolConfig;
use coma::remote::{device_run, enroll_device, AuthServer, Registry, ServerOptions};

fn main() {
    let cfg = ProtocolConfig::coma2();
    let mut registry = Registry::in_memory();
    let specs: Vec<_> = (0..3).map(|i| enroll_device(&cfg, &mut registry, &format!("chip-{i}"), 100 + i).unwrap()).collect();
    let server = AuthServer::new(registry, ServerOptions::new(cfg.clone(), 7));
    let handle = server.spawn(TcpListener::bind("127.0.0.1:0").unwrap()).unwrap();
    println!("server on {}", handle.addr());

    for spec in &specs {
        let mut chip = spec.build(&cfg).unwrap();
        let r = device_run(&mut chip, &spec.device_id, handle.addr(), Duration::from_secs(5)).unwrap();
        println!("{}: cycles {} unlocked {}", spec.device_id, r.cycles_spent, chip.circuit().self_check());
    }
    let mut stranger = specs[0].build(&cfg).unwrap();
    match device_run(&mut stranger, "chip-99", handle.addr(), Duration::from_secs(5)) {
        Ok(_) => println!("chip-99 unexpectedly activated"),
        Err(e) => println!("chip-99: {e}"),
    }
    std::thread::sleep(Duration::from_millis(100));
    for l in server.log() {
        println!("log: {} trn {}", l.device_id, l.trn.as_deref().map(|t| &t[..16]).unwrap_or("-"));
    }
}
