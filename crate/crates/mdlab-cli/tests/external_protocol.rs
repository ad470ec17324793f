//! End-to-end tests of the external-denoiser wire protocol against the
//! bundled reference server (`mdlab serve-uniform`).

use std::time::Instant;

use mdlab::denoise::{Denoiser, ExternalCommand, ExternalDenoiser};
use mdlab::error::Error;
use mdlab::seq::TokenSeq;

fn server_command(args: &[&str]) -> ExternalCommand {
    ExternalCommand::new(
        env!("CARGO_BIN_EXE_mdlab"),
        std::iter::once("serve-uniform")
            .chain(args.iter().copied())
            .map(String::from)
            .collect(),
    )
}

#[test]
fn uniform_server_round_trip() {
    let d = ExternalDenoiser::new(server_command(&[]));
    let x = TokenSeq::new(vec![0, 3, 0, 1, 0], 4).unwrap();
    let table = d.predict(&x).unwrap();
    table.validate().unwrap();
    for pos in [0usize, 2, 4] {
        for v in 0..4 {
            assert!((table.row(pos)[v] - 0.25).abs() < 1e-12);
        }
    }
    assert!(!table.is_active(1));
    assert!(!table.is_active(3));
}

#[test]
fn unnormalized_rows_rejected() {
    let d = ExternalDenoiser::new(server_command(&["--mode", "unnormalized"]));
    let x = TokenSeq::new(vec![0, 2], 3).unwrap();
    match d.predict(&x) {
        Err(Error::Protocol(msg)) => assert!(msg.contains("not a distribution"), "{msg}"),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn silent_server_times_out_and_recovers() {
    let mut cmd = server_command(&["--mode", "silent"]);
    cmd.timeout_ms = 300;
    let d = ExternalDenoiser::new(cmd);
    let x = TokenSeq::new(vec![0], 2).unwrap();
    match d.predict(&x) {
        Err(Error::Timeout(_)) => {}
        other => panic!("expected timeout, got {other:?}"),
    }
    // Restart policy: the next call spawns a fresh child and times out again
    // rather than wedging.
    assert!(matches!(d.predict(&x), Err(Error::Timeout(_))));
}

#[test]
fn many_round_trips_within_budget() {
    let d = ExternalDenoiser::new(server_command(&[]));
    let x = TokenSeq::new(vec![0, 1, 0], 2).unwrap();
    let started = Instant::now();
    for _ in 0..1000 {
        d.predict(&x).unwrap();
    }
    let elapsed = started.elapsed();
    // Generous bound; locally this runs in well under a second.
    assert!(elapsed.as_secs() < 30, "1000 round trips took {elapsed:?}");
}
