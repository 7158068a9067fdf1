//! Lines the resource manager must reject, whatever the session state.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VALID_REQUEST: &str = r#"{"type":"qos_request","list_of_val_ues":["robot-arm-1"],"ip_address":"10.0.0.2","end_to_end_qos_requirements":{"latency_ms":50.0,"jitter_ms":0.0,"loss":0.0,"bandwidth_kbps":1000.0}}"#;

fn request_with(latency: &str, jitter: &str, loss: &str, bw: &str, ip: &str, ues: &str) -> String {
    format!(
        r#"{{"type":"qos_request","list_of_val_ues":{ues},"ip_address":"{ip}","end_to_end_qos_requirements":{{"latency_ms":{latency},"jitter_ms":{jitter},"loss":{loss},"bandwidth_kbps":{bw}}}}}"#
    )
}

/// `n` distinct malformed lines without newlines, deterministic in `seed`.
pub fn malformed_lines(n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| one(&mut rng, i)).collect()
}

fn one(rng: &mut ChaCha8Rng, i: usize) -> Vec<u8> {
    let x: f64 = rng.random_range(0.0..1000.0);
    let line = match i % 16 {
        0 => {
            // binary junk, never valid UTF-8
            let len = rng.random_range(1..64);
            let mut b = vec![0xff];
            b.extend(
                (0..len)
                    .map(|_| rng.random_range(0u8..=255))
                    .filter(|&c| c != b'\n'),
            );
            return b;
        }
        1 => VALID_REQUEST[..rng.random_range(0..VALID_REQUEST.len() - 1)].to_string(),
        2 => format!(r#"{{"type":"qos_teleport","latency_ms":{x}}}"#),
        3 => format!(r#"{{"latency_ms":{x}}}"#),
        4 => request_with(&format!("-{}", x + 1.0), "0", "0", "1000", "10.0.0.2", r#"["a"]"#),
        5 => request_with("50", "0", &format!("{}", 1.0 + x), "1000", "10.0.0.2", r#"["a"]"#),
        6 => request_with("50", "0", "0", "1000", &format!("host-{i}"), r#"["a"]"#),
        7 => request_with("50", "0", "0", "1000", "10.0.0.2", "[]"),
        8 => request_with("\"fast\"", "0", "0", "1000", "10.0.0.2", r#"["a"]"#),
        9 => request_with("1e999", "0", "0", "1000", "10.0.0.2", r#"["a"]"#),
        10 => VALID_REQUEST.replace(r#""loss":0.0"#, &format!(r#""loss":0.0,"priority":{x}"#)),
        11 => format!(
            r#"{{"type":"simple_feedback","emos":{},"target_emos":4.0}}"#,
            5.0 + x + 0.1
        ),
        12 => format!(r#"{{"type":"simple_feedback","emos":{}}}"#, 1.0 + x / 250.0),
        13 => format!(r#"{{"type":"customer_feedback","emos":{}}}"#, 1.0 + x / 250.0),
        14 => format!("[{x}, {i}]"),
        _ => format!(r#"{{"type":"detailed_feedback","kpis":{{"traj_err_max":{x}}}}}"#),
    };
    line.into_bytes()
}
