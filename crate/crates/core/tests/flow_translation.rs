mod common;

use saliency::flow::{estimate_flow, FlowParams};

fn mean_epe(dx: isize, dy: isize, seed: u64) -> f64 {
    let a = common::texture(64, 64, seed);
    let b = common::shifted(&a, dx, dy);
    let flow = estimate_flow(&a, &b, &FlowParams::default());
    let n = a.len() as f64;
    flow.u.data().iter().zip(flow.v.data())
        .map(|(u, v)| ((u - dx as f64).powi(2) + (v - dy as f64).powi(2)).sqrt())
        .sum::<f64>() / n
}

#[test]
fn recovers_horizontal_shift() {
    let e = mean_epe(2, 0, 1);
    println!("epe (2,0) = {e}");
    assert!(e < 0.5);
}

#[test]
fn recovers_diagonal_shift() {
    let e = mean_epe(1, 3, 2);
    println!("epe (1,3) = {e}");
    assert!(e < 0.5);
}

#[test]
fn identical_frames_give_zero_flow() {
    let a = common::texture(32, 32, 5);
    let flow = estimate_flow(&a, &a, &FlowParams::default());
    assert!(flow.u.data().iter().chain(flow.v.data()).all(|&v| v == 0.0));
}
