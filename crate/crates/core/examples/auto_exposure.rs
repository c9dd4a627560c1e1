//! Runs the exposure controller against a dark and a bright synthetic scene
//! and prints every step.

use fieldscan::exposure::{compute_histogram, exposure_step, step_budget, Action, ControllerConfig, ExposureState, SyntheticCamera};

fn run(label: &str, camera: &SyntheticCamera) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ControllerConfig::default();
    let mut state = ExposureState::default();
    println!("{label}");
    for step in 0..=step_budget(&state.limits, &cfg) {
        let hist = compute_histogram(&[camera.capture(&state)])?;
        let (next, action) = exposure_step(&hist, &state, &cfg);
        println!(
            "  {step:>2}: ISO {:>4}  f/{:<4}  {:>4} ms  {:?} -> {}",
            next.iso,
            next.f_stop,
            next.shutter_ms,
            hist.counts,
            action.name()
        );
        state = next;
        if matches!(action, Action::NoChange | Action::Saturated) {
            break;
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run("dark scene", &SyntheticCamera::log_uniform(0.05, 0.6, 5000, 8.0))?;
    run("bright scene", &SyntheticCamera::log_uniform(0.2, 0.9, 5000, 400.0))?;
    Ok(())
}
