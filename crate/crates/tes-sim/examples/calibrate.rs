//! Scratch calibration harness (not shipped): measures every profile-
//! sensitive target so the reference profile constants can be frozen.

use tes_sim::attacks::{
    blinded_resistance_fraction, calibrate_blinding, faked_state_response,
    superlinearity_index, unblinded_single_photon_reference,
};
use tes_sim::config::Profile;
use tes_sim::qkd::{analytic_qber, click_model_from_physics, AttackScenario};
use tes_sim::readout::calibrate_thresholds;
use tes_sim::sim::{mean_std, SimContext, TrialPulse};
use tes_sim::tes::{steady_state, transition_resistance};

fn main() {
    let mut profile = Profile::paper_like();
    // Optional overrides: kappa, C, bias, sigma via env.
    if let Ok(v) = std::env::var("CAL_KAPPA") {
        profile.tes.kappa = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("CAL_C") {
        profile.tes.heat_capacity = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("CAL_BIAS") {
        profile.bias.bias_current = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("CAL_SIGMA") {
        profile.readout.noise_sigma = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("CAL_W") {
        profile.tes.transition_width = v.parse().unwrap();
    }
    let trials: u64 = std::env::var("CAL_TRIALS").ok().and_then(|v| v.parse().ok()).unwrap_or(3000);

    let ctx = SimContext::from_profile(&profile);
    let seed = 20220401;

    // Operating point.
    let op = ctx.operating_point(0.0).unwrap();
    let r0 = transition_resistance(&ctx.tes, op.state.temperature);
    println!(
        "op point: T = {:.6} K, I = {:.3e} A, R0 = {:.4} ohm (x_op = {:+.3})",
        op.state.temperature,
        op.state.current,
        r0,
        (op.state.temperature - ctx.tes.t_critical) / ctx.tes.transition_width
    );

    // Single-photon scale.
    let v1_det = ctx.deterministic_response(&op, 1550e-9, 1).unwrap();
    let (v1_mean, v1_std) = unblinded_single_photon_reference(&ctx, 1550e-9, trials, seed).unwrap();
    println!(
        "V1(1550): noiseless {:.4e} V, measured {:.4e} +- {:.1e} V  (sigma_n = {:.2e}, V1/sigma = {:.1})",
        v1_det, v1_mean, v1_std, ctx.readout.noise_sigma, v1_det / ctx.readout.noise_sigma
    );
    let floor = {
        let v = ctx.pulse_trials(&op, TrialPulse::Dark, 400, seed, 11 << 50).unwrap();
        mean_std(&v).0
    };
    println!("noise floor: {:.4e} V = {:.3} V1", floor, floor / v1_det);

    // Peak proportionality via the mixture fit.
    let records = ctx.calibration_records(1550e-9, 1.0, trials.max(4000), seed, 13 << 50).unwrap();
    match calibrate_thresholds(&records, 3) {
        Ok(t) => {
            let m = &t.peak_means;
            println!(
                "peaks: {:.4e} {:.4e} {:.4e} {:.4e}; r2/2 = {:.4}, r3/3 = {:.4}; thr = {:.4e} ({:.3} V1)",
                m[0],
                m[1],
                m[2],
                m[3],
                (m[2] - m[0]) / (2.0 * (m[1] - m[0])),
                (m[3] - m[0]) / (3.0 * (m[1] - m[0])),
                t.single_photon_threshold,
                t.single_photon_threshold / v1_det
            );

            // Blinding calibration on the natural grid.
            let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05e-9).collect();
            match calibrate_blinding(&ctx, 1550e-9, &grid, &t, trials, seed) {
                Ok(cal) => {
                    let rfrac = blinded_resistance_fraction(&ctx, &cal);
                    let opb = ctx.operating_point(cal.cw_power).unwrap();
                    let x0 = (opb.state.temperature - ctx.tes.t_critical)
                        / ctx.tes.transition_width;
                    println!(
                        "blinding: selected {:.3e} W, suppressed {:.4}, R/Rn = {:.4}, x0 = {:+.3}",
                        cal.cw_power, cal.suppressed_fraction, rfrac, x0
                    );
                    let one_blind = ctx.deterministic_response(&opb, 1550e-9, 1).unwrap();
                    println!(
                        "blinded 1-photon noiseless: {:.4e} V = {:.4} of V1-noiseless",
                        one_blind,
                        one_blind / v1_det
                    );

                    // Faked-state response scan.
                    let energies: Vec<f64> = (0..=8)
                        .map(|i| 1.2e-18 * (9.6f64 / 1.2).powf(i as f64 / 8.0))
                        .collect();
                    let curve = faked_state_response(
                        &ctx, &cal, 1550e-9, &energies, v1_mean, trials, seed,
                    )
                    .unwrap();
                    for p in &curve.points {
                        println!(
                            "  E = {:.3e} J: mean {:.4e} V ({:.3} V1), std {:.2e}",
                            p.pulse_energy,
                            p.mean_v_max,
                            p.mean_v_max / v1_mean,
                            p.std_v_max
                        );
                    }
                    println!("matching energy: {:?}", curve.matching_energy);
                    let index = superlinearity_index(&curve.points, (1.2e-18, 9.6e-18));
                    println!("superlinearity index: {:?}", index);

                    // Fake at exactly 2.4e-18.
                    let scenario = AttackScenario {
                        signal_wavelength: 780e-9,
                        attack_wavelength: 1550e-9,
                        blinding_power: cal.cw_power,
                        fake_pulse_energy: 2.4e-18,
                        channel_transmission: 0.5,
                        trials: 100_000,
                        seed,
                    };
                    let fake = faked_state_response(
                        &ctx, &cal, 1550e-9, &[2.4e-18], v1_mean, trials, seed,
                    )
                    .unwrap();
                    println!(
                        "fake 2.4e-18: {:.4e} V = {:.4} of measured V1",
                        fake.points[0].mean_v_max,
                        fake.points[0].mean_v_max / v1_mean
                    );

                    let cm = click_model_from_physics(&ctx, &scenario, &cal, &t, trials, seed)
                        .unwrap();
                    let q = analytic_qber(&cm.model);
                    println!(
                        "click model: p_full {:.4} p_half {:.4} ratio {:.4} -> qber {:?}",
                        cm.model.p_click_full,
                        cm.model.p_click_half,
                        cm.model.p_click_half / cm.model.p_click_full.max(1e-12),
                        q
                    );
                }
                Err(e) => println!("blinding: {e}"),
            }
        }
        Err(e) => println!("threshold fit: {e}"),
    }

    // Link/ETF time scales for reference.
    let p = &ctx.tes;
    let g = 4.0 * p.kappa * p.t_critical.powi(3);
    let i_op = op.state.current;
    let b = i_op * i_op * p.r_normal / (4.0 * p.transition_width);
    println!(
        "tau_th = {:.1e} s, loop = {:.1}, tau_eff ~ {:.1e} s, L_max ~ {:.1e} H",
        p.heat_capacity / g,
        b / g,
        p.heat_capacity / (b + g),
        (p.r_shunt + r0) * p.heat_capacity / (b - g).max(1e-30)
    );
    let _ = steady_state(&p.clone(), &ctx.bias, 0.0);
}
