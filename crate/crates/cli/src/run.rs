use std::io::Write;

use caia_core::alignment::{
    build_r, design_beamformers, detect_structure, joint_feasibility, structured_diagonal,
    synthesize_aided_channel, verify_alignment, Feasibility, Infeasible,
};
use caia_core::channel::{ExtendedChannel, SlotSampler};
use caia_core::delay::{
    expected_phase_delay, magnitude_delay_experiment, simulate_phase_delay, write_delay_csv, DelayStats,
    MonteCarlo, Scheme,
};
use caia_core::linalg::{max_principal_angle, scale_rows, CMatrix};
use caia_core::pairing::{
    phase_tolerance, residual_report, select_aided_link, solve_combining, t_ratio, write_pairing_csv,
    PairingRecord,
};
use caia_core::rng::stream_rng;
use caia_core::{CaiaError, C64};

use crate::config::{ChannelKind, Experiment, ExperimentConfig};
use crate::CliError;

/// Stream of the experiment seed reserved for drawing alignment targets.
const TARGET_STREAM: u64 = u64::MAX - 1;

pub fn run<W: Write>(cfg: &ExperimentConfig, threads: Option<usize>, out: &mut W) -> Result<(), CliError> {
    let mc = MonteCarlo { threads, ..MonteCarlo::default() };
    match cfg.experiment {
        Experiment::Verify => verify(cfg, out),
        Experiment::DemoPaperExample => demo(cfg, out),
        Experiment::Pair => pair(cfg, out),
        Experiment::DelayPhase => delay_phase(cfg, &mc, out),
        Experiment::DelayMagnitude => delay_magnitude(cfg, &mc, out),
    }
}

fn csv_err(e: CaiaError) -> CliError {
    CliError::Internal(e.to_string())
}

fn write_infeasible<W: Write>(inf: &Infeasible<f64>, out: &mut W) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(out);
    let record = |e: csv::Error| CliError::Internal(e.to_string());
    wr.write_record(["condition_i", "condition_j", "index", "re", "im"]).map_err(record)?;
    for v in &inf.violations {
        let (i, j) = v.matrix.map_or((String::new(), String::new()), |(i, j)| (i.to_string(), j.to_string()));
        wr.write_record([i, j, v.index.to_string(), v.value.re.to_string(), v.value.im.to_string()])
            .map_err(record)?;
    }
    wr.flush()?;
    Ok(())
}

fn verify<W: Write>(cfg: &ExperimentConfig, out: &mut W) -> Result<(), CliError> {
    if cfg.k_users != 3 {
        return Err(CliError::Usage("verify designs beamformers for K = 3".into()));
    }
    let (n, tol) = (cfg.n, &cfg.tol);
    let (ch, structure) = match cfg.channel {
        ChannelKind::Generic => {
            let ch = ExtendedChannel::generic(3, 2 * n, cfg.sigma, cfg.seed)?;
            match joint_feasibility(&ch, tol.value_match)? {
                Feasibility::Feasible(s) => (ch, s),
                Feasibility::Infeasible(inf) => {
                    write_infeasible(&inf, out)?;
                    return Err(CliError::Failed(format!(
                        "channel is infeasible: {} diagonal entries have no partner",
                        inf.violations.len()
                    )));
                }
            }
        }
        ChannelKind::Aided => {
            let mut rng = stream_rng(cfg.seed, TARGET_STREAM);
            let target = structured_diagonal::<f64, _>(n, cfg.n1.unwrap_or(n), &mut rng)?;
            let s = target.structure(tol.value_match).map_err(|e| CliError::Internal(e.to_string()))?;
            let ch = synthesize_aided_channel(3, n, &s, cfg.seed)?;
            match joint_feasibility(&ch, tol.value_match)? {
                Feasibility::Feasible(joint) => (ch, joint),
                Feasibility::Infeasible(_) => {
                    return Err(CliError::Internal("synthesized channel failed the feasibility check".into()))
                }
            }
        }
    };
    let sol = design_beamformers(&ch, &structure, tol).map_err(|e| CliError::Internal(e.to_string()))?;
    let report = verify_alignment(&ch, &sol, tol)?;
    report.write_csv(&mut *out).map_err(csv_err)?;
    if report.all_pass() {
        Ok(())
    } else {
        let failing: Vec<usize> = report.receivers.iter().filter(|r| !r.pass).map(|r| r.receiver).collect();
        Err(CliError::Failed(format!("receivers {failing:?} cannot separate signal from interference")))
    }
}

fn fmt_real(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{z}")
    }
}

fn write_matrix<W: Write>(out: &mut W, m: &CMatrix<f64>) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:>3}", fmt_real(m[(i, j)]))).collect();
        writeln!(out, "  {}", row.join(" "))?;
    }
    Ok(())
}

const PRINTED_R: [[f64; 4]; 6] = [
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

fn demo<W: Write>(cfg: &ExperimentConfig, out: &mut W) -> Result<(), CliError> {
    let t: Vec<C64> = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0].iter().map(|&x| C64::new(x, 0.0)).collect();
    let s = detect_structure(&t, cfg.tol.value_match)?
        .into_structure()
        .ok_or_else(|| CliError::Internal("example diagonal not detected as feasible".into()))?;
    let list = |v: &[C64]| v.iter().map(|&z| fmt_real(z)).collect::<Vec<_>>().join(", ");
    writeln!(out, "T = diag({})", list(&t))?;
    writeln!(out, "n = {}, n1 = {}", s.n(), s.n1())?;
    writeln!(out, "pairs = {:?}, f indices = {:?}", s.pairs(), s.f_indices())?;
    writeln!(out, "T~ = diag({}), f(T~) = diag({})", list(s.t_tilde()), list(&s.f_values()))?;
    let identity_p = s.perm().iter().enumerate().all(|(p, &i)| p == i);
    writeln!(out, "P = I{}: {identity_p}", 2 * s.n())?;
    writeln!(out, "B =")?;
    for row in s.b_selector() {
        writeln!(out, "  {}", row.iter().map(u8::to_string).collect::<Vec<_>>().join(" "))?;
    }
    let r = build_r(&s);
    writeln!(out, "R =")?;
    write_matrix(out, &r)?;

    let lhs = scale_rows(&s.reconstruct(), &r);
    let rhs = &r * CMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(s.eigenvalue_diagonal()));
    let eig_residual = (lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max);
    writeln!(out, "max |T R - R blockdiag(T~, f(T~))| = {eig_residual:e}")?;

    let ch = synthesize_aided_channel(3, 3, &s, cfg.seed)?;
    let sol = design_beamformers(&ch, &s, &cfg.tol).map_err(|e| CliError::Internal(e.to_string()))?;
    let reference = CMatrix::<f64>::from_fn(6, 3, |i, j| C64::new(PRINTED_R[i][j + 1], 0.0));
    let angle = max_principal_angle(sol.v(1), &reference, cfg.tol.rank_multiplier);
    let r_matches = r.shape() == (6, 4)
        && (0..6).all(|i| (0..4).all(|j| r[(i, j)] == C64::new(PRINTED_R[i][j], 0.0)));
    let pass = s.n() == 3 && s.n1() == 2 && r_matches && eig_residual < 1e-12 && angle < 1e-12;
    writeln!(out, "span(V1) vs last 3 columns of reference R: largest principal angle {angle:e}")?;
    writeln!(out, "{}", if pass { "PASS" } else { "FAIL" })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed("example structure does not reproduce".into()))
    }
}

fn pair<W: Write>(cfg: &ExperimentConfig, out: &mut W) -> Result<(), CliError> {
    let sampler = SlotSampler::new(cfg.sigma)?;
    let dphi = match cfg.delta_phi {
        Some(d) => d,
        None => phase_tolerance(cfg.p, cfg.psi)?,
    };
    let mut records = Vec::with_capacity(cfg.trials);
    for s in 0..cfg.trials as u64 {
        let seed = cfg.seed.wrapping_add(s);
        let st = sampler.sample(3, seed, 0)?;
        let stp = sampler.sample(3, seed, 1)?;
        let sol = solve_combining(&st, &stp, select_aided_link(&stp), cfg.tol.rank_multiplier)?;
        let aided = sol.aided_slot(&stp);
        // Loop ratio observed with the right magnitude but a phase error of Δφ.
        let t = t_ratio(&st)?;
        let delta_t = t * (C64::new(0.0, dphi).exp() - C64::new(1.0, 0.0));
        let rep = residual_report(&sol, &st, &aided, delta_t, cfg.p, cfg.noise_variance)?;
        records.push(PairingRecord { seed, solution: sol, residual_power: rep.residual_power, sinr: rep.sinr });
    }
    write_pairing_csv(&mut *out, &records).map_err(csv_err)
}

fn phase_row(
    cfg: &ExperimentConfig,
    mc: &MonteCarlo,
    scheme: Scheme,
    dphi: f64,
    seed: u64,
) -> Result<DelayStats, CliError> {
    let theoretical = expected_phase_delay(scheme, cfg.k_users, dphi)?;
    let mut row = if mc.tractable(theoretical, cfg.trials) {
        simulate_phase_delay(scheme, cfg.k_users, dphi, cfg.trials, seed, mc)?
    } else {
        DelayStats {
            scheme,
            k_users: cfg.k_users,
            p: None,
            psi: None,
            delta_phi: Some(dphi),
            delta_h: None,
            sigma: None,
            trials: 0,
            empirical_mean: None,
            empirical_std: None,
            theoretical,
        }
    };
    row.p = Some(cfg.p);
    row.psi = Some(cfg.psi);
    Ok(row)
}

fn delay_phase<W: Write>(cfg: &ExperimentConfig, mc: &MonteCarlo, out: &mut W) -> Result<(), CliError> {
    let dphi = match cfg.delta_phi {
        Some(d) => d,
        None => phase_tolerance(cfg.p, cfg.psi)?,
    };
    let rows = [
        phase_row(cfg, mc, Scheme::Caia, dphi, cfg.seed)?,
        phase_row(cfg, mc, Scheme::Eia, dphi / std::f64::consts::SQRT_2, cfg.seed.wrapping_add(1))?,
    ];
    write_delay_csv(&mut *out, &rows).map_err(csv_err)
}

fn delay_magnitude<W: Write>(cfg: &ExperimentConfig, mc: &MonteCarlo, out: &mut W) -> Result<(), CliError> {
    let exp = magnitude_delay_experiment(cfg.sigma, cfg.delta_t_over_t, cfg.targets, cfg.trials, cfg.seed, mc)?;
    write_delay_csv(&mut *out, &[exp.caia, exp.eia]).map_err(csv_err)
}
