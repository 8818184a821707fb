//! Acceptance suite: every criterion runs sequentially with its own time
//! limit and prints one PASS/FAIL line. Exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use ostbc_core::census::{find_mstar, SUBSPACE_ANGLE_TOL};
use ostbc_core::embed::{
    frobenius_inner, kron, orthonormal_span, overline, principal_angles, underline, vec,
    ComplexMatrix, RealMatrix, RealVector, DEFAULT_REL_TOL,
};
use ostbc_core::estimator::{
    ambiguity_matrix, angle_to_span, decode, estimate_channel, lifted_basis, sample_r, simulate, theoretical_r,
    ConstellationModel, SimulationConfig,
};
use ostbc_core::kyfan::{kyfan_sample_check, matrix_with_spectrum, SpectrumSpec};
use ostbc_core::ostbc::{builtin_code, encode, realify, BUILTIN_CODES};
use ostbc_core::random::{gaussian_channel, gaussian_matrix, normal, random_spd, random_symmetric, trial_rng};
use ostbc_core::subspace::{compute_bspace, compute_bstar, hr_basis, lift_to_channel, rho};
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin_json(args: &[&str]) -> Result<Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ostbc"))
        .args(args)
        .args(["--format", "json"])
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    ensure(out.status.success(), || format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)))?;
    serde_json::from_slice(&out.stdout).map_err(|e| format!("bad JSON: {e}"))
}

fn basis_from_json(v: &Value, k: usize) -> Result<Vec<RealMatrix>, String> {
    let rows = v["basis"].as_array().ok_or("missing basis")?;
    rows.iter()
        .map(|b| {
            let flat: Vec<f64> = b.as_array().ok_or("basis entry")?.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect();
            ensure(flat.len() == k * k, || format!("basis element has {} entries", flat.len()))?;
            Ok(RealMatrix::from_row_slice(k, k, &flat))
        })
        .collect()
}

fn span_of(mats: &[RealMatrix]) -> RealMatrix {
    let cols: Vec<RealVector> = mats.iter().map(vec).collect();
    orthonormal_span(&RealMatrix::from_columns(&cols), 1e-8)
}

fn c1_alamouti_invariant_space() -> Outcome {
    let v = bin_json(&["bstar", "--code", "alamouti"])?;
    ensure(v["dim"] == 4, || format!("dim = {}", v["dim"]))?;
    let basis = basis_from_json(&v, 4)?;
    let c3 = RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let om2 = RealMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let om4 = RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let gens = [RealMatrix::identity(4, 4), kron(&c3, &RealMatrix::identity(2, 2)), kron(&om4, &c3), kron(&om2, &c3)];
    let (a, b) = (span_of(&basis), span_of(&gens));
    ensure(a.ncols() == 4 && b.ncols() == 4, || "spans are not 4-dimensional".into())?;
    let angles = principal_angles(&a, &b);
    let worst = angles.iter().cloned().fold(0.0, f64::max);
    ensure(worst <= 1e-8, || format!("max principal angle {worst:.3e}"))?;
    Ok(format!("dim=4, max principal angle {worst:.2e}"))
}

fn c2_odd_k() -> Outcome {
    let v = bin_json(&["bstar", "--code", "alamouti-k3"])?;
    ensure(v["dim"] == 1, || format!("dim = {}", v["dim"]))?;
    let basis = basis_from_json(&v, 3)?;
    let dev = (&basis[0] - RealMatrix::identity(3, 3) / 3f64.sqrt()).norm();
    ensure(dev <= 1e-12, || format!("basis deviates from I/sqrt(3) by {dev:.3e}"))?;
    Ok(format!("dim=1, |B - I/sqrt3| = {dev:.1e}"))
}

fn c3_hurwitz_radon() -> Outcome {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for name in BUILTIN_CODES {
        let code = builtin_code(name).map_err(|e| e.to_string())?;
        let star = compute_bstar(&code, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
        let hr = hr_basis(&star).map_err(|e| format!("{name}: {e}"))?;
        let r = hr.max_skew_residual.max(hr.max_anticommute_residual).max(hr.max_involution_residual);
        ensure(r <= 1e-10, || format!("{name}: residual {r:.3e}"))?;
        ensure(hr.family_size < rho(code.k()), || format!("{name}: family {} vs rho {}", hr.family_size, rho(code.k())))?;
        worst = worst.max(r);
        detail.push(format!("{name}:{}", hr.family_size));
        if name == "alamouti" {
            ensure(hr.family_size == 3 && rho(4) == 4, || format!("alamouti family size {}", hr.family_size))?;
        }
    }
    Ok(format!("family sizes {} worst residual {worst:.1e}", detail.join(" ")))
}

fn c4_isometry() -> Outcome {
    let mut rng = trial_rng(4, 0);
    let mut worst = 0.0f64;
    for draw in 0..50 {
        let code = builtin_code(BUILTIN_CODES[draw % BUILTIN_CODES.len()]).unwrap();
        let m = 1 + (draw / BUILTIN_CODES.len()) % 3;
        let rc = realify(&code, m).unwrap();
        let ch = gaussian_channel(code.n(), m, &mut rng);
        let h2 = ch.vector().norm_squared();
        let sub = compute_bspace(&code, &ch, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
        let lifts: Vec<RealVector> = sub.basis().iter().map(|b| lift_to_channel(&rc, ch.vector(), b).unwrap()).collect();
        for (i, bi) in sub.basis().iter().enumerate() {
            for (j, bj) in sub.basis().iter().enumerate() {
                let dev = (lifts[i].dot(&lifts[j]) - h2 / code.k() as f64 * frobenius_inner(bi, bj)).abs() / h2;
                worst = worst.max(dev);
            }
        }
    }
    ensure(worst <= 1e-9, || format!("worst relative deviation {worst:.3e}"))?;
    Ok(format!("50 draws, worst deviation {worst:.1e} |h0|^2"))
}

fn c5_deterministic_dimension() -> Outcome {
    let mut detail = Vec::new();
    for name in BUILTIN_CODES {
        let code = builtin_code(name).unwrap();
        let r = find_mstar(&code, 4, 100, 5, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
        let v = r.check();
        ensure(v.is_empty(), || format!("{name}: {v:?}"))?;
        for c in &r.dims {
            ensure(c.unimodal(), || format!("{name} M={}: {:?}", c.m, c.histogram))?;
            if c.m >= code.n() {
                let worst = c.records.iter().map(|t| t.max_principal_angle_to_bstar).fold(0.0, f64::max);
                ensure(worst <= SUBSPACE_ANGLE_TOL, || format!("{name} M={}: angle {worst:.3e}", c.m))?;
            }
        }
        ensure(r.d_mode.windows(2).all(|w| w[1] <= w[0]), || format!("{name}: d_mode {:?}", r.d_mode))?;
        detail.push(format!("{name}:{:?}/{}", r.d_mode, r.d_star));
    }
    Ok(detail.join(" "))
}

fn c6_covariance_spectrum() -> Outcome {
    let mut rng = trial_rng(6, 0);
    let mut worst = 0.0f64;
    for name in BUILTIN_CODES {
        let code = builtin_code(name).unwrap();
        let k = code.k();
        for m in 1..=3 {
            let rc = realify(&code, m).unwrap();
            for _ in 0..10 {
                let ch = gaussian_channel(code.n(), m, &mut rng);
                let cm = ConstellationModel::correlated(random_spd(k, 0.2, 3.0, &mut rng)).map_err(|e| e.to_string())?;
                let sigma2 = rng.random_range(0.01..1.0);
                let r = theoretical_r(&rc, ch.vector(), &cm, sigma2).map_err(|e| e.to_string())?.r;
                let mut observed: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().cloned().collect();
                let h2 = ch.vector().norm_squared();
                let mut predicted: Vec<f64> = cm.eigenvalues().iter().map(|l| h2 * l + sigma2 / 2.0).collect();
                predicted.resize(rc.block_len(), sigma2 / 2.0);
                observed.sort_by(f64::total_cmp);
                predicted.sort_by(f64::total_cmp);
                for (o, p) in observed.iter().zip(&predicted) {
                    worst = worst.max((o - p).abs() / p.abs());
                }
            }
        }
    }
    ensure(worst <= 1e-9, || format!("worst relative eigenvalue error {worst:.3e}"))?;
    Ok(format!("150 spectra, worst relative error {worst:.1e}"))
}

fn c7_estimator_theoretical() -> Outcome {
    let mut rng = trial_rng(7, 0);
    let (mut w_res, mut w_orth, mut w_proj) = (0.0f64, 0.0f64, 0.0f64);
    for name in BUILTIN_CODES {
        let code = builtin_code(name).unwrap();
        let k = code.k();
        for draw in 0..50 {
            let m = 1 + draw % 3;
            let rc = realify(&code, m).unwrap();
            let ch = gaussian_channel(code.n(), m, &mut rng);
            let cm = if draw % 2 == 0 {
                ConstellationModel::gaussian(k)
            } else {
                ConstellationModel::correlated(random_spd(k, 0.5, 2.0, &mut rng)).unwrap()
            };
            let sigma2 = if draw % 5 == 0 { 0.0 } else { rng.random_range(0.01..0.5) };
            let cov = theoretical_r(&rc, ch.vector(), &cm, sigma2).unwrap();
            let est = estimate_channel(&rc, &cov).map_err(|e| e.to_string())?;
            let (b, res) = ambiguity_matrix(&rc, ch.vector(), &est.h_hat).map_err(|e| e.to_string())?;
            let sub = compute_bspace(&code, &ch, DEFAULT_REL_TOL).unwrap();
            w_res = w_res.max(res);
            w_orth = w_orth.max((b.transpose() * &b - RealMatrix::identity(k, k)).norm());
            w_proj = w_proj.max(sub.projection_residual(&b));
        }
    }
    ensure(w_res <= 1e-8 && w_orth <= 1e-8 && w_proj <= 1e-8, || {
        format!("residual {w_res:.3e}, orthogonality {w_orth:.3e}, projection {w_proj:.3e}")
    })?;
    Ok(format!("250 draws, residual {w_res:.1e} orthogonality {w_orth:.1e} projection {w_proj:.1e}"))
}

fn c8_estimator_sample() -> Outcome {
    let code = builtin_code("alamouti").unwrap();
    let rc = realify(&code, 2).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let cfg = SimulationConfig {
            code: code.clone(),
            m: 2,
            constellation: ConstellationModel::iid_pm1(4),
            blocks: 10_000,
            sigma2: 0.01,
            seed,
        };
        let sim = simulate(&cfg).map_err(|e| e.to_string())?;
        let est = estimate_channel(&rc, &sample_r(&sim.blocks).unwrap()).unwrap();
        let sub = compute_bspace(&code, &sim.channel, DEFAULT_REL_TOL).unwrap();
        let lifted = lifted_basis(&rc, sim.channel.vector(), &sub).unwrap();
        worst = worst.max(angle_to_span(&lifted, &est.h_hat).to_degrees());
    }
    ensure(worst <= 5.0, || format!("worst angle {worst:.3} deg"))?;
    Ok(format!("20 seeds, worst angle {worst:.4} deg"))
}

fn c9_noiseless_decode() -> Outcome {
    let mut rng = trial_rng(9, 0);
    let mut worst = 0.0f64;
    for name in BUILTIN_CODES {
        let code = builtin_code(name).unwrap();
        let k = code.k();
        for m in 1..=3 {
            let rc = realify(&code, m).unwrap();
            let cfg = SimulationConfig {
                code: code.clone(),
                m,
                constellation: ConstellationModel::gaussian(k),
                blocks: 20,
                sigma2: 0.0,
                seed: rng.random(),
            };
            let sim = simulate(&cfg).unwrap();
            let h0 = sim.channel.vector();
            let sub = compute_bspace(&code, &sim.channel, DEFAULT_REL_TOL).unwrap();
            let b = sub.basis().iter().fold(RealMatrix::zeros(k, k), |acc, e| acc + e * normal(&mut rng));
            let c = frobenius_inner(&b, &b) / k as f64;
            let b_tilde = &b / c.sqrt();
            let lifted = lift_to_channel(&rc, h0, &b).unwrap();
            let h_hat = &lifted / lifted.norm();
            for (y, s) in sim.blocks.iter().zip(&sim.symbols) {
                let s_hat = decode(&rc, &h_hat, y).unwrap();
                let rotated = b_tilde.transpose() * s;
                let kappa = s_hat.dot(&rotated) / rotated.norm_squared();
                let fit = (&s_hat - &rotated * kappa).norm() / s_hat.norm();
                let scale = (kappa * h_hat.norm() / h0.norm() - 1.0).abs();
                worst = worst.max(fit).max(scale);
            }
            worst = worst.max((b_tilde.transpose() * &b_tilde - RealMatrix::identity(k, k)).norm());
        }
    }
    ensure(worst <= 1e-10, || format!("worst deviation {worst:.3e}"))?;
    Ok(format!("worst deviation {worst:.1e}"))
}

fn c10_kyfan() -> Outcome {
    let mut rng = trial_rng(10, 0);
    let mut degenerate = 0;
    for i in 0..20u64 {
        let m = rng.random_range(2..=8usize);
        let q = rng.random_range(1..=m.min(4));
        let p = if i % 2 == 0 {
            random_symmetric(m, &mut rng)
        } else {
            // few distinct levels force repeated eigenvalues around lambda_q
            let values: Vec<f64> = (0..m).map(|_| rng.random_range(0..3) as f64 - 0.5).collect();
            matrix_with_spectrum(&values, 1000 + i)
        };
        let spec = SpectrumSpec::new(p, q).map_err(|e| e.to_string())?;
        if spec.q_plus() - spec.q_minus() > 1 {
            degenerate += 1;
        }
        let r = kyfan_sample_check(&spec, 10_000, 100 + i).map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("P #{i} (m={m}, q={q}): {r:?}"))?;
    }
    ensure(degenerate >= 5, || format!("only {degenerate} degenerate spectra exercised"))?;
    Ok(format!("20 matrices ({degenerate} with degenerate lambda_q), 1e4 samples each"))
}

fn c11_identity_battery() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = trial_rng(11, 0);
    let mut worst = 0.0f64;
    let mut note = |v: f64, what: &str, name: &str| -> Result<(), String> {
        worst = worst.max(v);
        ensure(v <= TOL, || format!("{name}: {what} deviates by {v:.3e}"))
    };
    for name in BUILTIN_CODES {
        let code = builtin_code(name).unwrap();
        let (n, l, k) = (code.n(), code.l(), code.k());
        let c = code.matrices();
        let eye_n = ComplexMatrix::identity(n, n);
        for i in 0..k {
            note((c[i].adjoint() * &c[i] - &eye_n).norm(), "C^H C = I", name)?;
            for j in 0..i {
                note((c[i].adjoint() * &c[j] + c[j].adjoint() * &c[i]).norm(), "cross term", name)?;
            }
        }
        for _ in 0..20 {
            let s: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
            let s2: f64 = s.iter().map(|x| x * x).sum();
            let x = encode(&code, &s).unwrap();
            note((x.adjoint() * &x - eye_n.map(|z| z * s2)).norm() / s2, "X^H X = |s|^2 I", name)?;

            let a = gaussian_channel(l, n, &mut rng).matrix().clone();
            let b = gaussian_channel(l, n, &mut rng).matrix().clone();
            let lhs = underline(&a).dot(&underline(&b));
            let rhs = 0.5 * (a.adjoint() * &b + b.adjoint() * &a).trace().re;
            note((lhs - rhs).abs() / (a.norm() * b.norm()), "underline inner product", name)?;

            let p = gaussian_channel(n, 3, &mut rng).matrix().clone();
            let lhs = underline(&(&a * &p));
            let rhs = kron(&RealMatrix::identity(3, 3), &overline(&a)) * underline(&p);
            note((lhs - rhs).norm() / (a.norm() * p.norm()), "underline(AB)", name)?;

            let ra = gaussian_matrix(l, n, &mut rng);
            let rb = gaussian_matrix(n, 3, &mut rng);
            let lhs = vec(&(&ra * &rb));
            let rhs = kron(&rb.transpose(), &RealMatrix::identity(l, l)) * vec(&ra);
            note((lhs - rhs).norm() / (ra.norm() * rb.norm()), "vec(AB)", name)?;
        }
        for m in 1..=3 {
            let rc = realify(&code, m).unwrap();
            let hl = rc.channel_len();
            let eye = RealMatrix::identity(hl, hl);
            let phi = rc.phi_k();
            for i in 0..k {
                note((phi[i].transpose() * &phi[i] - &eye).norm(), "Phi^T Phi = I", name)?;
                for j in 0..i {
                    note((phi[i].transpose() * &phi[j] + phi[j].transpose() * &phi[i]).norm(), "Phi cross term", name)?;
                }
            }
            note((rc.phi().transpose() * rc.phi() - &eye * k as f64).norm() / k as f64, "stacked Phi", name)?;
            for _ in 0..5 {
                let ch = gaussian_channel(n, m, &mut rng);
                let h2 = ch.vector().norm_squared();
                let a = rc.build_a(ch.vector()).unwrap();
                note((a.transpose() * &a - RealMatrix::identity(k, k) * h2).norm() / h2, "A^T A = |h|^2 I", name)?;
                let s: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
                let y = underline(&(encode(&code, &s).unwrap() * ch.matrix()));
                let sv = DVector::from_vec(s);
                note((y - &a * &sv).norm() / (h2.sqrt() * sv.norm()), "received block", name)?;
            }
        }
    }
    Ok(format!("worst deviation {worst:.1e}"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "alamouti invariant space", limit: Duration::from_secs(1), run: c1_alamouti_invariant_space },
        Criterion { id: 2, name: "odd-K invariant space", limit: Duration::from_secs(1), run: c2_odd_k },
        Criterion { id: 3, name: "Hurwitz-Radon structure", limit: Duration::from_secs(1), run: c3_hurwitz_radon },
        Criterion { id: 4, name: "lift isometry", limit: Duration::from_secs(5), run: c4_isometry },
        Criterion { id: 5, name: "deterministic dimension", limit: Duration::from_secs(60), run: c5_deterministic_dimension },
        Criterion { id: 6, name: "covariance eigenstructure", limit: Duration::from_secs(10), run: c6_covariance_spectrum },
        Criterion { id: 7, name: "estimator on theoretical R", limit: Duration::from_secs(30), run: c7_estimator_theoretical },
        Criterion { id: 8, name: "estimator on sample R", limit: Duration::from_secs(60), run: c8_estimator_sample },
        Criterion { id: 9, name: "noiseless decode relation", limit: Duration::from_secs(5), run: c9_noiseless_decode },
        Criterion { id: 10, name: "trace maximization", limit: Duration::from_secs(30), run: c10_kyfan },
        Criterion { id: 11, name: "identity battery", limit: Duration::from_secs(5), run: c11_identity_battery },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded time limit")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {:<28} {} {:>7.3}s / {:>2}s  {}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

