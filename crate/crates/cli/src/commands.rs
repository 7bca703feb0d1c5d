//! Subcommand implementations.

use crate::output::{csv_header, emit, fmt_vec, meta_json};
use crate::Command;
use qpot_core::nalgebra::DVector;
use qpot_core::balance;
use qpot_core::dynamics;
use qpot_core::network::{self, Network};
use qpot_core::quasipot;
use qpot_core::stochastic;
use serde_json::json;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable files, parse errors, missing or inconsistent
    /// flags. Exit code 1.
    Input(String),
    /// The computation itself failed. Exit code 2.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

fn input<E: fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn numerical<E: fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn load_network(path: &Path) -> Result<Network, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    network::parse_network(&text).map_err(input)
}

fn vec_arg(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Input(format!("cannot write output: {e}"))
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Parse {
            file,
            check_weak_reversibility,
            out,
        } => {
            let net = load_network(&file)?;
            let mut doc = json!({
                "meta": meta_json(&net, "parse", &[("file", file.display().to_string())]),
                "species": net.species(),
                "complexes": net.complexes().iter().map(|c| c.0.clone()).collect::<Vec<_>>(),
                "reactions": net.reactions().iter().map(|r| json!({
                    "reactant": r.reactant.0,
                    "product": r.product.0,
                    "rate": r.rate,
                })).collect::<Vec<_>>(),
                "canonical": net.render(),
            });
            if check_weak_reversibility {
                doc["weakly_reversible"] = json!(network::is_weakly_reversible(&net));
            }
            emit(&out.out, &format!("{:#}\n", doc)).map_err(io)
        }
        Command::Simulate {
            net,
            mode,
            x0,
            p0,
            t,
            tol,
            n,
            seed,
            out,
        } => {
            let network = load_network(&net.net)?;
            if x0.len() != network.dim() {
                return Err(CliError::Input(format!(
                    "--x0 has {} components but the network has {} species",
                    x0.len(),
                    network.dim()
                )));
            }
            let x0v = vec_arg(&x0);
            let mut params = vec![
                ("mode", mode.clone()),
                ("x0", fmt_vec(&x0)),
                ("t", t.to_string()),
            ];
            let body = match mode.as_str() {
                "ode" => {
                    params.push(("tol", tol.to_string()));
                    dynamics::integrate_ode(&network, &x0v, t, tol)
                        .map_err(numerical)?
                        .to_csv()
                }
                "hamilton" => {
                    let p0 = p0.ok_or_else(|| {
                        CliError::Input("--p0 is required for hamilton mode".to_string())
                    })?;
                    if p0.len() != network.dim() {
                        return Err(CliError::Input(
                            "--p0 dimension does not match the network".to_string(),
                        ));
                    }
                    params.push(("p0", fmt_vec(&p0)));
                    params.push(("tol", tol.to_string()));
                    dynamics::integrate_hamilton(&network, &x0v, &vec_arg(&p0), t, tol)
                        .map_err(numerical)?
                        .to_csv()
                }
                "ssa" => {
                    let n = n.ok_or_else(|| {
                        CliError::Input("--n is required for ssa mode".to_string())
                    })?;
                    params.push(("n", n.to_string()));
                    params.push(("seed", seed.to_string()));
                    stochastic::ssa_simulate(&network, n, &x0v, t, seed)
                        .map_err(numerical)?
                        .to_csv()
                }
                other => {
                    return Err(CliError::Input(format!(
                        "unknown mode `{other}` (expected ode, ssa, or hamilton)"
                    )))
                }
            };
            let content = csv_header(&network, "simulate", &params) + &body;
            emit(&out.out, &content).map_err(io)
        }
        Command::Analyze {
            net,
            steady_state,
            complex_balance,
            hjb_residual,
            quasipotential,
            stationary,
            levelset,
            x0,
            target,
            n,
            caps,
            x_range,
            grid,
            energies,
            horizons,
            out,
        } => {
            let network = load_network(&net.net)?;
            let anchor = x0
                .map(|v| vec_arg(&v))
                .unwrap_or_else(|| DVector::from_element(network.dim(), 1.0));
            let range = match x_range {
                Some(r) if r.len() == 2 => (r[0], r[1]),
                Some(_) => {
                    return Err(CliError::Input("--x-range needs exactly lo,hi".to_string()))
                }
                None => (0.1, 5.0),
            };

            struct Report {
                subflag: &'static str,
                extension: &'static str,
                content: String,
            }
            let mut reports: Vec<Report> = Vec::new();

            if steady_state {
                let rep = dynamics::find_steady_state(&network, &anchor).map_err(numerical)?;
                let doc = json!({
                    "meta": meta_json(&network, "analyze --steady-state", &[("x0", fmt_vec(anchor.as_slice()))]),
                    "c": rep.c.as_slice(),
                    "residual": rep.residual,
                    "stable": rep.stable,
                    "jacobian_eigenvalues": rep.jacobian_eigs.iter().map(|e| [e.re, e.im]).collect::<Vec<_>>(),
                });
                reports.push(Report {
                    subflag: "steady-state",
                    extension: "json",
                    content: format!("{:#}\n", doc),
                });
            }
            if complex_balance {
                let (balanced, rep) =
                    balance::is_complex_balanced_network(&network, &anchor).map_err(numerical)?;
                let doc = json!({
                    "meta": meta_json(&network, "analyze --complex-balance", &[("x0", fmt_vec(anchor.as_slice()))]),
                    "balanced": balanced,
                    "report": serde_json::to_value(&rep).expect("report is serializable"),
                });
                reports.push(Report {
                    subflag: "complex-balance",
                    extension: "json",
                    content: format!("{:#}\n", doc),
                });
            }
            if hjb_residual {
                let steady = dynamics::find_steady_state(&network, &anchor).map_err(numerical)?;
                let c = steady.c.clone();
                let basis = network::stoichiometric_basis(&network);
                // Interior grid in the class: log-uniform moves from c along
                // the stoichiometric subspace.
                let mut rng = qpot_core::rng::Rng::new(17);
                let mut max_resid: f64 = 0.0;
                let mut points = 0usize;
                let mut attempts = 0usize;
                while points < grid && attempts < 100 * grid {
                    attempts += 1;
                    let mut x = c.clone();
                    for b in &basis.basis {
                        let mag = 10f64.powf(rng.range(-2.0, 0.0));
                        let sign = if rng.unit() < 0.5 { -1.0 } else { 1.0 };
                        x += b * (sign * mag);
                    }
                    if x.iter().any(|&v| v <= 1e-3) {
                        continue;
                    }
                    points += 1;
                    let r = balance::hjb_residual(
                        &network,
                        |y| balance::lyapunov_grad(&network, &c, y),
                        &x,
                    )
                    .map_err(numerical)?;
                    max_resid = max_resid.max(r.abs());
                }
                let doc = json!({
                    "meta": meta_json(&network, "analyze --hjb-residual", &[
                        ("x0", fmt_vec(anchor.as_slice())),
                        ("grid", points.to_string()),
                    ]),
                    "c": c.as_slice(),
                    "max_abs_residual": max_resid,
                    "grid_points": points,
                });
                reports.push(Report {
                    subflag: "hjb-residual",
                    extension: "json",
                    content: format!("{:#}\n", doc),
                });
            }
            if quasipotential {
                if network.dim() == 1 {
                    let steady =
                        dynamics::find_steady_state(&network, &anchor).map_err(numerical)?;
                    let qp = quasipot::solve_1d_zero_level(&network, steady.c[0], range, grid)
                        .map_err(numerical)?;
                    let mut body = String::from("x,p,Q\n");
                    for i in 0..grid {
                        let x = range.0 + (range.1 - range.0) * i as f64 / (grid - 1) as f64;
                        let p = qp.p(x).map_err(numerical)?;
                        let q = qp.q(x).map_err(numerical)?;
                        body.push_str(&format!("{x},{p},{q}\n"));
                    }
                    let content = csv_header(
                        &network,
                        "analyze --quasipotential",
                        &[
                            ("c", steady.c[0].to_string()),
                            ("x_range", format!("{},{}", range.0, range.1)),
                            ("grid", grid.to_string()),
                        ],
                    ) + &body;
                    reports.push(Report {
                        subflag: "quasipotential",
                        extension: "csv",
                        content,
                    });
                } else {
                    let target = target.ok_or_else(|| {
                        CliError::Input(
                            "--target is required for --quasipotential when d > 1".to_string(),
                        )
                    })?;
                    let steady =
                        dynamics::find_steady_state(&network, &anchor).map_err(numerical)?;
                    let ladder = horizons.clone().unwrap_or_else(|| vec![2.0, 5.0, 10.0, 20.0]);
                    let (value, best) = quasipot::quasipotential_estimate(
                        &network,
                        &steady.c,
                        &vec_arg(&target),
                        &ladder,
                    )
                    .map_err(numerical)?;
                    let doc = json!({
                        "meta": meta_json(&network, "analyze --quasipotential", &[
                            ("target", fmt_vec(&target)),
                            ("horizons", fmt_vec(&ladder)),
                        ]),
                        "c": steady.c.as_slice(),
                        "value": value,
                        "horizon": best.path.times.last(),
                        "initializer": best.initializer,
                        "converged": best.converged,
                        "boundary_contact": best.boundary_contact,
                    });
                    reports.push(Report {
                        subflag: "quasipotential",
                        extension: "json",
                        content: format!("{:#}\n", doc),
                    });
                }
            }
            if stationary {
                let n = n.ok_or_else(|| {
                    CliError::Input("--n is required for --stationary".to_string())
                })?;
                let caps = caps.ok_or_else(|| {
                    CliError::Input("--caps is required for --stationary".to_string())
                })?;
                if caps.len() != network.dim() {
                    return Err(CliError::Input(
                        "--caps dimension does not match the network".to_string(),
                    ));
                }
                let dist = stochastic::stationary_truncated_from(&network, n, &caps, &anchor)
                    .map_err(numerical)?;
                let content = csv_header(
                    &network,
                    "analyze --stationary",
                    &[
                        ("n", n.to_string()),
                        (
                            "caps",
                            caps.iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(","),
                        ),
                        ("x0", fmt_vec(anchor.as_slice())),
                    ],
                ) + &dist.to_csv();
                reports.push(Report {
                    subflag: "stationary",
                    extension: "csv",
                    content,
                });
            }
            if levelset {
                let energies = energies.ok_or_else(|| {
                    CliError::Input("--energies is required for --levelset".to_string())
                })?;
                let rows = quasipot::level_set_1d(&network, &energies, range, grid)
                    .map_err(numerical)?;
                let mut body = String::from("energy,x,p\n");
                for (e, x, p) in rows {
                    body.push_str(&format!("{e},{x},{p}\n"));
                }
                let content = csv_header(
                    &network,
                    "analyze --levelset",
                    &[
                        ("energies", fmt_vec(&energies)),
                        ("x_range", format!("{},{}", range.0, range.1)),
                        ("grid", grid.to_string()),
                    ],
                ) + &body;
                reports.push(Report {
                    subflag: "levelset",
                    extension: "csv",
                    content,
                });
            }

            if reports.is_empty() {
                return Err(CliError::Input(
                    "analyze needs at least one of --steady-state, --complex-balance, \
                     --hjb-residual, --quasipotential, --stationary, --levelset"
                        .to_string(),
                ));
            }
            if reports.len() == 1 {
                let r = reports.pop().expect("len checked");
                emit(&out.out, &r.content).map_err(io)
            } else {
                // One file per subflag: --out acts as a prefix.
                match &out.out {
                    Some(prefix) => {
                        for r in &reports {
                            let path =
                                PathBuf::from(format!("{}.{}.{}", prefix.display(), r.subflag, r.extension));
                            std::fs::write(&path, &r.content).map_err(io)?;
                        }
                        Ok(())
                    }
                    None => {
                        for r in &reports {
                            println!("##### {} #####", r.subflag);
                            print!("{}", r.content);
                        }
                        Ok(())
                    }
                }
            }
        }
    }
}
