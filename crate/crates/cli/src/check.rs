use std::time::Instant;

use penetra::oracle::{probe_determinism, ConnectOptions};
use penetra::{OracleHandle, OracleInfo, OracleKind, Rng, Tensor};
use serde::Serialize;

use crate::args::OracleCheckArgs;
use crate::error::{CliError, Result};
use crate::spec::{open_oracle_with, parse_dims};

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub oracle: Option<OracleInfo>,
    pub kind: Option<OracleKind>,
    pub handshake: bool,
    pub input_shape_ok: bool,
    pub deterministic: bool,
    pub output_shape_ok: bool,
    pub round_trip_ms: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

pub fn run_check(args: &OracleCheckArgs) -> Result<CheckReport> {
    let expected = match &args.expect_input_shape {
        Some(s) => Some(parse_dims(s).ok_or_else(|| CliError::Usage(format!("bad shape {s:?}")))?),
        None => None,
    };
    let mut report = CheckReport {
        oracle: None,
        kind: None,
        handshake: false,
        input_shape_ok: false,
        deterministic: false,
        output_shape_ok: false,
        round_trip_ms: None,
        pass: false,
        error: None,
    };
    let opts = ConnectOptions {
        probe_determinism: false,
        ..ConnectOptions::default()
    };
    let oracle = match open_oracle_with(&args.oracle, &opts) {
        Ok(o) => o,
        Err(e @ CliError::Usage(_)) => return Err(e),
        Err(e) => {
            report.error = Some(e.to_string());
            return Ok(report);
        }
    };
    report.handshake = true;
    report.oracle = Some(oracle.info().clone());
    report.kind = Some(oracle.kind());
    report.input_shape_ok = expected
        .as_ref()
        .is_none_or(|s| *s == oracle.info().input_shape);

    if let Err(e) = probe(&oracle, &mut report) {
        report.error = Some(e.to_string());
    }
    report.pass =
        report.handshake && report.input_shape_ok && report.deterministic && report.output_shape_ok;
    Ok(report)
}

fn probe(oracle: &OracleHandle, report: &mut CheckReport) -> Result<()> {
    report.deterministic = probe_determinism(oracle)?;
    let info = oracle.info();
    let x = Tensor::new(
        info.input_shape.clone(),
        Rng::new(1).uniform_vec(info.input_len(), 0.0, 1.0),
    )?;
    let t = Instant::now();
    let y = oracle.eval(&x)?;
    report.round_trip_ms = Some(t.elapsed().as_secs_f64() * 1e3);
    report.output_shape_ok = y.shape() == info.output_shape.as_slice();
    Ok(())
}
