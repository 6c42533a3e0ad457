use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use asym_core::analysis::{dimension_profile, lipschitz_profile};
use asym_core::corpus::{all_examples, get_example, ExampleRecord};
use asym_core::fibers::{EstimatorConfig, RadiusSchedule};
use asym_core::flow::{trace_gradient_flow, verify_bounds, FlowStatus, StepControl};
use asym_core::malgrange::scan_asymptotic_critical_values;
use asym_core::volume::{volume_profile, VolumeConfig};
use asym_core::{parse, Polynomial};

use crate::args::{Command, Estimator, Format, Output, Radii, Source};

pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_BAD_POLYNOMIAL: i32 = 3;
pub const EXIT_WRITE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Precondition(String),
    #[error("cannot read polynomial: {0}")]
    Polynomial(String),
    #[error("cannot write report to {path}: {source}")]
    Write { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Precondition(_) => EXIT_PRECONDITION,
            Self::Polynomial(_) => EXIT_BAD_POLYNOMIAL,
            Self::Write { .. } => EXIT_WRITE,
        }
    }
}

fn pre<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Precondition(e.to_string())
}

struct Loaded {
    poly: Polynomial,
    /// Resolved description of where the polynomial came from.
    config: Value,
    example: Option<ExampleRecord>,
}

/// Largest k with `xk` appearing in `text`, or 3 when only x, y, z occur.
fn infer_vars(text: &str) -> usize {
    let b = text.as_bytes();
    let mut best = 0;
    for i in 0..b.len() {
        if b[i] == b'x' && (i == 0 || !b[i - 1].is_ascii_alphanumeric()) {
            let digits: String = b[i + 1..].iter().take_while(|c| c.is_ascii_digit()).map(|&c| c as char).collect();
            if let Ok(k) = digits.parse::<usize>() {
                best = best.max(k);
            }
        }
    }
    if best == 0 {
        3
    } else {
        best
    }
}

fn load(source: &Source) -> Result<Loaded, CliError> {
    if let Some(id) = &source.which.example {
        let rec = get_example(id).map_err(pre)?;
        return Ok(Loaded {
            poly: rec.polynomial.clone(),
            config: json!({"example": id, "polynomial": rec.polynomial.to_string()}),
            example: Some(rec),
        });
    }
    if let Some(text) = &source.which.poly {
        let n = source.vars.unwrap_or_else(|| infer_vars(text));
        let poly = parse(text, n).map_err(|e| CliError::Polynomial(e.to_string()))?;
        return Ok(Loaded {
            config: json!({"poly": text, "vars": n, "polynomial": poly.to_string()}),
            poly,
            example: None,
        });
    }
    let path = source.which.poly_file.as_ref().expect("clap enforces one source");
    let text = fs::read_to_string(path).map_err(|e| CliError::Polynomial(format!("{}: {e}", path.display())))?;
    let poly = Polynomial::from_json(&text).map_err(|e| CliError::Polynomial(e.to_string()))?;
    Ok(Loaded {
        config: json!({"poly_file": path.display().to_string(), "polynomial": poly.to_string()}),
        poly,
        example: None,
    })
}

fn schedule(radii: &Radii, default_count: usize) -> Result<RadiusSchedule, CliError> {
    let d = RadiusSchedule::default();
    RadiusSchedule::new(
        radii.radius0.unwrap_or(d.r0),
        radii.radius_factor.unwrap_or(d.factor),
        radii.radius_count.unwrap_or(default_count),
    )
    .map_err(pre)
}

fn estimator(e: &Estimator, seed: u64) -> Result<EstimatorConfig, CliError> {
    if !(e.mesh > 0.0 && e.mesh <= 0.5) {
        return Err(pre(format!("--mesh must lie in (0, 0.5], got {}", e.mesh)));
    }
    if e.starts == Some(0) {
        return Err(pre("--starts must be positive"));
    }
    Ok(EstimatorConfig {
        mesh: e.mesh,
        schedule: schedule(&e.radii, RadiusSchedule::default().count)?,
        seed,
        starts: e.starts,
    })
}

fn setup_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(pre("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(pre)?;
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report parts serialize")
}

fn anchors(example: &Option<ExampleRecord>) -> Value {
    match example {
        Some(rec) => Value::from(rec.facts.iter().map(|f| f.anchor.clone()).collect::<Vec<_>>()),
        None => Value::Array(vec![]),
    }
}

struct Report {
    command: &'static str,
    config: Value,
    anchors: Value,
    result: Value,
    csv: Option<Vec<u8>>,
}

impl Report {
    fn json(&self) -> String {
        let doc = json!({
            "tool": "asym",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "anchors": self.anchors,
            "result": self.result,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    /// CSV body preceded by comment lines carrying version and config.
    fn csv(&self) -> Result<String, CliError> {
        let body = self
            .csv
            .as_ref()
            .ok_or_else(|| pre(format!("{} has no CSV form; use --format json", self.command)))?;
        let mut s = format!(
            "# asym {} {}\n# config {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            serde_json::to_string(&self.config).expect("config serializes")
        );
        s.push_str(std::str::from_utf8(body).expect("csv is utf-8"));
        Ok(s)
    }

    fn emit(&self, format: Format, out: Option<&Path>) -> Result<(), CliError> {
        let text = match format {
            Format::Json => self.json(),
            Format::Csv => self.csv()?,
        };
        write_out(out, &text)
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let err = |path: &str, source| CliError::Write {
        path: path.to_string(),
        source,
    };
    match out {
        Some(p) => fs::write(p, text).map_err(|e| err(&p.display().to_string(), e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| err("standard output", e)),
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn output_config(o: &Output) -> Value {
    json!({
        "seed": o.seed,
        "threads": o.threads,
        "out": o.out.as_ref().map(|p: &PathBuf| p.display().to_string()),
        "format": match o.format { Format::Json => "json", Format::Csv => "csv" },
    })
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(ma), Value::Object(mb)) = (a.as_object_mut(), b) {
        ma.extend(mb);
    }
    a
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Directions(a) => {
            setup_threads(a.output.threads)?;
            let src = load(&a.source)?;
            let cfg = estimator(&a.estimator, a.output.seed)?;
            let (set, diag) = cfg.estimate(&src.poly, a.t).map_err(pre)?;
            let n = set.n();
            let csv = csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                let header: Vec<String> = (1..=n).map(|i| format!("u{i}")).collect();
                w.write_record(&header).map_err(pre)?;
                for p in set.points() {
                    w.write_record(p.iter().map(|v| v.to_string())).map_err(pre)?;
                }
                w.flush().map_err(pre)?;
                Ok(())
            })?;
            let report = Report {
                command: "directions",
                config: merge(
                    json!({"source": src.config, "t": a.t, "estimator": to_value(&cfg)}),
                    output_config(&a.output),
                ),
                anchors: anchors(&src.example),
                result: json!({
                    "directions": serde_json::from_str::<Value>(&set.to_json()).expect("set json"),
                    "diagnostic": to_value(&diag),
                }),
                csv: Some(csv),
            };
            report.emit(a.output.format, a.output.out.as_deref())
        }
        Command::ScanKinf(a) => {
            setup_threads(a.output.threads)?;
            let src = load(&a.source)?;
            // 10 to 10^3 by half decades
            let sched = schedule(&a.radii, 5)?;
            let range = (a.t_range[0], a.t_range[1]);
            let rep = scan_asymptotic_critical_values(&src.poly, &sched, a.starts, a.output.seed, range).map_err(pre)?;
            let csv = csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["value", "slope", "confidence"]).map_err(pre)?;
                for c in &rep.candidates {
                    let conf = to_value(&c.confidence);
                    w.write_record([c.value.to_string(), c.slope.to_string(), conf.as_str().unwrap_or("").to_string()])
                        .map_err(pre)?;
                }
                w.flush().map_err(pre)?;
                Ok(())
            })?;
            let report = Report {
                command: "scan-kinf",
                config: merge(
                    json!({"source": src.config, "t_range": [range.0, range.1], "schedule": to_value(&sched), "starts": a.starts}),
                    output_config(&a.output),
                ),
                anchors: anchors(&src.example),
                result: to_value(&rep),
                csv: Some(csv),
            };
            report.emit(a.output.format, a.output.out.as_deref())
        }
        Command::Flow(a) => {
            setup_threads(a.output.threads)?;
            let src = load(&a.source)?;
            if !(a.c_floor >= 0.0) {
                return Err(pre("--c-floor must be nonnegative"));
            }
            let ctrl = StepControl::default();
            let traj = trace_gradient_flow(&src.poly, &a.x0, a.t, a.c_floor, &ctrl).map_err(pre)?;
            let bounds = if traj.status == FlowStatus::Reached {
                Some(verify_bounds(&traj).map_err(pre)?)
            } else {
                None
            };
            let csv = csv_bytes(|buf| traj.write_csv(buf).map_err(pre))?;
            let report = Report {
                command: "flow",
                config: merge(
                    json!({"source": src.config, "x0": a.x0, "t": a.t, "c_floor": a.c_floor, "step_control": to_value(&ctrl)}),
                    output_config(&a.output),
                ),
                anchors: anchors(&src.example),
                result: json!({"trajectory": to_value(&traj), "bounds": to_value(&bounds)}),
                csv: Some(csv),
            };
            report.emit(a.output.format, a.output.out.as_deref())
        }
        Command::Volume(a) => {
            setup_threads(a.output.threads)?;
            let src = load(&a.source)?;
            let cfg = VolumeConfig {
                estimator: estimator(&a.estimator, a.output.seed)?,
                n_circles: a.circles,
                eps: a.eps.clone(),
            };
            if cfg.n_circles == 0 {
                return Err(pre("--circles must be positive"));
            }
            let prof = volume_profile(&src.poly, &a.t_grid, &cfg).map_err(pre)?;
            let csv = csv_bytes(|buf| prof.write_csv(buf).map_err(pre))?;
            let report = Report {
                command: "volume",
                config: merge(json!({"source": src.config, "t_grid": a.t_grid, "volume": to_value(&cfg)}), output_config(&a.output)),
                anchors: anchors(&src.example),
                result: to_value(&prof),
                csv: Some(csv),
            };
            report.emit(a.output.format, a.output.out.as_deref())
        }
        Command::Lipschitz(a) => {
            setup_threads(a.output.threads)?;
            let src = load(&a.source)?;
            let cfg = estimator(&a.estimator, a.output.seed)?;
            let prof = lipschitz_profile(&src.poly, a.t, a.delta, a.pairs, &cfg).map_err(pre)?;
            let csv = csv_bytes(|buf| prof.write_csv(buf).map_err(pre))?;
            let report = Report {
                command: "lipschitz",
                config: merge(
                    json!({"source": src.config, "t0": a.t, "delta": a.delta, "pairs": a.pairs, "estimator": to_value(&cfg)}),
                    output_config(&a.output),
                ),
                anchors: anchors(&src.example),
                result: to_value(&prof),
                csv: Some(csv),
            };
            report.emit(a.output.format, a.output.out.as_deref())
        }
        Command::Dimension(a) => {
            setup_threads(a.output.threads)?;
            let src = load(&a.source)?;
            let cfg = estimator(&a.estimator, a.output.seed)?;
            let prof = dimension_profile(&src.poly, &a.t_grid, &cfg).map_err(pre)?;
            let check = a.check_at.map(|t0| json!({"t0": t0, "holds": prof.semicontinuous_at(t0)}));
            let csv = csv_bytes(|buf| prof.write_csv(buf).map_err(pre))?;
            let report = Report {
                command: "dimension",
                config: merge(
                    json!({"source": src.config, "t_grid": a.t_grid, "check_at": a.check_at, "estimator": to_value(&cfg)}),
                    output_config(&a.output),
                ),
                anchors: anchors(&src.example),
                result: json!({"profile": to_value(&prof), "semicontinuity": check}),
                csv: Some(csv),
            };
            report.emit(a.output.format, a.output.out.as_deref())
        }
        Command::Examples(a) => {
            let records = match &a.example {
                Some(id) => vec![get_example(id).map_err(pre)?],
                None => all_examples(),
            };
            let csv = csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["id", "source", "polynomial"]).map_err(pre)?;
                for r in &records {
                    w.write_record([r.id.clone(), r.source.clone(), r.polynomial.to_string()]).map_err(pre)?;
                }
                w.flush().map_err(pre)?;
                Ok(())
            })?;
            let report = Report {
                command: "examples",
                config: json!({"example": a.example, "format": match a.format { Format::Json => "json", Format::Csv => "csv" }}),
                anchors: Value::from(records.iter().flat_map(|r| r.facts.iter().map(|f| f.anchor.clone())).collect::<Vec<_>>()),
                result: to_value(&records),
                csv: Some(csv),
            };
            report.emit(a.format, a.out.as_deref())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_count_inference() {
        assert_eq!(infer_vars("z - x^2 - y^2"), 3);
        assert_eq!(infer_vars("x1*x4 + x2"), 4);
        assert_eq!(infer_vars("2*x12"), 12);
        assert_eq!(infer_vars("max + x"), 3);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            CliError::Precondition(String::new()).exit_code(),
            CliError::Polynomial(String::new()).exit_code(),
            CliError::Write {
                path: String::new(),
                source: io::Error::other("x"),
            }
            .exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4]);
    }
}
