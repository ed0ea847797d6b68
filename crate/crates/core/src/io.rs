//! JSON encoding of systems, signals and plans.
//!
//! Exact values travel as strings (`"3"`, `"-1/2"`), floating-point values
//! as shortest round-trip decimal strings, complex entries as `[re, im]`.

use std::path::Path;

use num_complex::Complex;
use num_rational::BigRational;
use serde_json::{json, Map, Value};

use crate::coefficients::System;
use crate::delay::{BasisValue, ClassKey, DelayBasis, DelayVector, Instant};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scalar::{decimal_to_ratio, format_ratio, parse_ratio, Real, ScalarMode};
use crate::signal::{PiecewisePolynomial, PolyVector};
use crate::synthesis::{ControlPlan, Impulse, PlanKind, Segment};

/// Entry text: `"p/q"` for exact values, shortest round-trip decimal otherwise.
pub fn real_to_string<R: Real>(x: &R) -> String {
    match x.to_ratio() {
        Some(q) => format_ratio(&q),
        None => format!("{:?}", x.to_f64()),
    }
}

/// A real entry as a string, a complex one as `[re, im]`.
pub fn complex_to_json<R: Real>(z: &Complex<R>) -> Value {
    if z.im.is_zero() {
        Value::String(real_to_string(&z.re))
    } else {
        Value::Array(vec![Value::String(real_to_string(&z.re)), Value::String(real_to_string(&z.im))])
    }
}

/// Row-major nested arrays.
pub fn matrix_to_json<R: Real>(m: &Matrix<R>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| complex_to_json(&m[(i, j)])).collect())).collect())
}

pub fn vector_to_json<R: Real>(v: &Vector<R>) -> Value {
    Value::Array(v.iter().map(complex_to_json).collect())
}

fn real_from_json<R: Real>(value: &Value) -> Result<R> {
    match value {
        Value::String(text) => {
            if let Some(q) = parse_ratio(text) {
                return Ok(R::from_ratio(&q));
            }
            if R::EXACT {
                return Err(Error::RationalParseError(text.clone()));
            }
            text.trim().parse::<f64>().map(R::from_f64).map_err(|_| Error::SchemaError(format!("`{text}` is not a number")))
        }
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                return Ok(R::from_ratio(&BigRational::from_integer(i.into())));
            }
            if R::EXACT {
                return Err(Error::RationalParseError(n.to_string()));
            }
            Ok(R::from_f64(n.as_f64().unwrap_or(f64::NAN)))
        }
        other => Err(Error::SchemaError(format!("expected a number, found {other}"))),
    }
}

/// Real entry, `[re, im]` pair, or string.
pub fn complex_from_json<R: Real>(value: &Value) -> Result<Complex<R>> {
    match value {
        Value::Array(parts) if parts.len() == 2 => Ok(Complex::new(real_from_json(&parts[0])?, real_from_json(&parts[1])?)),
        Value::Array(_) => Err(Error::SchemaError("complex entries are [re, im] pairs".into())),
        other => Ok(Complex::new(real_from_json(other)?, R::zero())),
    }
}

fn array<'a>(value: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| Error::SchemaError(format!("{what} must be an array")))
}

pub fn matrix_from_json<R: Real>(value: &Value, what: &str) -> Result<Matrix<R>> {
    let rows = array(value, what)?;
    let cols = rows.first().map(|r| array(r, what).map(Vec::len)).transpose()?.unwrap_or(0);
    let mut entries = Vec::with_capacity(rows.len() * cols);
    for row in rows {
        let row = array(row, what)?;
        if row.len() != cols {
            return Err(Error::DimensionMismatch(format!("{what} has rows of different lengths")));
        }
        for entry in row {
            entries.push(complex_from_json(entry)?);
        }
    }
    Ok(Matrix::from_row_slice(rows.len(), cols, &entries))
}

pub fn vector_from_json<R: Real>(value: &Value, what: &str) -> Result<Vector<R>> {
    let items = array(value, what)?;
    let entries = items.iter().map(complex_from_json).collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(entries))
}

/// Time values: integers, `"p/q"` and decimal strings are exact; JSON
/// floats are taken at their binary value.
pub fn instant_from_json(value: &Value) -> Result<Instant> {
    match value {
        Value::String(text) => parse_ratio(text)
            .or_else(|| decimal_to_ratio(text))
            .map(Instant::exact)
            .ok_or_else(|| Error::SchemaError(format!("`{text}` is not a time value"))),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(Instant::exact(BigRational::from_integer(i.into()))),
            None => Ok(Instant::numeric(n.as_f64().unwrap_or(f64::NAN))),
        },
        other => Err(Error::SchemaError(format!("expected a time value, found {other}"))),
    }
}

pub fn instant_to_json(t: &Instant) -> Value {
    match t.exact_value() {
        Some(q) => Value::String(format_ratio(q)),
        None => json!(t.value()),
    }
}

/// Basis element: integers and `"p/q"` are exact, decimals are inexact.
pub fn basis_value_from_json(value: &Value) -> Result<BasisValue> {
    match value {
        Value::String(text) => match parse_ratio(text) {
            Some(q) => Ok(BasisValue::exact(q)),
            None => text
                .trim()
                .parse::<f64>()
                .map(BasisValue::numeric)
                .map_err(|_| Error::SchemaError(format!("`{text}` is not a basis value"))),
        },
        Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(BasisValue::exact(BigRational::from_integer(i.into()))),
            None => Ok(BasisValue::numeric(n.as_f64().unwrap_or(f64::NAN))),
        },
        other => Err(Error::SchemaError(format!("expected a basis value, found {other}"))),
    }
}

fn basis_value_to_json(v: &BasisValue) -> Value {
    match v.exact_value() {
        Some(q) => Value::String(format_ratio(q)),
        None => Value::String(format!("{:?}", v.value())),
    }
}

pub fn delays_from_json(value: &Value) -> Result<DelayVector> {
    let basis = array(value.get("basis").ok_or_else(|| Error::SchemaError("delays.basis is missing".into()))?, "delays.basis")?
        .iter()
        .map(basis_value_from_json)
        .collect::<Result<Vec<_>>>()?;
    let independent = value.get("independent").and_then(Value::as_bool).unwrap_or(false);
    let rows = array(value.get("M").ok_or_else(|| Error::SchemaError("delays.M is missing".into()))?, "delays.M")?;
    let matrix = rows
        .iter()
        .map(|row| {
            array(row, "delays.M")?
                .iter()
                .map(real_from_json::<BigRational>)
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DelayVector::from_rational_matrix(DelayBasis::new(basis, independent)?, matrix)
}

pub fn delays_to_json(lambda: &DelayVector) -> Value {
    json!({
        "basis": lambda.basis().values().iter().map(basis_value_to_json).collect::<Vec<_>>(),
        "M": lambda.matrix(),
        "independent": lambda.basis().independence_declared(),
    })
}

pub fn signal_from_json<R: Real>(value: &Value, what: &str) -> Result<PiecewisePolynomial<R>> {
    let breakpoints = array(value.get("breakpoints").ok_or_else(|| Error::SchemaError(format!("{what}.breakpoints is missing")))?, what)?
        .iter()
        .map(instant_from_json)
        .collect::<Result<Vec<_>>>()?;
    let pieces = array(value.get("pieces").ok_or_else(|| Error::SchemaError(format!("{what}.pieces is missing")))?, what)?
        .iter()
        .map(|piece| {
            array(piece, what)?
                .iter()
                .map(|poly| array(poly, what)?.iter().map(complex_from_json).collect::<Result<Vec<_>>>())
                .collect::<Result<PolyVector<R>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewisePolynomial::new(breakpoints, pieces)
}

pub fn signal_to_json<R: Real>(signal: &PiecewisePolynomial<R>) -> Value {
    json!({
        "breakpoints": signal.breakpoints().iter().map(instant_to_json).collect::<Vec<_>>(),
        "pieces": signal
            .pieces()
            .iter()
            .map(|piece| piece.iter().map(|poly| poly.iter().map(complex_to_json).collect::<Vec<_>>()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    })
}

/// A system with its delays and optional signals.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemData<R: Real> {
    pub system: System<R>,
    pub delays: DelayVector,
    pub x0: Option<PiecewisePolynomial<R>>,
    pub x1: Option<PiecewisePolynomial<R>>,
    pub u: Option<PiecewisePolynomial<R>>,
}

/// A loaded system in the scalar mode its file asks for.
#[derive(Clone, Debug, PartialEq)]
pub enum AnySystem {
    Exact(SystemData<BigRational>),
    Numeric(SystemData<f64>),
}

impl AnySystem {
    pub fn mode(&self) -> ScalarMode {
        match self {
            AnySystem::Exact(_) => ScalarMode::Exact,
            AnySystem::Numeric(_) => ScalarMode::Numeric,
        }
    }

    pub fn delays(&self) -> &DelayVector {
        match self {
            AnySystem::Exact(s) => &s.delays,
            AnySystem::Numeric(s) => &s.delays,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            AnySystem::Exact(s) => system_to_json(s),
            AnySystem::Numeric(s) => system_to_json(s),
        }
    }
}

fn integer_field(value: &Value, name: &str) -> Result<Option<usize>> {
    match value.get(name) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| Error::SchemaError(format!("{name} must be a nonnegative integer"))),
    }
}

fn system_data_from_json<R: Real>(value: &Value) -> Result<SystemData<R>> {
    let a = array(value.get("A").ok_or_else(|| Error::SchemaError("A is missing".into()))?, "A")?
        .iter()
        .enumerate()
        .map(|(j, m)| matrix_from_json(m, &format!("A[{j}]")))
        .collect::<Result<Vec<_>>>()?;
    let b = matrix_from_json(value.get("B").ok_or_else(|| Error::SchemaError("B is missing".into()))?, "B")?;
    let delays = delays_from_json(value.get("delays").ok_or_else(|| Error::SchemaError("delays is missing".into()))?)?;
    let system = System::new(a, b)?;
    system.check_delays(&delays)?;
    let checks = [("d", system.dim()), ("m", system.inputs()), ("N", system.delays())];
    for (name, actual) in checks {
        if let Some(declared) = integer_field(value, name)? {
            if declared != actual {
                return Err(Error::DimensionMismatch(format!("{name} = {declared} but the matrices give {actual}")));
            }
        }
    }
    let signal = |name: &str, dim: usize| -> Result<Option<PiecewisePolynomial<R>>> {
        match value.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => {
                let s = signal_from_json::<R>(v, name)?;
                if crate::signal::Signal::<R>::dim(&s) != dim {
                    return Err(Error::DimensionMismatch(format!("signal {name} must have {dim} components")));
                }
                Ok(Some(s))
            }
        }
    };
    Ok(SystemData {
        x0: signal("x0", system.dim())?,
        x1: signal("x1", system.dim())?,
        u: signal("u", system.inputs())?,
        system,
        delays,
    })
}

pub fn system_to_json<R: Real>(data: &SystemData<R>) -> Value {
    let mut out = Map::new();
    out.insert("d".into(), json!(data.system.dim()));
    out.insert("m".into(), json!(data.system.inputs()));
    out.insert("N".into(), json!(data.system.delays()));
    out.insert("scalar_mode".into(), serde_json::to_value(R::mode()).expect("mode serializes"));
    out.insert("A".into(), Value::Array(data.system.a().iter().map(matrix_to_json).collect()));
    out.insert("B".into(), matrix_to_json(data.system.b()));
    out.insert("delays".into(), delays_to_json(&data.delays));
    for (name, signal) in [("x0", &data.x0), ("x1", &data.x1), ("u", &data.u)] {
        if let Some(s) = signal {
            out.insert(name.into(), signal_to_json(s));
        }
    }
    Value::Object(out)
}

pub fn parse_system_value(value: &Value) -> Result<AnySystem> {
    let mode = match value.get("scalar_mode") {
        None => ScalarMode::Exact,
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|_| Error::SchemaError("scalar_mode must be \"exact\" or \"numeric\"".into()))?,
    };
    Ok(match mode {
        ScalarMode::Exact => AnySystem::Exact(system_data_from_json(value)?),
        ScalarMode::Numeric => AnySystem::Numeric(system_data_from_json(value)?),
    })
}

pub fn parse_system_str(text: &str) -> Result<AnySystem> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::SchemaError(e.to_string()))?;
    parse_system_value(&value)
}

pub fn parse_system(path: &Path) -> Result<AnySystem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::SchemaError(format!("cannot read {}: {e}", path.display())))?;
    parse_system_str(&text)
}

pub fn plan_to_json<R: Real>(plan: &ControlPlan<R>) -> Value {
    let mut out = Map::new();
    out.insert("horizon".into(), instant_to_json(&plan.horizon));
    out.insert("inputs".into(), json!(plan.inputs));
    match &plan.kind {
        PlanKind::PointSteering { impulses } => {
            out.insert("kind".into(), json!("point"));
            out.insert(
                "impulses".into(),
                Value::Array(
                    impulses
                        .iter()
                        .map(|i| {
                            json!({
                                "class": i.key.0,
                                "time": i.time.value(),
                                "value": vector_to_json(&i.value),
                            })
                        })
                        .collect(),
                ),
            );
        }
        PlanKind::Tracking { segments, epsilon } => {
            out.insert("kind".into(), json!("tracking"));
            out.insert("epsilon".into(), instant_to_json(epsilon));
            out.insert(
                "segments".into(),
                Value::Array(
                    segments
                        .iter()
                        .map(|s| {
                            json!({
                                "class": s.key.0,
                                "time": s.time.value(),
                                "function": signal_to_json(&s.function),
                            })
                        })
                        .collect(),
                ),
            );
        }
    }
    Value::Object(out)
}

fn class_from_json(value: &Value) -> Result<ClassKey> {
    serde_json::from_value(value.get("class").cloned().unwrap_or(Value::Null))
        .map(ClassKey)
        .map_err(|_| Error::SchemaError("plan entries need an integer class key".into()))
}

/// Reads a plan written by [`plan_to_json`] for the given delays.
pub fn plan_from_json<R: Real>(value: &Value, lambda: &DelayVector) -> Result<ControlPlan<R>> {
    let horizon = instant_from_json(value.get("horizon").ok_or_else(|| Error::SchemaError("plan horizon is missing".into()))?)?;
    let inputs = integer_field(value, "inputs")?.ok_or_else(|| Error::SchemaError("plan inputs is missing".into()))?;
    let stamp = |key: &ClassKey| -> Result<crate::delay::TimeStamp> {
        if key.0.len() != lambda.basis_len() {
            return Err(Error::DimensionMismatch("plan class key does not match the delay basis".into()));
        }
        Ok(lambda.stamp(key.0.clone()))
    };
    let kind = match value.get("kind").and_then(Value::as_str) {
        Some("point") => PlanKind::PointSteering {
            impulses: array(value.get("impulses").unwrap_or(&Value::Null), "impulses")?
                .iter()
                .map(|i| {
                    let key = class_from_json(i)?;
                    Ok(Impulse {
                        time: stamp(&key)?,
                        key,
                        value: vector_from_json(i.get("value").unwrap_or(&Value::Null), "impulse value")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        },
        Some("tracking") => PlanKind::Tracking {
            epsilon: instant_from_json(value.get("epsilon").unwrap_or(&Value::Null))?,
            segments: array(value.get("segments").unwrap_or(&Value::Null), "segments")?
                .iter()
                .map(|s| {
                    let key = class_from_json(s)?;
                    Ok(Segment {
                        time: stamp(&key)?,
                        key,
                        function: signal_from_json(s.get("function").unwrap_or(&Value::Null), "segment")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        },
        _ => return Err(Error::SchemaError("plan kind must be \"point\" or \"tracking\"".into())),
    };
    Ok(ControlPlan { horizon, inputs, kind })
}
