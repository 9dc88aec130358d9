//! Function implementations compiled into the reference execution unit.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use gatefaas_core::{value_map, FunctionLabel, InnerFer, Value, ValueMap};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub type FunctionBody = Arc<dyn Fn(&InnerFer) -> Result<ValueMap, String> + Send + Sync>;

/// A named function body. Failures are returned as `Err` or raised as a
/// panic; both become ERROR results.
#[derive(Clone)]
pub struct FunctionImpl {
    pub label: FunctionLabel,
    pub body: FunctionBody,
}

impl FunctionImpl {
    pub fn new<F>(label: FunctionLabel, body: F) -> Self
    where
        F: Fn(&InnerFer) -> Result<ValueMap, String> + Send + Sync + 'static,
    {
        FunctionImpl {
            label,
            body: Arc::new(body),
        }
    }
}

impl std::fmt::Debug for FunctionImpl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionImpl").field("label", &self.label).finish()
    }
}

pub const BUILTIN_LABELS: &[&str] = &["hellocot", "echo", "fft", "oddfail", "divide", "sleepy"];

pub const HELLO: &str = "Hello Cloud of Things!";

pub fn builtin(label: &str) -> Option<FunctionImpl> {
    let body: fn(&InnerFer) -> Result<ValueMap, String> = match label {
        "hellocot" => hellocot,
        "echo" => echo,
        "fft" => fft,
        "oddfail" => oddfail,
        "divide" => divide,
        "sleepy" => sleepy,
        _ => return None,
    };
    Some(FunctionImpl::new(FunctionLabel::new(label).ok()?, body))
}

pub fn hellocot(_fer: &InnerFer) -> Result<ValueMap, String> {
    Ok(value_map! { "ret" => HELLO })
}

/// Returns the inputs unchanged.
pub fn echo(fer: &InnerFer) -> Result<ValueMap, String> {
    Ok(fer.x.clone())
}

/// Forward FFT of the real block in `x.block`; returns `re` and `im`.
pub fn fft(fer: &InnerFer) -> Result<ValueMap, String> {
    let block = fer
        .x
        .get("block")
        .and_then(Value::as_list)
        .ok_or("x.block must be a list of numbers")?;
    if block.is_empty() {
        return Err("x.block is empty".into());
    }
    let mut buf = block
        .iter()
        .map(|v| v.as_f64().map(|re| Complex64::new(re, 0.0)))
        .collect::<Option<Vec<_>>>()
        .ok_or("x.block must be a list of numbers")?;
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    Ok(value_map! {
        "re" => buf.iter().map(|c| c.re).collect::<Vec<_>>(),
        "im" => buf.iter().map(|c| c.im).collect::<Vec<_>>(),
    })
}

/// Fails on odd `x.i`, echoes even ones.
pub fn oddfail(fer: &InnerFer) -> Result<ValueMap, String> {
    let i = fer
        .x
        .get("i")
        .and_then(Value::as_i64)
        .ok_or("x.i must be an integer")?;
    if i % 2 != 0 {
        return Err(format!("odd input {i}"));
    }
    Ok(value_map! { "i" => i })
}

/// Integer `x.a / x.b`; panics when `b` is zero.
pub fn divide(fer: &InnerFer) -> Result<ValueMap, String> {
    let get = |k: &str| fer.x.get(k).and_then(Value::as_i64).ok_or(format!("x.{k} must be an integer"));
    let (a, b) = (get("a")?, get("b")?);
    Ok(value_map! { "q" => a / b })
}

/// Sleeps `x.ms` milliseconds, then answers.
pub fn sleepy(fer: &InnerFer) -> Result<ValueMap, String> {
    let ms = fer.x.get("ms").and_then(Value::as_i64).unwrap_or(0).max(0);
    thread::sleep(Duration::from_millis(ms as u64));
    Ok(value_map! { "slept_ms" => ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(x: ValueMap) -> InnerFer {
        InnerFer { x, m: ValueMap::new() }
    }

    #[test]
    fn registry_knows_builtins_only() {
        for l in BUILTIN_LABELS {
            assert!(builtin(l).is_some());
        }
        assert!(builtin("nosuch").is_none());
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut block = vec![Value::Float(0.0); 8];
        block[0] = Value::Float(1.0);
        let out = fft(&inner(value_map! { "block" => block })).unwrap();
        for (re, im) in out["re"].as_list().unwrap().iter().zip(out["im"].as_list().unwrap()) {
            let (re, im) = (re.as_f64().unwrap(), im.as_f64().unwrap());
            assert!(((re * re + im * im).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_rejects_bad_blocks() {
        assert!(fft(&inner(ValueMap::new())).is_err());
        assert!(fft(&inner(value_map! { "block" => Vec::<Value>::new() })).is_err());
        assert!(fft(&inner(value_map! { "block" => vec!["a"] })).is_err());
    }

    #[test]
    fn oddfail_splits_on_parity() {
        assert!(oddfail(&inner(value_map! { "i" => 4 })).is_ok());
        assert_eq!(oddfail(&inner(value_map! { "i" => 3 })).unwrap_err(), "odd input 3");
    }
}
